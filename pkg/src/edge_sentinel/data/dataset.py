"""
Dataset store
Append-only collection of (W_t, S_t, W_t+1, ground truth) records with a
fitted scaler, persisted as `meta`, `records.csv` and `scaler`
"""

import logging
import os
from dataclasses import dataclass, field
from typing import FrozenSet, Iterator, List, Optional, Tuple

import numpy as np

from .telemetry import Scaler
from ..core.episode import EpisodeLog, next_window_at, window_at
from ..core.labeler import format_kinds, parse_kinds
from ..errors import DatasetError, DimensionError, UndefinedInputError
from ..utils.exporter import (decode_floats, decode_ints, encode_floats, encode_ints, read_csv,
                              read_meta, write_csv, write_meta)

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ('t', 'task_ids', 'placement', 'schedule', 'window', 'next_task_ids', 'next_window',
                  'fault_flags', 'fault_kinds')


@dataclass
class DatasetRecord:
    """One training example; windows are raw (unnormalised) telemetry"""
    t: int
    task_ids: Tuple[int, ...]
    placement: np.ndarray
    schedule: np.ndarray
    window: np.ndarray
    next_task_ids: Tuple[int, ...]
    next_window: np.ndarray
    fault_flags: np.ndarray
    fault_kinds: List[FrozenSet[str]] = field(default_factory=list)

    @property
    def p(self) -> int:
        return len(self.task_ids)

    @property
    def faulty(self) -> bool:
        return bool(np.any(self.fault_flags))


class DatasetStore:
    def __init__(self, m: int, n: int, k: int, scaler: Optional[Scaler] = None):
        self.m, self.n, self.k = m, n, k
        self.records: List[DatasetRecord] = []
        self.scaler = scaler or Scaler()

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[DatasetRecord]:
        return iter(self.records)

    def __getitem__(self, index):
        return self.records[index]

    def _check_window(self, window: np.ndarray, p: int, label: str) -> None:
        expected = (self.m + p, self.n, self.k)
        if window.shape != expected:
            raise DimensionError(f"{label} shape {window.shape}, expected {expected}")

    def append(self, record: DatasetRecord) -> None:
        self._check_window(record.window, record.p, 'window')
        self._check_window(record.next_window, len(record.next_task_ids), 'next window')
        if record.schedule.shape != (record.p, self.m):
            raise DimensionError(f"schedule shape {record.schedule.shape}, expected ({record.p}, {self.m})")
        if record.placement.shape != (record.p,) or record.fault_flags.shape != (self.m,):
            raise DimensionError(f"placement {record.placement.shape} / flags {record.fault_flags.shape} "
                                 f"do not match p={record.p}, m={self.m}")
        self.records.append(record)

    def fit_scaler(self) -> Scaler:
        if not self.records:
            raise UndefinedInputError("cannot fit a scaler on an empty dataset")
        self.scaler = Scaler().fit(r.window for r in self.records)
        return self.scaler

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        write_meta({'m': self.m, 'n': self.n, 'k': self.k, 'records': len(self.records)},
                   os.path.join(directory, 'meta'))
        rows = [{
            't': r.t, 'task_ids': encode_ints(r.task_ids), 'placement': encode_ints(r.placement),
            'schedule': encode_floats(r.schedule), 'window': encode_floats(r.window),
            'next_task_ids': encode_ints(r.next_task_ids), 'next_window': encode_floats(r.next_window),
            'fault_flags': ''.join('1' if f else '0' for f in r.fault_flags),
            'fault_kinds': format_kinds(r.fault_kinds),
        } for r in self.records]
        write_csv(rows, os.path.join(directory, 'records.csv'), columns=RECORD_COLUMNS)
        if self.scaler.fitted:
            self.scaler.save(os.path.join(directory, 'scaler'))
        logger.info("dataset with %d records written to %s", len(self.records), directory)


def load_dataset(directory: str) -> DatasetStore:
    meta = read_meta(os.path.join(directory, 'meta'))
    try:
        m, n, k = int(meta['m']), int(meta['n']), int(meta['k'])
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"dataset meta in '{directory}' is corrupted: {exc}")
    scaler_path = os.path.join(directory, 'scaler')
    store = DatasetStore(m, n, k, Scaler.load(scaler_path) if os.path.exists(scaler_path) else None)
    frame = read_csv(os.path.join(directory, 'records.csv'))
    missing = [c for c in RECORD_COLUMNS if c not in frame.columns]
    if missing:
        raise DatasetError(f"records.csv in '{directory}' lacks columns {missing}")
    for row in frame.to_dict('records'):
        task_ids = tuple(int(v) for v in decode_ints(row['task_ids']))
        next_ids = tuple(int(v) for v in decode_ints(row['next_task_ids']))
        p = len(task_ids)
        store.append(DatasetRecord(
            t=int(row['t']), task_ids=task_ids, placement=decode_ints(row['placement']),
            schedule=decode_floats(row['schedule'], (p, m)),
            window=decode_floats(row['window'], (m + p, n, k)),
            next_task_ids=next_ids, next_window=decode_floats(row['next_window'], (m + len(next_ids), n, k)),
            fault_flags=np.array([c == '1' for c in row['fault_flags']], dtype=bool),
            fault_kinds=parse_kinds(row['fault_kinds'], m),
        ))
    if 'records' in meta and int(meta['records']) != len(store):
        raise DatasetError(f"'{directory}' meta announces {meta['records']} records, found {len(store)}")
    return store


def records_from_episode(log: EpisodeLog) -> List[DatasetRecord]:
    """One record per interval that has a successor window"""
    config = log.config
    records = []
    for t, r in enumerate(log.records):
        nxt = next_window_at(log, t)
        next_ids = log.records[t + 1].matrix.task_ids if t + 1 < len(log.records) else ()
        next_ids = tuple(i for i in next_ids if i in set(r.task_ids))
        schedule = np.zeros((len(r.task_ids), config.m))
        if len(r.task_ids):
            schedule[np.arange(len(r.task_ids)), r.targets] = 1.0
        records.append(DatasetRecord(
            t=r.t, task_ids=r.task_ids, placement=r.placement.copy(), schedule=schedule,
            window=window_at(log, t), next_task_ids=next_ids, next_window=nxt,
            fault_flags=r.outcome.fault_flags.copy(), fault_kinds=list(r.outcome.fault_kinds),
        ))
    return records


def dataset_from_episodes(logs: List[EpisodeLog]) -> DatasetStore:
    if not logs:
        raise UndefinedInputError("no episodes to build a dataset from")
    config = logs[0].config
    store = DatasetStore(config.m, config.n, config.k)
    for log in logs:
        for record in records_from_episode(log):
            store.append(record)
    store.fit_scaler()
    return store
