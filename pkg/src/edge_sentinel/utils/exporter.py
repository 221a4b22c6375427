"""
Export Module
Writes the CSV/JSON/text artefacts of a run (metrics, trajectories, attention
weights, prototypes, loss curves) and the codecs shared by every on-disk format
"""

import json
import logging
import os
from typing import Dict, List, Mapping, Sequence

import numpy as np
import pandas as pd

from ..errors import DatasetError

logger = logging.getLogger(__name__)


def encode_floats(values) -> str:
    """Space-joined shortest round-trip decimal text of a flattened array"""
    return ' '.join(repr(float(v)) for v in np.asarray(values, dtype=np.float64).ravel())


def decode_floats(text, shape=None) -> np.ndarray:
    if not isinstance(text, str) or not text.strip():
        values = np.zeros(0)
    else:
        values = np.array([float(v) for v in text.split()], dtype=np.float64)
    if shape is not None:
        try:
            values = values.reshape(shape)
        except ValueError:
            raise DatasetError(f"stored array of {values.size} values does not fit shape {shape}")
    return values


def encode_ints(values) -> str:
    return ' '.join(str(int(v)) for v in np.asarray(values).ravel())


def decode_ints(text) -> np.ndarray:
    if not isinstance(text, str) or not text.strip():
        return np.zeros(0, dtype=np.int64)
    return np.array([int(v) for v in text.split()], dtype=np.int64)


def read_csv(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise DatasetError(f"'{path}' not found")
    try:
        return pd.read_csv(path, float_precision='round_trip', keep_default_na=False, dtype=str)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DatasetError(f"'{path}' is corrupted: {exc}")


def write_csv(rows, path: str, columns: Sequence[str] = None) -> pd.DataFrame:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=columns)
    if columns is not None:
        frame = frame.reindex(columns=list(columns))
    frame.to_csv(path, index=False, float_format=None)
    logger.debug("wrote %d rows to %s", len(frame), path)
    return frame


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def write_json(payload: Mapping, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w') as handle:
        json.dump(_jsonable(payload), handle, indent=2, sort_keys=True)


def read_json(path: str) -> Dict:
    if not os.path.exists(path):
        raise DatasetError(f"'{path}' not found")
    try:
        with open(path) as handle:
            return json.load(handle)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"'{path}' is corrupted: {exc}")


def write_meta(meta: Mapping[str, object], path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w') as handle:
        for key, value in meta.items():
            if isinstance(value, (list, tuple, np.ndarray)):
                value = ','.join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in value)
            elif isinstance(value, (float, np.floating)):
                value = repr(float(value))
            handle.write(f"{key}={value}\n")


def read_meta(path: str) -> Dict[str, str]:
    if not os.path.exists(path):
        raise DatasetError(f"'{path}' not found")
    meta = {}
    with open(path) as handle:
        for lineno, line in enumerate(handle, 1):
            line = line.strip()
            if not line:
                continue
            if '=' not in line:
                raise DatasetError(f"{path}:{lineno}: expected key=value, got '{line}'")
            key, value = line.split('=', 1)
            meta[key] = value
    return meta


def attention_rows(t: int, source: str, weights: np.ndarray) -> List[Dict]:
    """Long-format rows of one attention matrix (averaged over heads)"""
    weights = np.asarray(weights)
    if weights.ndim == 2:
        weights = weights[None]
    rows = []
    for entity in range(weights.shape[0]):
        for i in range(weights.shape[1]):
            for j in range(weights.shape[2]):
                rows.append({'t': t, 'source': source, 'entity': entity, 'query': i, 'key': j,
                             'weight': float(weights[entity, i, j])})
    return rows
