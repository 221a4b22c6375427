"""
Checkpoint files
`<stem>.bin` holds the raw little-endian float64 values of every tensor back
to back; `<stem>.idx` has one line per tensor: name, element offset, shape.
"""

import logging
import os
from collections import OrderedDict
from typing import Dict

import numpy as np

from ..errors import DatasetError

logger = logging.getLogger(__name__)

DTYPE = np.dtype('<f8')


def save_checkpoint(stem: str, tensors: Dict[str, np.ndarray]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(stem)), exist_ok=True)
    offset = 0
    lines = []
    with open(stem + '.bin', 'wb') as handle:
        for name, value in tensors.items():
            if any(ch.isspace() for ch in name):
                raise DatasetError(f"tensor name '{name}' contains whitespace")
            value = np.ascontiguousarray(value, dtype=DTYPE)
            handle.write(value.tobytes(order='C'))
            shape = ','.join(str(d) for d in value.shape) or '-'
            lines.append(f"{name} {offset} {shape}")
            offset += value.size
    with open(stem + '.idx', 'w') as handle:
        handle.write('\n'.join(lines) + '\n')
    logger.debug("saved %d tensors (%d values) to %s", len(tensors), offset, stem)


def load_checkpoint(stem: str) -> 'OrderedDict[str, np.ndarray]':
    for suffix in ('.bin', '.idx'):
        if not os.path.exists(stem + suffix):
            raise DatasetError(f"checkpoint file '{stem + suffix}' not found")
    raw = np.fromfile(stem + '.bin', dtype=DTYPE)
    tensors = OrderedDict()
    with open(stem + '.idx') as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                name, offset, shape = line.split()
                offset = int(offset)
                shape = () if shape == '-' else tuple(int(d) for d in shape.split(','))
            except ValueError:
                raise DatasetError(f"{stem}.idx:{lineno}: malformed index line '{line.strip()}'")
            size = int(np.prod(shape)) if shape else 1
            if offset + size > raw.size:
                raise DatasetError(f"{stem}.bin is truncated: '{name}' needs values "
                                   f"{offset}..{offset + size}, file holds {raw.size}")
            tensors[name] = raw[offset:offset + size].reshape(shape).astype(np.float64)
    return tensors
