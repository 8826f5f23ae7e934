"""Checkpoint files: one JSON header line, then the float64 parameter block.

The header's ``parameters`` list gives ``[name, shape]`` in the order the
values appear in the little-endian block that follows the newline.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import DataValidationError


def save_checkpoint(path, header: dict, parameters: list[tuple[str, np.ndarray]]) -> None:
    header = dict(header)
    header["parameters"] = [[name, list(v.shape)] for name, v in parameters]
    blob = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for _, v in parameters)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise DataValidationError(f"{path}: missing checkpoint header")
    header = json.loads(raw[:nl].decode("utf-8"))
    values = np.frombuffer(raw[nl + 1:], dtype="<f8")
    params, offset = [], 0
    for name, shape in header["parameters"]:
        size = int(np.prod(shape, dtype=np.int64))
        if offset + size > values.size:
            raise DataValidationError(f"{path}: parameter block truncated at '{name}'")
        params.append((name, values[offset:offset + size].reshape(shape).astype(np.float64)))
        offset += size
    if offset != values.size:
        raise DataValidationError(f"{path}: {values.size - offset} trailing values in parameter block")
    return header, params
