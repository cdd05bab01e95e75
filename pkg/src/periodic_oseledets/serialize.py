"""JSON helpers shared by the report types.

Negative infinity is written as the string ``"-inf"``; every other float
is emitted by the standard encoder (shortest round-trip representation).
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

NEG_INF_TEXT = "-inf"


def encode_float(value: float) -> float | str:
    value = float(value)
    if value == -math.inf:
        return NEG_INF_TEXT
    if math.isnan(value) or value == math.inf:
        return str(value)
    return value


def decode_float(value: Any) -> float:
    if isinstance(value, str):
        return float(value)
    return float(value)


def encode(obj: Any) -> Any:
    """Recursively convert numpy values and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return encode(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return encode_float(obj)
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(encode(obj), indent=2, allow_nan=False) + "\n"


def matrix_from_json(rows) -> np.ndarray:
    return np.array([[decode_float(v) for v in row] for row in rows], dtype=float).reshape(
        len(rows), -1
    )
