"""
Utility functions for Heavyfield
"""

from typing import Dict

import numpy as np


def deep_merge(target: Dict, source: Dict):
    """Deep merge source dict into target dict"""
    for key, value in source.items():
        if key in target and isinstance(target[key], dict) and isinstance(value, dict):
            deep_merge(target[key], value)
        else:
            target[key] = value


def compensated_sum(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Neumaier-compensated sum along one axis.

    The loop runs over the reduced axis and is vectorized over the others, so the
    reduction order is fixed and results do not depend on BLAS threading.
    """
    arr = np.moveaxis(np.asarray(values, dtype=np.float64), axis, 0)
    total = np.zeros(arr.shape[1:], dtype=np.float64)
    compensation = np.zeros_like(total)
    for term in arr:
        t = total + term
        big = np.abs(total) >= np.abs(term)
        compensation += np.where(big, (total - t) + term, (term - t) + total)
        total = t
    return total + compensation


def row_norms(diff: np.ndarray) -> np.ndarray:
    """Euclidean norm of each row, squares accumulated with compensation"""
    diff = np.asarray(diff, dtype=np.float64)
    if diff.ndim == 1:
        return np.abs(diff)
    return np.sqrt(compensated_sum(diff * diff, axis=-1))


def format_float(value) -> str:
    """Shortest round-trip representation, '' for missing values"""
    if value is None:
        return ''
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))
