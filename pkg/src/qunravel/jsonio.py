"""Complex-pair JSON helpers.

Every complex number in a JSON document is written as a two-element list
``[re, im]``; complex arrays become correspondingly nested lists.
"""

from __future__ import annotations

import json

import numpy as np


def complex_to_pairs(arr):
    """Nested lists with [re, im] leaves for a complex ndarray."""
    a = np.asarray(arr, dtype=complex)
    stacked = np.stack([a.real, a.imag], axis=-1)
    return stacked.tolist()


def pairs_to_complex(obj):
    """Inverse of :func:`complex_to_pairs`."""
    a = np.asarray(obj, dtype=float)
    if a.ndim < 1 or a.shape[-1] != 2:
        raise ValueError("expected [re, im] pairs in the innermost dimension")
    return a[..., 0] + 1j * a[..., 1]


def canonical_dumps(obj) -> str:
    """Deterministic JSON encoding (sorted keys, fixed separators)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def dump_json(obj, path):
    with open(path, "w") as fh:
        fh.write(canonical_dumps(obj))
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)
