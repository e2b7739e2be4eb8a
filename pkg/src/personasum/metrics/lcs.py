"""LCS length with backend selection: compiled kernel when built, pure Python otherwise.

Set PERSONASUM_PURE=1 to force the fallback (used by the benchmark and
the backend-parity tests).
"""

from __future__ import annotations

import os
from array import array
from typing import Hashable, Sequence

from personasum.metrics import _lcs_py

try:
    from personasum.metrics import _lcs_cy
except ImportError:  # extension not built on this install
    _lcs_cy = None

BACKEND = "pure" if (_lcs_cy is None or os.environ.get("PERSONASUM_PURE")) else "cython"


def lcs_length(xs: Sequence[Hashable], ys: Sequence[Hashable]) -> int:
    """Longest-common-subsequence length of two token sequences."""
    if not xs or not ys:
        return 0
    if BACKEND == "cython":
        ids: dict = {}
        a = array("i", [ids.setdefault(t, len(ids)) for t in xs])
        b = array("i", [ids.setdefault(t, len(ids)) for t in ys])
        return _lcs_cy.lcs_length(a, b)
    return _lcs_py.lcs_length(list(xs), list(ys))
