"""Pure-Python LCS kernel: the fallback twin of the compiled extension."""

from __future__ import annotations

from typing import Sequence


def lcs_length(a: Sequence[int], b: Sequence[int]) -> int:
    """Longest-common-subsequence length via the two-row dynamic program."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    if m > n:  # keep the rolling rows short
        a, b = b, a
        n, m = m, n
    prev = [0] * (m + 1)
    curr = [0] * (m + 1)
    for i in range(n):
        ai = a[i]
        for j in range(m):
            if b[j] == ai:
                curr[j + 1] = prev[j] + 1
            else:
                left = curr[j]
                up = prev[j + 1]
                curr[j + 1] = up if up >= left else left
        prev, curr = curr, prev
    return prev[m]
