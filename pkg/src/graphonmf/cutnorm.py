"""Cut norm and ∞→1 norm of step-graphon differences.

For a step function the integrand is constant on grid cells, so the supremum
over measurable rectangles ``S × S'`` is attained on unions of cells.  Given
``S``, the best ``S'`` collects the columns whose partial sum has the sign
being maximised, so enumerating the ``2^N`` row sets is exact.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ResolutionMismatch
from .graphon import StepGraphon

BRUTEFORCE_MAX = 20
_CHUNK = 1 << 15


class CutNormResult(NamedTuple):
    lower: float
    upper: float
    exact: bool


def _values(a):
    if isinstance(a, StepGraphon):
        return np.asarray(a.values, dtype=float)
    return np.asarray(a, dtype=float)


def _masks(start, stop, n):
    idx = np.arange(start, stop, dtype=np.int64)[:, None]
    return ((idx >> np.arange(n, dtype=np.int64)) & 1).astype(float)


def _bruteforce(D):
    n = D.shape[0]
    best = 0.0
    for start in range(0, 1 << n, _CHUNK):
        r = _masks(start, min(start + _CHUNK, 1 << n), n) @ D
        pos = np.where(r > 0, r, 0.0).sum(axis=1)
        neg = -np.where(r < 0, r, 0.0).sum(axis=1)
        best = max(best, float(pos.max()), float(neg.max()))
    return best


def _local_search(D, restarts, rng):
    """Alternating maximisation of ``|1_S^T D 1_S'|`` with 1-flip polishing."""
    n = D.shape[0]
    starts = [np.ones(n)] + [np.eye(n)[k] for k in range(min(n, 16))]
    starts += [(rng.random(n) < 0.5).astype(float) for _ in range(restarts)]
    best = 0.0
    for sign in (1.0, -1.0):
        M = sign * D
        for t in starts:
            t = t.copy()
            val = -np.inf
            while True:
                s = (M @ t > 0).astype(float)
                t = (s @ M > 0).astype(float)
                new = s @ M @ t
                # single-row flips the alternating step cannot see
                r = s @ M
                sign_s = 1.0 - 2.0 * s  # +1 adds row i, -1 removes it
                cand = r[None, :] + sign_s[:, None] * M
                gains = np.where(cand > 0, cand, 0.0).sum(axis=1)
                i = int(np.argmax(gains))
                improved = gains[i] > new + 1e-15
                if improved:
                    s[i] = 1.0 - s[i]
                    new = gains[i]
                    t = (cand[i] > 0).astype(float)
                if new <= val + 1e-15 and not improved:
                    break
                val = new
            best = max(best, float(val))
    return best


def cut_norm(a, b, method="bruteforce", restarts=32, seed=0):
    """Estimate ``||a - b||_□`` for two step graphons on the same grid.

    ``bruteforce`` is exact (``lower == upper``) and limited to resolution
    ``BRUTEFORCE_MAX``; ``greedy_local_search`` returns the best value found
    in both slots with ``exact=False``.
    """
    A, B = _values(a), _values(b)
    if A.shape != B.shape:
        raise ResolutionMismatch(f"resolutions {A.shape[0]} and {B.shape[0]} differ; "
                                 "discretize both to a common resolution first")
    n = A.shape[0]
    D = (A - B) / n**2
    if method == "bruteforce":
        if n > BRUTEFORCE_MAX:
            raise ValueError(f"bruteforce limited to resolution {BRUTEFORCE_MAX}, got {n}")
        v = _bruteforce(D)
        return CutNormResult(v, v, True)
    if method == "greedy_local_search":
        v = _local_search(D, restarts, np.random.default_rng(seed))
        return CutNormResult(v, v, False)
    raise ValueError(f"unknown method {method!r}")


def inf_to_one_norm(a, restarts=32, seed=0):
    """``sup_{g ∈ {±1}^N} Σ_i |Σ_j a_ij g_j| / N²``; exact up to N = 20."""
    A = _values(a)
    n = A.shape[0]
    A = A / n**2
    if n <= BRUTEFORCE_MAX:
        # g and -g give the same value, so fix the last sign
        best = 0.0
        half = 1 << (n - 1)
        for start in range(0, half, _CHUNK):
            g = 2.0 * _masks(start, min(start + _CHUNK, half), n) - 1.0
            g[:, n - 1] = 1.0
            best = max(best, float(np.abs(g @ A.T).sum(axis=1).max()))
        return best
    rng = np.random.default_rng(seed)
    best = 0.0
    for k in range(restarts):
        g = np.ones(n) if k == 0 else np.where(rng.random(n) < 0.5, -1.0, 1.0)
        val = -1.0
        while True:
            f = np.where(A @ g >= 0, 1.0, -1.0)
            g = np.where(f @ A >= 0, 1.0, -1.0)
            new = float(np.abs(A @ g).sum())
            if new <= val + 1e-15:
                break
            val = new
        best = max(best, val)
    return best
