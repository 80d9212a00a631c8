"""Gap scans: which gaps a new channel is built from, and how much of each.

All three scans fill every chosen gap completely except the last one, whose
fragment is left-justified.  They differ only in the order gaps are taken:

* ``ls``  -- by position, starting from 0
* ``cs``  -- by position, starting at a cursor that follows the residual of
  the previous allocation and wraps from the last gap to the first
* ``lfs`` -- by decreasing length, ties to the leftmost gap
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numba
import numpy as np

from .spectrum import CURSOR, NGAPS, SLIVER, START, SpectrumError, SpectrumState, gap_index

LS, CS, LFS = 0, 1, 2
ALGORITHMS = {"ls": LS, "cs": CS, "lfs": LFS}
ALGORITHM_NAMES = {v: k for k, v in ALGORITHMS.items()}

# a scan that runs out of gaps this close to the request is treated as an exact fit
SHORTFALL = 1e-9


class Insufficient(SpectrumError):
    pass


class PlanEntry(NamedTuple):
    gap: int  # gap slot in the spectrum arrays
    lo: float
    hi: float
    fill: float

    @property
    def full(self) -> bool:
        return self.fill == self.hi - self.lo


@dataclass
class GapPlan:
    entries: list[PlanEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def spans(self) -> list[tuple[float, float, float]]:
        return [(e.lo, e.hi, e.fill) for e in self.entries]

    @property
    def total(self) -> float:
        return sum(e.fill for e in self.entries)


_jit = numba.njit(cache=True)
_inline = numba.njit(cache=True, inline="always")


@_inline
def _take(lo, hi, g, remaining, out_g, out_f, k):
    """Append gap ``g`` to the plan; return the amount still needed."""
    glen = hi[g] - lo[g]
    out_g[k] = g
    if remaining <= glen:
        out_f[k] = remaining
        return 0.0
    out_f[k] = glen
    return remaining - glen


@_inline
def _finish(lo, hi, remaining, out_g, out_f, k):
    # ran out of gaps: accept float shortfall as an exact fit of the last gap
    if k > 0 and remaining <= SHORTFALL:
        g = out_g[k - 1]
        out_f[k - 1] = hi[g] - lo[g]
        return k
    return -1


@_jit
def plan_linear_k(a, size, out_g, out_f):
    """Linear scan.  Returns the entry count, or -1 if the gaps are too small."""
    lo, hi, gaps = a.lo, a.hi, a.gaps
    remaining = size
    n = a.meta[NGAPS]
    for i in range(n):
        remaining = _take(lo, hi, gaps[i], remaining, out_g, out_f, i)
        if remaining == 0.0:
            return i + 1
    return _finish(lo, hi, remaining, out_g, out_f, n)


@_jit
def plan_circular_k(a, cursor, size, out_g, out_f, out_cursor):
    """Circular scan from ``cursor``; the next cursor goes to ``out_cursor[0]``."""
    lo, hi, gaps = a.lo, a.hi, a.gaps
    n = a.meta[NGAPS]
    start = 0
    if cursor != START:
        start = gap_index(lo, gaps, a.meta, cursor)
        if start < 0:
            start = 0
    remaining = size
    k = 0
    for step in range(n):
        i = (start + step) % n
        remaining = _take(lo, hi, gaps[i], remaining, out_g, out_f, k)
        k += 1
        if remaining == 0.0:
            break
    if remaining > 0.0:
        k = _finish(lo, hi, remaining, out_g, out_f, k)
        if k < 0:
            return -1
    last = out_g[k - 1]
    residual = (hi[last] - lo[last]) - out_f[k - 1]
    if residual >= SLIVER:
        out_cursor[0] = last
    elif k >= n:
        out_cursor[0] = START
    else:
        out_cursor[0] = gaps[(start + k) % n]
    return k


@_jit
def plan_largest_first_k(a, size, out_g, out_f, used):
    """Largest-first scan; ``used`` is scratch of at least NGAPS booleans."""
    lo, hi, gaps = a.lo, a.hi, a.gaps
    n = a.meta[NGAPS]
    for i in range(n):
        used[i] = False
    remaining = size
    k = 0
    while k < n:
        # gaps are in position order, so a strict > keeps the leftmost on ties
        best_i = -1
        best_len = -1.0
        for i in range(n):
            if used[i]:
                continue
            glen = hi[gaps[i]] - lo[gaps[i]]
            if glen > best_len:
                best_i = i
                best_len = glen
        used[best_i] = True
        remaining = _take(lo, hi, gaps[best_i], remaining, out_g, out_f, k)
        k += 1
        if remaining == 0.0:
            return k
    return _finish(lo, hi, remaining, out_g, out_f, k)


@_jit
def plan_k(a, algorithm, size, out_g, out_f, used, out_cursor):
    """Dispatch on algorithm code; CS reads and reports the cursor."""
    if algorithm == LS:
        return plan_linear_k(a, size, out_g, out_f)
    if algorithm == CS:
        return plan_circular_k(a, a.meta[CURSOR], size, out_g, out_f, out_cursor)
    return plan_largest_first_k(a, size, out_g, out_f, used)


# ---------------------------------------------------------------- Python API


def _scratch(state: SpectrumState):
    n = max(int(state.arrays.meta[NGAPS]), 1)
    return np.zeros(n, dtype=np.int64), np.zeros(n), np.zeros(n, dtype=np.bool_)


def _to_plan(state: SpectrumState, k: int, gs, fs, size: float) -> GapPlan:
    if k < 0:
        raise Insufficient(f"request {size!r} exceeds total gap size {state.total_gap_size()!r}")
    a = state.arrays
    return GapPlan([PlanEntry(int(g), float(a.lo[g]), float(a.hi[g]), float(f))
                    for g, f in zip(gs[:k], fs[:k])])


def _check_size(size: float) -> None:
    if not size > 0:
        raise ValueError(f"request size must be positive, got {size!r}")


def plan_linear(state: SpectrumState, size: float) -> GapPlan:
    _check_size(size)
    gs, fs, _ = _scratch(state)
    return _to_plan(state, plan_linear_k(state.arrays, size, gs, fs), gs, fs, size)


def plan_circular(state: SpectrumState, cursor: int, size: float) -> tuple[GapPlan, int]:
    """Plan from ``cursor`` (a gap slot or ``START``); returns the plan and next cursor."""
    _check_size(size)
    gs, fs, _ = _scratch(state)
    nc = np.full(1, START, dtype=np.int64)
    k = plan_circular_k(state.arrays, cursor, size, gs, fs, nc)
    return _to_plan(state, k, gs, fs, size), int(nc[0])


def plan_largest_first(state: SpectrumState, size: float) -> GapPlan:
    _check_size(size)
    gs, fs, used = _scratch(state)
    return _to_plan(state, plan_largest_first_k(state.arrays, size, gs, fs, used), gs, fs, size)


def algorithm_code(name: str) -> int:
    try:
        return ALGORITHMS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; expected one of {sorted(ALGORITHMS)}") from None
