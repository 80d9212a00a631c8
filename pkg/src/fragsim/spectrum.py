"""Segment bookkeeping for the spectrum [0, 1].

The spectrum is a doubly linked sequence of segments stored in flat arrays
(a slot pool), so the hot paths can be compiled with numba.  Each segment is
either a gap (``owner == GAP``) or a fragment of an active channel
(``owner`` is the channel slot).  Gaps are additionally kept in an array
ordered by position, which is what the gap scans walk.

Fragment types are counted incrementally: a fragment's type is the number of
its immediate neighbours that are fragments, and every local edit subtracts
the types of the touched segments before the edit and adds them back after.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

GAP = -1
FREE = -2
START = -1  # circular-scan cursor sentinel: "first gap"

# slivers shorter than this left over by a carve are absorbed into the fragment
SLIVER = 1e-12

# meta slots
HEAD, TAIL, NGAPS, N0, N1, N2, NFREE_SEG, NFREE_CH, R, CURSOR, NEXT_ID = range(11)
META_SIZE = 16

# validate() error codes
OK = 0
ERR_PARTITION = 1
ERR_ADJACENT_GAPS = 2
ERR_SAME_CHANNEL = 3
ERR_CENSUS = 4
ERR_GAP_IDENTITY = 5
ERR_GAP_INDEX = 6
ERR_CHANNEL = 7

ERROR_NAMES = {
    ERR_PARTITION: "segments do not partition [0,1]",
    ERR_ADJACENT_GAPS: "two adjacent gaps",
    ERR_SAME_CHANNEL: "two adjacent fragments of one channel",
    ERR_CENSUS: "incremental census differs from recount",
    ERR_GAP_IDENTITY: "gap/fragment-type identity violated",
    ERR_GAP_INDEX: "ordered gap index out of sync",
    ERR_CHANNEL: "channel fragment list inconsistent",
}


class SpectrumError(Exception):
    pass


class PlanInfeasible(SpectrumError):
    pass


class UnknownChannel(SpectrumError, KeyError):
    pass


class CorruptState(SpectrumError):
    """An internal invariant failed; this is a bug, not a model condition."""

    def __init__(self, message: str, event: int = -1, trace_line: str = ""):
        super().__init__(message)
        self.event = event
        self.trace_line = trace_line


class Arrays(NamedTuple):
    lo: np.ndarray
    hi: np.ndarray
    owner: np.ndarray
    prev: np.ndarray
    next: np.ndarray
    chain: np.ndarray  # next fragment of the same channel, -1 at the end
    gaps: np.ndarray  # gap slots ordered by lo; first meta[NGAPS] are live
    seg_free: np.ndarray
    ch_id: np.ndarray
    ch_first: np.ndarray
    ch_nfrag: np.ndarray
    ch_size: np.ndarray
    ch_depart: np.ndarray
    ch_free: np.ndarray
    meta: np.ndarray


def allocate(seg_cap: int, ch_cap: int) -> Arrays:
    seg_cap = max(int(seg_cap), 4)
    ch_cap = max(int(ch_cap), 4)
    a = Arrays(
        lo=np.zeros(seg_cap),
        hi=np.zeros(seg_cap),
        owner=np.full(seg_cap, FREE, dtype=np.int64),
        prev=np.full(seg_cap, -1, dtype=np.int64),
        next=np.full(seg_cap, -1, dtype=np.int64),
        chain=np.full(seg_cap, -1, dtype=np.int64),
        gaps=np.full(seg_cap, -1, dtype=np.int64),
        # popped from the end, so slot 0 is handed out first
        seg_free=np.arange(seg_cap - 1, -1, -1, dtype=np.int64),
        ch_id=np.full(ch_cap, -1, dtype=np.int64),
        ch_first=np.full(ch_cap, -1, dtype=np.int64),
        ch_nfrag=np.zeros(ch_cap, dtype=np.int64),
        ch_size=np.zeros(ch_cap),
        ch_depart=np.zeros(ch_cap),
        ch_free=np.arange(ch_cap - 1, -1, -1, dtype=np.int64),
        meta=np.zeros(META_SIZE, dtype=np.int64),
    )
    a.meta[NFREE_SEG] = seg_cap
    a.meta[NFREE_CH] = ch_cap
    a.meta[CURSOR] = START
    a.meta[NEXT_ID] = 1
    a.meta[HEAD] = -1
    a.meta[TAIL] = -1
    return a


def grow(a: Arrays, seg_cap: int | None = None, ch_cap: int | None = None) -> Arrays:
    """Return a copy of ``a`` with more slots; slot indices are preserved."""
    old_s, old_c = a.lo.shape[0], a.ch_id.shape[0]
    seg_cap = max(seg_cap or old_s, old_s)
    ch_cap = max(ch_cap or old_c, old_c)
    b = allocate(seg_cap, ch_cap)
    for name in ("lo", "hi", "owner", "prev", "next", "chain", "gaps"):
        getattr(b, name)[:old_s] = getattr(a, name)
    for name in ("ch_id", "ch_first", "ch_nfrag", "ch_size", "ch_depart"):
        getattr(b, name)[:old_c] = getattr(a, name)
    b.meta[:] = a.meta
    nfs = a.meta[NFREE_SEG]
    new_s = np.arange(seg_cap - 1, old_s - 1, -1, dtype=np.int64)
    b.seg_free[: new_s.size] = new_s
    b.seg_free[new_s.size : new_s.size + nfs] = a.seg_free[:nfs]
    b.meta[NFREE_SEG] = nfs + new_s.size
    nfc = a.meta[NFREE_CH]
    new_c = np.arange(ch_cap - 1, old_c - 1, -1, dtype=np.int64)
    b.ch_free[: new_c.size] = new_c
    b.ch_free[new_c.size : new_c.size + nfc] = a.ch_free[:nfc]
    b.meta[NFREE_CH] = nfc + new_c.size
    return b


# ---------------------------------------------------------------- kernels
#
# Hot helpers take the individual arrays they touch: passing the whole
# Arrays bundle into a compiled call costs a reference-count round trip per
# member, which dominates these tiny functions.

_jit = numba.njit(cache=True)
_inline = numba.njit(cache=True, inline="always")


@_jit
def reset(a):
    """Empty spectrum: one gap covering [0, 1]."""
    s = alloc_seg(a.seg_free, a.chain, a.meta)
    a.lo[s] = 0.0
    a.hi[s] = 1.0
    a.owner[s] = GAP
    a.prev[s] = -1
    a.next[s] = -1
    a.meta[HEAD] = s
    a.meta[TAIL] = s
    a.gaps[0] = s
    a.meta[NGAPS] = 1
    a.meta[N0] = 0
    a.meta[N1] = 0
    a.meta[N2] = 0
    a.meta[R] = 0
    a.meta[CURSOR] = START


@_inline
def alloc_seg(seg_free, chain, meta):
    n = meta[NFREE_SEG]
    if n == 0:
        return -1
    n -= 1
    meta[NFREE_SEG] = n
    s = seg_free[n]
    chain[s] = -1
    return s


@_inline
def free_seg(owner, prev, next_, chain, seg_free, meta, s):
    owner[s] = FREE
    prev[s] = -1
    next_[s] = -1
    chain[s] = -1
    n = meta[NFREE_SEG]
    seg_free[n] = s
    meta[NFREE_SEG] = n + 1


@_jit
def alloc_channel(a, channel_id, size):
    n = a.meta[NFREE_CH]
    if n == 0:
        return -1
    n -= 1
    a.meta[NFREE_CH] = n
    c = a.ch_free[n]
    a.ch_id[c] = channel_id
    a.ch_first[c] = -1
    a.ch_nfrag[c] = 0
    a.ch_size[c] = size
    a.ch_depart[c] = 0.0
    return c


@_jit
def free_channel(a, c):
    a.ch_id[c] = -1
    a.ch_first[c] = -1
    a.ch_nfrag[c] = 0
    n = a.meta[NFREE_CH]
    a.ch_free[n] = c
    a.meta[NFREE_CH] = n + 1


@_inline
def is_frag(owner, s):
    return s >= 0 and owner[s] >= 0


@_inline
def frag_type(owner, prev, next_, s):
    p = prev[s]
    n = next_[s]
    return np.int64(p >= 0 and owner[p] >= 0) + np.int64(n >= 0 and owner[n] >= 0)


@_inline
def _census_shift(owner, prev, next_, meta, s, delta):
    if s >= 0 and owner[s] >= 0:
        meta[N0 + frag_type(owner, prev, next_, s)] += delta


@_inline
def _gap_search(lo, gaps, n, key):
    i = 0
    j = n
    while i < j:
        mid = (i + j) >> 1
        if lo[gaps[mid]] < key:
            i = mid + 1
        else:
            j = mid
    return i


@_inline
def gap_index(lo, gaps, meta, s):
    """Position of gap slot ``s`` in the ordered gap array, or -1."""
    n = meta[NGAPS]
    i = _gap_search(lo, gaps, n, lo[s])
    if i < n and gaps[i] == s:
        return i
    return -1


@_inline
def _gap_insert(lo, gaps, meta, s):
    n = meta[NGAPS]
    i = _gap_search(lo, gaps, n, lo[s])
    for k in range(n, i, -1):
        gaps[k] = gaps[k - 1]
    gaps[i] = s
    meta[NGAPS] = n + 1


@_inline
def _gap_remove(lo, gaps, meta, s):
    i = gap_index(lo, gaps, meta, s)
    n = meta[NGAPS]
    for k in range(i, n - 1):
        gaps[k] = gaps[k + 1]
    meta[NGAPS] = n - 1
    if meta[CURSOR] == s:
        meta[CURSOR] = START


@_inline
def _unlink(prev, next_, meta, s):
    p = prev[s]
    n = next_[s]
    if p >= 0:
        next_[p] = n
    else:
        meta[HEAD] = n
    if n >= 0:
        prev[n] = p
    else:
        meta[TAIL] = p


@_jit
def total_gap(a):
    lo = a.lo
    hi = a.hi
    gaps = a.gaps
    h = 0.0
    for i in range(a.meta[NGAPS]):
        g = gaps[i]
        h += hi[g] - lo[g]
    return h


@_jit
def carve(a, c, plan_gaps, plan_fills, k):
    """Apply a k-entry gap plan to channel slot ``c``.

    Every entry but the last converts its whole gap; the last splits off a
    left-justified fragment unless the residual would be a sliver.  Returns
    the number of exact fits (0 or 1), or -1 when the segment pool is
    exhausted.
    """
    lo, hi, owner, prev, next_, chain, meta = a.lo, a.hi, a.owner, a.prev, a.next, a.chain, a.meta
    gaps = a.gaps
    tail = -1
    exact = 0
    for i in range(k):
        g = plan_gaps[i]
        fill = plan_fills[i]
        last = i == k - 1
        if not last or (hi[g] - lo[g]) - fill < SLIVER:
            if last:
                exact = 1
            p = prev[g]
            n = next_[g]
            _census_shift(owner, prev, next_, meta, p, -1)
            _census_shift(owner, prev, next_, meta, n, -1)
            _gap_remove(lo, gaps, meta, g)
            owner[g] = c
            _census_shift(owner, prev, next_, meta, p, 1)
            _census_shift(owner, prev, next_, meta, g, 1)
            _census_shift(owner, prev, next_, meta, n, 1)
            s = g
        else:
            s = alloc_seg(a.seg_free, chain, meta)
            if s < 0:
                return -1
            p = prev[g]
            _census_shift(owner, prev, next_, meta, p, -1)
            lo[s] = lo[g]
            hi[s] = lo[g] + fill
            owner[s] = c
            prev[s] = p
            next_[s] = g
            prev[g] = s
            if p >= 0:
                next_[p] = s
            else:
                meta[HEAD] = s
            lo[g] = hi[s]
            _census_shift(owner, prev, next_, meta, p, 1)
            _census_shift(owner, prev, next_, meta, s, 1)
        if tail < 0:
            a.ch_first[c] = s
        else:
            chain[tail] = s
        chain[s] = -1
        tail = s
    a.ch_nfrag[c] = k
    meta[R] += 1
    return exact


@_jit
def release(a, c, out):
    """Free every fragment of channel slot ``c``.

    ``out`` receives (d0, d1, d2, j, j_end): fragment types before release,
    whether a fragment touched 0, and whether one touched 1.  Fragments of
    one channel are never adjacent, so releasing them one at a time sees the
    same types as releasing them together.
    """
    lo, hi, owner, prev, next_, chain, meta = a.lo, a.hi, a.owner, a.prev, a.next, a.chain, a.meta
    gaps, seg_free = a.gaps, a.seg_free
    for i in range(5):
        out[i] = 0
    s = a.ch_first[c]
    while s >= 0:
        nxt = chain[s]
        p = prev[s]
        n = next_[s]
        out[frag_type(owner, prev, next_, s)] += 1
        if p < 0:
            out[3] = 1
        if n < 0:
            out[4] = 1
        _census_shift(owner, prev, next_, meta, p, -1)
        _census_shift(owner, prev, next_, meta, s, -1)
        _census_shift(owner, prev, next_, meta, n, -1)
        owner[s] = GAP
        _census_shift(owner, prev, next_, meta, p, 1)
        _census_shift(owner, prev, next_, meta, n, 1)
        pg = p >= 0 and owner[p] == GAP
        ng = n >= 0 and owner[n] == GAP
        if pg and ng:
            cur = meta[CURSOR]
            _gap_remove(lo, gaps, meta, n)
            if cur == n:
                meta[CURSOR] = p
            hi[p] = hi[n]
            _unlink(prev, next_, meta, s)
            _unlink(prev, next_, meta, n)
            free_seg(owner, prev, next_, chain, seg_free, meta, s)
            free_seg(owner, prev, next_, chain, seg_free, meta, n)
        elif pg:
            hi[p] = hi[s]
            _unlink(prev, next_, meta, s)
            free_seg(owner, prev, next_, chain, seg_free, meta, s)
        elif ng:
            lo[n] = lo[s]
            _unlink(prev, next_, meta, s)
            free_seg(owner, prev, next_, chain, seg_free, meta, s)
        else:
            chain[s] = -1
            _gap_insert(lo, gaps, meta, s)
        s = nxt
    free_channel(a, c)
    meta[R] -= 1


@_jit
def census_scratch(a, out):
    """Recount (n0, n1, n2, g, i_origin, i_end) by walking the segments."""
    owner, prev, next_ = a.owner, a.prev, a.next
    for i in range(6):
        out[i] = 0
    s = a.meta[HEAD]
    while s >= 0:
        if owner[s] == GAP:
            out[3] += 1
        else:
            out[frag_type(owner, prev, next_, s)] += 1
        s = next_[s]
    h = a.meta[HEAD]
    t = a.meta[TAIL]
    out[4] = 1 if h >= 0 and owner[h] == GAP else 0
    out[5] = 1 if t >= 0 and owner[t] == GAP else 0


@_jit
def boundary_flags(a):
    h = a.meta[HEAD]
    t = a.meta[TAIL]
    return (np.int64(a.owner[h] == GAP), np.int64(a.owner[t] == GAP))


@_jit
def validate(a, recount):
    """Full structural check; returns an error code (OK when sound).

    Checks the partition of [0,1], gap maximality, same-channel
    non-adjacency, the ordered gap index, channel fragment lists and the
    boundary-complete gap identity.  With ``recount`` the incremental type
    census is compared against a from-scratch walk.
    """
    lo, hi, owner, prev, next_, meta = a.lo, a.hi, a.owner, a.prev, a.next, a.meta
    s = meta[HEAD]
    if s < 0 or lo[s] != 0.0 or prev[s] != -1:
        return ERR_PARTITION
    pos = 0.0
    total = 0.0
    ngaps = 0
    nfrag = 0
    last = -1
    while s >= 0:
        if owner[s] == FREE or prev[s] != last:
            return ERR_PARTITION
        if lo[s] != pos or not hi[s] > lo[s]:
            return ERR_PARTITION
        total += hi[s] - lo[s]
        pos = hi[s]
        if last >= 0:
            if owner[s] == GAP and owner[last] == GAP:
                return ERR_ADJACENT_GAPS
            if owner[s] >= 0 and owner[s] == owner[last]:
                return ERR_SAME_CHANNEL
        if owner[s] == GAP:
            if ngaps >= meta[NGAPS] or a.gaps[ngaps] != s:
                return ERR_GAP_INDEX
            ngaps += 1
        else:
            nfrag += 1
            if a.ch_id[owner[s]] < 0:
                return ERR_CHANNEL
        last = s
        s = next_[s]
    if last != meta[TAIL] or abs(pos - 1.0) > 1e-9 or abs(total - 1.0) > 1e-9:
        return ERR_PARTITION
    if ngaps != meta[NGAPS]:
        return ERR_GAP_INDEX
    n0 = meta[N0]
    n1 = meta[N1]
    n2 = meta[N2]
    if n0 + n1 + n2 != nfrag:
        return ERR_CENSUS
    i0, i1 = boundary_flags(a)
    if 2 * ngaps != 2 * n0 + n1 + 2 * (i0 + i1 - 1):
        return ERR_GAP_IDENTITY
    counted = 0
    active = 0
    for c in range(a.ch_id.shape[0]):
        if a.ch_id[c] < 0:
            continue
        active += 1
        k = 0
        f = a.ch_first[c]
        size = 0.0
        while f >= 0:
            if owner[f] != c:
                return ERR_CHANNEL
            size += hi[f] - lo[f]
            k += 1
            f = a.chain[f]
        if k == 0 or k != a.ch_nfrag[c]:
            return ERR_CHANNEL
        if abs(size - a.ch_size[c]) > 1e-9 * max(1.0, a.ch_size[c]):
            return ERR_CHANNEL
        counted += k
    if counted != nfrag or active != meta[R]:
        return ERR_CHANNEL
    if recount:
        out = np.zeros(6, dtype=np.int64)
        census_scratch(a, out)
        if out[0] != n0 or out[1] != n1 or out[2] != n2 or out[3] != ngaps:
            return ERR_CENSUS
    return OK


@_jit
def find_channel(a, channel_id):
    for c in range(a.ch_id.shape[0]):
        if a.ch_id[c] == channel_id:
            return c
    return -1


# ---------------------------------------------------------------- Python API


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    occupant: int | None  # channel id, None for a gap

    @property
    def is_gap(self) -> bool:
        return self.occupant is None

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class Channel:
    id: int
    size: float
    fragments: tuple[Segment, ...]
    departure_time: float


@dataclass(frozen=True)
class TypeCensus:
    n0: int
    n1: int
    n2: int
    g: int
    i_origin: int
    # 1 when a gap touches position 1; always 1 under linear scan
    i_end: int = 1

    @property
    def f(self) -> int:
        return self.n0 + self.n1 + self.n2

    @property
    def sigma(self) -> int:
        return self.f + self.g

    def end_gap_identity_holds(self) -> bool:
        """G = N0 + N1/2 + I, as stated for a spectrum whose last segment is a gap."""
        return 2 * self.g == 2 * self.n0 + self.n1 + 2 * self.i_origin

    def gap_identity_holds(self) -> bool:
        """Boundary-complete form: G = N0 + N1/2 + I_origin + I_end - 1."""
        return 2 * self.g == 2 * self.n0 + self.n1 + 2 * (self.i_origin + self.i_end - 1)


@dataclass(frozen=True)
class ReleaseSummary:
    d0: int
    d1: int
    d2: int
    j: int
    g_minus: int
    j_end: int = 0

    @property
    def fragments(self) -> int:
        return self.d0 + self.d1 + self.d2


class SpectrumState:
    """Mutable spectrum state with a Python-level API over the kernels."""

    def __init__(self, seg_cap: int = 64, ch_cap: int = 16):
        self.arrays = allocate(seg_cap, ch_cap)
        reset(self.arrays)

    # -- construction

    @classmethod
    def from_layout(cls, layout) -> "SpectrumState":
        """Build a state from ``[(lo, hi, occupant), ...]`` covering [0, 1].

        ``occupant`` is ``"G"``/``None`` for a gap or an integer channel id;
        a channel's fragments are listed in the order given.
        """
        layout = [(float(lo), float(hi), None if occ in (None, "G") else int(occ))
                  for lo, hi, occ in layout]
        st = cls(seg_cap=2 * len(layout) + 8, ch_cap=len(layout) + 4)
        a = st.arrays
        free_seg(a.owner, a.prev, a.next, a.chain, a.seg_free, a.meta, a.meta[HEAD])
        a.meta[NGAPS] = 0
        slots: dict[int, int] = {}
        tails: dict[int, int] = {}
        prev = -1
        for lo, hi, occ in layout:
            s = alloc_seg(a.seg_free, a.chain, a.meta)
            a.lo[s], a.hi[s] = lo, hi
            a.prev[s] = prev
            if prev >= 0:
                a.next[prev] = s
            else:
                a.meta[HEAD] = s
            if occ is None:
                a.owner[s] = GAP
                a.gaps[a.meta[NGAPS]] = s
                a.meta[NGAPS] += 1
            else:
                if occ not in slots:
                    c = alloc_channel(a, occ, 0.0)
                    slots[occ] = c
                    a.ch_first[c] = s
                    a.meta[R] += 1
                else:
                    c = slots[occ]
                    a.chain[tails[occ]] = s
                tails[occ] = s
                a.owner[s] = c
                a.ch_nfrag[c] += 1
                a.ch_size[c] += hi - lo
            prev = s
        a.next[prev] = -1
        a.meta[TAIL] = prev
        a.meta[NEXT_ID] = max(slots, default=0) + 1
        out = np.zeros(6, dtype=np.int64)
        census_scratch(a, out)
        a.meta[N0], a.meta[N1], a.meta[N2] = out[0], out[1], out[2]
        st.check()
        return st

    def _ensure_capacity(self, segs: int = 4, channels: int = 1) -> None:
        a = self.arrays
        if a.meta[NFREE_SEG] < segs or a.meta[NFREE_CH] < channels:
            self.arrays = grow(a, 2 * a.lo.shape[0] + segs, 2 * a.ch_id.shape[0] + channels)

    # -- queries

    def segments(self) -> list[Segment]:
        a = self.arrays
        out = []
        s = a.meta[HEAD]
        while s >= 0:
            own = a.owner[s]
            out.append(Segment(float(a.lo[s]), float(a.hi[s]),
                               None if own == GAP else int(a.ch_id[own])))
            s = a.next[s]
        return out

    def gaps(self) -> list[Segment]:
        a = self.arrays
        return [Segment(float(a.lo[g]), float(a.hi[g]), None)
                for g in a.gaps[: a.meta[NGAPS]]]

    def gap_slots(self) -> list[int]:
        return [int(g) for g in self.arrays.gaps[: self.arrays.meta[NGAPS]]]

    def gap_at(self, lo: float) -> int:
        """Slot of the gap starting at ``lo`` (for building plans in tests)."""
        for g in self.gap_slots():
            if self.arrays.lo[g] == lo:
                return g
        raise KeyError(lo)

    def segment(self, slot: int) -> Segment:
        a = self.arrays
        own = a.owner[slot]
        if own == FREE:
            raise KeyError(slot)
        return Segment(float(a.lo[slot]), float(a.hi[slot]),
                       None if own == GAP else int(a.ch_id[own]))

    def channel_ids(self) -> list[int]:
        a = self.arrays
        return sorted(int(i) for i in a.ch_id if i >= 0)

    def channel(self, channel_id: int) -> Channel:
        a = self.arrays
        c = find_channel(a, channel_id)
        if c < 0:
            raise UnknownChannel(channel_id)
        frags = []
        s = a.ch_first[c]
        while s >= 0:
            frags.append(Segment(float(a.lo[s]), float(a.hi[s]), channel_id))
            s = a.chain[s]
        return Channel(channel_id, float(a.ch_size[c]), tuple(frags), float(a.ch_depart[c]))

    @property
    def r(self) -> int:
        return int(self.arrays.meta[R])

    def total_gap_size(self) -> float:
        return float(total_gap(self.arrays))

    def tracked_census(self) -> TypeCensus:
        """The incrementally maintained census."""
        a = self.arrays
        i0, i1 = boundary_flags(a)
        return TypeCensus(int(a.meta[N0]), int(a.meta[N1]), int(a.meta[N2]),
                          int(a.meta[NGAPS]), int(i0), int(i1))

    def census(self) -> TypeCensus:
        """Census recomputed from scratch by walking adjacency."""
        out = np.zeros(6, dtype=np.int64)
        census_scratch(self.arrays, out)
        return TypeCensus(*(int(v) for v in out))

    def check(self, recount: bool = True) -> None:
        code = validate(self.arrays, recount)
        if code != OK:
            raise CorruptState(ERROR_NAMES[code])

    def dump(self) -> str:
        """One ``lo hi occupant`` line per segment; occupant is ``G`` or the channel id."""
        lines = []
        for seg in self.segments():
            occ = "G" if seg.is_gap else str(seg.occupant)
            lines.append(f"{seg.lo!r} {seg.hi!r} {occ}")
        return "\n".join(lines) + "\n"

    # -- mutation

    def carve(self, plan, channel_id: int, size: float) -> Channel:
        """Allocate ``size`` to a new channel following ``plan`` (a GapPlan)."""
        entries = list(plan.entries)
        if not entries:
            raise PlanInfeasible("empty plan")
        a = self.arrays
        if find_channel(a, channel_id) >= 0:
            raise PlanInfeasible(f"channel {channel_id} already active")
        if size > self.total_gap_size() + 1e-12:
            raise PlanInfeasible("request exceeds total gap size")
        seen = set()
        total = 0.0
        for i, e in enumerate(entries):
            own = a.owner[e.gap]
            if own != GAP or e.gap in seen:
                raise PlanInfeasible(f"entry {i} does not reference a distinct live gap")
            seen.add(e.gap)
            glen = a.hi[e.gap] - a.lo[e.gap]
            if not 0.0 < e.fill <= glen + 1e-12:
                raise PlanInfeasible(f"fill {e.fill!r} does not fit gap of length {glen!r}")
            if i < len(entries) - 1 and abs(e.fill - glen) > 1e-12:
                raise PlanInfeasible(f"entry {i} is not a full fill")
            total += e.fill
        if abs(total - size) > 1e-12:
            raise PlanInfeasible(f"fills sum to {total!r}, expected {size!r}")
        self._ensure_capacity(segs=2, channels=1)
        a = self.arrays
        c = alloc_channel(a, channel_id, size)
        gaps = np.array([e.gap for e in entries], dtype=np.int64)
        fills = np.array([min(e.fill, a.hi[e.gap] - a.lo[e.gap]) for e in entries])
        if carve(a, c, gaps, fills, len(entries)) < 0:
            raise CorruptState("segment pool exhausted")
        a.meta[NEXT_ID] = max(a.meta[NEXT_ID], channel_id + 1)
        return self.channel(channel_id)

    def release(self, channel_id: int) -> ReleaseSummary:
        a = self.arrays
        c = find_channel(a, channel_id)
        if c < 0:
            raise UnknownChannel(channel_id)
        out = np.zeros(5, dtype=np.int64)
        release(a, c, out)
        return ReleaseSummary(int(out[0]), int(out[1]), int(out[2]), int(out[3]),
                              int(a.meta[NGAPS]), int(out[4]))


def new_spectrum() -> SpectrumState:
    return SpectrumState()


def total_gap_size(state: SpectrumState) -> float:
    return state.total_gap_size()


def census(state: SpectrumState) -> TypeCensus:
    return state.census()
