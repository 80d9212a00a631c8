"""At-capacity event loop.

The queue never empties: only its head request is materialized, and each
departure is followed by FCFS admissions until the head no longer fits in the
total free bandwidth.  One record is emitted per departure.

Randomness: two PCG64 streams derived from one seed with
``SeedSequence(seed, spawn_key=(i,))`` -- ``i = 0`` for request sizes,
``i = 1`` for residence times (``i = 2`` is reserved for the oracle's Monte
Carlo).  Runs with the same seed therefore see the same request and
residence sequences whatever the allocation algorithm.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numba
import numpy as np

from . import spectrum as sp
from .alloc import ALGORITHM_NAMES, CS, algorithm_code, plan_k
from .spectrum import CorruptState, SpectrumState

RNG_DESCRIPTION = (
    "numpy PCG64; streams SeedSequence(seed, spawn_key=(i,)): "
    "0=request sizes, 1=residence times, 2=oracle Monte Carlo"
)
SIZE_STREAM, RESIDENCE_STREAM, ORACLE_STREAM = 0, 1, 2

# free slots required before an event starts; admissions inside one event
# may each consume a segment and a channel slot
MARGIN = 512

# engine int meta
EK, HEAPN, SIZE_POS, RES_POS, WARMUP, ERR, ERR_K, ALG, CHECK, RECOUNT, EM_SIZE = range(11)
# engine float meta
NOW, HEAD_U, ALPHA, EF_SIZE = range(4)

# record columns
(I_K, I_A, I_D0, I_D1, I_D2, I_J, I_JEND, I_GMINUS, I_R, I_G, I_F, I_N0, I_N1, I_N2,
 I_SIGMA, I_DSIGMA, I_FIRSTG, I_I0, I_I1, I_EXACT, I_CHANNEL, N_ICOLS) = range(22)
F_T, F_DT, F_FIRSTLO, F_H, N_FCOLS = range(5)

ST_OK, ST_GROW, ST_CORRUPT = 0, 1, 2

ERR_EQ2 = 20
ERR_EQ3 = 21
ERR_BLOCKED = 22
ERR_CONSERVATION = 23
ERR_CAPACITY = 24
ERR_PLAN = 25
ERR_INJECTED = 26

ERROR_NAMES = dict(sp.ERROR_NAMES)
ERROR_NAMES.update({
    ERR_EQ2: "sigma drift identity violated",
    ERR_EQ3: "post-departure gap count identity violated",
    ERR_BLOCKED: "head of queue fits after admissions",
    ERR_CONSERVATION: "allocated plus free bandwidth differs from 1",
    ERR_CAPACITY: "slot pool exhausted inside an event",
    ERR_PLAN: "planner could not place a request that fits",
    ERR_INJECTED: "corruption injected by test hook",
})


class EngineArrays(NamedTuple):
    heap_t: np.ndarray
    heap_id: np.ndarray
    heap_slot: np.ndarray
    em: np.ndarray
    ef: np.ndarray
    fpc_cur: np.ndarray  # active channels by fragment count
    fpc_acc: np.ndarray  # event-weighted sample counts
    fpc_last: np.ndarray
    plan_g: np.ndarray
    plan_f: np.ndarray
    used: np.ndarray
    size_script: np.ndarray
    res_script: np.ndarray
    rel: np.ndarray
    cursor_out: np.ndarray
    census: np.ndarray


def _engine_arrays(seg_cap, ch_cap, size_script, res_script):
    return EngineArrays(
        heap_t=np.zeros(ch_cap),
        heap_id=np.zeros(ch_cap, dtype=np.int64),
        heap_slot=np.zeros(ch_cap, dtype=np.int64),
        em=np.zeros(EM_SIZE, dtype=np.int64),
        ef=np.zeros(EF_SIZE),
        fpc_cur=np.zeros(seg_cap + 1, dtype=np.int64),
        fpc_acc=np.zeros(seg_cap + 1, dtype=np.int64),
        fpc_last=np.zeros(seg_cap + 1, dtype=np.int64),
        plan_g=np.zeros(seg_cap, dtype=np.int64),
        plan_f=np.zeros(seg_cap),
        used=np.zeros(seg_cap, dtype=np.bool_),
        size_script=np.asarray(size_script, dtype=np.float64),
        res_script=np.asarray(res_script, dtype=np.float64),
        rel=np.zeros(5, dtype=np.int64),
        cursor_out=np.zeros(1, dtype=np.int64),
        census=np.zeros(6, dtype=np.int64),
    )


def _grow_engine(e: EngineArrays, seg_cap: int, ch_cap: int) -> EngineArrays:
    b = _engine_arrays(seg_cap, ch_cap, e.size_script, e.res_script)
    n = e.heap_t.shape[0]
    b.heap_t[:n] = e.heap_t
    b.heap_id[:n] = e.heap_id
    b.heap_slot[:n] = e.heap_slot
    b.em[:] = e.em
    b.ef[:] = e.ef
    m = e.fpc_cur.shape[0]
    b.fpc_cur[:m] = e.fpc_cur
    b.fpc_acc[:m] = e.fpc_acc
    b.fpc_last[:m] = e.fpc_last
    b.fpc_last[m:] = e.em[EK]
    return b


# ---------------------------------------------------------------- kernels

_jit = numba.njit(cache=True)
_inline = numba.njit(cache=True, inline="always")


@_inline
def _heap_less(ht, hid, i, j):
    return ht[i] < ht[j] or (ht[i] == ht[j] and hid[i] < hid[j])


@_inline
def _heap_swap(ht, hid, hs, i, j):
    ht[i], ht[j] = ht[j], ht[i]
    hid[i], hid[j] = hid[j], hid[i]
    hs[i], hs[j] = hs[j], hs[i]


@_inline
def heap_push(e, t, cid, slot):
    ht, hid, hs = e.heap_t, e.heap_id, e.heap_slot
    i = e.em[HEAPN]
    e.em[HEAPN] = i + 1
    ht[i] = t
    hid[i] = cid
    hs[i] = slot
    while i > 0:
        p = (i - 1) >> 1
        if _heap_less(ht, hid, i, p):
            _heap_swap(ht, hid, hs, i, p)
            i = p
        else:
            break


@_inline
def heap_pop(e):
    """Remove the earliest departure; returns its heap row moved to the end."""
    ht, hid, hs = e.heap_t, e.heap_id, e.heap_slot
    n = e.em[HEAPN] - 1
    e.em[HEAPN] = n
    _heap_swap(ht, hid, hs, 0, n)
    i = 0
    while True:
        l = 2 * i + 1
        if l >= n:
            break
        m = l
        if l + 1 < n and _heap_less(ht, hid, l + 1, l):
            m = l + 1
        if _heap_less(ht, hid, m, i):
            _heap_swap(ht, hid, hs, i, m)
            i = m
        else:
            break
    return n


@_inline
def draw_size(rng, e):
    pos = e.em[SIZE_POS]
    if pos < e.size_script.shape[0]:
        e.em[SIZE_POS] = pos + 1
        return e.size_script[pos]
    alpha = e.ef[ALPHA]
    while True:
        # 1 - U lies in (0, 1] for U in [0, 1)
        v = alpha * (1.0 - rng.random())
        if v > 0.0:
            return v


@_inline
def draw_residence(rng, e):
    pos = e.em[RES_POS]
    if pos < e.res_script.shape[0]:
        e.em[RES_POS] = pos + 1
        return e.res_script[pos]
    while True:
        v = -math.log(1.0 - rng.random())
        if v > 0.0:
            return v


@_inline
def _fpc_change(e, k, delta):
    ev = e.em[EK]
    first = e.em[WARMUP] + 1
    start = max(e.fpc_last[k], first)
    if ev > start:
        e.fpc_acc[k] += e.fpc_cur[k] * (ev - start)
    e.fpc_last[k] = ev
    e.fpc_cur[k] += delta


@_jit
def fpc_flush(e, upto):
    """Bring the frags-per-channel counts up to date through event ``upto``."""
    first = e.em[WARMUP] + 1
    end = upto + 1
    for k in range(e.fpc_cur.shape[0]):
        start = max(e.fpc_last[k], first)
        if end > start:
            e.fpc_acc[k] += e.fpc_cur[k] * (end - start)
        e.fpc_last[k] = end


@_jit
def _admit_all(a, e, rng_s, rng_r, out):
    """FCFS admissions while the head fits.

    ``out`` receives (admitted, exact fits, gap count seen by the first
    admission or -1).  Returns a status code.
    """
    out[0] = 0
    out[1] = 0
    out[2] = -1
    h = sp.total_gap(a)
    alg = e.em[ALG]
    now = e.ef[NOW]
    while e.ef[HEAD_U] <= h:
        u = e.ef[HEAD_U]
        if a.meta[sp.NFREE_SEG] < 2 or a.meta[sp.NFREE_CH] < 1:
            e.em[ERR] = ERR_CAPACITY
            return ST_CORRUPT
        if out[0] == 0:
            out[2] = a.meta[sp.NGAPS]
        k = plan_k(a, alg, u, e.plan_g, e.plan_f, e.used, e.cursor_out)
        if k < 0:
            e.em[ERR] = ERR_PLAN
            return ST_CORRUPT
        cid = a.meta[sp.NEXT_ID]
        a.meta[sp.NEXT_ID] = cid + 1
        c = sp.alloc_channel(a, cid, u)
        exact = sp.carve(a, c, e.plan_g, e.plan_f, k)
        if exact < 0:
            e.em[ERR] = ERR_CAPACITY
            return ST_CORRUPT
        if alg == CS:
            a.meta[sp.CURSOR] = e.cursor_out[0]
        t = now + draw_residence(rng_r, e)
        a.ch_depart[c] = t
        heap_push(e, t, cid, c)
        _fpc_change(e, k, 1)
        out[0] += 1
        out[1] += exact
        h = sp.total_gap(a)
        e.ef[HEAD_U] = draw_size(rng_s, e)
    return ST_OK


@_jit
def fill(a, e, rng_s, rng_r):
    """Initial allocation from an empty spectrum at t = 0."""
    sp.reset(a)
    e.em[EK] = 0
    e.ef[NOW] = 0.0
    e.ef[HEAD_U] = draw_size(rng_s, e)
    out = np.zeros(3, dtype=np.int64)
    return _admit_all(a, e, rng_s, rng_r, out)


@_jit
def _conserved(a, h):
    total = h
    for c in range(a.ch_id.shape[0]):
        if a.ch_id[c] >= 0:
            total += a.ch_size[c]
    return abs(total - 1.0) <= 1e-9


@_jit
def _event(a, e, rng_s, rng_r, rec_i, rec_f, row, adm):
    g_prev = a.meta[sp.NGAPS]
    sigma_prev = a.meta[sp.N0] + a.meta[sp.N1] + a.meta[sp.N2] + g_prev
    hi = heap_pop(e)
    t = e.heap_t[hi]
    c = e.heap_slot[hi]
    cid = e.heap_id[hi]
    k = e.em[EK] + 1
    e.em[EK] = k
    dt = t - e.ef[NOW]
    e.ef[NOW] = t

    _fpc_change(e, a.ch_nfrag[c], -1)
    sp.release(a, c, e.rel)
    d0 = e.rel[0]
    d1 = e.rel[1]
    d2 = e.rel[2]
    j = e.rel[3]
    j_end = e.rel[4]
    g_minus = a.meta[sp.NGAPS]

    st = _admit_all(a, e, rng_s, rng_r, adm)
    if st != ST_OK:
        e.em[ERR_K] = k
        return st
    n_adm = adm[0]
    exact = adm[1]

    n0 = a.meta[sp.N0]
    n1 = a.meta[sp.N1]
    n2 = a.meta[sp.N2]
    g = a.meta[sp.NGAPS]
    f = n0 + n1 + n2
    sigma = f + g
    i0, i1 = sp.boundary_flags(a)
    h = sp.total_gap(a)

    rec_i[row, I_K] = k
    rec_i[row, I_A] = n_adm
    rec_i[row, I_D0] = d0
    rec_i[row, I_D1] = d1
    rec_i[row, I_D2] = d2
    rec_i[row, I_J] = j
    rec_i[row, I_JEND] = j_end
    rec_i[row, I_GMINUS] = g_minus
    rec_i[row, I_R] = a.meta[sp.R]
    rec_i[row, I_G] = g
    rec_i[row, I_F] = f
    rec_i[row, I_N0] = n0
    rec_i[row, I_N1] = n1
    rec_i[row, I_N2] = n2
    rec_i[row, I_SIGMA] = sigma
    rec_i[row, I_DSIGMA] = sigma - sigma_prev
    rec_i[row, I_FIRSTG] = adm[2]
    rec_i[row, I_I0] = i0
    rec_i[row, I_I1] = i1
    rec_i[row, I_EXACT] = exact
    rec_i[row, I_CHANNEL] = cid
    rec_f[row, F_T] = t
    rec_f[row, F_DT] = dt
    rec_f[row, F_FIRSTLO] = a.lo[a.gaps[0]] if g > 0 else np.nan
    rec_f[row, F_H] = h

    level = e.em[CHECK]
    if level >= 1:
        err = 0
        # boundary-complete identities; they reduce to the textbook forms
        # whenever a gap touches 1 and no admission fits a gap exactly
        if 2 * g != 2 * n0 + n1 + 2 * (i0 + i1 - 1):
            err = sp.ERR_GAP_IDENTITY
        elif sigma - sigma_prev != n_adm - exact - 2 * d0 - d1 + j + j_end:
            err = ERR_EQ2
        elif g_minus != g_prev - d0 + d2 + j + j_end:
            err = ERR_EQ3
        elif not e.ef[HEAD_U] > h:
            err = ERR_BLOCKED
        if err == 0 and level >= 2:
            every = e.em[RECOUNT]
            err = sp.validate(a, every > 0 and k % every == 0)
            if err == 0 and not _conserved(a, h):
                err = ERR_CONSERVATION
        if err != 0:
            e.em[ERR] = err
            e.em[ERR_K] = k
            return ST_CORRUPT
    return ST_OK


@_jit
def advance(a, e, rng_s, rng_r, n, rec_i, rec_f):
    """Run up to ``n`` departures; returns (status, events done)."""
    adm = np.zeros(3, dtype=np.int64)
    for row in range(n):
        if a.meta[sp.NFREE_SEG] < MARGIN or a.meta[sp.NFREE_CH] < MARGIN:
            return ST_GROW, row
        if e.em[HEAPN] == 0:
            e.em[ERR] = sp.ERR_CHANNEL
            return ST_CORRUPT, row
        st = _event(a, e, rng_s, rng_r, rec_i, rec_f, row, adm)
        if st != ST_OK:
            return st, row
    return ST_OK, n


# ---------------------------------------------------------------- Python API


@dataclass(frozen=True)
class RunConfig:
    alpha: float
    algorithm: str = "ls"
    seed: int = 0
    total_events: int = 2_000_000
    warmup_events: int = 1_000_000
    record_trace: bool = False
    # 0: none, 1: exact identities every event, 2: also full structure every event
    check_level: int = 1
    recount_every: int = 10_000

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        algorithm_code(self.algorithm)
        if self.total_events <= 0:
            raise ValueError("total_events must be positive")
        if not 0 <= self.warmup_events < self.total_events:
            raise ValueError("warmup_events must satisfy 0 <= warmup < total_events")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


def make_stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


@dataclass(frozen=True)
class DepartureRecord:
    k: int
    t_k: float
    a: int
    d0: int
    d1: int
    d2: int
    j: int
    g_minus: int
    r: int
    g: int
    f: int
    n0: int
    n1: int
    n2: int
    sigma: int
    delta_sigma: int
    first_gap_lo: float | None
    first_admit_gap_count: int | None
    channel: int
    j_end: int = 0
    i_origin: int = 0
    i_end: int = 1
    exact_fits: int = 0
    dt: float = 0.0
    total_gap: float = 0.0

    def sigma_identity_holds(self) -> bool:
        return self.delta_sigma == self.a - 2 * self.d0 - self.d1 + self.j

    def g_minus_holds(self, g_prev: int) -> bool:
        return self.g_minus == g_prev - self.d0 + self.d2 + self.j

    def trace_line(self) -> str:
        return "\t".join(str(v) for v in (
            self.k, repr(self.t_k), self.a, self.d0, self.d1, self.d2, self.j,
            self.g_minus, self.r, self.g, self.f, self.sigma))

    @classmethod
    def from_row(cls, ri, rf) -> "DepartureRecord":
        lo = float(rf[F_FIRSTLO])
        return cls(
            k=int(ri[I_K]), t_k=float(rf[F_T]), a=int(ri[I_A]),
            d0=int(ri[I_D0]), d1=int(ri[I_D1]), d2=int(ri[I_D2]), j=int(ri[I_J]),
            g_minus=int(ri[I_GMINUS]), r=int(ri[I_R]), g=int(ri[I_G]), f=int(ri[I_F]),
            n0=int(ri[I_N0]), n1=int(ri[I_N1]), n2=int(ri[I_N2]),
            sigma=int(ri[I_SIGMA]), delta_sigma=int(ri[I_DSIGMA]),
            first_gap_lo=None if math.isnan(lo) else lo,
            first_admit_gap_count=None if ri[I_FIRSTG] < 0 else int(ri[I_FIRSTG]),
            channel=int(ri[I_CHANNEL]), j_end=int(ri[I_JEND]),
            i_origin=int(ri[I_I0]), i_end=int(ri[I_I1]), exact_fits=int(ri[I_EXACT]),
            dt=float(rf[F_DT]), total_gap=float(rf[F_H]),
        )


def trace_lines(rec_i: np.ndarray, rec_f: np.ndarray) -> str:
    """Tab-separated ``k t_k a d0 d1 d2 j g_minus r g f sigma`` lines."""
    cols = (I_K, I_A, I_D0, I_D1, I_D2, I_J, I_GMINUS, I_R, I_G, I_F, I_SIGMA)
    out = []
    for ri, t in zip(rec_i[:, cols].tolist(), rec_f[:, F_T].tolist()):
        out.append(f"{ri[0]}\t{t!r}\t" + "\t".join(map(str, ri[1:])) + "\n")
    return "".join(out)


class Engine:
    """One simulation instance: spectrum, departure heap, queue head and streams.

    ``sizes`` and ``residences`` optionally script the first draws of each
    stream (used to replay hand-built scenarios); the seeded streams take
    over once a script is exhausted.
    """

    def __init__(self, config: RunConfig, sizes=(), residences=()):
        self.config = config
        alpha = config.alpha
        m = 1.0 / alpha
        seg_cap = int(3 * m * m + 40 * m) + 2 * MARGIN
        ch_cap = int(6 * m) + 2 * MARGIN
        self.state = SpectrumState(seg_cap, ch_cap)
        self.arrays = _engine_arrays(seg_cap, ch_cap, sizes, residences)
        e = self.arrays
        e.ef[ALPHA] = alpha
        e.em[ALG] = algorithm_code(config.algorithm)
        e.em[WARMUP] = config.warmup_events
        e.em[CHECK] = config.check_level
        e.em[RECOUNT] = config.recount_every
        self.rng_size = make_stream(config.seed, SIZE_STREAM)
        self.rng_res = make_stream(config.seed, RESIDENCE_STREAM)
        self._filled = False

    # -- state access

    @property
    def k(self) -> int:
        return int(self.arrays.em[EK])

    @property
    def now(self) -> float:
        return float(self.arrays.ef[NOW])

    @property
    def head_size(self) -> float:
        return float(self.arrays.ef[HEAD_U])

    @property
    def cursor(self) -> int:
        return int(self.state.arrays.meta[sp.CURSOR])

    def _raise(self, prefix: str = "", rec_i=None, rec_f=None) -> None:
        e = self.arrays
        code = int(e.em[ERR])
        k = int(e.em[ERR_K])
        line = ""
        # the record row is complete unless admission itself failed
        if rec_i is not None and code not in (ERR_CAPACITY, ERR_PLAN):
            line = trace_lines(rec_i[:1], rec_f[:1]).rstrip("\n")
        raise CorruptState(f"{prefix}event {k}: {ERROR_NAMES.get(code, code)}", k, line)

    def _grow(self) -> None:
        a = self.state.arrays
        seg_cap = 2 * a.lo.shape[0]
        ch_cap = 2 * a.ch_id.shape[0]
        self.state.arrays = sp.grow(a, seg_cap, ch_cap)
        self.arrays = _grow_engine(self.arrays, seg_cap, ch_cap)

    # -- simulation

    def initial_fill(self) -> None:
        if self._filled:
            raise RuntimeError("engine already filled")
        st = fill(self.state.arrays, self.arrays, self.rng_size, self.rng_res)
        if st != ST_OK:
            self._raise("initial fill, ")
        self._filled = True

    def advance(self, n: int, rec_i: np.ndarray, rec_f: np.ndarray) -> int:
        """Simulate ``n`` departures into the record buffers; returns rows written."""
        done = 0
        while done < n:
            st, m = advance(self.state.arrays, self.arrays, self.rng_size, self.rng_res,
                            n - done, rec_i[done:], rec_f[done:])
            done += m
            if st == ST_GROW:
                self._grow()
            elif st == ST_CORRUPT:
                self._raise("", rec_i[done:], rec_f[done:])
        return done

    def step(self) -> DepartureRecord:
        rec_i = np.zeros((1, N_ICOLS), dtype=np.int64)
        rec_f = np.zeros((1, N_FCOLS))
        self.advance(1, rec_i, rec_f)
        return DepartureRecord.from_row(rec_i[0], rec_f[0])

    def frags_per_channel_counts(self) -> np.ndarray:
        """Event-weighted counts of active channels by fragment count, post-warm-up."""
        fpc_flush(self.arrays, self.k)
        return self.arrays.fpc_acc.copy()

    def snapshot(self) -> dict:
        """Post-event census used to seed time-weighted statistics."""
        c = self.state.tracked_census()
        gaps = self.state.gaps()
        return {
            "g": c.g, "f": c.f, "r": self.state.r,
            "h": self.state.total_gap_size(),
            "first_gap_lo": gaps[0].lo if gaps else float("nan"),
        }

    def corrupt_for_test(self) -> None:
        """Test hook: break the incremental census so the checkers must fire."""
        self.state.arrays.meta[sp.N2] += 1


def initial_fill(config: RunConfig, sizes=(), residences=()) -> Engine:
    eng = Engine(config, sizes, residences)
    eng.initial_fill()
    return eng


def step(engine: Engine) -> DepartureRecord:
    return engine.step()


CHUNK = 1 << 16


def run(config: RunConfig, trace=None):
    """Simulate ``config.total_events`` departures and summarize the measured window.

    ``trace`` is an optional writable text stream receiving one line per
    departure (all events, warm-up included).
    """
    from .stats import StatsAccumulator

    eng = initial_fill(config)
    acc = StatsAccumulator(config, eng.snapshot())
    rec_i = np.zeros((CHUNK, N_ICOLS), dtype=np.int64)
    rec_f = np.zeros((CHUNK, N_FCOLS))
    left = config.total_events
    while left > 0:
        n = min(CHUNK, left)
        eng.advance(n, rec_i, rec_f)
        acc.consume(rec_i[:n], rec_f[:n])
        if trace is not None:
            trace.write(trace_lines(rec_i[:n], rec_f[:n]))
        left -= n
    acc.set_frags_per_channel(eng.frags_per_channel_counts())
    return acc.summary()


def draw_sizes(alpha: float, seed: int, n: int) -> np.ndarray:
    """First ``n`` request sizes of the seeded stream (for inspection and tests)."""
    e = _engine_arrays(1, 1, (), ())
    e.ef[ALPHA] = alpha
    return _draw_many(make_stream(seed, SIZE_STREAM), e, n, True)


def draw_residences(seed: int, n: int) -> np.ndarray:
    e = _engine_arrays(1, 1, (), ())
    return _draw_many(make_stream(seed, RESIDENCE_STREAM), e, n, False)


@_jit
def _draw_many(rng, e, n, sizes):
    out = np.empty(n)
    for i in range(n):
        out[i] = draw_size(rng, e) if sizes else draw_residence(rng, e)
    return out
