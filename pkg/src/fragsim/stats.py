"""Aggregation of departure records into summary observables.

Two weightings are used:

* event-weighted: one sample per measured departure (means of G and F, the
  G/R ratio, type shares, G- and first-admission pmfs, the F histogram,
  the frags-per-channel pmf);
* time-weighted: the post-event state of departure k-1 is weighted by the
  interval t_k - t_{k-1} it persisted (mean R, random-time gap pmf, mean
  gap and fragment sizes, first-gap position, F/R).

Mean R must be time-weighted to compare with E(R): departures occur at rate
R, so departure epochs oversample crowded states and their average is
E[R^2]/E[R].  The departure-epoch mean is kept alongside for reference.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as sps

from .engine import (
    F_DT, F_FIRSTLO, F_H, I_A, I_D0, I_D1, I_D2, I_DSIGMA, I_EXACT, I_F, I_FIRSTG,
    I_G, I_GMINUS, I_I0, I_I1, I_J, I_JEND, I_K, I_N0, I_N1, I_N2, I_R, I_SIGMA,
    N_FCOLS, N_ICOLS, RNG_DESCRIPTION, DepartureRecord, RunConfig,
)

THIN_POINTS = 100


class DegenerateSample(ValueError):
    pass


@dataclass
class Histogram:
    """Exact weights per integer value, starting at 0."""

    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def add(self, values, weights=None) -> None:
        values = np.asarray(values, dtype=np.int64)
        if values.size == 0:
            return
        w = np.bincount(values, weights=weights)
        if w.size > self.weights.size:
            self.weights = np.concatenate([self.weights, np.zeros(w.size - self.weights.size)])
        self.weights[: w.size] += w

    def merge(self, other: "Histogram") -> "Histogram":
        out = Histogram(self.weights.copy())
        out.add(np.arange(other.weights.size), other.weights)
        return out

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def values(self) -> np.ndarray:
        return np.flatnonzero(self.weights)

    def pairs(self) -> list[tuple[int, float]]:
        """Nonzero ``(value, count)`` pairs; integral counts come back as ints."""
        out = []
        for i in self.values():
            w = float(self.weights[i])
            out.append((int(i), int(w) if w.is_integer() else w))
        return out

    def pmf(self) -> dict[int, float]:
        t = self.total
        if t == 0:
            return {}
        return {i: w / t for i, w in self.pairs()}

    def mean(self) -> float:
        t = self.total
        return float(np.dot(np.arange(self.weights.size), self.weights) / t) if t else math.nan

    def std(self) -> float:
        t = self.total
        if not t:
            return math.nan
        x = np.arange(self.weights.size)
        mu = np.dot(x, self.weights) / t
        return float(math.sqrt(max(np.dot((x - mu) ** 2, self.weights) / t, 0.0)))

    @classmethod
    def from_samples(cls, samples) -> "Histogram":
        h = cls()
        h.add(samples)
        return h


@dataclass(frozen=True)
class NormalFitResult:
    mean: float
    std: float
    ks_distance: float
    m: int
    beta_hat: float
    theta_hat: float


def fit_normal(samples, m: int) -> NormalFitResult:
    """Fit a Normal to an integer histogram and measure the sup-distance.

    ``samples`` is a Histogram (or anything ``Histogram.from_samples``
    accepts).  Each integer's mass is spread over its unit cell before
    comparing with the Normal CDF, so the distance is evaluated at the
    half-integer cell edges; without that, the jumps of a lattice ECDF alone
    would put a floor of about half a cell's probability under the distance.
    """
    if not isinstance(samples, Histogram):
        samples = Histogram.from_samples(samples)
    vals = samples.values()
    if vals.size < 2:
        raise DegenerateSample("need at least two distinct values")
    mean = samples.mean()
    std = samples.std()
    if not std > 0:
        raise DegenerateSample("zero variance")
    lo, hi = int(vals[0]), int(vals[-1])
    w = samples.weights[lo : hi + 1]
    ecdf = np.cumsum(w) / w.sum()
    edges = np.arange(lo, hi + 1) + 0.5
    model = sps.norm.cdf(edges, loc=mean, scale=std)
    below = sps.norm.cdf(lo - 0.5, loc=mean, scale=std)
    ks = float(max(np.max(np.abs(ecdf - model)), below, 1.0 - model[-1]))
    return NormalFitResult(mean, std, ks, int(m), mean / m**2, std / m**1.5)


@dataclass
class SigmaSeries:
    """sigma = F + G at every measured departure, in event order."""

    values: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def extend(self, x) -> None:
        self.values = np.concatenate([self.values, np.asarray(x, dtype=np.int64)])


def sigma_stationarity(acc) -> tuple[float, float, float]:
    """Means of sigma over the two halves of the window and their relative gap.

    The relative gap is ``|first - second| / mean`` with ``mean`` the
    whole-window mean.  ``acc`` may be a StatsAccumulator, a SigmaSeries or
    a plain sequence.
    """
    x = _sigma_values(acc).astype(np.float64)
    if x.size < 2:
        raise ValueError("sigma window needs at least two samples")
    half = x.size // 2
    first, second = float(x[:half].mean()), float(x[half:].mean())
    mean = float(x.mean())
    return first, second, abs(first - second) / mean


def sigma_trend(acc, points: int = THIN_POINTS) -> float:
    """Spearman correlation of sigma against event index over evenly thinned points."""
    x = _sigma_values(acc)
    if x.size < points:
        raise ValueError("sigma window shorter than the number of thinned points")
    stride = x.size // points
    idx = np.arange(points) * stride
    rho = sps.spearmanr(idx, x[idx]).statistic
    return float(rho)


def _sigma_values(acc) -> np.ndarray:
    if isinstance(acc, StatsAccumulator):
        return acc.sigma.values
    if isinstance(acc, SigmaSeries):
        return acc.values
    return np.asarray(acc)


@dataclass
class IdentityTally:
    """Counts over every simulated departure, warm-up included.

    The literal forms assume a gap touching position 1 and no exact fits.
    """

    events: int = 0
    gap_identity_literal_violations: int = 0
    sigma_identity_literal_violations: int = 0
    g_minus_literal_violations: int = 0
    events_without_end_gap: int = 0
    departures_touching_end: int = 0
    exact_fit_admissions: int = 0

    def merge(self, other: "IdentityTally") -> "IdentityTally":
        return IdentityTally(*(x + y for x, y in zip(asdict(self).values(), asdict(other).values())))


@dataclass
class SummaryStats:
    config_echo: dict
    rng: str
    measured_events: int
    mean_r: float  # time average
    mean_r_stderr: float
    mean_r_departures: float
    mean_g: float
    mean_f: float
    mean_a: float
    mean_frags_per_channel: float
    mean_g_over_r: float
    ratio_of_means_g_over_r: float
    type_fractions: tuple[float, float, float]
    mean_gap_size: float
    mean_fragment_size: float
    mean_first_gap_lo: float
    frags_per_channel_mean: float
    frags_per_channel_std: float
    sigma_halves: tuple[float, float, float]
    sigma_spearman: float
    normal_fit: NormalFitResult | None
    identities: IdentityTally
    frags_per_channel_pmf: list = field(repr=False)
    gap_count_pmfs: dict = field(repr=False)
    total_fragments_hist: list = field(repr=False)

    @property
    def alpha(self) -> float:
        return self.config_echo["alpha"]

    @property
    def algorithm(self) -> str:
        return self.config_echo["algorithm"]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["type_fractions"] = list(self.type_fractions)
        d["sigma_halves"] = list(self.sigma_halves)
        return _plain(d)

    def to_flat(self) -> str:
        """``key=value`` lines for the scalar fields (pmfs excluded)."""
        lines = []
        for k, v in _flatten(self.to_dict()):
            if isinstance(v, list):
                continue
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and math.isnan(x):
        return None
    return x


def _flatten(d, prefix=""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        else:
            yield key, v


def _mean(num: float, den: float) -> float:
    return num / den if den else math.nan


class StatsAccumulator:
    """Single-writer accumulator; ``merge`` pools two accumulators' sums."""

    def __init__(self, config: RunConfig | None = None, snapshot: dict | None = None):
        self.config = config
        self.warmup = config.warmup_events if config else 0
        self.n = 0
        self.sums = dict.fromkeys(
            ("r", "g", "f", "a", "n0", "n1", "n2", "g_over_r"), 0.0)
        self.tw = dict.fromkeys(
            ("time", "r", "f_over_r", "gap_time", "gap_size", "frag_time", "frag_size",
             "lo_time", "first_lo"), 0.0)
        # (time-weighted R sum, elapsed time) per consumed chunk, for the standard error
        self.batches: list[tuple[float, float]] = []
        self.random_time_gaps = Histogram()
        self.first_admission_gaps = Histogram()
        self.post_departure_gaps = Histogram()
        self.total_fragments = Histogram()
        self.frags_per_channel = Histogram()
        self.sigma = SigmaSeries()
        self.identities = IdentityTally()
        # post-event state of the latest departure (or the fill)
        self.carry = snapshot

    # -- feeding

    def consume(self, rec_i: np.ndarray, rec_f: np.ndarray) -> None:
        if rec_i.shape[0] == 0:
            return
        self._tally(rec_i)
        g = rec_i[:, I_G]
        f = rec_i[:, I_F]
        r = rec_i[:, I_R]
        h = rec_f[:, F_H]
        lo = rec_f[:, F_FIRSTLO]
        # state before each event = carry followed by the previous rows
        if self.carry is None:
            c = {"g": g[0], "f": f[0], "r": r[0], "h": h[0], "first_gap_lo": lo[0]}
            dt0 = 0.0
        else:
            c = self.carry
            dt0 = None
        pg = np.concatenate([[c["g"]], g[:-1]])
        pf = np.concatenate([[c["f"]], f[:-1]])
        pr = np.concatenate([[c["r"]], r[:-1]])
        ph = np.concatenate([[c["h"]], h[:-1]])
        plo = np.concatenate([[c["first_gap_lo"]], lo[:-1]])
        dt = rec_f[:, F_DT].copy()
        if dt0 is not None:
            dt[0] = dt0
        self.carry = {"g": int(g[-1]), "f": int(f[-1]), "r": int(r[-1]),
                      "h": float(h[-1]), "first_gap_lo": float(lo[-1])}

        m = rec_i[:, I_K] > self.warmup
        if not m.any():
            return
        ri = rec_i[m]
        g, f, r = g[m], f[m], r[m]
        n = int(m.sum())
        self.n += n
        s = self.sums
        s["r"] += float(r.sum())
        s["g"] += float(g.sum())
        s["f"] += float(f.sum())
        s["a"] += float(ri[:, I_A].sum())
        s["n0"] += float(ri[:, I_N0].sum())
        s["n1"] += float(ri[:, I_N1].sum())
        s["n2"] += float(ri[:, I_N2].sum())
        s["g_over_r"] += float((g / r).sum())

        dt, pg, pf, pr, ph, plo = dt[m], pg[m], pf[m], pr[m], ph[m], plo[m]
        tw = self.tw
        tw["time"] += float(dt.sum())
        tw["r"] += float((dt * pr).sum())
        self.batches.append((float((dt * pr).sum()), float(dt.sum())))
        tw["f_over_r"] += float((dt * pf / pr).sum())
        has_gap = pg > 0
        tw["gap_time"] += float(dt[has_gap].sum())
        tw["gap_size"] += float((dt[has_gap] * ph[has_gap] / pg[has_gap]).sum())
        has_frag = pf > 0
        tw["frag_time"] += float(dt[has_frag].sum())
        tw["frag_size"] += float((dt[has_frag] * (1.0 - ph[has_frag]) / pf[has_frag]).sum())
        ok = ~np.isnan(plo)
        tw["lo_time"] += float(dt[ok].sum())
        tw["first_lo"] += float((dt[ok] * plo[ok]).sum())

        self.random_time_gaps.add(pg, dt)
        admitted = ri[:, I_A] >= 1
        self.first_admission_gaps.add(ri[admitted, I_FIRSTG])
        self.post_departure_gaps.add(ri[:, I_GMINUS])
        self.total_fragments.add(f)
        self.sigma.extend(ri[:, I_SIGMA])

    def _tally(self, ri: np.ndarray) -> None:
        t = self.identities
        n = ri.shape[0]
        g = ri[:, I_G]
        d0, d1, d2, j = ri[:, I_D0], ri[:, I_D1], ri[:, I_D2], ri[:, I_J]
        t.events += n
        t.gap_identity_literal_violations += int(np.count_nonzero(
            2 * g != 2 * ri[:, I_N0] + ri[:, I_N1] + 2 * ri[:, I_I0]))
        t.sigma_identity_literal_violations += int(np.count_nonzero(
            ri[:, I_DSIGMA] != ri[:, I_A] - 2 * d0 - d1 + j))
        g_prev = np.concatenate([[self._g_before(ri)], g[:-1]])
        t.g_minus_literal_violations += int(np.count_nonzero(
            ri[:, I_GMINUS] != g_prev - d0 + d2 + j))
        t.events_without_end_gap += int(np.count_nonzero(ri[:, I_I1] == 0))
        t.departures_touching_end += int(np.count_nonzero(ri[:, I_JEND]))
        t.exact_fit_admissions += int(ri[:, I_EXACT].sum())

    def _g_before(self, ri: np.ndarray) -> int:
        if self.carry is not None:
            return int(self.carry["g"])
        # no snapshot: reconstruct from the first row's own release accounting
        return int(ri[0, I_GMINUS] + ri[0, I_D0] - ri[0, I_D2] - ri[0, I_J] - ri[0, I_JEND])

    def record(self, rec: DepartureRecord, dt: float | None = None) -> None:
        """Add one record; ``dt`` overrides the record's own inter-departure time."""
        ri = np.zeros((1, N_ICOLS), dtype=np.int64)
        rf = np.zeros((1, N_FCOLS))
        from . import engine as E
        for col, val in ((E.I_K, rec.k), (E.I_A, rec.a), (E.I_D0, rec.d0), (E.I_D1, rec.d1),
                         (E.I_D2, rec.d2), (E.I_J, rec.j), (E.I_JEND, rec.j_end),
                         (E.I_GMINUS, rec.g_minus), (E.I_R, rec.r), (E.I_G, rec.g),
                         (E.I_F, rec.f), (E.I_N0, rec.n0), (E.I_N1, rec.n1), (E.I_N2, rec.n2),
                         (E.I_SIGMA, rec.sigma), (E.I_DSIGMA, rec.delta_sigma),
                         (E.I_FIRSTG, -1 if rec.first_admit_gap_count is None
                          else rec.first_admit_gap_count),
                         (E.I_I0, rec.i_origin), (E.I_I1, rec.i_end),
                         (E.I_EXACT, rec.exact_fits), (E.I_CHANNEL, rec.channel)):
            ri[0, col] = val
        rf[0, E.F_T] = rec.t_k
        rf[0, E.F_DT] = rec.dt if dt is None else dt
        rf[0, E.F_FIRSTLO] = math.nan if rec.first_gap_lo is None else rec.first_gap_lo
        rf[0, E.F_H] = rec.total_gap
        self.consume(ri, rf)

    def set_frags_per_channel(self, counts) -> None:
        self.frags_per_channel = Histogram(np.asarray(counts, dtype=np.float64).copy())

    # -- combining

    def merge(self, other: "StatsAccumulator") -> "StatsAccumulator":
        out = StatsAccumulator(self.config)
        out.n = self.n + other.n
        out.sums = {k: self.sums[k] + other.sums[k] for k in self.sums}
        out.tw = {k: self.tw[k] + other.tw[k] for k in self.tw}
        out.batches = self.batches + other.batches
        for name in ("random_time_gaps", "first_admission_gaps", "post_departure_gaps",
                     "total_fragments", "frags_per_channel"):
            setattr(out, name, getattr(self, name).merge(getattr(other, name)))
        out.sigma = SigmaSeries(np.concatenate([self.sigma.values, other.sigma.values]))
        out.identities = self.identities.merge(other.identities)
        out.carry = other.carry
        return out

    # -- results

    def mean_g_over_r(self) -> float:
        return _mean(self.sums["g_over_r"], self.n)

    def summary(self) -> SummaryStats:
        s, tw, n = self.sums, self.tw, self.n
        f_total = s["n0"] + s["n1"] + s["n2"]
        fractions = tuple(_mean(s[k], f_total) for k in ("n0", "n1", "n2"))
        batches = [(a, b) for a, b in self.batches if b > 0]
        if len(batches) >= 2:
            bm = np.array([a / b for a, b in batches])
            bw = np.array([b for _, b in batches])
            mu = np.average(bm, weights=bw)
            var = np.average((bm - mu) ** 2, weights=bw) / (len(bm) - 1)
            stderr = float(math.sqrt(var))
        else:
            stderr = math.nan
        alpha = self.config.alpha if self.config else math.nan
        try:
            fit = fit_normal(self.total_fragments, int(math.floor(1.0 / alpha)))
        except (DegenerateSample, ValueError):
            fit = None
        try:
            halves = sigma_stationarity(self)
        except ValueError:
            halves = (math.nan, math.nan, math.nan)
        try:
            rho = sigma_trend(self)
        except ValueError:
            rho = math.nan
        echo = self.config.to_dict() if self.config else {}
        return SummaryStats(
            config_echo=echo,
            rng=RNG_DESCRIPTION,
            measured_events=n,
            mean_r=_mean(tw["r"], tw["time"]),
            mean_r_stderr=stderr,
            mean_r_departures=_mean(s["r"], n),
            mean_g=_mean(s["g"], n),
            mean_f=_mean(s["f"], n),
            mean_a=_mean(s["a"], n),
            mean_frags_per_channel=_mean(tw["f_over_r"], tw["time"]),
            mean_g_over_r=self.mean_g_over_r(),
            ratio_of_means_g_over_r=_mean(s["g"], s["r"]),
            type_fractions=fractions,
            mean_gap_size=_mean(tw["gap_size"], tw["gap_time"]),
            mean_fragment_size=_mean(tw["frag_size"], tw["frag_time"]),
            mean_first_gap_lo=_mean(tw["first_lo"], tw["lo_time"]),
            frags_per_channel_mean=self.frags_per_channel.mean(),
            frags_per_channel_std=self.frags_per_channel.std(),
            sigma_halves=halves,
            sigma_spearman=rho,
            normal_fit=fit,
            identities=self.identities,
            frags_per_channel_pmf=self.frags_per_channel.pairs(),
            gap_count_pmfs={
                "random_time": self.random_time_gaps.pairs(),
                "first_admission": self.first_admission_gaps.pairs(),
                "post_departure": self.post_departure_gaps.pairs(),
            },
            total_fragments_hist=self.total_fragments.pairs(),
        )


def record(acc: StatsAccumulator, rec: DepartureRecord, dt: float | None = None) -> StatsAccumulator:
    acc.record(rec, dt)
    return acc


def pmf_from_pairs(pairs) -> dict[int, float]:
    total = sum(c for _, c in pairs)
    return {int(v): c / total for v, c in pairs} if total else {}
