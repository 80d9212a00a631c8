"""Maximum throughput E(R) for Uniform(0, alpha] requests.

    E(R) = 1 / sum_{n>=2} P(S_n > 1) / (n (n-1))

where S_n is a sum of n request sizes.  P(S_n > 1) = 1 - IH_n(1/alpha) with
IH_n the Irwin-Hall CDF.  The alternating Irwin-Hall series cancels badly
near x = n, so it is evaluated with exact rationals where that is cheap and
with a floating path guarded by an error bound elsewhere; terms the guard
rejects come from Monte Carlo.

Monte Carlo uses the first-passage index N = min{n : S_n > 1}.  Since
P(S_n > 1) = P(N <= n), the whole series from n0 on collapses to
E[1 / (max(N, n0) - 1)], so one set of draws of N serves every term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numba
import numpy as np

from .engine import ORACLE_STREAM, make_stream

# exact rational evaluation is used when both limits hold
EXACT_MAX_X = 20
EXACT_MAX_N = 80
# stop summing once P(S_n > 1) exceeds this
STOP_BELOW_ONE = 1e-12
# unclamped floating results may stray this far outside [0, 1]
CLAMP_SLACK = 1e-9
DEFAULT_SAMPLES = 10**7
METHODS = ("auto", "exact", "monte_carlo")


class PrecisionLoss(ArithmeticError):
    """The floating Irwin-Hall series cannot be trusted at this (n, x)."""


class CrossCheckFailure(RuntimeError):
    """The two forms of the throughput series disagree."""


@dataclass(frozen=True)
class OracleResult:
    alpha: float
    expected_r: float
    method: str  # exact, monte_carlo or hybrid
    std_error: float
    terms_used: int

    def line(self) -> str:
        return f"{self.alpha!r} {self.expected_r!r} {self.method} {self.std_error!r} {self.terms_used}"


class Estimate(NamedTuple):
    value: float
    std_error: float
    method: str


def _fraction(x) -> Fraction:
    # repr round-trips, so 0.1 becomes 1/10 rather than its binary neighbour
    if isinstance(x, float):
        return Fraction(repr(float(x)))
    return Fraction(x)


def irwin_hall_exact(n: int, x) -> Fraction:
    """P(U_1 + ... + U_n <= x) as an exact rational (x is read as a decimal)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    x = _fraction(x)
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    if x >= n:
        return Fraction(1)
    s = Fraction(0)
    for k in range(math.floor(x) + 1):
        s += (-1) ** k * math.comb(n, k) * (x - k) ** n
    return s / math.factorial(n)


def _irwin_hall_float(n: int, x: float) -> float:
    # terms in log space so large n does not overflow; fsum rounds the sum
    # once, so the remaining error is per-term rounding, bounded below
    log_nfact = math.lgamma(n + 1)
    terms = []
    for k in range(math.floor(x) + 1):
        d = x - k
        if d <= 0.0:
            continue
        lt = log_nfact - math.lgamma(k + 1) - math.lgamma(n - k + 1) + n * math.log(d) - log_nfact
        terms.append((-1) ** k * math.exp(lt))
    total = math.fsum(terms)
    bound = sum(abs(t) for t in terms) * (4 * n + 8) * 2.0**-53
    if bound > CLAMP_SLACK or not -CLAMP_SLACK <= total <= 1.0 + CLAMP_SLACK:
        raise PrecisionLoss(f"Irwin-Hall series at n={n}, x={x!r}: value {total!r}, error bound {bound:.3g}")
    return total


def irwin_hall_cdf(n: int, x, exact: bool | None = None) -> float:
    """P(sum of n Uniform(0,1) <= x), clamped to [0, 1].

    ``exact=None`` picks exact rationals when n <= 80 and x <= 80.  The
    floating path raises PrecisionLoss when its rounding-error bound or the
    unclamped value leaves [-1e-9, 1 + 1e-9].
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x!r}")
    if x >= n:
        return 1.0
    if exact is None:
        exact = n <= EXACT_MAX_N and x <= EXACT_MAX_N
    if exact:
        v = float(irwin_hall_exact(n, x))
    else:
        v = _irwin_hall_float(n, float(x))
    return min(1.0, max(0.0, v))


@numba.njit(cache=True)
def _first_passages(rng, alpha, samples, out):
    for i in range(samples):
        s = 0.0
        n = 0
        while s <= 1.0:
            s += alpha * (1.0 - rng.random())
            n += 1
        out[i] = n


def first_passage_samples(alpha: float, samples: int = DEFAULT_SAMPLES, seed: int = 0) -> np.ndarray:
    """Draws of N = min{n : S_n > 1} from the oracle's own stream."""
    out = np.empty(samples, dtype=np.int64)
    _first_passages(make_stream(seed, ORACLE_STREAM), float(alpha), samples, out)
    return out


def _check_alpha(alpha) -> None:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha!r}")


def _use_exact(n: int, alpha) -> bool:
    return 1 / alpha <= EXACT_MAX_X and n <= EXACT_MAX_N


def _p_exceeds_analytic(n: int, alpha) -> float:
    if _use_exact(n, alpha):
        return float(1 - irwin_hall_exact(n, 1 / _fraction(alpha)))
    return 1.0 - irwin_hall_cdf(n, 1.0 / alpha, exact=False)


def p_sum_exceeds_one(n: int, alpha: float, method: str = "auto",
                      samples: int = DEFAULT_SAMPLES, seed: int = 0) -> Estimate:
    """P(S_n > 1) for n Uniform(0, alpha] sizes.

    ``auto`` falls back to Monte Carlo when the analytic series loses
    precision; ``exact`` raises PrecisionLoss instead.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    _check_alpha(alpha)
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method != "monte_carlo":
        try:
            return Estimate(_p_exceeds_analytic(n, alpha), 0.0, "exact")
        except PrecisionLoss:
            if method == "exact":
                raise
    hits = np.count_nonzero(first_passage_samples(alpha, samples, seed) <= n)
    p = hits / samples
    # a count of 0 or n would give a zero error; shrink half a hit toward the middle
    q = (hits + 0.5) / (samples + 1)
    return Estimate(p, math.sqrt(q * (1 - q) / samples), "monte_carlo")


def telescoping_tail(start: int) -> Fraction:
    """sum_{n>=start} 1/(n(n-1)) = 1/(start-1)."""
    if start < 2:
        raise ValueError("tail must start at n >= 2")
    return Fraction(1, start - 1)


def _mc_tail(passages: np.ndarray, n0: int) -> tuple[float, float]:
    """Mean and standard error of sum_{n>=n0} P(S_n>1)/(n(n-1))."""
    v = 1.0 / (np.maximum(passages, n0) - 1)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def expected_r(alpha: float, tol: float = 1e-6, method: str = "auto",
               samples: int = DEFAULT_SAMPLES, seed: int = 0) -> OracleResult:
    """E(R) via the first series form, cross-checked against the second.

    Terms are summed until P(S_n > 1) > 1 - 1e-12; the remaining terms are
    then 1/(n(n-1)) to that precision and add up to 1/n.  With ``auto`` the
    analytic terms give way to Monte Carlo at the first PrecisionLoss
    (reported as hybrid).
    """
    _check_alpha(alpha)
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")

    first = 0.0     # sum P(S_n>1)/(n(n-1))
    second = 0.0    # sum (1/n) P(S_n<=1<S_{n+1}), same terms regrouped
    terms = 0
    n = 2
    p_prev = 0.0  # P(S_1 > 1) = 0 since alpha <= 1
    mc_from = None
    if method == "monte_carlo":
        mc_from = 2
    else:
        while True:
            try:
                p = _p_exceeds_analytic(n, alpha)
            except PrecisionLoss:
                if method == "exact":
                    raise
                mc_from = n
                break
            first += p / (n * (n - 1))
            second += (p - p_prev) / (n - 1)
            p_prev = p
            terms += 1
            if p > 1.0 - STOP_BELOW_ONE:
                first += 1.0 / n
                # the regrouped form is missing (1/n)(1 - p) beyond this point
                second += (1.0 - p) / n
                break
            n += 1

    if mc_from is None:
        e1, e2 = 1.0 / first, 1.0 / second
        if abs(e1 - e2) > tol:
            raise CrossCheckFailure(f"alpha={alpha!r}: {e1!r} vs {e2!r}")
        return OracleResult(float(alpha), e1, "exact", 0.0, terms)

    passages = first_passage_samples(alpha, samples, seed)
    tail, tail_se = _mc_tail(passages, mc_from)
    s1 = first + tail
    s2 = _regrouped_with_mc(second, mc_from, passages)
    e1, e2 = 1.0 / s1, 1.0 / s2
    se = tail_se / s1**2
    if abs(e1 - e2) > max(tol, 3 * se):
        raise CrossCheckFailure(f"alpha={alpha!r}: {e1!r} vs {e2!r} (std error {se:.3g})")
    kind = "monte_carlo" if mc_from == 2 else "hybrid"
    # Monte Carlo contributes every n up to the largest passage observed
    terms += max(int(passages.max()) - mc_from + 1, 1)
    return OracleResult(float(alpha), e1, kind, se, terms)


def _regrouped_with_mc(second: float, mc_from: int, passages: np.ndarray) -> float:
    # analytic part covers (1/n) P(N = n+1) for n < mc_from - 1; the rest is
    # sum_{n >= mc_from-1} (1/n) P(N = n+1) = E[1/(N-1); N >= mc_from]
    n = passages - 1
    rest = np.where(passages >= mc_from, 1.0 / n, 0.0).mean()
    return second + float(rest)
