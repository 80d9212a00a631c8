"""Spectrum fragmentation under Linear, Circular and Largest-First gap scans.

The simulator keeps the spectrum [0, 1] at capacity: a request always waits,
and each departure is followed by FCFS admissions while the head request fits
in the total free bandwidth.  Fragment and gap counts are tracked exactly so
the combinatorial identities linking them can be checked at every event.
"""

from .alloc import GapPlan, plan_circular, plan_largest_first, plan_linear
from .engine import DepartureRecord, Engine, RunConfig, initial_fill, run, step
from .oracle import OracleResult, expected_r, irwin_hall_cdf, p_sum_exceeds_one
from .spectrum import (
    CorruptState,
    PlanInfeasible,
    SpectrumState,
    UnknownChannel,
    census,
    new_spectrum,
    total_gap_size,
)
from .stats import NormalFitResult, StatsAccumulator, SummaryStats, fit_normal, sigma_stationarity

__all__ = [
    "CorruptState", "DepartureRecord", "Engine", "GapPlan", "NormalFitResult", "OracleResult",
    "PlanInfeasible", "RunConfig", "SpectrumState", "StatsAccumulator", "SummaryStats",
    "UnknownChannel", "census", "expected_r", "fit_normal", "initial_fill", "irwin_hall_cdf",
    "new_spectrum", "p_sum_exceeds_one", "plan_circular", "plan_largest_first", "plan_linear",
    "run", "sigma_stationarity", "step", "total_gap_size",
]
