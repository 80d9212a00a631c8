import io
import math

import numpy as np
import pytest
from reference import reference_trace

from fragsim.engine import (
    F_T,
    I_JEND,
    N_FCOLS,
    N_ICOLS,
    RunConfig,
    draw_residences,
    draw_sizes,
    initial_fill,
    run,
    trace_lines,
)
from fragsim.spectrum import CorruptState


def layout(eng):
    return [(round(s.lo, 12), round(s.hi, 12), s.occupant) for s in eng.state.segments()]


def small(alpha, alg="ls", **kw):
    kw.setdefault("total_events", 4000)
    kw.setdefault("warmup_events", 1000)
    return RunConfig(alpha, alg, **kw)


# -- initial fill


def test_fill_stops_at_first_blocked_request():
    eng = initial_fill(small(0.5), sizes=[0.4, 0.5, 0.3])
    assert layout(eng) == [(0.0, 0.4, 1), (0.4, 0.9, 2), (0.9, 1.0, None)]
    assert eng.head_size == 0.3
    assert eng.state.r == 2


def test_fill_single_full_channel():
    eng = initial_fill(small(1.0), sizes=[1.0])
    assert layout(eng) == [(0.0, 1.0, 1)]
    assert eng.head_size > eng.state.total_gap_size() == 0.0


@pytest.mark.parametrize("alpha", [0.05, 0.3, 1.0])
def test_fill_is_contiguous_from_zero(alpha):
    eng = initial_fill(small(alpha, seed=11))
    segs = eng.state.segments()
    assert all(not s.is_gap for s in segs[:-1])
    assert eng.state.census().g in (0, 1)
    assert eng.head_size > eng.state.total_gap_size()
    assert eng.k == 0


def test_fill_identical_across_algorithms():
    fills = [layout(initial_fill(small(0.1, alg, seed=3))) for alg in ("ls", "cs", "lfs")]
    assert fills[0] == fills[1] == fills[2]


# -- first fragmentation walkthrough (channel ids match the u_i labels)


def test_first_fragmentation_replay():
    sizes = [0.3, 0.3, 0.3, 0.35, 0.5, 0.15, 0.2]
    residences = [5.0, 1.0, 100.0, 1.0, 50.0, 60.0]
    eng = initial_fill(small(0.5), sizes=sizes, residences=residences)
    assert layout(eng) == [(0.0, 0.3, 1), (0.3, 0.6, 2), (0.6, 0.9, 3), (0.9, 1.0, None)]

    # u2 leaves at t=1: u4 goes into u2's gap and after u3
    rec = eng.step()
    assert (rec.t_k, rec.a) == (1.0, 1)
    assert layout(eng) == [(0.0, 0.3, 1), (0.3, 0.6, 4), (0.6, 0.9, 3),
                           (0.9, 0.95, 4), (0.95, 1.0, None)]
    assert (rec.n0, rec.n1, rec.n2, rec.g, rec.i_origin) == (0, 2, 2, 1, 0)

    # u4 leaves at t=2: still no room for u5
    rec = eng.step()
    assert (rec.t_k, rec.a) == (2.0, 0)
    assert (rec.d0, rec.d1, rec.d2, rec.j, rec.g_minus) == (0, 1, 1, 0, 2)

    # u1 leaves at t=5: u5 and u6 fit, u7 does not
    rec = eng.step()
    assert (rec.t_k, rec.a) == (5.0, 2)
    assert layout(eng) == [(0.0, 0.5, 5), (0.5, 0.6, 6), (0.6, 0.9, 3),
                           (0.9, 0.95, 6), (0.95, 1.0, None)]
    assert eng.head_size == 0.2


# -- draws


def test_size_moments():
    x = draw_sizes(0.5, 1, 10**6)
    assert x.min() > 0 and x.max() <= 0.5
    assert abs(x.mean() - 0.25) < 0.001
    assert abs(draw_sizes(1.0, 2, 10**6).var() - 1 / 12) < 0.001


def test_residence_moments():
    x = draw_residences(1, 10**6)
    assert x.min() > 0
    assert abs(x.mean() - 1.0) < 0.005
    assert abs((x > 1).mean() - math.exp(-1)) < 0.002


def test_draws_reproducible():
    assert np.array_equal(draw_sizes(0.3, 9, 100), draw_sizes(0.3, 9, 100))
    assert np.array_equal(draw_residences(9, 100), draw_residences(9, 100))
    assert not np.array_equal(draw_sizes(0.3, 9, 100), draw_sizes(0.3, 10, 100))


# -- event loop


def records(cfg, n):
    eng = initial_fill(cfg)
    ri = np.zeros((n, N_ICOLS), dtype=np.int64)
    rf = np.zeros((n, N_FCOLS))
    eng.advance(n, ri, rf)
    return eng, ri, rf


@pytest.mark.parametrize("alg", ["ls", "cs", "lfs"])
def test_step_invariants(alg):
    eng = initial_fill(small(0.2, alg, seed=5))
    r_prev = eng.state.r
    c = eng.state.census()
    g_prev, sigma_prev = c.g, c.sigma
    for _ in range(2000):
        rec = eng.step()
        assert rec.r - r_prev == rec.a - 1
        assert rec.delta_sigma == rec.sigma - sigma_prev
        assert rec.delta_sigma == rec.a - 2 * rec.d0 - rec.d1 + rec.j + rec.j_end - rec.exact_fits
        assert rec.g_minus == g_prev - rec.d0 + rec.d2 + rec.j + rec.j_end
        assert eng.head_size > eng.state.total_gap_size()
        assert eng.state.total_gap_size() < 0.2
        used = sum(eng.state.channel(i).size for i in eng.state.channel_ids())
        assert abs(used + eng.state.total_gap_size() - 1.0) < 1e-9
        r_prev, g_prev, sigma_prev = rec.r, rec.g, rec.sigma
    eng.state.check()


def test_linear_scan_always_ends_in_a_gap():
    _, ri, _ = records(small(0.3, "ls", seed=1, check_level=2), 5000)
    assert not ri[:, I_JEND].any()


@pytest.mark.parametrize("alpha", [0.3, 0.1])
@pytest.mark.parametrize("alg", ["ls", "cs", "lfs"])
def test_matches_reference_simulator(alpha, alg):
    n = 3000
    buf = io.StringIO()
    run(RunConfig(alpha, alg, seed=7, total_events=n, warmup_events=0), trace=buf)
    ref = reference_trace(alpha, alg, draw_sizes(alpha, 7, 200_000),
                          draw_residences(7, 200_000), n)
    assert buf.getvalue().splitlines() == ref


def test_trace_format():
    _, ri, rf = records(small(0.3, seed=2), 3)
    lines = trace_lines(ri, rf).splitlines()
    assert len(lines) == 3
    fields = lines[0].split("\t")
    assert len(fields) == 12
    assert fields[0] == "1"
    assert float(fields[1]) == rf[0, F_T]
    assert int(fields[11]) == int(fields[9]) + int(fields[10])


def test_run_is_deterministic():
    cfg = small(0.2, "cs", seed=99)
    assert run(cfg).to_dict() == run(cfg).to_dict()


def test_corruption_detected_with_trace_line():
    eng = initial_fill(small(0.3, seed=4, check_level=2))
    eng.step()
    eng.corrupt_for_test()
    with pytest.raises(CorruptState) as err:
        eng.step()
    assert err.value.event == 2
    assert err.value.trace_line.startswith("2\t")


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(1.5)
    with pytest.raises(ValueError):
        RunConfig(0.1, "bf")
    with pytest.raises(ValueError):
        RunConfig(0.1, total_events=10, warmup_events=10)
