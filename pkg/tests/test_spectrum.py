import pytest

from fragsim.alloc import GapPlan, PlanEntry, plan_linear
from fragsim.spectrum import (
    CorruptState,
    PlanInfeasible,
    SpectrumState,
    UnknownChannel,
    census,
    new_spectrum,
    total_gap_size,
)

# after u2 leaves, u4 is admitted in two pieces around u3
SPLIT_U4 = [(0.0, 0.3, 1), (0.3, 0.6, 4), (0.6, 0.9, 3), (0.9, 0.95, 4), (0.95, 1.0, "G")]


def entry(st, lo, fill):
    g = st.gap_at(lo)
    seg = st.segment(g)
    return PlanEntry(g, seg.lo, seg.hi, fill)


def spans(st):
    return [(s.lo, s.hi, s.occupant) for s in st.segments()]


# -- new_spectrum / total_gap_size


def test_new_spectrum_is_one_gap():
    st = new_spectrum()
    assert spans(st) == [(0.0, 1.0, None)]
    c = census(st)
    assert (c.n0, c.n1, c.n2, c.f, c.g, c.i_origin) == (0, 0, 0, 0, 1, 1)
    assert c.end_gap_identity_holds()
    assert total_gap_size(st) == 1.0


def test_total_gap_size_one_channel():
    st = SpectrumState.from_layout([(0, 0.3, 0), (0.3, 1, "G")])
    assert total_gap_size(st) == pytest.approx(0.7, abs=1e-12)


def test_total_gap_size_two_gaps():
    st = SpectrumState.from_layout([(0, 0.1, 0), (0.1, 0.2, "G"), (0.2, 0.9, 1), (0.9, 1, "G")])
    assert total_gap_size(st) == pytest.approx(0.2, abs=1e-12)


# -- census


def test_census_single_channel():
    c = census(SpectrumState.from_layout([(0, 0.4, 0), (0.4, 1, "G")]))
    assert (c.n0, c.n1, c.n2, c.g, c.i_origin) == (1, 0, 0, 1, 0)
    assert c.end_gap_identity_holds()


def test_census_split_channel():
    st = SpectrumState.from_layout(SPLIT_U4)
    c = census(st)
    assert (c.n0, c.n1, c.n2, c.g, c.i_origin) == (0, 2, 2, 1, 0)
    assert c.end_gap_identity_holds()
    assert st.tracked_census() == c


def test_census_two_isolated_channels():
    c = census(SpectrumState.from_layout(
        [(0, 0.2, "G"), (0.2, 0.4, 0), (0.4, 0.6, "G"), (0.6, 0.8, 1), (0.8, 1, "G")]))
    assert (c.n0, c.n1, c.n2, c.g, c.i_origin) == (2, 0, 0, 3, 1)
    assert c.end_gap_identity_holds()


def test_gap_identity_when_last_segment_is_a_fragment():
    # the literal form assumes a gap touches position 1
    c = census(SpectrumState.from_layout([(0, 0.5, "G"), (0.5, 1, 0)]))
    assert (c.n0, c.g, c.i_origin, c.i_end) == (1, 1, 1, 0)
    assert not c.end_gap_identity_holds()
    assert c.gap_identity_holds()


# -- carve


def test_carve_two_gaps_left_justified():
    st = SpectrumState.from_layout(
        [(0, 0.1, 0), (0.1, 0.2, "G"), (0.2, 0.5, 1), (0.5, 0.6, "G"), (0.6, 1, 2)])
    plan = GapPlan([entry(st, 0.1, 0.1), entry(st, 0.5, 0.05)])
    ch = st.carve(plan, 7, 0.15)
    assert [(f.lo, f.hi) for f in ch.fragments] == [(0.1, 0.2), (0.5, 0.55)]
    assert [(g.lo, g.hi) for g in st.gaps()] == [(0.55, 0.6)]
    st.check()


def test_carve_from_empty_adds_one_to_sigma():
    st = new_spectrum()
    before = st.census().sigma
    st.carve(plan_linear(st, 0.4), 0, 0.4)
    assert spans(st) == [(0.0, 0.4, 0), (0.4, 1.0, None)]
    assert st.census().sigma - before == 1


def test_carve_three_gaps_adds_one_to_sigma():
    st = SpectrumState.from_layout([
        (0, 0.1, "G"), (0.1, 0.2, 0), (0.2, 0.3, "G"), (0.3, 0.4, 1),
        (0.4, 0.5, "G"), (0.5, 1, 2)])
    before = st.census().sigma
    plan = plan_linear(st, 0.25)
    assert len(plan) == 3
    ch = st.carve(plan, 9, 0.25)
    assert len(ch.fragments) == 3
    assert st.census().sigma - before == 1
    st.check()


def test_carve_exact_fit_leaves_no_sliver():
    st = SpectrumState.from_layout([(0, 0.3, 0), (0.3, 0.5, "G"), (0.5, 1, 1)])
    st.carve(GapPlan([entry(st, 0.3, 0.2 - 1e-13)]), 2, 0.2 - 1e-13)
    assert st.gaps() == []
    st.check()


def test_carve_overfull_fill_is_infeasible():
    st = SpectrumState.from_layout([(0, 0.3, 0), (0.3, 0.5, "G"), (0.5, 1, 1)])
    with pytest.raises(PlanInfeasible):
        st.carve(GapPlan([entry(st, 0.3, 0.25)]), 2, 0.25)


def test_carve_sum_mismatch_is_infeasible():
    st = new_spectrum()
    with pytest.raises(PlanInfeasible):
        st.carve(GapPlan([entry(st, 0.0, 0.3)]), 0, 0.4)


def test_carve_partial_non_final_entry_is_infeasible():
    st = SpectrumState.from_layout([(0, 0.1, "G"), (0.1, 0.5, 0), (0.5, 1, "G")])
    with pytest.raises(PlanInfeasible):
        st.carve(GapPlan([entry(st, 0.0, 0.05), entry(st, 0.5, 0.1)]), 1, 0.15)


# -- release


def test_release_split_channel():
    st = SpectrumState.from_layout(SPLIT_U4)
    rs = st.release(4)
    assert (rs.d0, rs.d1, rs.d2, rs.j, rs.g_minus) == (0, 1, 1, 0, 2)
    assert rs.g_minus == 1 - rs.d0 + rs.d2 + rs.j
    assert spans(st) == [(0.0, 0.3, 1), (0.3, 0.6, None), (0.6, 0.9, 3), (0.9, 1.0, None)]
    st.check()


def test_release_only_channel_resets():
    st = SpectrumState.from_layout([(0, 0.4, 0), (0.4, 1, "G")])
    rs = st.release(0)
    assert (rs.d0, rs.d1, rs.d2, rs.j, rs.g_minus) == (1, 0, 0, 1, 1)
    assert spans(st) == [(0.0, 1.0, None)]


def test_release_merges_both_sides():
    st = SpectrumState.from_layout(
        [(0, 0.2, 0), (0.2, 0.4, "G"), (0.4, 0.6, 1), (0.6, 0.8, "G"), (0.8, 1, 2)])
    st.release(1)
    segs = st.segments()
    assert all(not (a.is_gap and b.is_gap) for a, b in zip(segs, segs[1:]))
    assert [(g.lo, g.hi) for g in st.gaps()] == [(0.2, 0.8)]


def test_release_unknown_channel():
    with pytest.raises(UnknownChannel):
        new_spectrum().release(3)


def test_channel_records_fragments_in_order():
    ch = SpectrumState.from_layout(SPLIT_U4).channel(4)
    assert [(f.lo, f.hi) for f in ch.fragments] == [(0.3, 0.6), (0.9, 0.95)]
    assert ch.size == pytest.approx(0.35)


def test_from_layout_rejects_adjacent_gaps():
    with pytest.raises(CorruptState):
        SpectrumState.from_layout([(0, 0.5, "G"), (0.5, 1, "G")])


def test_from_layout_rejects_adjacent_same_channel():
    with pytest.raises(CorruptState):
        SpectrumState.from_layout([(0, 0.3, 0), (0.3, 0.5, 0), (0.5, 1, "G")])


# -- dump


def test_dump_golden():
    assert SpectrumState.from_layout(SPLIT_U4).dump() == (
        "0.0 0.3 1\n"
        "0.3 0.6 4\n"
        "0.6 0.9 3\n"
        "0.9 0.95 4\n"
        "0.95 1.0 G\n"
    )
