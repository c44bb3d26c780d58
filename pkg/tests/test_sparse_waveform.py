import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jcrwave.errors import InfeasibleBudget, OverheadExceedsCpi, ScheduleTooLong
from jcrwave.sparse_waveform import (
    Family,
    FrameTiming,
    PreambleSchedule,
    build_nested,
    build_schedule,
    build_uniform,
    build_wichmann,
    difference_cowaveform,
    from_positions,
    param_candidates,
    preamble_overhead,
    vp_count_closed_form,
    vp_count_optimal_params,
    vp_rule_params,
    wichmann_spacings,
)

T_D = 25e-6
TIMING = FrameTiming()


class TestBuilders:
    def test_uniform_positions(self):
        assert build_uniform(4, T_D).positions == (0, 1, 2, 3)
        assert build_uniform(2, T_D).positions == (0, 1)

    def test_uniform_40_fits_cpi(self):
        s = build_uniform(40, T_D, cpi=1e-3)
        assert s.aperture == 39
        assert s.times[-1] == pytest.approx(975e-6)

    def test_uniform_too_long(self):
        with pytest.raises(ScheduleTooLong):
            build_uniform(42, T_D, cpi=1e-3)

    def test_nested_examples(self):
        assert build_nested(2, 2, T_D).positions == (0, 1, 2, 5)
        assert build_nested(1, 1, T_D).positions == (0, 1)
        assert build_nested(3, 3, T_D).aperture == 11

    def test_wichmann_examples(self):
        assert wichmann_spacings(1, 1) == [1, 2, 3, 7, 4, 4, 1]
        assert build_wichmann(1, 1, T_D).positions == (0, 1, 3, 6, 13, 17, 21, 22)
        assert wichmann_spacings(0, 1) == [1, 1, 3, 2]
        assert build_wichmann(0, 1, T_D).positions == (0, 1, 2, 5, 7)

    @pytest.mark.parametrize("p,q", [(0, 0), (1, 1), (2, 1), (3, 5), (5, 11)])
    def test_wichmann_element_count(self, p, q):
        assert build_wichmann(p, q, T_D).size == 3 * p + 2 * q + 3

    def test_invalid_schedules(self):
        with pytest.raises(ValueError):
            PreambleSchedule((0,), Family.CUSTOM, (), T_D)
        with pytest.raises(ValueError):
            PreambleSchedule((1, 2), Family.CUSTOM, (), T_D)
        with pytest.raises(ValueError):
            PreambleSchedule((0, 2, 2), Family.CUSTOM, (), T_D)
        with pytest.raises(ValueError):
            build_nested(0, 3, T_D)
        with pytest.raises(ValueError):
            build_uniform(1, T_D)

    def test_custom_reanchored(self):
        s = from_positions([3, 4, 7], T_D)
        assert s.positions == (0, 1, 4)
        assert s.family is Family.CUSTOM

    def test_describe(self):
        assert build_wichmann(1, 1, T_D).describe() == "wichmann(1,1)"


class TestCoWaveform:
    def test_uniform(self):
        co = difference_cowaveform(build_uniform(4, T_D))
        assert co.lags == (0, 1, 2, 3)
        assert co.multiplicity == (4, 3, 2, 1)
        assert co.hole_free

    def test_nested_2_2(self):
        co = difference_cowaveform(build_nested(2, 2, T_D))
        assert co.lags == (0, 1, 2, 3, 4, 5)
        assert co.hole_free

    def test_hole(self):
        co = difference_cowaveform(from_positions([0, 1, 4], T_D))
        assert co.lags == (0, 1, 3, 4)
        assert not co.hole_free
        assert co.contiguous_extent == 1
        assert co.count(2) == 0
        assert co.count(-3) == 1

    def test_wichmann_1_1(self):
        co = difference_cowaveform(build_wichmann(1, 1, T_D))
        assert co.hole_free and co.contiguous_extent == 22 and co.vp_count_one_sided == 22

    def test_printed_template_not_always_hole_free(self):
        # p != q: the template leaves holes, so enumeration, not the formula, decides
        co = difference_cowaveform(build_wichmann(2, 1, T_D))
        assert not co.hole_free
        assert vp_count_closed_form("wichmann", (2, 1)) != co.vp_count_one_sided


class TestClosedForms:
    def test_examples(self):
        assert vp_count_closed_form("nested", (3, 3)) == 11
        assert vp_count_closed_form("wichmann", (1, 1)) == 22
        assert vp_count_closed_form("uniform", (4,)) == 3

    @pytest.mark.parametrize("m1,m2", list(itertools.product(range(1, 9), range(1, 9))))
    def test_nested_agrees_with_enumeration(self, m1, m2):
        co = difference_cowaveform(build_nested(m1, m2, T_D))
        assert co.vp_count_one_sided == vp_count_closed_form("nested", (m1, m2))

    def test_custom_has_no_closed_form(self):
        with pytest.raises(ValueError):
            vp_count_closed_form("custom", ())


class TestVpRule:
    def test_nested(self):
        assert vp_count_optimal_params("nested", 6).params == (3, 3)
        assert vp_count_optimal_params("nested", 7).params == (4, 3)

    def test_wichmann_m20(self):
        rule = vp_count_optimal_params("wichmann", 20)
        assert rule.params == (3, 5)
        assert rule.element_count == 22
        assert rule.mismatch

    def test_budget_too_small(self):
        with pytest.raises(InfeasibleBudget):
            vp_count_optimal_params("nested", 1)

    def test_candidates_have_exact_size(self):
        for fam in ("nested", "wichmann"):
            for M in range(2, 30):
                for params in param_candidates(fam, M):
                    assert build_schedule(fam, params, T_D).size == M

    def test_wichmann_fallback(self):
        # no 2- or 4-element member exists
        assert vp_rule_params("wichmann", 4) is None
        assert vp_rule_params("wichmann", 2) is None
        # M = 8: the literal rule gives (1, 1), which is exact and hole-free
        assert vp_rule_params("wichmann", 8) == (1, 1)
        # M = 40: best hole-free member by enumeration
        assert vp_rule_params("wichmann", 40) == (5, 11)
        assert difference_cowaveform(build_wichmann(5, 11, T_D)).contiguous_extent == 462


class TestOverhead:
    def test_m40(self):
        assert 1 - preamble_overhead(40, TIMING, 1e-3) == pytest.approx(0.1956, abs=5e-5)

    def test_wichmann_1_1(self):
        s = build_wichmann(1, 1, T_D, cpi=1e-3)
        assert 1 - preamble_overhead(s, TIMING) == pytest.approx(8 * 4.891e-6 / 1e-3, rel=1e-3)

    def test_no_overhead(self):
        assert preamble_overhead(10, FrameTiming(0, 1e-9, 0.0), 1e-3) == 1.0

    def test_exceeds(self):
        with pytest.raises(OverheadExceedsCpi):
            preamble_overhead(300, TIMING, 1e-3)

    @given(st.integers(1, 200), st.integers(0, 5000), st.floats(0, 1e-5))
    def test_monotone(self, n, P, ifs):
        def mu(n, P, ifs):
            try:
                return preamble_overhead(n, FrameTiming(P, 1 / 1.76e9, ifs), 1e-3)
            except OverheadExceedsCpi:
                return -np.inf

        base = mu(n, P, ifs)
        assert mu(n + 1, P, ifs) <= base
        assert mu(n, P + 1, ifs) <= base
        assert mu(n, P, ifs + 1e-7) <= base


positions_strategy = st.lists(st.integers(0, 60), min_size=2, max_size=12, unique=True)


@given(positions_strategy)
def test_cowaveform_invariants(pos):
    s = from_positions(pos, T_D)
    co = difference_cowaveform(s)
    assert co.lags[0] == 0 and co.multiplicity[0] == s.size
    # signed multiplicities sum to M^2
    assert co.multiplicity[0] + 2 * sum(co.multiplicity[1:]) == s.size**2
    assert set(range(co.contiguous_extent + 1)) <= set(co.lags)
    assert co.hole_free == (co.contiguous_extent == co.lags[-1])


@given(st.integers(2, 40))
def test_uniform_lags(n):
    co = difference_cowaveform(build_uniform(n, T_D))
    assert co.lags == tuple(range(n))


@given(positions_strategy, st.integers(1, 100))
def test_translation_invariance(pos, shift):
    a = difference_cowaveform(from_positions(pos, T_D))
    b = difference_cowaveform(from_positions([p + shift for p in pos], T_D))
    assert a == b
