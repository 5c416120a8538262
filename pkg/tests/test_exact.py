import math

import numpy as np
import pytest
import sympy as sp

from src.analysis.exact import (
    ABSORBING_CASE,
    N_CASES,
    PATTERN_BOTH,
    PATTERN_FIRST,
    PATTERN_NONE,
    PATTERN_SECOND,
    bias_output_probability,
    case_index,
    classify_width2_case,
    collapse_probability_bound,
    exact_constant_probability,
    exact_constant_trajectory,
    initial_distribution,
    max_safe_depth,
    rational_to_float,
    safe_region,
    transition_matrix,
)
from src.utils.errors import ArgumentError


class TestTransitionMatrix:
    def test_columns_sum_to_one(self):
        P = transition_matrix()
        assert P.shape == (N_CASES, N_CASES)
        for i in range(N_CASES):
            assert sum(P[:, i]) == 1
        assert all(v >= 0 for v in P)

    def test_absorbing_state(self):
        P = transition_matrix()
        column = P[:, ABSORBING_CASE - 1]
        assert column[ABSORBING_CASE - 1] == 1
        assert sum(column) == 1

    def test_initial_distribution(self):
        pi = initial_distribution()
        assert sum(pi) == 1
        assert pi[ABSORBING_CASE - 1] == 0


class TestCases:
    def test_case_index(self):
        assert case_index(PATTERN_BOTH, PATTERN_BOTH) == 1
        assert case_index(PATTERN_NONE, PATTERN_NONE) == ABSORBING_CASE
        assert case_index(PATTERN_FIRST, PATTERN_SECOND) == 7

    def test_case_index_rejects_bad_pattern(self):
        with pytest.raises(ArgumentError):
            case_index(4, 0)

    def test_classify_single(self):
        assert classify_width2_case([0.0, 0.0], [0.0, 0.0]) == ABSORBING_CASE
        assert classify_width2_case([1.0, 0.0], [0.0, 2.0]) == case_index(PATTERN_FIRST, PATTERN_SECOND)

    def test_classify_batch(self):
        pos = np.array([[1.0, 1.0], [0.0, 0.0]])
        neg = np.array([[0.0, 0.0], [0.0, 0.0]])
        np.testing.assert_array_equal(classify_width2_case(pos, neg), [4, 16])

    def test_first_layer_cases_match_initial_distribution(self):
        # 一层宽 2、零偏置：每个神经元恰好在 +1 或 -1 之一上激活
        rng = np.random.default_rng(3)
        w = rng.normal(size=(4000, 2))
        cases = classify_width2_case(np.maximum(w, 0.0), np.maximum(-w, 0.0))
        support = {int(i) + 1 for i, v in enumerate(initial_distribution()) if v != 0}
        assert set(np.unique(cases)) == support


class TestExactProbability:
    def test_small_depths(self):
        assert exact_constant_probability(1) == 0
        assert exact_constant_probability(2) == sp.Rational(5, 32)

    def test_trajectory_matches_pointwise(self):
        trajectory = exact_constant_trajectory(8)
        assert trajectory == [exact_constant_probability(L) for L in range(1, 9)]

    def test_trajectory_is_nondecreasing(self):
        values = exact_constant_trajectory(30)
        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_affine_last_layer_shifts_by_one(self):
        relu = exact_constant_trajectory(10, last_layer_relu=True)
        affine = exact_constant_trajectory(10, last_layer_relu=False)
        assert affine[0] == 0
        assert affine[1:] == relu[:-1]
        assert exact_constant_probability(5, last_layer_relu=False) == relu[3]

    def test_bounded_by_the_union_bound(self):
        for L, value in enumerate(exact_constant_trajectory(50), start=1):
            assert rational_to_float(value) <= collapse_probability_bound((2,) * L) + 1e-15

    def test_rejects_zero_depth(self):
        with pytest.raises(ArgumentError):
            exact_constant_probability(0)
        with pytest.raises(ArgumentError):
            exact_constant_trajectory(0)

    def test_rational_to_float(self):
        assert rational_to_float(sp.Rational(5, 32)) == 0.15625


class TestBounds:
    def test_known_values(self):
        assert collapse_probability_bound((10,) * 10) == pytest.approx(1 - (1023 / 1024) ** 10)
        assert collapse_probability_bound((3,) * 10) == pytest.approx(1 - (7 / 8) ** 10)
        assert collapse_probability_bound((5,) * 10) == pytest.approx(0.272, abs=1e-3)

    def test_affine_last_layer_skips_last_width(self):
        assert collapse_probability_bound((3, 3, 1), last_layer_relu=False) == pytest.approx(1 - (7 / 8) ** 2)

    def test_monotone_in_depth(self):
        values = [collapse_probability_bound((4,) * L) for L in range(1, 40)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_nonzero_bias(self):
        assert collapse_probability_bound((3,), biases_nonzero=True) == pytest.approx(1 / 8)
        assert bias_output_probability((3, 3, 2), last_layer_relu=False) == pytest.approx(1 / 8)
        assert bias_output_probability((1,), last_layer_relu=False) == 0.0

    def test_rejects_bad_widths(self):
        with pytest.raises(ArgumentError):
            collapse_probability_bound(())
        with pytest.raises(ArgumentError):
            collapse_probability_bound((2, 0))


class TestSafeDepth:
    @pytest.mark.parametrize("width, p, expected", [(10, 0.01, 10), (1, 0.5, 1), (2, 0.1, 0)])
    def test_known_values(self, width, p, expected):
        assert max_safe_depth(width, p) == expected

    def test_depth_respects_bound(self):
        for width in (2, 5, 12):
            for p in (0.01, 0.1, 0.5):
                d = max_safe_depth(width, p)
                if d > 0:
                    assert collapse_probability_bound((width,) * d) <= p + 1e-12
                assert collapse_probability_bound((width,) * (d + 1)) > p

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1])
    def test_rejects_bad_p(self, p):
        with pytest.raises(ArgumentError):
            max_safe_depth(4, p)

    def test_safe_region_ordering(self):
        rows = safe_region([2, 10], [0.1, 0.01])
        assert [(w, p) for w, p, _ in rows] == [(2, 0.1), (10, 0.1), (2, 0.01), (10, 0.01)]
        assert rows[-1][2] == 10
        assert math.isclose(rows[0][1], 0.1)
