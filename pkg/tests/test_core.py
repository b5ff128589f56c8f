import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qalyroi import (
    BehavioralParams,
    ForwardModelConfig,
    ObservationSeries,
    cost,
    generate_observations,
    optimal_action,
    qaly_response,
    response_function,
    temporal_weight,
    utility,
)
from qalyroi.errors import DataError, DomainError

CFG = ForwardModelConfig()
unit = st.floats(0.0, 1.0)
interior_gamma = st.floats(0.01, 0.8)


class TestQalyResponse:
    def test_zero_action(self):
        assert qaly_response(0.0, CFG) == 0.0

    def test_known_point(self):
        assert qaly_response(0.3219, CFG) == pytest.approx(0.8, abs=1e-4)

    def test_saturates_below_ceiling(self):
        v = qaly_response(CFG.a_max, CFG)
        assert v < CFG.q_max and v == pytest.approx(CFG.q_max, abs=1e-4)

    @pytest.mark.parametrize("a", [-0.1, 2.1, math.nan])
    def test_out_of_range(self, a):
        with pytest.raises(DomainError):
            qaly_response(a, CFG)

    @given(st.floats(0.0, 2.0), st.floats(0.0, 2.0))
    def test_monotone_and_matches_oracle(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert qaly_response(lo, CFG) <= qaly_response(hi, CFG)
        assert qaly_response(a, CFG) == pytest.approx(oracles.qaly(a), abs=1e-15)

    def test_concave(self):
        a = np.linspace(0, 2, 401)
        assert np.all(np.diff(qaly_response(a, CFG), 2) <= 1e-15)


class TestUtility:
    @given(unit)
    def test_zero_action_is_zero(self, g):
        assert utility(0.0, g, CFG) == 0.0

    @given(st.floats(0.0, 2.0))
    def test_gamma_corners(self, a):
        assert utility(a, 0.0, CFG) == pytest.approx(qaly_response(a, CFG))
        assert utility(a, 1.0, CFG) == pytest.approx(-cost(a, CFG))

    def test_gamma_out_of_range(self):
        with pytest.raises(DomainError):
            utility(0.5, 1.2, CFG)


class TestOptimalAction:
    def test_interior_closed_form(self):
        assert optimal_action(0.5, CFG) == pytest.approx(oracles.LN5_OVER_5, rel=1e-12)

    def test_zero_gamma_gives_a_max(self):
        assert optimal_action(0.0, CFG) == CFG.a_max

    def test_threshold_gives_zero(self):
        assert optimal_action(5 / 6, CFG) == pytest.approx(0.0, abs=1e-15)
        assert optimal_action(0.9, CFG) == 0.0
        assert optimal_action(1.0, CFG) == 0.0

    def test_non_increasing_in_gamma(self):
        grid = np.linspace(0, 1, 201)
        acts = [optimal_action(g, CFG) for g in grid]
        assert np.all(np.diff(acts) <= 0)

    @pytest.mark.parametrize("gamma", [0.0, 0.05, 0.2, 0.5, 0.7, 0.83, 0.95])
    def test_maximiser_on_dense_grid(self, gamma):
        a_star = optimal_action(gamma, CFG)
        grid = np.linspace(0, CFG.a_max, 20001)
        assert utility(a_star, gamma, CFG) >= utility(grid, gamma, CFG).max() - 1e-9
        # brute-force oracle agrees on the argmax to grid resolution
        a_grid, _ = oracles.grid_argmax_action(gamma, n=20001)
        assert a_star == pytest.approx(a_grid, abs=2 * CFG.a_max / 20000)

    @settings(max_examples=50)
    @given(interior_gamma)
    def test_marginal_condition_by_finite_difference(self, gamma):
        a = optimal_action(gamma, CFG)
        if not 0.0 < a < CFG.a_max:
            return
        h = 1e-6
        dq = oracles.central_difference(lambda x: oracles.qaly(x), a, h)
        dc = oracles.central_difference(lambda x: x * 1.0, a, h)
        rhs = gamma / (1 - gamma) * dc
        assert abs(dq - rhs) <= 1e-6 * abs(rhs)


class TestResponse:
    def test_immediate_responsiveness_removes_transient(self):
        p = BehavioralParams(0.7, 0.2, 1.0)
        for t in (0, 3, 50):
            assert response_function(0.4, t, p, CFG) == pytest.approx(0.7 * 0.8 * qaly_response(0.4, CFG))

    def test_zero_lambda(self):
        assert response_function(1.0, 0, BehavioralParams(0, 0.3, 0.2), CFG) == 0.0

    def test_worked_value(self):
        cfg = ForwardModelConfig(response_timescale=10.0)
        a = -math.log(0.2) / 5  # qaly_response = 0.8
        assert response_function(a, 0, BehavioralParams(1, 0.5, 0.5), cfg) == pytest.approx(0.2, rel=1e-12)

    @given(st.floats(0.0, 2.0), st.integers(0, 200), unit, unit, unit)
    def test_matches_oracle(self, a, t, lam, g, temp):
        got = response_function(a, t, BehavioralParams(lam, g, temp), CFG)
        assert got == pytest.approx(oracles.response(a, t, lam, g, temp), abs=1e-14)

    @given(st.floats(0.01, 2.0), st.integers(0, 100), unit, unit, unit, unit)
    def test_monotonicity(self, a, t, lam, g, temp, bump):
        base = BehavioralParams(lam, g, temp)
        f = response_function(a, t, base, CFG)
        hi_lam = response_function(a, t, BehavioralParams(max(lam, bump), g, temp), CFG)
        hi_t = response_function(a, t, BehavioralParams(lam, g, max(temp, bump)), CFG)
        hi_g = response_function(a, t, BehavioralParams(lam, max(g, bump), temp), CFG)
        assert hi_lam >= f - 1e-15 and hi_t >= f - 1e-15 and hi_g <= f + 1e-15

    def test_rejects_out_of_box(self):
        with pytest.raises(DomainError):
            response_function(0.5, 0, BehavioralParams(0.5, 1.5, 0.5), CFG)
        with pytest.raises(DomainError):
            response_function(0.5, -1, BehavioralParams(0.5, 0.5, 0.5), CFG)


@given(st.floats(0.0, 1e4), unit, st.floats(0.1, 100))
def test_temporal_weight_bounds(t, temp, tau):
    w = temporal_weight(t, temp, tau)
    assert min(temp, 1.0) - 1e-15 <= w <= 1.0


def test_temporal_weight_limits():
    assert temporal_weight(1e6, 0.2, 10.0) == pytest.approx(1.0)
    assert temporal_weight(0, 0.3, 10.0) == pytest.approx(0.3)


class TestParams:
    def test_box_check(self):
        assert BehavioralParams(1, 0, 1).in_box()
        assert not BehavioralParams(1.01, 0, 1).in_box()
        assert BehavioralParams(1.01, 0, 1).in_box(lambda_max=2.0)
        with pytest.raises(DomainError):
            BehavioralParams(0.5, -0.1, 0.5).check_box()

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            BehavioralParams(math.inf, 0.1, 0.1)

    @given(unit, unit, unit)
    def test_dict_round_trip(self, a, b, c):
        p = BehavioralParams(a, b, c)
        assert BehavioralParams.from_dict(p.to_dict()) == p
        assert BehavioralParams.from_array(p.as_array()) == p


def test_forward_config_validation():
    with pytest.raises(DomainError):
        ForwardModelConfig(saturation_rate=0)
    with pytest.raises(DomainError):
        ForwardModelConfig(decay_rate=-1)
    assert ForwardModelConfig.for_horizon(200).response_timescale == 50.0


class TestObservationSeries:
    def test_validation(self):
        with pytest.raises(DataError):
            ObservationSeries([0], [0.1], [0.1])
        with pytest.raises(DataError):
            ObservationSeries([0, 0], [0.1, 0.2], [0.1, 0.2])
        with pytest.raises(DataError):
            ObservationSeries([0, 1], [0.1, 0.2], [0.1, math.nan])
        with pytest.raises(DataError):
            ObservationSeries([0, 1], [-0.1, 0.2], [0.1, 0.2])

    def test_read_only_and_records(self):
        s = ObservationSeries([0, 2], [0.1, 0.2], [0.3, 0.4], [1.0, 2.0])
        with pytest.raises(ValueError):
            s.qaly[0] = 9
        assert ObservationSeries.from_records(s.records).records == s.records

    def test_generator_is_deterministic_and_consistent(self):
        p = BehavioralParams(0.6, 0.4, 0.7)
        a = generate_observations(p, 50, CFG, noise_sigma=0.0, seed=3)
        b = generate_observations(p, 50, CFG, noise_sigma=0.0, seed=3)
        assert a.records == b.records
        np.testing.assert_allclose(a.qaly, response_function(a.actions, a.periods, p, CFG), rtol=0, atol=0)
        np.testing.assert_allclose(a.roi, a.qaly - a.actions)
