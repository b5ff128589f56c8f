import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qalyroi import (
    FRACTION_PRESETS,
    BehavioralParams,
    dynamic_objective,
    full_report,
    preset,
    robustness_study,
    scenario_objective,
    sensitivity_coefficient,
    sensitivity_field,
)
from qalyroi.errors import ConfigError, ConvergenceError, DomainError
from qalyroi.simulation import scenario_baseline

MID = BehavioralParams(0.5, 0.4, 0.6)


def linear(p):
    return 2.0 * p.lam - 3.0 * p.gamma + 0.5 * p.temporal + 1.0


def quadratic(p):
    return p.lam**2 + p.gamma**2 - p.lam * p.temporal + p.temporal**2


class TestCoefficient:
    def test_identity_objective(self):
        raw, el = sensitivity_coefficient(lambda p: p.lam, MID, "lambda", 0.08)
        assert raw == pytest.approx(1.0, rel=1e-12) and el == pytest.approx(1.0, rel=1e-12)

    def test_square_at_one(self):
        raw, _ = sensitivity_coefficient(lambda p: p.lam**2, BehavioralParams(1, 0, 1), "lambda", 0.1, box=None)
        assert raw == pytest.approx(2.0, rel=1e-12)

    def test_box_violation_advises_smaller_fraction(self):
        with pytest.raises(DomainError, match="smaller fraction"):
            sensitivity_coefficient(linear, BehavioralParams(0.95, 0.4, 0.6), "lambda", 0.1)

    def test_zero_baseline_omits_elasticity(self):
        raw, el = sensitivity_coefficient(lambda p: p.lam - 0.5, MID, "lambda", 0.08)
        assert raw == pytest.approx(1.0) and el is None

    def test_zero_theta_uses_absolute_step(self):
        raw, el = sensitivity_coefficient(linear, BehavioralParams(0.5, 0.0, 0.6), "gamma", 0.05, box=None)
        assert raw == pytest.approx(-3.0) and el == 0.0

    @pytest.mark.parametrize("f", [0.0, -0.1, math.nan])
    def test_bad_fraction(self, f):
        with pytest.raises(DomainError):
            sensitivity_coefficient(linear, MID, "lambda", f)

    def test_unknown_parameter(self):
        with pytest.raises(DomainError):
            sensitivity_coefficient(linear, MID, "rho", 0.1)

    @settings(max_examples=40)
    @given(st.floats(0.2, 0.8), st.floats(0.2, 0.8), st.floats(0.2, 0.8), st.floats(0.01, 0.2))
    def test_exact_on_quadratics(self, lam, g, t, frac):
        p = BehavioralParams(lam, g, t)
        rep = full_report(quadratic, p, frac)
        assert rep.coefficients["lambda"].raw == pytest.approx(2 * lam - t, abs=1e-9)
        assert rep.coefficients["gamma"].raw == pytest.approx(2 * g, abs=1e-9)
        assert rep.coefficients["temporal"].raw == pytest.approx(2 * t - lam, abs=1e-9)

    @settings(max_examples=30)
    @given(st.floats(0.2, 0.8), st.floats(0.2, 0.8), st.floats(0.2, 0.8))
    def test_antisymmetry(self, lam, g, t):
        p = BehavioralParams(lam, g, t)
        obj = dynamic_objective(1.3, 0.7)
        a = full_report(obj, p, 0.08)
        b = full_report(lambda q: -obj(q), p, 0.08)
        for k in a.coefficients:
            assert b.coefficients[k].raw == -a.coefficients[k].raw


class TestReport:
    def test_constant_objective(self):
        rep = full_report(lambda p: 3.0, MID, 0.1)
        assert all(c.raw == 0.0 for c in rep.coefficients.values())

    def test_dynamic_signs_at_identity(self):
        rep = full_report(dynamic_objective(), BehavioralParams(1, 0, 1), 0.08, box=None)
        c = rep.coefficients
        assert c["lambda"].raw > 0 and c["gamma"].raw < 0 and c["temporal"].raw > 0

    def test_simulation_signs_at_base(self):
        cfg = preset("base")
        rep = full_report(scenario_objective(cfg), scenario_baseline(cfg), FRACTION_PRESETS["simulation"])
        c = rep.coefficients
        assert c["lambda"].raw > 0 and c["gamma"].raw < 0 and c["temporal"].raw > 0
        assert rep.objective == "simulation:base:mean_sii"
        d = rep.to_dict()
        assert d["perturbation_fraction"] == 0.08 and set(d["coefficients"]) == {"lambda", "gamma", "temporal"}

    def test_presets(self):
        assert FRACTION_PRESETS == {"simulation": 0.08, "robustness": 0.10}


class TestField:
    def test_dynamic_worked_cells(self):
        axis = [0.0, 0.5, 1.0]
        grid = sensitivity_field(dynamic_objective(), axis, axis, 1.0)
        base = 0.0  # lam = 0 cell
        assert grid.values[2, 0] == pytest.approx(1.0 - base)
        assert grid.values[1, 1] == pytest.approx(0.25)
        assert grid.values[0, 0] == 0.0

    def test_single_cell(self):
        assert sensitivity_field(dynamic_objective(), [0.3], [0.2], 0.7).values.tolist() == [[0.0]]

    @settings(max_examples=20)
    @given(st.floats(0, 1), st.floats(0.1, 3), st.floats(0.1, 3))
    def test_monotone_gradient(self, t, dq, rho):
        axis = np.linspace(0.05, 0.95, 7)
        v = sensitivity_field(dynamic_objective(dq, 1.0, rho), axis, axis, t).values
        assert np.all(np.diff(v, axis=0) >= 0) and np.all(np.diff(v, axis=1) <= 0)

    def test_axis_validation(self):
        with pytest.raises(DomainError):
            sensitivity_field(linear, [0.5, 0.2], [0.1], 1.0)
        with pytest.raises(DomainError):
            sensitivity_field(linear, [0.5, 1.2], [0.1], 1.0)
        with pytest.raises(DomainError):
            sensitivity_field(linear, [], [0.1], 1.0)

    def test_csv_layout(self):
        g = sensitivity_field(dynamic_objective(), [0.1, 0.2], [0.3, 0.4, 0.5], 1.0)
        rows = [r.split(",") for r in g.to_csv().strip().split("\n")]
        assert rows[0][0] == "lambda\\gamma" and [float(x) for x in rows[0][1:]] == [0.3, 0.4, 0.5]
        assert len(rows) == 3 and all(len(r) == 4 for r in rows)
        assert float(rows[2][0]) == 0.2


class TestRobustness:
    def test_zero_fraction_is_exact(self, recovery_instance):
        data, icfg, fcfg = recovery_instance
        s = robustness_study(data, icfg, fcfg, 0.0, 5, seed=1)
        for name, st_ in s.stats.items():
            assert st_["std"] == 0.0
            assert st_["min"] == st_["mean"] == st_["max"] == getattr(s.baseline, "lam" if name == "lambda" else name)

    def test_envelope_and_invariants(self, recovery_instance):
        data, icfg, fcfg = recovery_instance
        s = robustness_study(data, icfg, fcfg, 0.1, 30, seed=3)
        assert s.n_failed == 0
        base = s.baseline.as_array()
        for j, st_ in enumerate(s.stats.values()):
            assert st_["min"] <= st_["mean"] <= st_["max"] and st_["std"] >= 0
            assert abs(st_["mean"] - base[j]) <= 0.1 * base[j]

    def test_deterministic_across_threads(self, recovery_instance):
        data, icfg, fcfg = recovery_instance
        a = robustness_study(data, icfg, fcfg, 0.1, 10, seed=5)
        b = robustness_study(data, icfg, fcfg, 0.1, 10, seed=5, max_workers=4)
        assert a == b

    def test_too_many_failures(self, recovery_instance, monkeypatch):
        from qalyroi import inverse as inv

        data, icfg, fcfg = recovery_instance
        real_fit = inv.fit

        def flaky(data_, icfg_, fcfg_, starts=None, max_workers=1):
            if starts is not None:  # every refit fails, the baseline fit does not
                raise ConvergenceError("forced")
            return real_fit(data_, icfg_, fcfg_, max_workers=max_workers)

        monkeypatch.setattr(inv, "fit", flaky)
        with pytest.raises(ConvergenceError, match="10 of 10"):
            robustness_study(data, icfg, fcfg, 0.1, 10, seed=5)

    def test_bad_arguments(self, recovery_instance):
        data, icfg, fcfg = recovery_instance
        with pytest.raises(ConfigError):
            robustness_study(data, icfg, fcfg, 0.1, 0, seed=1)
        with pytest.raises(DomainError):
            robustness_study(data, icfg, fcfg, -0.1, 3, seed=1)
