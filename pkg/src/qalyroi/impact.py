"""System Impact Index (SII) in its structural, dynamic and empirical forms.

The structural and empirical indices share a name but are different
formulas; neither is ever substituted for the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BehavioralParams, ObservationSeries
from .errors import DataError, DegeneratePeriodError, DomainError

ALPHA_HEALTH = 0.11  # healthcare share of GDP used for macro conversion


@dataclass(frozen=True)
class ImpactInputs:
    delta_qaly: float
    marginal_roi_cost: float
    params: BehavioralParams
    decay_rate: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.delta_qaly):
            raise DomainError("delta_qaly must be finite")
        if not self.marginal_roi_cost > 0:
            raise DomainError(f"marginal_roi_cost must be > 0, got {self.marginal_roi_cost!r}")
        if not self.decay_rate >= 0:
            raise DomainError("decay_rate must be >= 0")


@dataclass(frozen=True)
class SiiSeries:
    """Dynamic index per period; ``skipped`` lists periods with zero ROI change."""

    periods: tuple
    values: tuple
    skipped: tuple = ()

    def __post_init__(self):
        if len(self.periods) != len(self.values):
            raise DataError("periods and values differ in length")
        if any(b <= a for a, b in zip(self.periods, self.periods[1:])):
            raise DataError("period indices must be strictly increasing")
        if not all(math.isfinite(v) for v in self.values):
            raise DataError("SII values must be finite")


def sii_static(inputs: ImpactInputs) -> float:
    """QALY improvement per unit marginal ROI cost, discounted by ``1 - gamma``."""
    return inputs.delta_qaly / inputs.marginal_roi_cost * (1.0 - inputs.params.gamma)


def _dynamic(lam, gamma, temporal, ratio, decay_rate):
    return lam * ratio * (1.0 - gamma) * np.exp(-decay_rate * (1.0 - temporal))


def sii_dynamic(delta_qaly_t, delta_roi_t, params: BehavioralParams, decay_rate: float = 1.0):
    """Dynamic index ``lam * dQALY/dROI * (1 - gamma) * exp(-rho (1 - T))``.

    Accepts scalars or arrays.  Raises :class:`DegeneratePeriodError` if any
    ``delta_roi_t`` is zero; callers that iterate over periods skip those
    periods and report them.
    """
    if decay_rate < 0:
        raise DomainError("decay_rate must be >= 0")
    droi = np.asarray(delta_roi_t, dtype=float)
    if np.any(droi == 0):
        raise DegeneratePeriodError("delta ROI is zero; the dynamic index is undefined")
    out = _dynamic(params.lam, params.gamma, params.temporal, np.asarray(delta_qaly_t, dtype=float) / droi, decay_rate)
    return float(out) if np.ndim(out) == 0 else out


def sii_series(data: ObservationSeries, params: BehavioralParams, decay_rate: float = 1.0) -> SiiSeries:
    """Dynamic index over consecutive records of an observation series."""
    dq = np.diff(data.qaly)
    dr = np.diff(data.roi)
    periods, values, skipped = [], [], []
    for p, q, r in zip(data.periods[1:], dq, dr):
        if r == 0:
            skipped.append(int(p))
            continue
        periods.append(int(p))
        values.append(float(_dynamic(params.lam, params.gamma, params.temporal, q / r, decay_rate)))
    return SiiSeries(tuple(periods), tuple(values), tuple(skipped))


def sii_empirical(life_expectancy, health_spending):
    """Macro proxy ``LifeExpectancy * ln(1 + HealthSpending) / 100``."""
    hs = np.asarray(health_spending, dtype=float)
    le = np.asarray(life_expectancy, dtype=float)
    if np.any(hs < 0) or np.any(~np.isfinite(hs)):
        raise DataError("health spending must be finite and >= 0")
    if np.any(le <= 0) or np.any(~np.isfinite(le)):
        raise DataError("life expectancy must be finite and > 0")
    out = le * np.log1p(hs) / 100.0
    return float(out) if np.ndim(out) == 0 else out


def macro_conversion(delta_sii: float, alpha_health: float = ALPHA_HEALTH) -> float:
    """GDP-equivalent change ``alpha_health * delta_sii``."""
    if not 0.0 < alpha_health < 1.0:
        raise DomainError(f"alpha_health must lie in (0, 1), got {alpha_health!r}")
    return alpha_health * delta_sii


def fairness_counterfactual(gamma_hat: float, delta_gamma: float) -> float:
    """Relative SII change when fairness preference rises by ``delta_gamma``.

    Only the ``(1 - gamma)`` factor moves, so the result is
    ``(1 - gamma - delta_gamma) / (1 - gamma) - 1``.
    """
    if gamma_hat == 1.0:
        raise DomainError("gamma_hat = 1 leaves no efficiency to discount")
    if not 0.0 <= gamma_hat + delta_gamma <= 1.0 or not 0.0 <= gamma_hat <= 1.0:
        raise DomainError("gamma_hat and gamma_hat + delta_gamma must lie in [0, 1]")
    return (1.0 - gamma_hat - delta_gamma) / (1.0 - gamma_hat) - 1.0
