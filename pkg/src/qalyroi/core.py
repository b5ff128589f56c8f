"""Domain types and the forward fairness-adjusted utility model.

The forward layer describes an agent choosing an action ``a`` in
``[0, a_max]`` to maximise

    U(a) = (1 - gamma) * QALY(a) - gamma * Cost(a)

with a saturating QALY curve ``q_max * (1 - exp(-k a))`` and a linear cost
``c * a``.  The behavioural response used by the inverse layer is

    f(a, t; lam, gamma, T) = lam * (1 - gamma) * QALY(a) * w(t; T)
    w(t; T) = 1 - (1 - T) * exp(-t / tau)

so that ``T = 1`` means the agent responds fully from the first period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DomainError

PARAM_NAMES = ("lam", "gamma", "temporal")


@dataclass(frozen=True)
class BehavioralParams:
    """The latent behavioural triple ``(lambda, gamma, T)``.

    Attributes
    ----------
    lam : float
        Efficiency sensitivity (``lambda``).
    gamma : float
        Fairness preference.
    temporal : float
        Temporal responsiveness ``T``.

    Construction only requires finite values.  The ``[0, 1]`` box is
    enforced by the operations that need it (see :meth:`check_box`), because
    local sensitivity stencils legitimately evaluate objectives just outside
    the box.
    """

    lam: float
    gamma: float
    temporal: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))

    def check_box(self, lambda_max: float = 1.0) -> "BehavioralParams":
        if not 0.0 <= self.lam <= lambda_max:
            raise DomainError(f"lambda={self.lam} outside [0, {lambda_max}]")
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError(f"gamma={self.gamma} outside [0, 1]")
        if not 0.0 <= self.temporal <= 1.0:
            raise DomainError(f"temporal={self.temporal} outside [0, 1]")
        return self

    def in_box(self, lambda_max: float = 1.0) -> bool:
        try:
            self.check_box(lambda_max)
        except DomainError:
            return False
        return True

    def as_array(self) -> np.ndarray:
        return np.array([self.lam, self.gamma, self.temporal])

    @classmethod
    def from_array(cls, values) -> "BehavioralParams":
        lam, gamma, temporal = (float(v) for v in values)
        return cls(lam, gamma, temporal)

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "gamma": self.gamma, "temporal": self.temporal}

    @classmethod
    def from_dict(cls, d: dict) -> "BehavioralParams":
        lam = d["lambda"] if "lambda" in d else d["lam"]
        temporal = d["temporal"] if "temporal" in d else d["T"]
        return cls(lam, d["gamma"], temporal)


@dataclass(frozen=True)
class ForwardModelConfig:
    """Constants of the reference forward model.

    ``saturation_rate`` (k) defaults to the scenario table value 5.0 and
    ``decay_rate`` (rho) scales the responsiveness penalty of the dynamic
    impact index.  ``response_timescale`` (tau) defaults to a quarter of the
    default 50-period horizon; use :meth:`for_horizon` for other lengths.
    """

    saturation_rate: float = 5.0
    q_max: float = 1.0
    unit_cost: float = 1.0
    a_max: float = 2.0
    decay_rate: float = 1.0
    response_timescale: float = 12.5

    def __post_init__(self):
        for name in ("saturation_rate", "q_max", "unit_cost", "a_max", "response_timescale"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be finite and > 0, got {value!r}")
        if not (math.isfinite(self.decay_rate) and self.decay_rate >= 0):
            raise DomainError(f"decay_rate must be >= 0, got {self.decay_rate!r}")

    @classmethod
    def for_horizon(cls, horizon: int, **kwargs) -> "ForwardModelConfig":
        """Config whose response timescale is ``horizon / 4``."""
        if horizon < 1:
            raise DomainError("horizon must be >= 1")
        return cls(response_timescale=horizon / 4.0, **kwargs)

    def to_dict(self) -> dict:
        return {
            "saturation_rate": self.saturation_rate,
            "q_max": self.q_max,
            "unit_cost": self.unit_cost,
            "a_max": self.a_max,
            "decay_rate": self.decay_rate,
            "response_timescale": self.response_timescale,
        }


@dataclass(frozen=True)
class ObservationSeries:
    """Time-indexed ``(period, action, qaly, roi)`` records.

    Stored column-wise as read-only float arrays.
    """

    periods: np.ndarray
    actions: np.ndarray
    qaly: np.ndarray
    roi: np.ndarray = field(default=None)

    def __post_init__(self):
        periods = np.asarray(self.periods)
        if periods.ndim != 1:
            raise DataError("periods must be one-dimensional")
        if not np.all(np.equal(np.mod(periods, 1), 0)):
            raise DataError("period indices must be integers")
        periods = periods.astype(np.int64)
        n = periods.size
        actions = np.asarray(self.actions, dtype=float)
        qaly = np.asarray(self.qaly, dtype=float)
        roi = np.zeros(n) if self.roi is None else np.asarray(self.roi, dtype=float)
        for name, col in (("actions", actions), ("qaly", qaly), ("roi", roi)):
            if col.shape != (n,):
                raise DataError(f"{name} has shape {col.shape}, expected ({n},)")
            if not np.all(np.isfinite(col)):
                raise DataError(f"{name} contains non-finite values")
        if n < 2:
            raise DataError("an observation series needs at least 2 records")
        if np.any(periods < 0):
            raise DataError("period indices must be >= 0")
        if np.any(np.diff(periods) <= 0):
            raise DataError("period indices must be strictly increasing")
        if np.any(actions < 0):
            raise DataError("actions must be >= 0")
        for name, col in (("periods", periods), ("actions", actions), ("qaly", qaly), ("roi", roi)):
            col.setflags(write=False)
            object.__setattr__(self, name, col)

    def __len__(self) -> int:
        return self.periods.size

    def check_actions(self, cfg: ForwardModelConfig) -> None:
        if np.any(self.actions > cfg.a_max):
            raise DataError(f"actions exceed a_max={cfg.a_max}")

    def with_qaly(self, qaly) -> "ObservationSeries":
        return ObservationSeries(self.periods, self.actions, qaly, self.roi)

    @property
    def records(self) -> list[tuple[int, float, float, float]]:
        return [
            (int(p), float(a), float(q), float(r))
            for p, a, q, r in zip(self.periods, self.actions, self.qaly, self.roi)
        ]

    @classmethod
    def from_records(cls, records) -> "ObservationSeries":
        cols = list(zip(*records))
        if len(cols) not in (3, 4):
            raise DataError("records must be (period, action, qaly[, roi]) tuples")
        return cls(*cols)


def _check_gamma(gamma):
    g = np.asarray(gamma, dtype=float)
    if np.any(~np.isfinite(g)) or np.any(g < 0) or np.any(g > 1):
        raise DomainError(f"gamma must lie in [0, 1], got {gamma!r}")


def _check_action(action, cfg: ForwardModelConfig):
    a = np.asarray(action, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a < 0) or np.any(a > cfg.a_max):
        raise DomainError(f"action must lie in [0, {cfg.a_max}], got {action!r}")


def qaly_response(action, cfg: ForwardModelConfig):
    """Saturating QALY curve ``q_max * (1 - exp(-k * action))``."""
    _check_action(action, cfg)
    return cfg.q_max * -np.expm1(-cfg.saturation_rate * np.asarray(action, dtype=float))


def cost(action, cfg: ForwardModelConfig):
    _check_action(action, cfg)
    return cfg.unit_cost * np.asarray(action, dtype=float)


def utility(action, gamma, cfg: ForwardModelConfig):
    """Fairness-adjusted utility ``(1 - gamma) QALY(a) - gamma Cost(a)``."""
    _check_gamma(gamma)
    return (1.0 - gamma) * qaly_response(action, cfg) - gamma * cost(action, cfg)


def optimal_action(gamma: float, cfg: ForwardModelConfig) -> float:
    """Maximiser of :func:`utility` over ``[0, a_max]``.

    Interior solutions satisfy the marginal indifference rule
    ``QALY'(a) = gamma / (1 - gamma) * Cost'(a)``; the closed form is
    clipped to the feasible interval, so ``gamma = 0`` returns ``a_max`` and
    any ``gamma`` at or above ``q_max k / (q_max k + c)`` returns 0.
    """
    _check_gamma(gamma)
    gamma = float(gamma)
    if gamma == 0.0:
        return cfg.a_max
    if gamma == 1.0:
        return 0.0
    k = cfg.saturation_rate
    ratio = (1.0 - gamma) * cfg.q_max * k / (gamma * cfg.unit_cost)
    return float(np.clip(math.log(ratio) / k, 0.0, cfg.a_max))


def temporal_weight(period, temporal, tau: float):
    """Responsiveness weight ``1 - (1 - T) exp(-t / tau)``."""
    return 1.0 - (1.0 - temporal) * np.exp(-np.asarray(period, dtype=float) / tau)


def _response(lam, gamma, temporal, qaly_curve, periods, tau):
    # Unchecked kernel shared with the inverse engine.
    return lam * (1.0 - gamma) * qaly_curve * temporal_weight(periods, temporal, tau)


def response_function(action, period, params: BehavioralParams, cfg: ForwardModelConfig):
    """Behavioural response ``lam (1 - gamma) QALY(a) w(t; T)``."""
    params.check_box(lambda_max=np.inf)
    if np.any(np.asarray(period) < 0):
        raise DomainError("period must be >= 0")
    return _response(
        params.lam, params.gamma, params.temporal,
        qaly_response(action, cfg), period, cfg.response_timescale,
    )


def generate_observations(
    params: BehavioralParams,
    n: int,
    cfg: ForwardModelConfig,
    noise_sigma: float = 0.0,
    seed: int = 0,
    actions=None,
) -> ObservationSeries:
    """Synthetic series drawn from the response function plus Gaussian noise.

    Actions are uniform on ``[0, a_max]`` unless given.  The ROI column is
    the period's net benefit ``qaly - unit_cost * action``.
    """
    params.check_box(lambda_max=np.inf)
    if n < 2:
        raise DomainError("n must be >= 2")
    if noise_sigma < 0:
        raise DomainError("noise_sigma must be >= 0")
    rng = np.random.default_rng(seed)
    if actions is None:
        actions = rng.uniform(0.0, cfg.a_max, size=n)
    else:
        actions = np.asarray(actions, dtype=float)
    periods = np.arange(n)
    clean = response_function(actions, periods, params, cfg)
    qaly = clean + noise_sigma * rng.standard_normal(n)
    roi = qaly - cfg.unit_cost * actions
    return ObservationSeries(periods, actions, qaly, roi)
