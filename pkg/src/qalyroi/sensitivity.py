"""Local sensitivity of the SII to the behavioural parameters.

Coefficients are symmetric central differences

    S = [SII(theta + d) - SII(theta - d)] / (2 d),   d = fraction * |theta|

reported both raw and as elasticities ``S * theta / SII(baseline)``.  The
perturbation fraction is always explicit: 0.08 for the simulation study and
0.10 for the empirical robustness study (see ``FRACTION_PRESETS``).
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import inverse
from .core import PARAM_NAMES, BehavioralParams, ForwardModelConfig, ObservationSeries
from .errors import ConfigError, ConvergenceError, DomainError, QalyRoiError
from .impact import _dynamic

FRACTION_PRESETS = {"simulation": 0.08, "robustness": 0.10}
UNIT_BOX = (0.0, 1.0)
MAX_FAILED_SHARE = 0.10

_ALIASES = {"lambda": "lam", "lam": "lam", "gamma": "gamma", "T": "temporal", "temporal": "temporal"}


def _param_name(which: str) -> str:
    try:
        return _ALIASES[which]
    except KeyError:
        raise DomainError(f"unknown parameter {which!r}; use lambda, gamma or T") from None


@dataclass(frozen=True)
class Coefficient:
    raw: float
    elasticity: float | None  # None when the baseline SII is zero
    step: float


@dataclass(frozen=True)
class SensitivityReport:
    coefficients: dict  # "lambda" | "gamma" | "temporal" -> Coefficient
    baseline: BehavioralParams
    baseline_value: float
    perturbation_fraction: float
    objective: str = ""

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "baseline": self.baseline.to_dict(),
            "baseline_sii": self.baseline_value,
            "perturbation_fraction": self.perturbation_fraction,
            "coefficients": {k: dict(v.__dict__) for k, v in self.coefficients.items()},
        }


@dataclass(frozen=True)
class RobustnessSummary:
    stats: dict  # parameter -> {"mean", "std", "min", "max"}
    n_draws: int
    n_failed: int
    baseline: BehavioralParams
    fraction: float

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline.to_dict(),
            "fraction": self.fraction,
            "n_draws": self.n_draws,
            "n_failed": self.n_failed,
            "stats": self.stats,
        }


@dataclass(frozen=True)
class FieldGrid:
    lambda_axis: np.ndarray
    gamma_axis: np.ndarray
    values: np.ndarray  # rows follow lambda_axis, columns gamma_axis

    def to_csv(self, fh=None):
        """First row ``lambda\\gamma,<gamma axis>``; each later row ``<lambda>,<values>``."""
        buf = fh if fh is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda\\gamma"] + [repr(float(g)) for g in self.gamma_axis])
        for lam, row in zip(self.lambda_axis, self.values):
            w.writerow([repr(float(lam))] + [repr(float(v)) for v in row])
        return None if fh is not None else buf.getvalue()


def sensitivity_coefficient(objective, baseline: BehavioralParams, which: str, fraction: float, box=UNIT_BOX):
    """Central-difference coefficient of ``objective`` in one parameter.

    Parameters
    ----------
    objective : callable
        Maps :class:`BehavioralParams` to an SII value.
    baseline : BehavioralParams
    which : {"lambda", "gamma", "T"}
    fraction : float
        Relative half-width of the stencil.  A zero baseline coordinate
        uses the absolute half-width ``fraction`` instead.
    box : (float, float) or None
        Domain the stencil must stay inside.  Pass ``None`` for objectives
        defined beyond ``[0, 1]`` (e.g. at the saturated corner).

    Returns
    -------
    (raw, elasticity) : tuple
        ``elasticity`` is None when ``objective(baseline) == 0``.
    """
    c = _coefficient(objective, baseline, _param_name(which), fraction, box, objective(baseline))
    return c.raw, c.elasticity


def _coefficient(objective, baseline, name, fraction, box, base_value):
    if not (math.isfinite(fraction) and fraction > 0):
        raise DomainError("perturbation fraction must be > 0")
    theta = getattr(baseline, name)
    step = fraction * abs(theta) if theta != 0 else fraction
    lo, hi = theta - step, theta + step
    if box is not None and (lo < box[0] or hi > box[1]):
        raise DomainError(
            f"{name}={theta} +/- {step:.4g} leaves [{box[0]}, {box[1]}]; use a smaller fraction or box=None"
        )
    up = objective(replace(baseline, **{name: hi}))
    down = objective(replace(baseline, **{name: lo}))
    raw = (up - down) / (2.0 * step)
    elasticity = raw * theta / base_value if base_value != 0 else None
    return Coefficient(raw=float(raw), elasticity=None if elasticity is None else float(elasticity), step=step)


def full_report(objective, baseline: BehavioralParams, fraction: float, box=UNIT_BOX) -> SensitivityReport:
    """Coefficients for lambda, gamma and T at one baseline."""
    base_value = float(objective(baseline))
    coeffs = {
        ("lambda" if name == "lam" else name): _coefficient(objective, baseline, name, fraction, box, base_value)
        for name in PARAM_NAMES
    }
    return SensitivityReport(
        coefficients=coeffs,
        baseline=baseline,
        baseline_value=base_value,
        perturbation_fraction=fraction,
        objective=getattr(objective, "identity", getattr(objective, "__name__", "custom")),
    )


def sensitivity_field(objective, lambda_axis, gamma_axis, fixed_t: float) -> FieldGrid:
    """Objective on a (lambda, gamma) grid minus its first cell."""
    lam_ax = np.asarray(lambda_axis, dtype=float)
    gam_ax = np.asarray(gamma_axis, dtype=float)
    for name, ax in (("lambda_axis", lam_ax), ("gamma_axis", gam_ax)):
        if ax.ndim != 1 or ax.size == 0:
            raise DomainError(f"{name} must be a non-empty 1-d sequence")
        if np.any(ax < 0) or np.any(ax > 1) or np.any(np.diff(ax) <= 0):
            raise DomainError(f"{name} must be strictly increasing within [0, 1]")
    values = np.array([[objective(BehavioralParams(l, g, fixed_t)) for g in gam_ax] for l in lam_ax], dtype=float)
    return FieldGrid(lam_ax, gam_ax, values - values[0, 0])


def dynamic_objective(delta_qaly: float = 1.0, delta_roi: float = 1.0, decay_rate: float = 1.0):
    """The dynamic SII as a function of the behavioural triple."""
    if delta_roi == 0:
        raise DomainError("delta_roi must be non-zero")
    ratio = delta_qaly / delta_roi

    def objective(p: BehavioralParams) -> float:
        return float(_dynamic(p.lam, p.gamma, p.temporal, ratio, decay_rate))

    objective.identity = f"dynamic:ratio={ratio!r}:rho={decay_rate!r}"
    return objective


def _draw_stream(seed: int, draw: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(draw,)))


def robustness_study(
    data: ObservationSeries,
    icfg: inverse.InverseConfig,
    fcfg: ForwardModelConfig,
    fraction: float,
    n_draws: int,
    seed: int,
    max_workers: int = 1,
) -> RobustnessSummary:
    """Monte Carlo local-convergence study around the fitted equilibrium.

    Each draw perturbs every coordinate of the baseline estimate by a
    uniform relative factor in ``[-fraction, +fraction]`` (clipped to the
    box) and uses it as the single start point of a refit on jittered data:
    the qaly column plus uniform noise of amplitude ``fraction`` times the
    baseline residual RMS.  The summary reports mean, std, min and max of
    the refitted parameters.  More than 10% failed refits is an error.
    """
    if n_draws < 1:
        raise ConfigError("n_draws must be >= 1")
    if not (math.isfinite(fraction) and fraction >= 0):
        raise DomainError("fraction must be >= 0")
    base_fit = inverse.fit(data, icfg, fcfg, max_workers=max_workers)
    base = base_fit.params.as_array()
    resid_rms = math.sqrt(max(base_fit.loss - _penalty(base, icfg), 0.0) / len(data))
    upper = np.array([icfg.lambda_max, 1.0, 1.0])

    def run(draw):
        rng = _draw_stream(seed, draw)
        u = rng.uniform(-1.0, 1.0, 3)
        v = rng.uniform(-1.0, 1.0, len(data))
        start = np.clip(base * (1.0 + fraction * u), 0.0, upper)
        jittered = data.with_qaly(data.qaly + fraction * resid_rms * v)
        try:
            return inverse.fit(jittered, icfg, fcfg, starts=start[None, :]).params.as_array()
        except QalyRoiError:
            return None

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outs = list(pool.map(run, range(n_draws)))
    else:
        outs = [run(d) for d in range(n_draws)]
    ok = np.array([o for o in outs if o is not None])
    n_failed = n_draws - len(ok)
    if n_failed > MAX_FAILED_SHARE * n_draws:
        raise ConvergenceError(f"{n_failed} of {n_draws} robustness refits failed")
    stats = {}
    for j, name in enumerate(("lambda", "gamma", "temporal")):
        col = ok[:, j]
        constant = bool(np.all(col == col[0]))  # keeps fraction = 0 exact
        stats[name] = {
            "mean": float(col[0]) if constant else float(col.mean()),
            "std": 0.0 if constant or col.size < 2 else float(col.std(ddof=1)),
            "min": float(col.min()),
            "max": float(col.max()),
        }
    return RobustnessSummary(stats, n_draws, n_failed, base_fit.params, fraction)


def _penalty(x, icfg):
    return icfg.beta1 * (x[0] - icfg.prior_lambda) ** 2 + icfg.beta2 * (x[1] - icfg.prior_gamma) ** 2
