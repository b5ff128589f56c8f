"""Regularised inverse estimation of ``(lambda, gamma, T)``.

The estimator minimises

    L(lam, gamma, T) = sum_t [qaly_t - f(a_t, t; lam, gamma, T)]^2
                       + beta1 (lam - lam0)^2 + beta2 (gamma - gamma0)^2

over the box ``[0, lambda_max] x [0, 1] x [0, 1]``.  Because the response
depends on ``(lam, gamma)`` only through ``lam * (1 - gamma)``, the data
term is flat along that ridge and the quadratic prior is what pins down a
unique point.  :func:`convexity_check`, :func:`ridge_profile` and
:func:`stability_probe` expose those properties numerically.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import core
from ._solver import LeastSquaresProblem, projected_descent
from .core import BehavioralParams, ForwardModelConfig, ObservationSeries
from .errors import ConfigError, ConvergenceError, DataError

T_REL_STEP = 1e-5
HESSIAN_STEP = 1e-2
TIE_TOL = 1e-12


@dataclass(frozen=True)
class InverseConfig:
    beta1: float = 1e-3
    beta2: float = 1e-3
    prior_lambda: float = 1.0
    prior_gamma: float = 0.0
    grad_tol: float = 1e-8
    step_tol: float = 1e-10
    max_iters: int = 500
    n_starts: int = 8
    lambda_max: float = 1.0

    def __post_init__(self):
        if not (self.beta1 >= 0 and self.beta2 >= 0):
            raise ConfigError("beta1 and beta2 must be >= 0")
        if not (0 <= self.prior_lambda <= self.lambda_max and 0 <= self.prior_gamma <= 1):
            raise ConfigError("priors must lie inside the parameter box")
        if not (self.grad_tol > 0 and self.step_tol > 0):
            raise ConfigError("tolerances must be > 0")
        if self.max_iters < 1 or self.n_starts < 1:
            raise ConfigError("max_iters and n_starts must be >= 1")
        if not (math.isfinite(self.lambda_max) and self.lambda_max > 0):
            raise ConfigError("lambda_max must be finite and > 0")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class InverseFit:
    params: BehavioralParams
    loss: float
    grad_norm: float
    hessian_min_eig: float
    converged: bool
    iterations: int
    status: str = ""
    start_index: int = -1
    loss_history: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "loss": self.loss,
            "grad_norm": self.grad_norm,
            "hessian_min_eig": self.hessian_min_eig,
            "converged": self.converged,
            "iterations": self.iterations,
            "status": self.status,
            "start_index": self.start_index,
        }


@dataclass(frozen=True)
class StabilityReport:
    perturbation_sizes: tuple
    parameter_shifts: tuple
    lipschitz_ratios: tuple
    component_shifts: tuple = ()  # mean |shift| per (lam, gamma, T), per delta

    def to_dict(self) -> dict:
        return {
            "perturbation_sizes": list(self.perturbation_sizes),
            "parameter_shifts": list(self.parameter_shifts),
            "lipschitz_ratios": list(self.lipschitz_ratios),
            "component_shifts": [list(c) for c in self.component_shifts],
        }


class _BehavioralProblem(LeastSquaresProblem):
    def __init__(self, data: ObservationSeries, icfg: InverseConfig, fcfg: ForwardModelConfig, data_weight=1.0):
        super().__init__(
            lower=[0.0, 0.0, 0.0],
            upper=[icfg.lambda_max, 1.0, 1.0],
            weights=[icfg.beta1, icfg.beta2, 0.0],
            centers=[icfg.prior_lambda, icfg.prior_gamma, 0.0],
        )
        self.qaly = np.asarray(data.qaly, dtype=float)
        self.periods = np.asarray(data.periods, dtype=float)
        self.curve = core.qaly_response(data.actions, fcfg)
        self.tau = fcfg.response_timescale
        self.scale = math.sqrt(data_weight)

    def residuals(self, x):
        lam, gamma, temporal = x
        f = core._response(lam, gamma, temporal, self.curve, self.periods, self.tau)
        return self.scale * (self.qaly - f)

    def jacobian(self, x):
        lam, gamma, temporal = x
        cw = self.curve * core.temporal_weight(self.periods, temporal, self.tau)
        h = T_REL_STEP * max(1.0, abs(temporal))
        up = self.residuals(np.array([lam, gamma, temporal + h]))
        down = self.residuals(np.array([lam, gamma, temporal - h]))
        return np.column_stack([
            -self.scale * (1.0 - gamma) * cw,
            self.scale * lam * cw,
            (up - down) / (2.0 * h),
        ])


def _validate(data: ObservationSeries, fcfg: ForwardModelConfig):
    data.check_actions(fcfg)


def inverse_loss(
    params: BehavioralParams,
    data: ObservationSeries,
    icfg: InverseConfig,
    fcfg: ForwardModelConfig,
    data_weight: float = 1.0,
) -> float:
    """Sum of squared response residuals plus the quadratic prior penalty.

    ``data_weight`` scales the residual term; ``0`` leaves the penalty only.
    """
    _validate(data, fcfg)
    return _BehavioralProblem(data, icfg, fcfg, data_weight).loss(params.as_array())


def _central_hessian(func, x, h=HESSIAN_STEP):
    # Exact (up to rounding) for polynomials of degree <= 2 in each coordinate.
    x = np.asarray(x, dtype=float)
    d = x.size
    H = np.empty((d, d))
    f0 = func(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        H[i, i] = (func(x + ei) - 2.0 * f0 + func(x - ei)) / h**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            H[i, j] = H[j, i] = (
                func(x + ei + ej) - func(x + ei - ej) - func(x - ei + ej) + func(x - ei - ej)
            ) / (4.0 * h**2)
    return H


def loss_hessian(data, at: BehavioralParams, icfg, fcfg, data_weight: float = 1.0) -> np.ndarray:
    """Central-difference Hessian of the inverse loss in ``(lam, gamma)`` at fixed T."""
    _validate(data, fcfg)
    problem = _BehavioralProblem(data, icfg, fcfg, data_weight)
    temporal = at.temporal
    return _central_hessian(lambda v: problem.loss(np.array([v[0], v[1], temporal])), [at.lam, at.gamma])


def convexity_check(data, at: BehavioralParams, icfg, fcfg, data_weight: float = 1.0) -> float:
    """Smallest eigenvalue of the ``(lam, gamma)`` Hessian of the inverse loss.

    With the quadratic prior the penalty alone contributes
    ``diag(2 beta1, 2 beta2)``, so wherever the residual term is locally
    convex the result is at least ``2 min(beta1, beta2)``.
    """
    return float(np.linalg.eigvalsh(loss_hessian(data, at, icfg, fcfg, data_weight)).min())


def ridge_profile(data, icfg, fcfg, product: float, temporal: float, lambdas) -> np.ndarray:
    """Inverse loss along ``{lam (1 - gamma) = product}`` parametrised by lam."""
    _validate(data, fcfg)
    problem = _BehavioralProblem(data, icfg, fcfg)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas < product) or product < 0:
        raise DataError("ridge requires lam >= product >= 0 so that gamma stays in [0, 1]")
    return np.array([problem.loss(np.array([lam, 1.0 - product / lam, temporal])) for lam in lambdas])


def default_starts(n_starts: int, lambda_max: float = 1.0) -> np.ndarray:
    """Deterministic low-discrepancy start points inside the box."""
    pts = qmc.Halton(d=3, scramble=False).random(n_starts + 1)[1:]
    pts[:, 0] *= lambda_max
    return pts


def _select(results, icfg):
    anchor = np.array([icfg.prior_lambda, icfg.prior_gamma, 0.5])
    best = None
    if results:
        anchor = anchor[: results[0][1].x.size]
    for idx, res in results:
        if best is None:
            best = (idx, res)
            continue
        _, cur = best
        if res.loss < cur.loss - TIE_TOL:
            best = (idx, res)
        elif abs(res.loss - cur.loss) <= TIE_TOL:
            if np.linalg.norm(res.x - anchor) < np.linalg.norm(cur.x - anchor):
                best = (idx, res)
    return best


def _map(func, items, max_workers):
    if max_workers is None or max_workers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(func, items))


def fit(
    data: ObservationSeries,
    icfg: InverseConfig | None = None,
    fcfg: ForwardModelConfig | None = None,
    starts=None,
    max_workers: int = 1,
) -> InverseFit:
    """Recover ``(lam, gamma, T)`` by multi-start projected descent.

    Parameters
    ----------
    data : ObservationSeries
        At least three records with non-constant actions.
    icfg, fcfg : InverseConfig, ForwardModelConfig
        Regularisation/solver settings and forward-model constants.
    starts : array_like, optional
        ``(m, 3)`` start points; defaults to ``icfg.n_starts`` Halton points.
    max_workers : int
        Threads used for the start loop; results do not depend on it.

    Raises
    ------
    DataError
        Fewer than three records or zero action variance.
    ConvergenceError
        No start converged; ``err.best`` holds the lowest-loss iterate.
    """
    icfg = icfg or InverseConfig()
    fcfg = fcfg or ForwardModelConfig()
    if len(data) < 3:
        raise DataError("fit needs at least 3 observations")
    if not np.var(data.actions) > 0:
        raise DataError("actions have zero variance; parameters are not identifiable")
    _validate(data, fcfg)

    problem = _BehavioralProblem(data, icfg, fcfg)
    if starts is None:
        starts = default_starts(icfg.n_starts, icfg.lambda_max)
    starts = np.atleast_2d(np.asarray(starts, dtype=float))

    def run(x0):
        return projected_descent(problem, x0, icfg.grad_tol, icfg.step_tol, icfg.max_iters)

    results = list(enumerate(_map(run, list(starts), max_workers)))
    converged = [(i, r) for i, r in results if r.converged]
    idx, res = _select(converged or results, icfg)
    params = BehavioralParams.from_array(res.x)
    min_eig = convexity_check(data, params, icfg, fcfg)
    out = InverseFit(
        params=params,
        loss=res.loss,
        grad_norm=res.grad_norm,
        hessian_min_eig=min_eig,
        converged=res.converged,
        iterations=res.iterations,
        status=res.status,
        start_index=idx,
        loss_history=tuple(res.history),
    )
    if not converged:
        raise ConvergenceError(
            f"no start converged within {icfg.max_iters} iterations "
            f"(best loss {res.loss:.6g}, gradient norm {res.grad_norm:.3g})",
            best=out,
        )
    return out


def _probe_stream(seed: int, probe: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(probe,)))


def stability_probe(
    data: ObservationSeries,
    icfg: InverseConfig,
    fcfg: ForwardModelConfig,
    deltas,
    n_probes: int,
    seed: int,
    max_workers: int = 1,
) -> StabilityReport:
    """Empirical Lipschitz ratios of the estimator under bounded data noise.

    Probe ``p`` draws ``u ~ U[-1, 1]^n`` from its own stream and refits on
    ``qaly + delta * u`` for every ``delta``; the sup-norm of that change is
    ``delta``.  Shifts are averaged over probes.
    """
    if n_probes < 1:
        raise ConfigError("n_probes must be >= 1")
    deltas = [float(d) for d in deltas]
    if any(d < 0 for d in deltas):
        raise ConfigError("perturbation sizes must be >= 0")
    base = fit(data, icfg, fcfg, max_workers=max_workers).params.as_array()
    noise = [_probe_stream(seed, p).uniform(-1.0, 1.0, len(data)) for p in range(n_probes)]

    def run(task):
        delta, p = task
        if delta == 0.0:
            return np.zeros(3)
        refit = fit(data.with_qaly(data.qaly + delta * noise[p]), icfg, fcfg)
        return refit.params.as_array() - base

    tasks = [(d, p) for d in deltas for p in range(n_probes)]
    diffs = np.array(_map(run, tasks, max_workers)).reshape(len(deltas), n_probes, 3)
    shifts = np.linalg.norm(diffs, axis=2).mean(axis=1)
    ratios = [float(s / d) if d > 0 else 0.0 for s, d in zip(shifts, deltas)]
    comps = np.abs(diffs).mean(axis=1)
    return StabilityReport(
        perturbation_sizes=tuple(deltas),
        parameter_shifts=tuple(float(s) for s in shifts),
        lipschitz_ratios=tuple(ratios),
        component_shifts=tuple(tuple(float(v) for v in c) for c in comps),
    )
