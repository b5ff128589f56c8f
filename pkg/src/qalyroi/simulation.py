"""Monte Carlo simulation of behavioural propagation across regions.

Each region ``i`` follows

    dQALY[i, t] = lam (1 - gamma) dROI[i, t] + eps[i, t],  eps ~ N(0, sigma^2)
    T[i, t + 1] = T[i, t] + eta (T* - T[i, t])

and the dynamic SII is recorded every period.  Noise for replication ``r``
and region ``i`` comes from its own PCG64 stream seeded by
``SeedSequence(base_seed, spawn_key=(r, i))`` and consumed in period order,
so results do not depend on how replications are scheduled.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .core import BehavioralParams, ForwardModelConfig
from .errors import ConfigError, StatisticsError
from .impact import _dynamic

CONVERGENCE_BAND = 0.05
DEFAULT_SEED = 20240607


@dataclass(frozen=True)
class ScenarioConfig:
    """One policy scenario.

    ``temporal_init`` is the region's nominal responsiveness (the ``T``
    column of the scenario table); the adaptation trajectory itself starts
    at ``t0`` and relaxes towards ``t_star`` at rate ``learning_rate``.
    ``roi_drift`` is either a constant per-period ROI change or a sequence
    of length ``horizon``.
    """

    label: str
    lam: float = 0.6
    gamma: float = 0.4
    temporal_init: float = 0.6
    saturation_rate: float = 5.0
    t0: float = 0.5
    noise_sigma: float = 0.02
    n_rep: int = 20
    learning_rate: float = 0.1
    t_star: float = 0.7
    horizon: int = 50
    n_regions: int = 1
    base_seed: int = DEFAULT_SEED
    roi_drift: float | tuple = 1.0

    def __post_init__(self):
        for name in ("lam", "gamma", "temporal_init", "t0", "t_star", "learning_rate"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise ConfigError(f"{self.label}: {name} must lie in [0, 1], got {v!r}")
        if not self.noise_sigma >= 0:
            raise ConfigError(f"{self.label}: noise_sigma must be >= 0")
        if not self.saturation_rate > 0:
            raise ConfigError(f"{self.label}: saturation_rate must be > 0")
        if self.n_rep < 1 or self.horizon < 2 or self.n_regions < 1:
            raise ConfigError(f"{self.label}: need n_rep >= 1, horizon >= 2, n_regions >= 1")
        if self.base_seed < 0:
            raise ConfigError(f"{self.label}: base_seed must be >= 0")
        if not isinstance(self.roi_drift, (int, float)):
            drift = tuple(float(v) for v in self.roi_drift)
            if len(drift) != self.horizon:
                raise ConfigError(f"{self.label}: roi_drift series must have length horizon={self.horizon}")
            object.__setattr__(self, "roi_drift", drift)
        if not np.all(np.isfinite(self.roi_path())):
            raise ConfigError(f"{self.label}: roi_drift must be finite")

    def roi_path(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.roi_drift, dtype=float), (self.horizon,))

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        if isinstance(d["roi_drift"], tuple):
            d["roi_drift"] = list(d["roi_drift"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**d)


TABLE_B1 = {
    "base": ScenarioConfig("base"),
    "fairness_high": ScenarioConfig("fairness_high", gamma=0.6),
    "adaptive_fast": ScenarioConfig("adaptive_fast", learning_rate=0.3),
    "efficiency_boost": ScenarioConfig("efficiency_boost", lam=0.8, gamma=0.3),
}


def preset(label: str, **overrides) -> ScenarioConfig:
    """A scenario-table preset, optionally with fields replaced."""
    try:
        cfg = TABLE_B1[label]
    except KeyError:
        raise ConfigError(f"unknown scenario preset {label!r}; choose from {sorted(TABLE_B1)}") from None
    return replace(cfg, **overrides) if overrides else cfg


def step_adaptation(t_current: float, learning_rate: float, t_star: float) -> float:
    """One relaxation step ``T + eta (T* - T)``."""
    if learning_rate == 1.0:
        return t_star  # exact, the general form can round away from T*
    return t_current + learning_rate * (t_star - t_current)


def adaptation_path(t0: float, learning_rate: float, t_star: float, horizon: int) -> np.ndarray:
    path = np.empty(horizon)
    path[0] = t0
    for t in range(1, horizon):
        path[t] = step_adaptation(path[t - 1], learning_rate, t_star)
    return path


def convergence_time(path, t0: float, t_star: float, band: float = CONVERGENCE_BAND):
    """First period inside the ``band * |T0 - T*|`` neighbourhood of T*, or None."""
    width = band * abs(t0 - t_star)
    if width == 0:
        return 0
    inside = np.flatnonzero(np.abs(np.asarray(path) - t_star) < width)
    return int(inside[0]) if inside.size else None


@dataclass
class SimulationResult:
    config: ScenarioConfig
    delta_qaly: np.ndarray  # (n_rep, n_regions, horizon)
    temporal: np.ndarray
    sii: np.ndarray  # nan where dROI == 0
    degenerate_periods: tuple
    summary: dict = field(default_factory=dict)
    seed_used: int = 0

    def terminal_sii(self) -> np.ndarray:
        """Per-replication SII at the last non-degenerate period, averaged over regions."""
        valid = np.flatnonzero(self.config.roi_path() != 0)
        if valid.size == 0:
            return np.full(self.config.n_rep, np.nan)
        return self.sii[:, :, valid[-1]].mean(axis=1)

    def mean_sii(self) -> np.ndarray:
        """Per-replication SII averaged over regions and non-degenerate periods."""
        return np.nanmean(self.sii, axis=(1, 2)) if np.isfinite(self.sii).any() else np.full(self.config.n_rep, np.nan)

    def to_csv(self, fh=None) -> str | None:
        """Write ``replication,region,period,delta_qaly,temporal,sii`` rows."""
        buf = fh if fh is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replication", "region", "period", "delta_qaly", "temporal", "sii"])
        n_rep, n_reg, horizon = self.delta_qaly.shape
        for r in range(n_rep):
            for i in range(n_reg):
                for t in range(horizon):
                    s = self.sii[r, i, t]
                    w.writerow([r, i, t, repr(float(self.delta_qaly[r, i, t])),
                                repr(float(self.temporal[r, i, t])), "" if np.isnan(s) else repr(float(s))])
        return None if fh is not None else buf.getvalue()


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    n = values.size
    mean = float(values.mean())
    if n < 2 or np.all(values == values[0]):
        return (float(values[0]) if n else math.nan), 0.0
    se = float(values.std(ddof=1) / math.sqrt(n))
    return mean, se


def _replication_noise(cfg: ScenarioConfig, r: int) -> np.ndarray:
    out = np.empty((cfg.n_regions, cfg.horizon))
    for i in range(cfg.n_regions):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.base_seed, spawn_key=(r, i)))
        out[i] = rng.standard_normal(cfg.horizon)
    return cfg.noise_sigma * out


def simulate(cfg: ScenarioConfig, fcfg: ForwardModelConfig | None = None, max_workers: int = 1) -> SimulationResult:
    """Run ``cfg.n_rep`` replications of the propagation and adaptation dynamics."""
    fcfg = fcfg or ForwardModelConfig()
    droi = cfg.roi_path()
    ok = droi != 0
    path = adaptation_path(cfg.t0, cfg.learning_rate, cfg.t_star, cfg.horizon)
    drive = cfg.lam * (1.0 - cfg.gamma) * droi
    penalty_path = path  # same for every region

    def run(r):
        eps = _replication_noise(cfg, r)
        dq = drive + eps
        sii = np.full_like(dq, np.nan)
        ratio = np.divide(dq, droi, out=np.zeros_like(dq), where=ok)
        sii[:, ok] = _dynamic(cfg.lam, cfg.gamma, penalty_path, ratio, fcfg.decay_rate)[:, ok]
        return dq, sii

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outs = list(pool.map(run, range(cfg.n_rep)))
    else:
        outs = [run(r) for r in range(cfg.n_rep)]

    dq = np.stack([o[0] for o in outs])
    sii = np.stack([o[1] for o in outs])
    temporal = np.broadcast_to(path, dq.shape).copy()
    result = SimulationResult(
        config=cfg,
        delta_qaly=dq,
        temporal=temporal,
        sii=sii,
        degenerate_periods=tuple(int(t) for t in np.flatnonzero(~ok)),
        seed_used=cfg.base_seed,
    )
    term_mean, term_se = _mean_se(result.terminal_sii())
    avg_mean, avg_se = _mean_se(result.mean_sii())
    conv = convergence_time(path, cfg.t0, cfg.t_star)
    # The adaptation path carries no noise, so every replication shares it.
    result.summary = {
        "label": cfg.label,
        "n_rep": cfg.n_rep,
        "terminal_sii_mean": term_mean,
        "terminal_sii_se": term_se,
        "mean_sii_mean": avg_mean,
        "mean_sii_se": avg_se,
        "convergence_time_mean": None if conv is None else float(conv),
        "convergence_time_se": None if conv is None else 0.0,
        "degenerate_periods": list(result.degenerate_periods),
        "seed_used": cfg.base_seed,
    }
    return result


def run_scenario_suite(scenarios, fcfg: ForwardModelConfig | None = None, max_workers: int = 1):
    """Simulate every scenario; returns ``[(label, SimulationResult), ...]`` in input order."""
    scenarios = list(scenarios)
    if not scenarios:
        raise ConfigError("scenario suite is empty")
    labels = [s.label for s in scenarios]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate scenario labels in {labels}")
    return [(s.label, simulate(s, fcfg, max_workers)) for s in scenarios]


@dataclass(frozen=True)
class DimensionComparison:
    baseline_mean: float
    adaptive_mean: float
    baseline_se: float
    adaptive_se: float
    t_statistic: float
    p_value: float
    p_value_label: str
    degenerate_variance: bool = False


@dataclass(frozen=True)
class PolicyComparison:
    dimensions: dict  # "lambda" | "gamma" | "temporal" -> DimensionComparison

    def to_dict(self) -> dict:
        out = {}
        for name, d in self.dimensions.items():
            row = dict(d.__dict__)
            if math.isinf(row["t_statistic"]):
                row["t_statistic"] = "inf" if row["t_statistic"] > 0 else "-inf"
            out[name] = row
        return out


def significance_label(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "ns"


def _welch(a, b) -> DimensionComparison:
    ma, sa = _mean_se(a)
    mb, sb = _mean_se(b)
    if sa == 0 and sb == 0:
        diff = mb - ma
        t = 0.0 if diff == 0 else math.copysign(math.inf, diff)
        p = 1.0 if diff == 0 else 0.0
        return DimensionComparison(ma, mb, sa, sb, t, p, significance_label(p), True)
    res = stats.ttest_ind(b, a, equal_var=False)
    t, p = float(res.statistic), float(res.pvalue)
    if math.isnan(p):
        t, p = 0.0, 1.0
    return DimensionComparison(ma, mb, sa, sb, t, p, significance_label(p))


def compare_policies(baseline: ScenarioConfig, adaptive: ScenarioConfig,
                     fcfg: ForwardModelConfig | None = None, max_workers: int = 1) -> PolicyComparison:
    """Baseline vs adaptive terminal SII, one behavioural dimension at a time.

    For each dimension the baseline scenario is compared with a copy that
    takes only that dimension's settings from ``adaptive`` (``lam``;
    ``gamma``; or the adaptation settings ``temporal_init``, ``t0``,
    ``learning_rate``, ``t_star``).  Both arms use the baseline seed, so
    they share noise draws.
    """
    if baseline.n_rep != adaptive.n_rep:
        raise ConfigError("baseline and adaptive need equal n_rep")
    if baseline.n_rep < 2:
        raise StatisticsError("need at least 2 replications for standard errors")
    variants = {
        "lambda": replace(baseline, lam=adaptive.lam),
        "gamma": replace(baseline, gamma=adaptive.gamma),
        "temporal": replace(
            baseline,
            temporal_init=adaptive.temporal_init,
            t0=adaptive.t0,
            learning_rate=adaptive.learning_rate,
            t_star=adaptive.t_star,
        ),
    }
    base_term = simulate(baseline, fcfg, max_workers).terminal_sii()
    dims = {}
    for name, variant in variants.items():
        dims[name] = _welch(base_term, simulate(variant, fcfg, max_workers).terminal_sii())
    return PolicyComparison(dims)


def scenario_objective(cfg: ScenarioConfig, fcfg: ForwardModelConfig | None = None, statistic: str = "mean_sii"):
    """Simulation-backed objective ``BehavioralParams -> SII``.

    ``lam`` and ``gamma`` replace the scenario's values and ``temporal``
    replaces the starting responsiveness ``t0``.  The returned value is the
    replication mean of the time-averaged SII (``statistic="mean_sii"``) or
    of the terminal SII (``"terminal_sii"``).  Seeds are fixed, so nearby
    evaluations share noise.
    """
    if statistic not in ("mean_sii", "terminal_sii"):
        raise ConfigError(f"unknown statistic {statistic!r}")

    def objective(params: BehavioralParams) -> float:
        res = simulate(replace(cfg, lam=params.lam, gamma=params.gamma, t0=params.temporal), fcfg)
        return float(np.mean(getattr(res, statistic)()))

    objective.identity = f"simulation:{cfg.label}:{statistic}"
    return objective


def scenario_baseline(cfg: ScenarioConfig) -> BehavioralParams:
    return BehavioralParams(cfg.lam, cfg.gamma, cfg.t0)
