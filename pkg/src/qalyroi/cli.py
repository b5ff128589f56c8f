"""Command-line batch runner.

Usage::

    qalyroi COMMAND [--config PATH] [--out DIR] [--seed N] [--threads N]
                    [--fraction F] [--dgamma F] [--alpha F] [--dsii F]
                    [--scenario LABEL] [--input PATH] [--set KEY=VALUE ...]

Every run resolves defaults, the JSON config file and the flag overrides
(in that order of precedence, lowest first) into one explicit config,
computes all outputs in memory, then moves them into ``--out`` together
with ``manifest.json``.  Passing a manifest back as ``--config`` replays
the run.

Exit status: 0 success, 1 usage or config error, 2 data error,
3 convergence failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import io
import json
import os
import shutil
import sys
import tempfile

from . import __version__, impact, inverse, panel, sensitivity, simulation
from .core import BehavioralParams, ForwardModelConfig, generate_observations
from .errors import ConfigError, ConvergenceError, DataError, DomainError, QalyRoiError, StatisticsError

COMMANDS = (
    "calibrate", "fit-synthetic", "simulate", "suite", "compare",
    "sensitivity", "field", "counterfactual", "robustness", "macro",
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3

DEFAULTS = {
    "seed": simulation.DEFAULT_SEED,
    "threads": 1,
    "fraction": None,
    "inputs": {},
    "forward": {},
    "inverse": {},
    "scenarios": list(simulation.TABLE_B1),
    "scenario": "base",
    "baseline": "base",
    "adaptive": "adaptive_fast",
    "synthetic": {"lambda": 0.6, "gamma": 0.4, "temporal": 0.7, "n": 200, "noise_sigma": 0.01,
                  "priors_at_truth": True},
    "synthetic_panel": {"lambda": 1.0, "gamma": 0.0, "n_countries": 34, "first_year": 2007,
                        "last_year": 2021, "noise_sigma": 0.1},
    "stability": None,
    "sensitivity": {"objective": "simulation"},
    "field": {"objective": "dynamic", "lambda_axis": [0.1, 0.3, 0.5, 0.7, 0.9],
              "gamma_axis": [0.1, 0.3, 0.5, 0.7, 0.9], "fixed_t": 1.0},
    "counterfactual": {"dgamma": 0.2},
    "robustness": {"n_draws": 100},
    "macro": {"alpha": impact.ALPHA_HEALTH, "dsii": 1.0},
}


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qalyroi", description="Forward/inverse/impact experiments for QALY-ROI incentive systems.")
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", help="JSON config file or a manifest.json to replay")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--fraction", help="perturbation fraction, or a preset: simulation (0.08), robustness (0.10)")
    p.add_argument("--dgamma", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--dsii", type=float)
    p.add_argument("--scenario")
    p.add_argument("--input", help="primary input file (panel CSV or calibration JSON)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value; dotted keys reach nested sections")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _set_path(cfg: dict, dotted: str, value):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value


def _parse_scalar(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        if "resolved_config" in loaded:
            loaded = loaded["resolved_config"]
        cfg = _merge(cfg, loaded)
    if args.command:
        if cfg.get("command") not in (None, args.command) and args.config:
            raise ConfigError(f"command {args.command!r} conflicts with config command {cfg['command']!r}")
        cfg["command"] = args.command
    for flag, path in (("seed", "seed"), ("threads", "threads"), ("fraction", "fraction"),
                       ("dgamma", "counterfactual.dgamma"), ("alpha", "macro.alpha"),
                       ("dsii", "macro.dsii"), ("scenario", "scenario")):
        value = getattr(args, flag)
        if value is not None:
            _set_path(cfg, path, value)
    if args.input:
        key = "calibration" if cfg.get("command") == "counterfactual" else "panel"
        _set_path(cfg, f"inputs.{key}", args.input)
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        _set_path(cfg, key.strip(), _parse_scalar(value.strip()))
    if cfg.get("command") not in COMMANDS:
        raise UsageError(f"a command is required; choose from {', '.join(COMMANDS)}")
    if cfg.get("fraction") is not None:
        cfg["fraction"] = _fraction(cfg["fraction"])
    if not isinstance(cfg.get("threads"), int) or cfg["threads"] < 1:
        raise ConfigError("threads must be an integer >= 1")
    if not isinstance(cfg.get("seed"), int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    for path in cfg.get("inputs", {}).values():
        if not os.path.isfile(path):
            raise ConfigError(f"input file not found: {path}")
    return cfg


def _fraction(value) -> float:
    if isinstance(value, str):
        if value in sensitivity.FRACTION_PRESETS:
            return sensitivity.FRACTION_PRESETS[value]
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"fraction must be a number or one of {sorted(sensitivity.FRACTION_PRESETS)}") from None
    if not isinstance(value, (int, float)) or not value > 0:
        raise ConfigError("fraction must be > 0")
    return float(value)


def _require_fraction(cfg) -> float:
    if cfg.get("fraction") is None:
        raise ConfigError(f"{cfg['command']} needs --fraction (e.g. 0.08, 0.10, simulation, robustness)")
    return cfg["fraction"]


def _forward(cfg, horizon=None) -> ForwardModelConfig:
    opts = dict(cfg.get("forward", {}))
    try:
        if horizon is not None and "response_timescale" not in opts:
            return ForwardModelConfig.for_horizon(horizon, **opts)
        return ForwardModelConfig(**opts)
    except TypeError as err:
        raise ConfigError(f"forward: {err}") from None


def _inverse(cfg, **defaults) -> inverse.InverseConfig:
    try:
        return inverse.InverseConfig(**{**defaults, **cfg.get("inverse", {})})
    except TypeError as err:
        raise ConfigError(f"inverse: {err}") from None


def _scenario(entry, seed) -> simulation.ScenarioConfig:
    """A preset label, or an object of fields (optionally ``"preset": label`` plus overrides)."""
    if isinstance(entry, str):
        return simulation.preset(entry, base_seed=seed)
    if not isinstance(entry, dict):
        raise ConfigError(f"scenario entries must be preset labels or objects, got {entry!r}")
    entry = dict(entry)
    base = entry.pop("preset", None)
    fields = simulation.preset(base).to_dict() if base is not None else {}
    fields["base_seed"] = seed
    fields.update(entry)
    try:
        return simulation.ScenarioConfig.from_dict(fields)
    except TypeError as err:
        raise ConfigError(f"scenario: {err}") from None


def _params(d) -> BehavioralParams:
    try:
        return BehavioralParams.from_dict(d)
    except (KeyError, TypeError) as err:
        raise ConfigError(f"behavioural parameters need lambda, gamma, temporal: {err}") from None


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _panel_records(cfg):
    """(records, n_rows, n_dropped, generated_csv_or_None)."""
    path = cfg.get("inputs", {}).get("panel")
    if path:
        loaded = panel.load_panel(path)
        if not loaded.records:
            raise DataError("cleaning left zero panel rows")
        return loaded.records, loaded.n_rows, loaded.n_dropped, None
    sp = cfg["synthetic_panel"]
    records = panel.generate_synthetic_panel(
        BehavioralParams(sp["lambda"], sp["gamma"], 1.0),
        n_countries=int(sp["n_countries"]),
        years=range(int(sp["first_year"]), int(sp["last_year"]) + 1),
        noise_sigma=float(sp["noise_sigma"]),
        seed=cfg["seed"],
    )
    return records, len(records), 0, panel.write_panel(records)


def _synthetic_series(cfg):
    sy = cfg["synthetic"]
    n = int(sy["n"])
    fcfg = _forward(cfg, horizon=n)
    truth = _params(sy)
    data = generate_observations(truth, n, fcfg, float(sy["noise_sigma"]), seed=cfg["seed"])
    priors = {"prior_lambda": truth.lam, "prior_gamma": truth.gamma} if sy.get("priors_at_truth") else {}
    return truth, data, fcfg, _inverse(cfg, **priors)


def _series_csv(data) -> str:
    buf = io.StringIO()
    buf.write("period,action,qaly,roi\n")
    for p, a, q, r in data.records:
        buf.write(f"{p},{a!r},{q!r},{r!r}\n")
    return buf.getvalue()


# Each command returns (outputs: {filename: text}, one-line summary).

def cmd_calibrate(cfg):
    records, n_rows, n_dropped, generated = _panel_records(cfg)
    ols = panel.fit_ols(records)
    ar1 = panel.fit_ar1(records)
    ref = cfg.get("calibration_reference_life_expectancy")
    lam, gamma, loss = panel.fit_efficiency_fairness(records, _inverse(cfg), ref)
    params = BehavioralParams(lam, gamma, ar1.t_hat)
    sii = [r.sii for r in records]
    report = {
        "n_rows": n_rows,
        "n_dropped": n_dropped,
        "n_used": len(records),
        "mean_sii": sum(sii) / len(sii),
        "ols": ols.__dict__,
        "ar1": ar1.__dict__,
        "params": params.to_dict(),
        "efficiency_fairness_loss": loss,
    }
    outputs = {"calibration.json": _dumps(report)}
    if generated is not None:
        outputs["panel.csv"] = generated
    return outputs, (f"calibrated lambda={lam:.4f} gamma={gamma:.4f} T={ar1.t_hat:.4f} "
                     f"(OLS slope {ols.slope:.4f}, {len(records)} rows)")


def cmd_fit_synthetic(cfg):
    truth, data, fcfg, icfg = _synthetic_series(cfg)
    result = inverse.fit(data, icfg, fcfg, max_workers=cfg["threads"])
    err = max(abs(a - b) for a, b in zip(result.params.as_array(), truth.as_array()))
    report = {"true_params": truth.to_dict(), "fit": result.to_dict(), "linf_error": float(err),
              "forward": fcfg.to_dict(), "inverse": icfg.to_dict()}
    st = cfg.get("stability")
    if st:
        rep = inverse.stability_probe(data, icfg, fcfg, st.get("deltas", [1e-3, 1e-2]),
                                      int(st.get("n_probes", 20)), cfg["seed"], cfg["threads"])
        report["stability"] = rep.to_dict()
    outputs = {"observations.csv": _series_csv(data), "fit.json": _dumps(report)}
    p = result.params
    return outputs, f"fit lambda={p.lam:.4f} gamma={p.gamma:.4f} T={p.temporal:.4f} (L-inf error {err:.4f})"


def _scenario_list(cfg):
    return [_scenario(e, cfg["seed"]) for e in cfg["scenarios"]]


def cmd_simulate(cfg):
    sc = _scenario(cfg["scenario"], cfg["seed"])
    res = simulation.simulate(sc, _forward(cfg), cfg["threads"])
    outputs = {
        f"trajectories_{sc.label}.csv": res.to_csv(),
        f"summary_{sc.label}.json": _dumps({"scenario": sc.to_dict(), "summary": res.summary}),
    }
    s = res.summary
    return outputs, f"{sc.label}: terminal SII {s['terminal_sii_mean']:.5f} +/- {s['terminal_sii_se']:.5f}"


def cmd_suite(cfg):
    scenarios = _scenario_list(cfg)
    results = simulation.run_scenario_suite(scenarios, _forward(cfg), cfg["threads"])
    outputs = {f"trajectories_{label}.csv": res.to_csv() for label, res in results}
    outputs["suite_summary.json"] = _dumps({
        "scenarios": [sc.to_dict() for sc in scenarios],
        "summaries": {label: res.summary for label, res in results},
    })
    ordering = sorted(results, key=lambda lr: lr[1].summary["terminal_sii_mean"])
    return outputs, "terminal SII order: " + " < ".join(label for label, _ in ordering)


def cmd_compare(cfg):
    base = _scenario(cfg["baseline"], cfg["seed"])
    adapt = _scenario(cfg["adaptive"], cfg["seed"])
    comp = simulation.compare_policies(base, adapt, _forward(cfg), cfg["threads"])
    outputs = {"comparison.json": _dumps({"baseline": base.to_dict(), "adaptive": adapt.to_dict(),
                                          "dimensions": comp.to_dict()})}
    labels = ", ".join(f"{k}:{v.p_value_label}" for k, v in comp.dimensions.items())
    return outputs, f"{base.label} vs {adapt.label}: {labels}"


def _objective(cfg, section):
    kind = section.get("objective", "simulation")
    if kind == "dynamic":
        fcfg = _forward(cfg)
        obj = sensitivity.dynamic_objective(section.get("delta_qaly", 1.0), section.get("delta_roi", 1.0),
                                            fcfg.decay_rate)
        return obj, BehavioralParams(0.6, 0.4, 0.7), (0.0, 1.0)
    if kind == "simulation":
        sc = _scenario(section.get("scenario", cfg["scenario"]), cfg["seed"])
        return simulation.scenario_objective(sc, _forward(cfg)), simulation.scenario_baseline(sc), (0.0, 1.0)
    if kind == "empirical":
        records = _panel_records(cfg)[0]
        ref = cfg.get("calibration_reference_life_expectancy")
        lam, gamma, _ = panel.fit_efficiency_fairness(records, _inverse(cfg), ref)
        baseline = BehavioralParams(lam, gamma, panel.fit_ar1(records).t_hat)
        return panel.panel_objective(records, ref), baseline, None
    raise ConfigError(f"unknown objective {kind!r}; use dynamic, simulation or empirical")


def cmd_sensitivity(cfg):
    fraction = _require_fraction(cfg)
    section = cfg["sensitivity"]
    obj, baseline, box = _objective(cfg, section)
    if "baseline" in section:
        baseline = _params(section["baseline"])
    if "box" in section:
        box = None if section["box"] is None else tuple(section["box"])
    rep = sensitivity.full_report(obj, baseline, fraction, box=box)
    c = rep.coefficients
    return {"sensitivity.json": _dumps(rep.to_dict())}, (
        f"S_lambda={c['lambda'].raw:+.4f} S_gamma={c['gamma'].raw:+.4f} S_T={c['temporal'].raw:+.4f} "
        f"({rep.objective}, fraction {fraction})")


def cmd_field(cfg):
    section = cfg["field"]
    obj, _, _ = _objective(cfg, section)
    grid = sensitivity.sensitivity_field(obj, section["lambda_axis"], section["gamma_axis"], section["fixed_t"])
    return {"field.csv": grid.to_csv()}, f"field {grid.values.shape[0]}x{grid.values.shape[1]} written"


def cmd_counterfactual(cfg):
    section = cfg["counterfactual"]
    gamma_hat = section.get("gamma_hat")
    source = "config"
    path = cfg.get("inputs", {}).get("calibration")
    if gamma_hat is None and path:
        try:
            with open(path, encoding="utf-8") as fh:
                gamma_hat = json.load(fh)["params"]["gamma"]
        except (OSError, json.JSONDecodeError, KeyError) as err:
            raise DataError(f"cannot read gamma from calibration file {path}: {err}") from None
        source = path
    if gamma_hat is None:
        raise ConfigError("counterfactual needs counterfactual.gamma_hat or a calibration input")
    dgamma = float(section["dgamma"])
    change = impact.fairness_counterfactual(float(gamma_hat), dgamma)
    report = {"gamma_hat": gamma_hat, "dgamma": dgamma, "relative_change": change,
              "percent_change": 100.0 * change, "gamma_source": source}
    return {"counterfactual.json": _dumps(report)}, f"gamma {gamma_hat} -> +{dgamma}: SII change {100 * change:+.2f}%"


def cmd_robustness(cfg):
    fraction = _require_fraction(cfg)
    _, data, fcfg, icfg = _synthetic_series(cfg)
    summary = sensitivity.robustness_study(data, icfg, fcfg, fraction, int(cfg["robustness"]["n_draws"]),
                                           cfg["seed"], cfg["threads"])
    s = summary.stats
    return {"robustness.json": _dumps(summary.to_dict())}, (
        f"std lambda={s['lambda']['std']:.4f} gamma={s['gamma']['std']:.4f} T={s['temporal']['std']:.4f} "
        f"({summary.n_failed}/{summary.n_draws} failed)")


def cmd_macro(cfg):
    section = cfg["macro"]
    dy = impact.macro_conversion(float(section["dsii"]), float(section["alpha"]))
    report = {"delta_sii": section["dsii"], "alpha_health": section["alpha"], "delta_gdp": dy}
    return {"macro.json": _dumps(report)}, f"delta GDP = {dy!r}"


HANDLERS = {
    "calibrate": cmd_calibrate,
    "fit-synthetic": cmd_fit_synthetic,
    "simulate": cmd_simulate,
    "suite": cmd_suite,
    "compare": cmd_compare,
    "sensitivity": cmd_sensitivity,
    "field": cmd_field,
    "counterfactual": cmd_counterfactual,
    "robustness": cmd_robustness,
    "macro": cmd_macro,
}


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_outputs(out_dir: str, outputs: dict, manifest: dict):
    os.makedirs(out_dir, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".qalyroi-", dir=out_dir)
    try:
        for name, text in list(outputs.items()) + [("manifest.json", _dumps(manifest))]:
            with open(os.path.join(tmp, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for name in list(outputs) + ["manifest.json"]:
            os.replace(os.path.join(tmp, name), os.path.join(out_dir, name))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def run(argv=None) -> int:
    """Parse arguments, execute one command and return its exit status."""
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        outputs, line = HANDLERS[cfg["command"]](cfg)
        manifest = {
            "tool": "qalyroi",
            "version": __version__,
            "command": cfg["command"],
            "seed": cfg["seed"],
            "resolved_config": cfg,
            "input_digests": {k: _sha256_file(v) for k, v in sorted(cfg.get("inputs", {}).items())},
            "outputs": {name: hashlib.sha256(text.encode("utf-8")).hexdigest()
                        for name, text in sorted(outputs.items())},
        }
        _write_outputs(args.out, outputs, manifest)
    except ConvergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except DataError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, DomainError, StatisticsError, QalyRoiError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print(line)
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
