"""Local sensitivities, the (lambda, gamma) field and the refit robustness envelope."""

import numpy as np

from qalyroi import (
    FRACTION_PRESETS,
    BehavioralParams,
    ForwardModelConfig,
    InverseConfig,
    dynamic_objective,
    full_report,
    generate_observations,
    preset,
    robustness_study,
    scenario_objective,
    sensitivity_field,
)
from qalyroi.simulation import scenario_baseline

base = preset("base")
sim = full_report(scenario_objective(base), scenario_baseline(base), FRACTION_PRESETS["simulation"])
dyn = full_report(dynamic_objective(), BehavioralParams(0.6, 0.4, 0.6), FRACTION_PRESETS["simulation"])
for rep in (sim, dyn):
    print(rep.objective)
    for k, c in rep.coefficients.items():
        print(f"  {k:8s} raw {c.raw:+.4f}  elasticity {c.elasticity:+.4f}")

axis = np.linspace(0.1, 0.9, 5)
grid = sensitivity_field(dynamic_objective(), axis, axis, fixed_t=1.0)
print(grid.to_csv())

fcfg = ForwardModelConfig.for_horizon(200)
data = generate_observations(BehavioralParams(0.6, 0.4, 0.7), 200, fcfg, 0.01, seed=20240607)
rob = robustness_study(data, InverseConfig(prior_lambda=0.6, prior_gamma=0.4), fcfg,
                       FRACTION_PRESETS["robustness"], n_draws=100, seed=1)
for k, s in rob.stats.items():
    print(f"{k:8s} mean {s['mean']:.4f} std {s['std']:.5f} [{s['min']:.4f}, {s['max']:.4f}]")
