"""Monte Carlo scenarios: fairness-heavy, adaptive and efficiency-oriented systems."""

from qalyroi import TABLE_B1, compare_policies, preset, run_scenario_suite

results = run_scenario_suite(TABLE_B1.values(), max_workers=4)
print(f"{'scenario':18s} {'terminal SII':>13s} {'SE':>8s} {'band period':>12s}")
for label, res in results:
    s = res.summary
    print(f"{label:18s} {s['terminal_sii_mean']:13.5f} {s['terminal_sii_se']:8.5f} {s['convergence_time_mean']:12.0f}")

# One behavioural dimension at a time, same noise draws in both arms.
comp = compare_policies(preset("base"), preset("adaptive_fast"))
for name, d in comp.dimensions.items():
    print(f"{name:9s} baseline {d.baseline_mean:.5f}  adaptive {d.adaptive_mean:.5f}  {d.p_value_label}")
