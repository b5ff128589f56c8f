"""The impact index in its static, dynamic and empirical forms, plus two conversions."""

from qalyroi import (
    BehavioralParams,
    fairness_counterfactual,
    macro_conversion,
    sii_dynamic,
    sii_empirical,
    sii_static,
)
from qalyroi.impact import ImpactInputs

saturated = BehavioralParams(0.999, 0.007, 1.0)
print("static, 2 QALY per 4 cost units:", sii_static(ImpactInputs(2.0, 4.0, saturated)))

# Slow responsiveness is penalised by exp(-rho (1 - T)).
for temporal in (0.0, 0.5, 1.0):
    print(f"dynamic, T={temporal}:", round(sii_dynamic(1.0, 1.0, BehavioralParams(1, 0, temporal)), 4))

print("empirical at LE 79.08, spending 144217:", round(sii_empirical(79.08, 144217), 3))

# Raising fairness preference by 0.2 from the saturated estimate.
print(f"counterfactual gamma + 0.2: {100 * fairness_counterfactual(0.007, 0.2):+.1f}%")
print("GDP equivalent of a unit SII gain:", macro_conversion(1.0, 0.11))
