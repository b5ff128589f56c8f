"""Forward model: how fairness weight shapes the chosen action and the response."""

import numpy as np

from qalyroi import BehavioralParams, ForwardModelConfig, optimal_action, response_function, utility

cfg = ForwardModelConfig()

# Higher fairness weight gamma makes effort look more expensive, so the
# utility-maximising action shrinks and hits zero at q_max k / (q_max k + c).
print("gamma   a*      U(a*)")
for gamma in (0.0, 0.2, 0.5, 0.7, 5 / 6, 0.9):
    a = optimal_action(gamma, cfg)
    print(f"{gamma:5.3f}  {a:6.4f}  {float(utility(a, gamma, cfg)):+.4f}")

# The behavioural response adds a temporal transient: a region with low
# responsiveness T starts at a fraction T of its long-run response.
a = optimal_action(0.4, cfg)
periods = np.array([0, 5, 10, 25, 50])
for temporal in (0.2, 0.6, 1.0):
    f = response_function(a, periods, BehavioralParams(0.6, 0.4, temporal), cfg)
    print(f"T={temporal:.1f}: " + " ".join(f"{v:.4f}" for v in f))
