import numpy as np
import pytest

from qalyroi import BehavioralParams, ForwardModelConfig, InverseConfig, generate_observations

TRUTH = BehavioralParams(0.6, 0.4, 0.7)
SEED = 20240607


@pytest.fixture(scope="session")
def recovery_instance():
    """The 200-point synthetic recovery problem with priors at truth."""
    fcfg = ForwardModelConfig.for_horizon(200)
    data = generate_observations(TRUTH, 200, fcfg, noise_sigma=0.01, seed=SEED)
    icfg = InverseConfig(beta1=1e-3, beta2=1e-3, prior_lambda=TRUTH.lam, prior_gamma=TRUTH.gamma)
    return data, icfg, fcfg


@pytest.fixture(scope="session")
def noiseless_instance():
    fcfg = ForwardModelConfig.for_horizon(200)
    return generate_observations(TRUTH, 200, fcfg, noise_sigma=0.0, seed=1), fcfg


@pytest.fixture
def rng():
    return np.random.default_rng(0)
