import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dynmech.env import make_environment
from dynmech.instances import GeneratorParams, gen_random

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def rand_env(seed, T=2, S=2, A=2, eta=0.0, sparse=False):
    """Random environment; ``sparse`` zeroes some transitions to exercise infeasible pairs."""
    env = gen_random(GeneratorParams(T, S, A, eta, seed))
    if not sparse:
        return env
    rng = np.random.default_rng(seed + 1000)
    P = env.P.copy()
    P[rng.random(P.shape) < 0.35] = 0.0
    P[..., 0] += (P.sum(axis=-1) == 0)  # keep every row a distribution
    P0 = env.P0.copy()
    if S > 1:
        P0[-1] = 0.0
    return make_environment(P0 / P0.sum(), P / P.sum(axis=-1, keepdims=True), env.vP, env.vA)


@pytest.fixture
def small_env():
    return rand_env(7)
