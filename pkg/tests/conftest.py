"""Shared fixtures: reference parameter set and random valid instances."""

import numpy as np
import pytest

from cpsgame import CpsParams, log_benefit

# Reference cost parameters used by the numerical illustration throughout:
# log benefit, kappa = 0.3, delta = 0.0025, sigma = 0.01.
REF_COSTS = dict(kappa=0.3, delta=0.0025, sigma=0.01)


def ref_params(n: int) -> CpsParams:
    return CpsParams(n_peers=n, benefit=log_benefit(), **REF_COSTS)


@pytest.fixture
def make_ref():
    return ref_params


def random_params(rng: np.random.Generator, n: int | None = None) -> CpsParams:
    """A random valid game instance (log benefit keeps f'(0) = 1 > kappa)."""
    if n is None:
        n = int(rng.integers(2, 9))
    kappa = float(rng.uniform(0.15, 0.8))
    transfer = float(rng.uniform(0.02, 0.85 * kappa))
    frac = float(rng.uniform(0.05, 0.95))
    return CpsParams(
        n_peers=n,
        benefit=log_benefit(),
        kappa=kappa,
        delta=transfer * frac,
        sigma=transfer * (1.0 - frac),
    )
