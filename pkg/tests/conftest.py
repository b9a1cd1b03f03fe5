"""Shared fixtures.

Solving the three shipped variants dominates suite runtime, so the policies
are solved once per session and shared; ``solve_times`` keeps the wall-clock
cost around for the runtime-bounded checks.
"""

import time

import pytest

from coadapt.calibration import default_model
from coadapt.model import VARIANTS
from coadapt.solver import solve


@pytest.fixture(scope="session")
def models():
    return {variant: default_model(variant) for variant in VARIANTS}


@pytest.fixture(scope="session")
def solve_times():
    return {}


@pytest.fixture(scope="session")
def policies(models, solve_times):
    out = {}
    for variant, model in models.items():
        start = time.monotonic()
        out[variant] = solve(model, epsilon=0.01, max_time=120.0, seed=0)
        solve_times[variant] = time.monotonic() - start
    return out


@pytest.fixture(scope="session")
def policy_dir(policies, tmp_path_factory):
    path = tmp_path_factory.mktemp("policies")
    for variant, policy in policies.items():
        policy.save(str(path / f"{variant}.json"))
    return path
