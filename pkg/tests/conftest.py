"""Shared fixtures: hypothesis profile, cone factories and the acceptance report."""

import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from conetest import (
    build_additive,
    build_convex,
    build_monotone,
    build_orientation_family,
    build_partial_linear,
    build_partial_order,
    build_third_derivative,
    cone_for_predictor,
)

settings.register_profile(
    "conetest",
    max_examples=60,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("conetest")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def small_cones(n, rng):
    """One instance of every built-in cone type on ``n`` observations (n >= 4)."""
    x = np.sort(rng.uniform(0, 1, n))
    pts = rng.uniform(0, 1, (n, 2))
    cones = {
        "monotone": build_monotone(n),
        "convex": build_convex(x),
        "third-derivative": build_third_derivative(x),
    }
    try:
        cones["partial-order"] = build_partial_order(pts)[0]
    except ValueError:
        pass
    tied = np.round(x * 2) / 2
    if np.unique(tied).size >= 2:
        cones["monotone-ties"] = cone_for_predictor(tied, "monotone")
    z = rng.standard_normal(n)
    cones["partial-linear"] = build_partial_linear(build_monotone(n), z)
    x2 = rng.permutation(x)
    comps = [cone_for_predictor(x, "constant"), cone_for_predictor(x2, "constant")]
    if n >= 5:
        cones["additive"] = build_additive(comps)[1]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            cones["orientation"] = build_orientation_family(np.column_stack([x, x2]))[-1]
        except ValueError:
            pass
    return cones


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)
