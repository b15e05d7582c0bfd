"""Simulation scenarios and the reproducible power-study runner.

Each scenario fixes a design (drawn once per seed), a mean function indexed by
an effect size ``a`` (``a = 0`` is the null), and the cone family used by the
test.  For every ``a`` the runner simulates ``replications`` responses
``y = phi_a(x) + sigma * eps`` with Gaussian ``eps`` and records how often the
test rejects at level ``alpha``.  The null distribution is simulated once per
study because the design does not change between replicates.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from ._parallel import chunked_map, replicate_rng
from .builders import (
    build_additive,
    build_orientation_family,
    cone_for_predictor,
)
from .cones import negate_cone
from .convex_multi import simulate_null_affine_multid, statistic_affine_multid
from .engine import _basis, _stat_only, critical_value, simulate_null_knownG
from .extensions import build_partial_linear

__all__ = [
    "SCENARIOS",
    "ExperimentSpec",
    "PowerStudyResult",
    "Scenario",
    "describe_scenarios",
    "run_power_study",
    "scenario_design",
    "scenario_family",
]

# stream tags keep design, data and null draws apart for a single seed
_DESIGN_TAG = 0xDE51
_DATA_TAG = 0xDA7A


# ----------------------------------------------------------------------------
# designs

def _grid(n, rng, dim, correlated):
    return np.linspace(0.0, 1.0, n)[:, None], None


def _z_levels(x, rng, correlated):
    """Three-level categorical covariate as two dummy columns.

    Independent of ``x`` by default.  When ``correlated`` the level is drawn
    with probabilities ``((1-x)^2, 2x(1-x), x^2)``, so low levels dominate for
    small ``x`` and high levels for large ``x``.
    """
    n = x.shape[0]
    if correlated:
        p = np.column_stack([(1 - x) ** 2, 2 * x * (1 - x), x ** 2])
        u = rng.random(n)[:, None]
        z = (u > np.cumsum(p, axis=1)).sum(axis=1)
        z = np.minimum(z, 2)
    else:
        z = rng.integers(0, 3, size=n)
    # every level present keeps the dummy block full rank
    for lev in range(3):
        if not np.any(z == lev):
            z[lev] = lev
    return np.column_stack([z == 1, z == 2]).astype(float)


def _grid_with_z(n, rng, dim, correlated):
    x = np.linspace(0.0, 1.0, n)
    return x[:, None], _z_levels(x, rng, correlated)


def _unit_cube(n, rng, dim, correlated):
    return rng.random((n, dim)), None


def _model2_design(n, rng, dim, correlated):
    corr = np.full((3, 3), 0.5) + 0.5 * np.eye(3)
    X = rng.multivariate_normal(np.zeros(3), corr, size=n)
    x4 = (rng.random(n) < 0.4).astype(float)
    if x4.min() == x4.max():
        x4[0] = 1.0 - x4[0]
    return np.column_stack([X, x4]), None


# ----------------------------------------------------------------------------
# mean functions, each phi(a, x) with x of shape (n, d)

def _ramp(a, x):
    return 10 * a * np.maximum(x[:, 0] - 2 / 3, 0.0) ** 2


def _sine(a, x):
    return a * np.sin(3 * np.pi * x[:, 0])


def _cubic(a, x):
    t = x[:, 0]
    return 4 - 6 * t + 40 * a * (t - 0.5) ** 3


def _exp(a, x):
    return a * np.exp(3 * x[:, 0] - 2)


def _model1(a, x):
    return 2 + 5 * x[:, 0] - x[:, 1] + a * x[:, 0] * x[:, 1]


def _model2(a, x):
    return x[:, 0] + a * x[:, 1] ** 2 + 2 * x[:, 3]


def _pl_quad(a, x):
    return 3 * a * x[:, 0] ** 2 + x[:, 0]


def _pl_cubic(a, x):
    return 20 * a * (x[:, 0] - 0.5) ** 3 + x[:, 0]


def _linear(a, x):
    return a * x[:, 0]


def _product(a, x):
    return 2 * a * x[:, 0] * x[:, 1]


def _bowl(a, x):
    return a * (2 * x[:, 0] - 1) ** 2


def _plateau(a, x):
    return 3 * a * (np.maximum(x[:, 0] - 2 / 3, 0.0) + np.maximum(x[:, 1] - 2 / 3, 0.0))


# covariate effect for the partial-linear scenarios; the statistic is
# invariant to it, so its size only matters for readability of the data
_Z_EFFECT = np.array([0.5, 1.0])


@dataclass(frozen=True)
class Scenario:
    """One data-generating setting.

    Attributes
    ----------
    name, formula, description : str
    test : str
        ``double`` (one predictor, shape double cone), ``orientation``
        (2^d isotonic cones), ``additive`` (2^d additive shape cones with the
        last column as a linear covariate) or ``convex-multid``.
    null_kind : str
        ``constant``, ``linear`` or ``quadratic`` for one-predictor tests.
    dim : int
        Default number of predictors.
    grid : tuple
        Default effect sizes.
    """

    name: str
    formula: str
    description: str
    test: str
    null_kind: str
    dim: int
    grid: tuple
    design: object = field(repr=False, compare=False, default=None)
    mean: object = field(repr=False, compare=False, default=None)
    covariate: bool = False


def _s(name, formula, description, test, null_kind, dim, grid, design, mean, covariate=False):
    return Scenario(name, formula, description, test, null_kind, dim, tuple(grid),
                    design, mean, covariate)


SCENARIOS = {s.name: s for s in [
    _s("ramp", "phi(x) = 10a(x - 2/3)_+^2",
       "flat then rising; equally spaced x in [0,1]; constant null, monotone double cone",
       "double", "constant", 1, range(8), _grid, _ramp),
    _s("sinusoid", "phi(x) = a sin(3 pi x)",
       "non-monotone wave; equally spaced x in [0,1]; constant null, monotone double cone",
       "double", "constant", 1, (0.0, 0.5, 1.0), _grid, _sine),
    _s("cubic", "phi(x) = 4 - 6x + 40a(x - 1/2)^3",
       "S-shaped cubic; equally spaced x in [0,1]; linear null, convex double cone",
       "double", "linear", 1, (0.0, 0.5, 1.0), _grid, _cubic),
    _s("exp-vs-quadratic", "phi(x) = a exp(3x - 2)",
       "exponential trend; equally spaced x in [0,1]; quadratic null, "
       "third-derivative double cone",
       "double", "quadratic", 1, (0.0, 1.0, 2.0, 3.0, 4.0, 5.0), _grid, _exp),
    _s("model1", "Y = 2 + 5X1 - X2 + aX1X2 + eps",
       "interaction against a linear model; X uniform on [0,1]^d (d >= 2); "
       "multivariate convex/concave test",
       "convex-multid", "linear", 2, (0.0, 2.0, 4.0, 6.0, 8.0), _unit_cube, _model1),
    _s("model2", "Y = X1 + aX2^2 + 2X4 + eps",
       "X1..X3 normal with correlation 0.5, X4 Bernoulli(0.4); additive octuple "
       "convex cones in X1..X3 with X4 linear",
       "additive", "linear", 4, (0.0, 0.25, 0.5, 0.75, 1.0), _model2_design, _model2),
    _s("partial-linear-quad", "phi(x) = 3ax^2 + x, plus a 3-level covariate z",
       "equally spaced x in [0,1]; linear null adjusted for z, convex double cone",
       "double", "linear", 1, range(7), _grid_with_z, _pl_quad, True),
    _s("partial-linear-cubic", "phi(x) = 20a(x - 1/2)^3 + x, plus a 3-level covariate z",
       "equally spaced x in [0,1]; linear null adjusted for z, convex double cone",
       "double", "linear", 1, range(7), _grid_with_z, _pl_cubic, True),
    _s("const-cov-linear", "phi(x) = ax, plus a 3-level covariate z",
       "equally spaced x in [0,1]; constant null adjusted for z, monotone double cone",
       "double", "constant", 1, (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0), _grid_with_z,
       _linear, True),
    _s("const-cov-sine", "phi(x) = a sin(3 pi x), plus a 3-level covariate z",
       "equally spaced x in [0,1]; constant null adjusted for z, monotone double cone",
       "double", "constant", 1, (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5), _grid_with_z,
       _sine, True),
    _s("multid-product", "phi(x1, x2) = 2a x1 x2",
       "x uniform on [0,1]^2; constant null, quadruple isotonic cone",
       "orientation", "constant", 2, (0.0, 0.5, 1.0, 1.5, 2.0), _unit_cube, _product),
    _s("multid-quadratic", "phi(x1, x2) = a(2x1 - 1)^2",
       "bowl in x1 with vertex at the centre; x uniform on [0,1]^2; constant null, "
       "quadruple isotonic cone",
       "orientation", "constant", 2, (0.0, 0.5, 1.0, 1.5, 2.0), _unit_cube, _bowl),
    _s("multid-plateau", "phi(x1, x2) = 3a[(x1 - 2/3)_+ + (x2 - 2/3)_+]",
       "constant on [0,2/3]^2, rising beyond; x uniform on [0,1]^2; constant null, "
       "quadruple isotonic cone",
       "orientation", "constant", 2, (0.0, 1.0, 2.0, 3.0, 4.0), _unit_cube, _plateau),
]}


def describe_scenarios():
    """Human-readable catalog, one block per scenario."""
    lines = []
    for s in SCENARIOS.values():
        grid = ", ".join(f"{g:g}" for g in s.grid)
        lines.append(f"{s.name}\n  {s.formula}\n  {s.description}\n  default a: {grid}")
    return "\n".join(lines)


# ----------------------------------------------------------------------------
# experiment specification

@dataclass(frozen=True)
class ExperimentSpec:
    """Parameters of a power study.

    Attributes
    ----------
    scenario : str
        Key of :data:`SCENARIOS`.
    n : int
    sigma : float
        Error standard deviation.
    effect_grid : tuple of float, optional
        Defaults to the scenario grid.
    replications : int
        Simulated data sets per effect size (at least 100).
    nsim : int
        Null-distribution size.
    alpha : float
    seed : int
    dim : int, optional
        Number of predictors for ``model1``.
    null_kind : str, optional
        Override the null for single-predictor scenarios without covariates,
        e.g. ``ramp`` against a linear null.
    correlated_covariate : bool
        Draw the categorical covariate dependent on ``x``.
    """

    scenario: str
    n: int = 100
    sigma: float = 1.0
    effect_grid: tuple = None
    replications: int = 2000
    nsim: int = 2000
    alpha: float = 0.05
    seed: int = 0
    dim: int = None
    null_kind: str = None
    correlated_covariate: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; "
                             f"choose from {', '.join(SCENARIOS)}")
        sc = SCENARIOS[self.scenario]
        if self.replications < 100:
            raise ValueError("replications must be at least 100")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.nsim < 1:
            raise ValueError("nsim must be positive")
        if self.n < 8:
            raise ValueError("n must be at least 8")
        if self.effect_grid is None:
            object.__setattr__(self, "effect_grid", tuple(float(g) for g in sc.grid))
        else:
            object.__setattr__(self, "effect_grid", tuple(float(g) for g in self.effect_grid))
        if not self.effect_grid:
            raise ValueError("effect_grid must not be empty")
        if self.dim is not None:
            if self.scenario != "model1":
                raise ValueError("dim can only be set for model1")
            if self.dim < 2:
                raise ValueError("model1 needs dim >= 2")
        if self.null_kind is not None:
            if sc.test != "double" or sc.covariate:
                raise ValueError("null_kind can only be overridden for single-predictor "
                                 "scenarios without covariates")
            if self.null_kind not in ("constant", "linear", "quadratic"):
                raise ValueError("null_kind must be constant, linear or quadratic")
        if self.correlated_covariate and not sc.covariate:
            raise ValueError("correlated_covariate needs a scenario with a covariate")

    @property
    def definition(self):
        return SCENARIOS[self.scenario]

    @property
    def effective_null(self):
        return self.null_kind or self.definition.null_kind

    @property
    def effective_dim(self):
        return self.dim or self.definition.dim


def scenario_design(spec):
    """Design ``(x, Z)`` of a study, fixed by ``spec.seed``."""
    sc = spec.definition
    rng = replicate_rng(spec.seed, _DESIGN_TAG)
    return sc.design(spec.n, rng, spec.effective_dim, spec.correlated_covariate)


def scenario_family(spec, x, Z):
    """Cone family for the scenario test (``None`` for the multi-d convex test)."""
    sc = spec.definition
    if sc.test == "double":
        cone = cone_for_predictor(x[:, 0], spec.effective_null)
        if Z is not None:
            cone = build_partial_linear(cone, Z)
        return [cone, negate_cone(cone)]
    if sc.test == "orientation":
        return build_orientation_family(x)
    if sc.test == "additive":
        comps = [cone_for_predictor(x[:, j], "linear") for j in range(x.shape[1] - 1)]
        return build_additive(comps, x[:, -1:])
    return None


def _mean(spec, a, x, Z):
    theta = spec.definition.mean(a, x)
    if Z is not None:
        theta = theta + Z @ _Z_EFFECT
    return theta


# ----------------------------------------------------------------------------
# runner

def _power_chunk(spec, x, Z, family, Q, crit, start, stop):
    reps = spec.replications
    out = []
    for idx in range(start, stop):
        ai, r = divmod(idx, reps)
        theta = _mean(spec, spec.effect_grid[ai], x, Z)
        eps = replicate_rng(spec.seed, _DATA_TAG, ai, r).standard_normal(spec.n)
        y = theta + spec.sigma * eps
        if family is None:
            T = statistic_affine_multid(x, y).T
        else:
            T = _stat_only(y, family, Q)
        out.append(T > crit)
    return out


@dataclass
class PowerStudyResult:
    """Rejection proportions of a power study.

    Attributes
    ----------
    spec : ExperimentSpec
    rows : list of dict
        One row per effect size with keys ``scenario, n, a, power, se``.
    critical_value : float
    """

    spec: ExperimentSpec
    rows: list
    critical_value: float

    def to_csv(self):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["scenario", "n", "a", "power", "se"],
                           lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({**row, "a": f"{row['a']:g}", "power": f"{row['power']:.4f}",
                        "se": f"{row['se']:.4f}"})
        return buf.getvalue()

    def plot_data(self):
        """Series for plotting power against effect size (data only)."""
        s = self.spec
        return {
            "scenario": s.scenario,
            "formula": s.definition.formula,
            "n": s.n,
            "sigma": s.sigma,
            "alpha": s.alpha,
            "nsim": s.nsim,
            "replications": s.replications,
            "seed": s.seed,
            "nullKind": s.effective_null,
            "criticalValue": self.critical_value,
            "a": [r["a"] for r in self.rows],
            "power": [r["power"] for r in self.rows],
            "se": [r["se"] for r in self.rows],
            "levelCheck": level_check(self),
        }

    def plot_json(self):
        return json.dumps(self.plot_data(), indent=2, sort_keys=True)


def level_check(result, k=3.0):
    """Whether the ``a = 0`` rows lie within ``k`` binomial SEs of ``alpha``."""
    s = result.spec
    se0 = np.sqrt(s.alpha * (1 - s.alpha) / s.replications)
    rows = [r for r in result.rows if r["a"] == 0.0]
    if not rows:
        return None
    return bool(all(abs(r["power"] - s.alpha) <= k * se0 for r in rows))


def run_power_study(spec):
    """Simulate rejection rates over ``spec.effect_grid``.

    Returns
    -------
    PowerStudyResult
    """
    x, Z = scenario_design(spec)
    family = scenario_family(spec, x, Z)
    if family is None:
        null = simulate_null_affine_multid(x, nsim=spec.nsim, seed=spec.seed)
        Q = None
    else:
        null = simulate_null_knownG(family, None, nsim=spec.nsim, seed=spec.seed)
        Q = _basis(family, None)
    crit = critical_value(null, spec.alpha)
    total = len(spec.effect_grid) * spec.replications
    rejects = np.asarray(chunked_map(_power_chunk, total, (spec, x, Z, family, Q, crit)))
    rejects = rejects.reshape(len(spec.effect_grid), spec.replications)
    rows = []
    for a, rej in zip(spec.effect_grid, rejects):
        p = float(rej.mean())
        rows.append({"scenario": spec.scenario, "n": spec.n, "a": float(a), "power": p,
                     "se": float(np.sqrt(p * (1 - p) / spec.replications))})
    return PowerStudyResult(spec=spec, rows=rows, critical_value=float(crit))

