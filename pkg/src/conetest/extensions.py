"""Weighted and correlated errors, covariates, additive and multi-d tests.

Correlated errors are handled by whitening: with ``Sigma = L L^T`` (so
``U = L^T`` gives ``Sigma = U^T U``) the map ``W = L^{-1}`` turns the errors
i.i.d. and the cone ``I`` into ``W I`` with constraints ``A L``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .builders import (
    build_additive,
    build_orientation_family,
    cone_for_predictor,
    residualize,
)
from .cones import ConeSpec, matrix_rank, negate_cone, orthonormal_columns
from .engine import Dataset, run_test

__all__ = [
    "WhitenedProblem",
    "build_partial_linear",
    "collapse_duplicates",
    "test_additive",
    "test_constant_multid",
    "test_partial_linear",
    "whiten",
    "whiten_cone",
    "whiten_family",
]


@dataclass
class WhitenedProblem:
    """A test problem mapped to i.i.d. errors.

    Attributes
    ----------
    y_tilde : ndarray (n,)
    cone_tilde : ConeSpec
    transform : ndarray (n, n)
        Lower-triangular ``W`` with ``W Sigma W^T = I``.
    inverse : ndarray (n, n)
        ``W^{-1}``, the Cholesky factor of ``Sigma``.
    original : Dataset
    """

    y_tilde: np.ndarray
    cone_tilde: ConeSpec
    transform: np.ndarray
    inverse: np.ndarray
    original: Dataset

    def unwhiten(self, theta_tilde):
        """Map a fit in whitened coordinates back to the original ones."""
        return self.inverse @ np.asarray(theta_tilde, dtype=float)


def _cholesky(Sigma):
    S = np.asarray(Sigma, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if not np.allclose(S, S.T, rtol=1e-10, atol=1e-12 * np.max(np.abs(S))):
        raise ValueError("covariance must be symmetric")
    try:
        return linalg.cholesky(S, lower=True)
    except linalg.LinAlgError:
        raise ValueError("covariance is not positive definite") from None


def whiten_cone(cone, Lfac):
    """Image ``W I`` of a cone under ``W = Lfac^{-1}``."""
    meta = {k: v for k, v in cone.meta.items() if k != "pava"}
    meta["whitened"] = True
    if cone.A is not None:
        B = None if cone.B is None else cone.B @ Lfac
        return ConeSpec.from_constraints(cone.A @ Lfac, B, label=cone.label, meta=meta)
    Winv = linalg.solve_triangular
    S = orthonormal_columns(Winv(Lfac, cone.null_basis, lower=True))
    G = residualize(Winv(Lfac, cone.generators, lower=True), S)
    return ConeSpec.from_generators(S, G, label=cone.label, meta=meta)


def whiten(data, cone, Sigma):
    """Transform data and cone so the errors become i.i.d.

    Parameters
    ----------
    data : Dataset
    cone : ConeSpec
    Sigma : array_like (n, n)
        Error covariance up to scale; must be positive definite.
    """
    Lfac = _cholesky(Sigma)
    if Lfac.shape[0] != data.n:
        raise ValueError("covariance and data disagree on n")
    W = linalg.solve_triangular(Lfac, np.eye(data.n), lower=True)
    y_t = linalg.solve_triangular(Lfac, data.y, lower=True)
    return WhitenedProblem(y_tilde=y_t, cone_tilde=whiten_cone(cone, Lfac),
                           transform=W, inverse=Lfac, original=data)


def collapse_duplicates(data):
    """One row per distinct design point, response averaged, weight = group size.

    Existing weights are combined: the new weight is the summed weight and the
    response is the weighted mean.  Covariates must agree within a group.
    """
    x = data.x
    u, first, inverse = np.unique(x, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    if u.shape[0] == x.shape[0]:
        return data
    w = np.ones(data.n) if data.weights is None else data.weights
    wsum = np.bincount(inverse, weights=w)
    ybar = np.bincount(inverse, weights=w * data.y) / wsum
    Z = None
    if data.Z is not None:
        Z = data.Z[first]
        if not np.array_equal(Z[inverse], data.Z):
            raise ValueError("covariates differ between duplicated design points; "
                             "use the partial-linear test instead")
    if data.covariance is not None:
        raise ValueError("cannot collapse duplicates under a general covariance")
    return Dataset(x=u, y=ybar, Z=Z, weights=wsum, column_names=data.column_names)


def build_partial_linear(cone, Z):
    """Lift a cone to ``L + cone(delta_j - P_L delta_j)`` with ``L = S + col(Z)``."""
    if Z is None:
        return cone
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[1] == 0:
        return cone
    if Z.shape[0] != cone.n:
        raise ValueError("Z must have n rows")
    if cone.generators is None:
        raise ValueError("partial-linear lifting needs cone generators")
    stacked = np.hstack([cone.null_basis, Z])
    rank = matrix_rank(stacked)
    if rank != stacked.shape[1]:
        raise ValueError(
            f"identifiability violation: null basis and Z have rank {rank}, "
            f"expected {stacked.shape[1]} (Z must not repeat the null-space columns)"
        )
    L = orthonormal_columns(stacked)
    G = residualize(cone.generators, L)
    meta = {k: v for k, v in cone.meta.items() if k != "pava"}
    return ConeSpec.from_generators(L, G, label=cone.label, meta=meta)


def whiten_family(data, family):
    """Apply weights or covariance of ``data`` to response and cones."""
    if data.covariance is not None:
        Lfac = _cholesky(data.covariance)
    elif data.weights is not None:
        Lfac = np.diag(1.0 / np.sqrt(data.weights))
    else:
        return data.y, family
    y = linalg.solve_triangular(Lfac, data.y, lower=True)
    first = [whiten_cone(c, Lfac) for c in family[: (len(family) + 1) // 2]]
    # opposite members are negations of whitened first-half members
    rest = [negate_cone(c) for c in reversed(first[: len(family) // 2])]
    return y, first + rest


def _run(data, family, alpha, nsim, seed, null_mode, cache_dir):
    y, fam = whiten_family(data, family)
    return run_test(y, fam, None, alpha=alpha, nsim=nsim, seed=seed,
                    null_mode=null_mode, cache_dir=cache_dir)


def test_partial_linear(data, null_kind="linear", alpha=0.05, nsim=10000, seed=0,
                        null_mode="known-gaussian", cache_dir=None):
    """Test ``phi_0`` constant, linear or quadratic in ``x``, adjusting for ``Z``.

    Tied ``x`` values share one parameter of the shape cone; covariates lift
    the cone to ``L = S + col(Z)``.
    """
    if data.d != 1:
        raise ValueError("partial-linear tests need a one-dimensional predictor")
    cone = cone_for_predictor(data.x[:, 0], null_kind)
    cone = build_partial_linear(cone, data.Z)
    family = [cone, negate_cone(cone)]
    return _run(data, family, alpha, nsim, seed, null_mode, cache_dir)


test_partial_linear.__test__ = False


def test_additive(data, component_cones=None, Z=None, kinds=None, alpha=0.05,
                  nsim=10000, seed=0, null_mode="known-gaussian", cache_dir=None):
    """Additive test over the ``2^d`` sign-pattern cones.

    Either pass ``component_cones`` directly or ``kinds`` (one null kind per
    column of ``data.x``: ``constant``, ``linear`` or ``quadratic``).
    """
    if component_cones is None:
        kinds = kinds or ["linear"] * data.d
        if len(kinds) != data.d:
            raise ValueError("need one null kind per predictor")
        component_cones = [cone_for_predictor(data.x[:, j], k) for j, k in enumerate(kinds)]
    if Z is None:
        Z = data.Z
    family = build_additive(component_cones, Z)
    return _run(data, family, alpha, nsim, seed, null_mode, cache_dir)


test_additive.__test__ = False


def test_constant_multid(data, alpha=0.05, nsim=10000, seed=0, null_mode="known-gaussian",
                         cache_dir=None):
    """Test a constant mean against the double/quadruple/octuple isotonic cones.

    Duplicated design points are averaged first and carried as weights.
    """
    if data.d > 3:
        raise ValueError("constant test supports at most 3 predictors")
    if data.Z is not None:
        raise ValueError("covariates are not supported by the multi-d constant test")
    data = collapse_duplicates(data)
    family = build_orientation_family(data.x)
    return _run(data, family, alpha, nsim, seed, null_mode, cache_dir)


test_constant_multid.__test__ = False
