"""Constructors for the concrete cones used by the tests.

One-dimensional shape cones (monotone, convex, third derivative), isotonic
cones for coordinate-wise partial orders together with their orientation
families, and additive sums of component cones.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .cones import ConeSpec, matrix_rank, negate_cone, orthonormal_columns

__all__ = [
    "NULL_KINDS",
    "PartialOrderSpec",
    "build_additive",
    "build_convex",
    "build_monotone",
    "build_orientation_family",
    "build_partial_order",
    "build_third_derivative",
    "cone_for_predictor",
    "residualize",
]

# null hypothesis for a single predictor -> cone whose largest linear space it is
NULL_KINDS = {
    "constant": "monotone",
    "linear": "convex",
    "quadratic": "third-derivative",
}


def _sorted_distinct(x, min_n):
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] < min_n:
        raise ValueError(f"need at least {min_n} design points, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("design points must be finite")
    dx = np.diff(x)
    if np.any(dx == 0):
        raise ValueError(
            "duplicate x values; collapse them first "
            "(extensions.collapse_duplicates or builders.cone_for_predictor)"
        )
    if np.any(dx < 0):
        raise ValueError("x must be strictly increasing")
    return x


def build_monotone(n):
    """Cone of non-decreasing vectors in ``R^n``.

    Row ``i`` of ``A`` is ``theta_{i+1} - theta_i``; ``S`` is the constants.
    """
    n = int(n)
    if n < 2:
        raise ValueError("monotone cone needs n >= 2")
    A = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    A[idx, idx] = -1.0
    A[idx, idx + 1] = 1.0
    return ConeSpec.from_constraints(A, label="monotone")


def build_convex(x):
    """Cone of vectors that are convex as a function of sorted ``x``.

    Row ``i`` holds ``(x[i+2]-x[i+1], x[i]-x[i+2], x[i+1]-x[i])`` in columns
    ``i, i+1, i+2``, a positive multiple of the second divided difference.
    """
    x = _sorted_distinct(x, 3)
    n = x.shape[0]
    A = np.zeros((n - 2, n))
    for i in range(n - 2):
        A[i, i] = x[i + 2] - x[i + 1]
        A[i, i + 1] = x[i] - x[i + 2]
        A[i, i + 2] = x[i + 1] - x[i]
    return ConeSpec.from_constraints(A, label="convex", meta={"x": x})


def build_third_derivative(x):
    """Cone of vectors with non-negative third divided differences in ``x``.

    The null space is spanned by ``1, x, x^2``.
    """
    x = _sorted_distinct(x, 4)
    n = x.shape[0]
    A = np.zeros((n - 3, n))
    for i in range(n - 3):
        x0, x1, x2, x3 = x[i:i + 4]
        A[i, i] = -(x3 - x2) * (x3 - x1) * (x2 - x1)
        A[i, i + 1] = (x3 - x0) * (x3 - x2) * (x2 - x0)
        A[i, i + 2] = -(x3 - x0) * (x3 - x1) * (x1 - x0)
        A[i, i + 3] = (x1 - x0) * (x2 - x0) * (x2 - x1)
    return ConeSpec.from_constraints(A, label="third-derivative", meta={"x": x})


_SHAPE_BUILDERS = {
    "monotone": lambda u: build_monotone(u.shape[0]),
    "convex": build_convex,
    "third-derivative": build_third_derivative,
}


def residualize(G, L):
    """Columns of ``G`` minus their projection onto the column space of ``L``.

    ``L`` must have orthonormal columns.
    """
    return G - L @ (L.T @ G)


def cone_for_predictor(x, kind):
    """Shape cone for an arbitrary (unsorted, possibly tied) predictor.

    Tied design points share one parameter.  With ``u`` the sorted distinct
    values and ``E`` the ``n x len(u)`` incidence matrix, the cone is
    ``{E theta_u : theta_u in I_u}``; its null space is ``E S_u`` and its
    generators are ``E delta_u`` residualized against that null space.  When
    ``x`` is already sorted and distinct the plain builder is returned.

    Parameters
    ----------
    x : array_like, shape (n,)
    kind : {"monotone", "convex", "third-derivative"}
        Null kinds ``constant``/``linear``/``quadratic`` are accepted too.
    """
    kind = NULL_KINDS.get(kind, kind)
    if kind not in _SHAPE_BUILDERS:
        raise ValueError(f"unknown cone kind {kind!r}")
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("design points must be finite")
    u, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    if u.shape[0] == x.shape[0] and np.all(np.diff(x) > 0):
        cone = _SHAPE_BUILDERS[kind](x)
        return cone
    base = _SHAPE_BUILDERS[kind](u)
    n = x.shape[0]
    E = np.zeros((n, u.shape[0]))
    E[np.arange(n), inverse] = 1.0
    S = orthonormal_columns(E @ base.null_basis)
    G = residualize(E @ base.generators, S)
    meta = {"x": x, "groups": inverse}
    if kind == "monotone":
        meta["pava"] = (inverse, 1)
    return ConeSpec.from_generators(S, G, label=kind, meta=meta)


@dataclass(frozen=True)
class PartialOrderSpec:
    """Coordinate-wise order on design points under a sign orientation.

    Attributes
    ----------
    points : ndarray (n, d)
    orientation : tuple of +1/-1
    cover_pairs : list of (i, j)
        ``s*x_i <= s*x_j`` coordinate-wise with no intermediate point.
    connected : bool
        Whether the comparability graph is connected.
    """

    points: np.ndarray
    orientation: tuple
    cover_pairs: list
    connected: bool


def _cover_pairs(points, orientation):
    P = points * np.asarray(orientation, dtype=float)
    n = P.shape[0]
    # dom[i, j]: s*x_i <= s*x_j coordinate-wise, i != j
    dom = np.all(P[:, None, :] <= P[None, :, :], axis=2)
    np.fill_diagonal(dom, False)
    Di = dom.astype(np.int64)
    implied = (Di @ Di) > 0
    cover = dom & ~implied
    pairs = [(int(i), int(j)) for i, j in zip(*np.nonzero(cover))]
    # comparability graph connectivity equals cover graph connectivity
    if pairs:
        rows, cols = zip(*pairs)
        graph = csr_matrix((np.ones(len(pairs)), (rows, cols)), shape=(n, n))
    else:
        graph = csr_matrix((n, n))
    ncomp, _ = connected_components(graph, directed=False)
    return pairs, ncomp == 1


def _check_points(points):
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.ndim != 2 or P.shape[0] < 2:
        raise ValueError("points must be an n x d matrix with n >= 2")
    if not np.all(np.isfinite(P)):
        raise ValueError("points must be finite")
    if np.unique(P, axis=0).shape[0] != P.shape[0]:
        raise ValueError("points must be distinct; collapse duplicates first")
    return P


def build_partial_order(points, orientation=None):
    """Isotonic cone for the coordinate-wise order ``s*x_i <= s*x_j``.

    Returns
    -------
    cone : ConeSpec
        One row ``theta_j - theta_i >= 0`` per cover pair.
    order : PartialOrderSpec
    """
    P = _check_points(points)
    d = P.shape[1]
    s = tuple(int(v) for v in (orientation if orientation is not None else [1] * d))
    if len(s) != d or any(v not in (1, -1) for v in s):
        raise ValueError("orientation must be a vector of +1/-1 of length d")
    pairs, connected = _cover_pairs(P, s)
    order = PartialOrderSpec(points=P, orientation=s, cover_pairs=pairs,
                             connected=connected)
    if not connected:
        raise ValueError("design not connected; null space exceeds constants")
    n = P.shape[0]
    A = np.zeros((len(pairs), n))
    for r, (i, j) in enumerate(pairs):
        A[r, i] = -1.0
        A[r, j] = 1.0
    label = "isotonic(" + ",".join("+" if v > 0 else "-" for v in s) + ")"
    cone = ConeSpec.from_constraints(A, label=label, meta={"orientation": s})
    return cone, order


def build_orientation_family(points):
    """All ``2^d`` orientation cones for multiple isotonic regression.

    Orientations are enumerated in binary order with ``-`` for a set bit, so
    member ``i`` and member ``2^d - 1 - i`` are opposite cones (the family is
    ``2^(d-1)`` double cones).  The second half is built by negating the first,
    which makes the opposition exact.  Orientations with a disconnected order
    are dropped together with their opposite, with a warning.
    """
    P = _check_points(points)
    d = P.shape[1]
    half = 2 ** (d - 1)
    orients = [tuple(-1 if (i >> (d - 1 - b)) & 1 else 1 for b in range(d))
               for i in range(2 ** d)]
    first = []
    dropped = []
    for i in range(half):
        try:
            cone, _ = build_partial_order(P, orients[i])
        except ValueError as exc:
            if "not connected" not in str(exc):
                raise
            dropped.append(orients[i])
            cone = None
        first.append(cone)
    kept = [c for c in first if c is not None]
    if not kept:
        raise ValueError("design not connected for any orientation")
    if dropped:
        warnings.warn(f"orientations {dropped} (and their opposites) are disconnected "
                      "and were dropped", RuntimeWarning, stacklevel=2)
    label = {o: "isotonic(" + ",".join("+" if v > 0 else "-" for v in o) + ")"
             for o in orients}
    second = []
    for i in reversed(range(half)):
        if first[i] is None:
            continue
        neg = negate_cone(first[i])
        opp = orients[2 ** d - 1 - i]
        second.append(ConeSpec(A=neg.A, B=neg.B, null_basis=neg.null_basis,
                               generators=neg.generators, label=label[opp],
                               meta={"orientation": opp}))
    return kept + second


def _contains_constant(S):
    e = np.ones(S.shape[0]) / np.sqrt(S.shape[0])
    return np.linalg.norm(e - S @ (S.T @ e)) < 1e-8


def build_additive(component_cones, Z=None):
    """Sign-pattern cones ``C_1..C_{2^d}`` for an additive alternative.

    Each component cone lives in ``R^n`` (built on its own predictor).  The
    combined null space is ``L = S_1 + ... + S_d + col(Z)`` with one shared
    intercept; generators are the signed component generators with their
    projection on ``L`` removed.  Pattern ``i`` flips component ``k`` when
    bit ``d-1-k`` of ``i`` is set, so ``C_{2^d - 1 - i} = -C_i``.
    """
    comps = list(component_cones)
    if not comps:
        raise ValueError("need at least one component cone")
    n = comps[0].n
    for c in comps:
        if c.n != n:
            raise ValueError("component cones must share the sample size n")
        if c.generators is None:
            raise ValueError(f"component {c.label!r} has no generators")
    blocks = [c.null_basis for c in comps]
    q = 0
    if Z is not None:
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.shape[0] != n:
            raise ValueError("Z must have n rows")
        q = Z.shape[1]
        if q:
            blocks.append(Z)
    stacked = np.hstack(blocks)
    n_intercepts = sum(_contains_constant(c.null_basis) for c in comps)
    expected = sum(c.k for c in comps) + q - max(n_intercepts - 1, 0)
    rank = matrix_rank(stacked)
    if rank != expected:
        raise ValueError(
            f"identifiability violation: null bases and covariates have rank {rank}, "
            f"expected {expected} (columns must be independent apart from one "
            "shared intercept)"
        )
    L = orthonormal_columns(stacked)
    d = len(comps)
    half = 2 ** (d - 1)
    cones = []
    for i in range(half):
        signs = [-1 if (i >> (d - 1 - b)) & 1 else 1 for b in range(d)]
        G = np.hstack([s * c.generators for s, c in zip(signs, comps)])
        G = residualize(G, L)
        label = "additive(" + ",".join("+" if s > 0 else "-" for s in signs) + ")"
        cones.append(ConeSpec.from_generators(L, G, label=label,
                                              meta={"signs": tuple(signs)}))
    second = []
    for c in reversed(cones):
        signs = tuple(-s for s in c.meta["signs"])
        label = "additive(" + ",".join("+" if s > 0 else "-" for s in signs) + ")"
        second.append(ConeSpec.from_generators(L, -c.generators, label=label,
                                               meta={"signs": signs}))
    return cones + second

