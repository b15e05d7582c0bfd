"""Polyhedral cones, their null spaces and generators.

A cone is stored as ``{theta : A theta >= 0, B theta = 0}`` together with an
orthonormal basis of its lineality space ``S`` and, when available, a set of
generators ``delta_1..delta_M`` of ``I  intersect  S-perp``.  Cones assembled
from generators only (partial-linear and additive liftings) carry ``A=None``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

__all__ = [
    "ConeSpec",
    "RankDeficientError",
    "ValidationReport",
    "compute_generators",
    "negate_cone",
    "null_space_basis",
    "validate_assumptions",
]

RANK_RTOL = 1e-10

_OPPOSITES = {
    "monotone": "antitonic",
    "convex": "concave",
    "third-derivative": "neg-third-derivative",
}
_OPPOSITES.update({v: k for k, v in list(_OPPOSITES.items())})


class RankDeficientError(ValueError):
    """Constraint rows are linearly dependent, so ``A^T (A A^T)^{-1}`` is undefined."""


def _as_matrix(M, n=None, name="matrix"):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional")
    if n is not None and M.shape[1] != n:
        raise ValueError(f"{name} has {M.shape[1]} columns, expected {n}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def _rank_tol(M):
    scale = np.max(np.abs(M)) if M.size else 0.0
    return RANK_RTOL * scale


def _stack(A, B):
    if B is None or B.size == 0:
        return A
    return np.vstack([A, B])


def matrix_rank(M):
    """Numerical rank with tolerance ``1e-10 * max|M|``."""
    if M.size == 0:
        return 0
    s = linalg.svd(M, compute_uv=False)
    return int(np.sum(s > _rank_tol(M)))


def null_space_basis(A, B=None):
    """Orthonormal basis of ``{theta : A theta = 0, B theta = 0}``.

    Returns an ``n x k`` matrix with ``k = n - rank([A; B])``.  Raises
    ``ValueError`` when the null space is trivial, since a test needs a
    non-empty null hypothesis.
    """
    A = _as_matrix(A, name="A")
    n = A.shape[1]
    if n < 2:
        raise ValueError("need at least two coordinates")
    if B is not None:
        B = _as_matrix(B, n, name="B")
    M = _stack(A, B)
    # full_matrices so that rows of Vt beyond the rank span the null space
    _, s, Vt = linalg.svd(M, full_matrices=True)
    rank = int(np.sum(s > _rank_tol(M)))
    if rank >= n:
        raise ValueError("empty null space")
    basis = Vt[rank:].T.copy()
    return _canonical_sign(basis)


def _canonical_sign(basis):
    # deterministic orientation: the largest-magnitude entry of each column is positive
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def orthonormal_columns(M):
    """Orthonormal basis of the column space of ``M`` (rank-revealing)."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = linalg.svd(M, full_matrices=False)
    rank = int(np.sum(s > _rank_tol(M)))
    return _canonical_sign(U[:, :rank].copy())


@dataclass(frozen=True, eq=False)
class ConeSpec:
    """A closed convex cone ``I`` containing a linear space ``S``.

    Attributes
    ----------
    A : ndarray (m, n) or None
        Inequality constraints ``A theta >= 0``.  ``None`` for cones given
        only by generators.
    B : ndarray (q, n) or None
        Equality constraints ``B theta = 0``.
    null_basis : ndarray (n, k)
        Orthonormal basis of ``S``.
    generators : ndarray (n, M) or None
        Generators of ``I  intersect  S-perp``; ``None`` when the constraint
        rows are rank deficient (projection then uses the polar route).
    label : str
    """

    A: np.ndarray | None
    B: np.ndarray | None
    null_basis: np.ndarray
    generators: np.ndarray | None = None
    label: str = ""
    meta: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_constraints(cls, A, B=None, label="", meta=None):
        """Build a cone from its constraint rows, computing ``S`` and generators."""
        A = _as_matrix(A, name="A")
        if B is not None:
            B = _as_matrix(B, A.shape[1], name="B")
            if B.shape[0] == 0:
                B = None
        basis = null_space_basis(A, B)
        cone = cls(A=A, B=B, null_basis=basis, generators=None, label=label,
                   meta=dict(meta or {}))
        try:
            gens = compute_generators(cone)
        except RankDeficientError:
            gens = None
        return cls(A=A, B=B, null_basis=basis, generators=gens, label=label,
                   meta=dict(meta or {}))

    @classmethod
    def from_generators(cls, null_basis, generators, label="", meta=None):
        """Cone ``S + cone(generators)`` with no explicit constraint rows."""
        null_basis = np.asarray(null_basis, dtype=float)
        generators = np.asarray(generators, dtype=float)
        if generators.ndim != 2 or generators.shape[0] != null_basis.shape[0]:
            raise ValueError("generators must be an n x M matrix")
        return cls(A=None, B=None, null_basis=null_basis, generators=generators,
                   label=label, meta=dict(meta or {}))

    @property
    def n(self):
        return self.null_basis.shape[0]

    @property
    def k(self):
        return self.null_basis.shape[1]

    @cached_property
    def isotonic_sign(self):
        """+1 / -1 if ``A`` is exactly the (negated) first-difference matrix, else 0.

        Used to route projections through pool-adjacent-violators.
        """
        A = self.A
        n = self.n
        if A is None or self.B is not None or A.shape != (n - 1, n):
            return 0
        D = np.zeros((n - 1, n))
        idx = np.arange(n - 1)
        D[idx, idx] = -1.0
        D[idx, idx + 1] = 1.0
        if np.array_equal(A, D):
            return 1
        if np.array_equal(A, -D):
            return -1
        return 0

    def to_json(self):
        def enc(M):
            return None if M is None else np.asarray(M).tolist()

        return {
            "label": self.label,
            "A": enc(self.A),
            "B": enc(self.B),
            "nullBasis": enc(self.null_basis),
            "generators": enc(self.generators),
        }

    def dumps(self):
        return json.dumps(self.to_json())


def compute_generators(cone):
    """Generators of ``Omega_I``: the columns of ``A^T (A A^T)^{-1}``.

    With equality rows ``B`` the formula is applied inside the null space of
    ``B``.  The pseudo-inverse is formed from a QR factorisation of ``A^T``
    rather than by inverting ``A A^T``, which squares the condition number.
    """
    A, B = cone.A, cone.B
    if A is None:
        if cone.generators is None:
            raise ValueError("cone has neither constraints nor generators")
        return cone.generators
    n = A.shape[1]
    if B is not None:
        V = null_space_basis(B) if B.shape[0] else np.eye(n)
    else:
        V = None
    At = A if V is None else A @ V
    m = At.shape[0]
    if matrix_rank(At) < m:
        raise RankDeficientError("rank-deficient constraints; use direct QP projection")
    Q, R = linalg.qr(At.T, mode="economic")
    # pinv(At) = Q R^{-T}
    G = Q @ linalg.solve_triangular(R.T, np.eye(m), lower=True)
    if V is not None:
        G = V @ G
    return G


def negate_cone(cone):
    """The opposite cone ``D = -I``: constraints and generators change sign."""
    label = _OPPOSITES.get(cone.label)
    if label is None:
        label = cone.label[4:] if cone.label.startswith("neg:") else "neg:" + cone.label
    meta = dict(cone.meta)
    if "pava" in meta:
        groups, sign = meta["pava"]
        meta["pava"] = (groups, -sign)
    return ConeSpec(
        A=None if cone.A is None else -cone.A,
        B=cone.B,
        null_basis=cone.null_basis,
        generators=None if cone.generators is None else -cone.generators,
        label=label,
        meta=meta,
    )


@dataclass
class ValidationReport:
    """Outcome of the structural checks (A1), (A2) and the spanning condition."""

    a1_holds: bool
    a2_certified_by: str  # "pairwise-gram" | "numeric-projection" | "failed"
    spanning_holds: bool
    details: list = field(default_factory=list)

    @property
    def ok(self):
        return self.a1_holds and self.a2_certified_by != "failed" and self.spanning_holds

    def to_json(self):
        return {
            "a1Holds": bool(self.a1_holds),
            "a2CertifiedBy": self.a2_certified_by,
            "spanningHolds": bool(self.spanning_holds),
            "details": list(self.details),
        }


def _interior_nonempty(A, B=None):
    """Whether ``{A theta > 0, B theta = 0}`` is non-empty (LP with bounded slack)."""
    from scipy.optimize import linprog

    m, n = A.shape
    # variables (theta, t); maximise t s.t. A theta >= t, -1 <= theta <= 1, t <= 1
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A, np.ones((m, 1))])
    b_ub = np.zeros(m)
    A_eq = b_eq = None
    if B is not None:
        A_eq = np.hstack([B, np.zeros((B.shape[0], 1))])
        b_eq = np.zeros(B.shape[0])
    bounds = [(-1.0, 1.0)] * n + [(None, 1.0)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs")
    if res.status != 0:
        return False
    return -res.fun > 1e-9 * max(1.0, np.max(np.abs(A)))


def _generators_pointed(G):
    """True if no non-trivial non-negative combination of the columns vanishes."""
    from scipy.optimize import linprog

    n, M = G.shape
    if M == 0:
        return True
    res = linprog(np.zeros(M), A_eq=np.vstack([G, np.ones((1, M))]),
                  b_eq=np.r_[np.zeros(n), 1.0], bounds=[(0, None)] * M, method="highs")
    return res.status != 0


def validate_assumptions(cone, tol=1e-8, n_samples=64, seed=0):
    """Check (A1), (A2) and the spanning condition; never raises on failure.

    (A2) is certified first by the Gram sufficient condition (pairwise
    non-negative generator inner products).  Otherwise each generator, or for
    generator-free cones a sample of points of ``Omega_I``, is projected onto
    the opposite cone and must land on the origin.
    """
    from .projection import project_cone

    details = []
    n = cone.n
    S = cone.null_basis

    # (A1): S equals the lineality space of the cone
    if cone.A is not None:
        M = _stack(cone.A, cone.B)
        resid = np.max(np.abs(M @ S)) if S.size else 0.0
        scale = max(1.0, np.max(np.abs(M)))
        dim_ok = S.shape[1] == n - matrix_rank(M)
        a1 = bool(resid <= tol * scale and dim_ok)
        if not a1:
            details.append(f"null basis mismatch: residual {resid:.3g}, dim ok {dim_ok}")
    else:
        a1 = _generators_pointed(cone.generators)
        if not a1:
            details.append("generator cone contains a line outside S")

    G = cone.generators
    if G is not None:
        orth = np.max(np.abs(S.T @ G)) if G.size else 0.0
        gscale = max(1.0, np.max(np.abs(G))) if G.size else 1.0
        if orth > 1e-7 * gscale:
            a1 = False
            details.append(f"generators not orthogonal to S (max {orth:.3g})")
        if cone.A is not None and G.size:
            feas = np.min(cone.A @ G)
            if feas < -1e-8 * gscale * max(1.0, np.max(np.abs(cone.A))):
                a1 = False
                details.append("generators violate A delta >= 0")

    # (A2)
    a2 = "failed"
    opposite = negate_cone(cone)
    if G is not None and G.shape[1] > 0:
        norms = np.linalg.norm(G, axis=0)
        norms[norms == 0] = 1.0
        Gn = G / norms
        gram = Gn.T @ Gn
        np.fill_diagonal(gram, 0.0)
        bad = np.argwhere(gram < -tol)
        if bad.size == 0:
            a2 = "pairwise-gram"
        else:
            pairs = [(int(i), int(j)) for i, j in bad if i < j]
            details.append(f"negative generator correlations: {pairs[:10]}")
            worst = 0.0
            for j in range(Gn.shape[1]):
                fit = project_cone(Gn[:, j], opposite).fit
                worst = max(worst, float(np.linalg.norm(fit)))
            if worst <= 1e-6:
                a2 = "numeric-projection"
            else:
                details.append(f"generator projects onto opposite cone with norm {worst:.3g}")
    elif G is None:
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_samples):
            y = rng.standard_normal(n)
            res = project_cone(y, cone)
            omega = res.fit - S @ (S.T @ res.fit)
            nrm = np.linalg.norm(omega)
            if nrm < 1e-12:
                continue
            fit = project_cone(omega / nrm, opposite).fit
            worst = max(worst, float(np.linalg.norm(fit)))
        if worst <= 1e-6:
            a2 = "numeric-projection"
            details.append(f"(A2) checked on {n_samples} sampled points of Omega_I")
        else:
            details.append(f"sampled Omega_I point projects onto opposite cone with norm {worst:.3g}")
    else:
        a2 = "pairwise-gram"  # no generators: Omega_I = {0}

    # spanning: S and Omega_I together span R^n
    if G is not None:
        target = n - (matrix_rank(cone.B) if cone.B is not None else 0)
        if "groups" in cone.meta:
            # tied design points share a parameter: the cone spans the
            # vectors that are constant within each tie group
            target = int(np.unique(cone.meta["groups"]).shape[0])
        spanning = matrix_rank(np.hstack([S, G])) == target
    else:
        spanning = _interior_nonempty(cone.A, cone.B)
    if not spanning:
        details.append("S and the generators do not span the ambient space")

    return ValidationReport(a1_holds=bool(a1), a2_certified_by=a2,
                            spanning_holds=bool(spanning), details=details)
