"""Euclidean projections onto subspaces and polyhedral cones.

Cone projections split ``y`` into its component in ``S`` and a non-negative
least-squares fit of the remainder on the generators of ``Omega_I``.  Cones
without generators are handled through the polar cone: the residual of the
projection is the NNLS fit of ``y`` on the negated constraint rows.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import linalg

__all__ = [
    "NonConvergenceError",
    "ProjectionResult",
    "nnls_active_set",
    "project_cone",
    "project_cone_bruteforce",
    "project_isotonic_pava",
    "project_subspace",
]

ORACLE_LIMIT = 20


class NonConvergenceError(RuntimeError):
    """Active-set iteration cap reached; carries the best iterate."""

    def __init__(self, message, best=None, dual_violation=None, primal_violation=None):
        super().__init__(message)
        self.best = best
        self.dual_violation = dual_violation
        self.primal_violation = primal_violation


@dataclass
class ProjectionResult:
    """Fitted vector plus the certificates of the projection conditions.

    ``kkt_inner`` is ``<fit, y - fit>`` and ``max_dual_violation`` the largest
    ``<y - fit, delta_j> / ||delta_j||`` over generators (for generator-free
    cones, the largest normalised constraint violation ``-(A fit)_i / ||A_i||``).
    """

    fit: np.ndarray
    sse: float
    active: tuple = ()
    kkt_inner: float = 0.0
    max_dual_violation: float = 0.0
    iterations: int = 0


def _lstsq(M, b):
    return linalg.lstsq(M, b, lapack_driver="gelsy", check_finite=False)[0]


def nnls_active_set(C, z, tol=None, max_iter=None):
    """Lawson-Hanson active-set solution of ``min ||z - C b||`` over ``b >= 0``.

    The entering column is the one with the largest gradient component,
    lowest index on ties.  Returns ``(b, n_iterations)``.
    """
    C = np.asarray(C, dtype=float)
    z = np.asarray(z, dtype=float)
    m, M = C.shape
    if tol is None:
        # gradient entries scale with the column norms and with ||z||
        cmax = float(np.max(np.linalg.norm(C, axis=0))) if C.size else 1.0
        tol = 10 * np.finfo(float).eps * max(m, M, 1) * max(cmax, 1.0) \
            * max(np.linalg.norm(z), 1e-300)
    if max_iter is None:
        max_iter = 50 * max(M, 1)
    b = np.zeros(M)
    passive = np.zeros(M, dtype=bool)
    blocked = np.zeros(M, dtype=bool)
    it = 0
    while M:
        w = C.T @ (z - C @ b)
        cand = np.where(passive | blocked, -np.inf, w)
        j = int(np.argmax(cand))
        if cand[j] <= tol:
            break
        passive[j] = True
        first = True
        while True:
            it += 1
            if it > max_iter:
                r = z - C @ b
                raise NonConvergenceError(
                    "active-set iteration did not converge",
                    best=b.copy(),
                    dual_violation=float(np.max(C.T @ r)),
                    primal_violation=float(max(0.0, -np.min(b))),
                )
            P = np.flatnonzero(passive)
            s = _lstsq(C[:, P], z)
            if np.all(s > 0):
                b[:] = 0.0
                b[P] = s
                blocked[:] = False
                break
            if first and s[np.searchsorted(P, j)] <= 0:
                # the entering gradient was rounding noise
                passive[j] = False
                blocked[j] = True
                break
            first = False
            neg = np.flatnonzero(s <= 0)
            bP = b[P]
            ratios = bP[neg] / (bP[neg] - s[neg])
            k = int(np.argmin(ratios))
            b[P] = bP + ratios[k] * (s - bP)
            # the blocking coefficient is zero by construction; rounding
            # can leave it slightly positive, which would stall the loop
            b[P[neg[k]]] = 0.0
            drop = P[b[P] <= 0]
            b[drop] = 0.0
            passive[drop] = False
    return b, it


def project_subspace(y, null_basis):
    """Least-squares projection of ``y`` onto the column space of ``null_basis``."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(null_basis, dtype=float)
    coef = _lstsq(X, y)
    fit = X @ coef
    r = y - fit
    return ProjectionResult(
        fit=fit,
        sse=float(r @ r),
        active=tuple(range(X.shape[1])),
        kkt_inner=float(fit @ r),
        max_dual_violation=float(np.max(np.abs(X.T @ r))) if X.size else 0.0,
    )


def project_isotonic_pava(y, weights=None):
    """Weighted non-decreasing fit by pool-adjacent-violators."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    # blocks as parallel lists: weighted sum, weight, length
    sums = []
    wts = []
    lens = []
    for yi, wi in zip((y * w).tolist(), w.tolist()):
        s, ww, ln = yi, wi, 1
        while sums and sums[-1] * ww >= s * wts[-1]:
            s += sums.pop()
            ww += wts.pop()
            ln += lens.pop()
        sums.append(s)
        wts.append(ww)
        lens.append(ln)
    means = np.asarray(sums) / np.asarray(wts)
    return np.repeat(means, lens)


def _certify(y, fit, cone, iterations, active):
    r = y - fit
    G = cone.generators
    if G is not None and G.shape[1]:
        norms = np.linalg.norm(G, axis=0)
        norms[norms == 0] = 1.0
        dual = float(np.max((G.T @ r) / norms))
    elif cone.A is not None:
        An = np.linalg.norm(cone.A, axis=1)
        An[An == 0] = 1.0
        dual = float(max(0.0, np.max(-(cone.A @ fit) / An)))
    else:
        dual = 0.0
    return ProjectionResult(
        fit=fit,
        sse=float(r @ r),
        active=tuple(int(a) for a in active),
        kkt_inner=float(fit @ r),
        max_dual_violation=dual,
        iterations=iterations,
    )


def project_cone(y, cone):
    """Projection of ``y`` onto the cone ``I = S + Omega_I``.

    Uses NNLS on the normalised generators when they exist, otherwise NNLS on
    the polar cone spanned by the negated constraint rows.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (cone.n,):
        raise ValueError(f"y has shape {y.shape}, expected ({cone.n},)")
    if not np.any(y):
        return ProjectionResult(fit=np.zeros_like(y), sse=0.0)
    Q = cone.null_basis
    G = cone.generators
    if G is not None:
        ys = Q @ (Q.T @ y)
        z = y - ys
        if G.shape[1] == 0:
            return _certify(y, ys, cone, 0, ())
        norms = np.linalg.norm(G, axis=0)
        norms[norms == 0] = 1.0
        Gn = G / norms
        b, it = nnls_active_set(Gn, z, tol=1e-12 * np.linalg.norm(y) * np.sqrt(cone.n))
        active = np.flatnonzero(b > 0)
        fit = ys + Gn[:, active] @ b[active]
        return _certify(y, fit, cone, it, active)
    if cone.A is None:
        raise ValueError("cone has neither generators nor constraints")
    fit, it, active = _project_polar(y, cone.A, cone.B)
    return _certify(y, fit, cone, it, active)


def _project_polar(y, A, B=None):
    # projection onto {A t >= 0, B t = 0} equals y minus its projection onto
    # the polar cone generated by the rows of -A (inside null(B))
    if B is not None:
        from .cones import null_space_basis

        V = null_space_basis(B)
        u = V.T @ y
        Au = A @ V
    else:
        V = None
        u = y
        Au = A
    norms = np.linalg.norm(Au, axis=1)
    keep = norms > 0
    Cn = -(Au[keep] / norms[keep, None]).T
    lam, it = nnls_active_set(Cn, u, tol=1e-12 * np.linalg.norm(y) * np.sqrt(len(y)))
    active_rows = np.flatnonzero(keep)[lam > 0]
    theta = u - Cn @ lam
    fit = theta if V is None else V @ theta
    return fit, it, active_rows


def project_cone_bruteforce(y, cone, tol=1e-9):
    """Exact projection by enumerating faces; independent of the NNLS path.

    With generators, every linearly independent subset ``F`` is tried:
    ``y`` is projected onto ``S + span(F)`` and the candidate kept if its
    coefficients on ``F`` are non-negative and no generator has a positive
    inner product with the residual.  Without generators the faces are the
    subsets of constraint rows held at equality.  Limited to 20 generators
    (rows), i.e. ``2^20`` subsets.
    """
    y = np.asarray(y, dtype=float)
    Q = cone.null_basis
    G = cone.generators
    scale = max(np.linalg.norm(y), 1e-300)
    best = None
    if G is not None:
        M = G.shape[1]
        if M > ORACLE_LIMIT:
            raise ValueError("oracle limit")
        norms = np.linalg.norm(G, axis=0)
        norms[norms == 0] = 1.0
        Gn = G / norms
        for size in range(M + 1):
            for F in itertools.combinations(range(M), size):
                F = list(F)
                X = np.hstack([Q, Gn[:, F]])
                if np.linalg.matrix_rank(X) < X.shape[1]:
                    continue
                coef = np.linalg.lstsq(X, y, rcond=None)[0]
                if size and np.min(coef[Q.shape[1]:]) < -tol * scale:
                    continue
                fit = X @ coef
                r = y - fit
                if M and np.max(Gn.T @ r) > tol * scale:
                    continue
                sse = float(r @ r)
                if best is None or sse < best[0] - 1e-14 * scale**2:
                    best = (sse, fit, tuple(F))
    else:
        A = cone.A
        m = A.shape[0]
        if m > ORACLE_LIMIT:
            raise ValueError("oracle limit")
        Bq = cone.B
        An = A / np.linalg.norm(A, axis=1, keepdims=True)
        for size in range(m + 1):
            for F in itertools.combinations(range(m), size):
                rows = [A[list(F)]] if F else []
                if Bq is not None:
                    rows.append(Bq)
                if rows:
                    E = np.vstack(rows)
                    _, s, Vt = np.linalg.svd(E)
                    rank = int(np.sum(s > 1e-10 * np.max(np.abs(E))))
                    N = Vt[rank:].T
                    fit = N @ (N.T @ y)
                else:
                    fit = y.copy()
                if np.min(An @ fit) < -tol * scale:
                    continue
                r = y - fit
                sse = float(r @ r)
                if best is None or sse < best[0] - 1e-14 * scale**2:
                    best = (sse, fit, tuple(F))
    if best is None:
        raise RuntimeError("no feasible face found")
    sse, fit, F = best
    return _certify(y, fit, cone, 0, F)
