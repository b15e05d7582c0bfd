"""Least-squares convex and concave regression in several dimensions.

The fit solves

    minimise ||y - theta||^2
    subject to theta_j + <x_i - x_j, xi_j> <= theta_i  for all i != j,

optionally with ``||xi_j|| <= L``.  The unbounded problem is solved through
its non-negative least-squares dual followed by an active-set polish: an
equality-constrained solve on the detected active rows, accepted only when it
is feasible and its multipliers are non-negative, so returned fits carry a
certificate.  With a bound, tangent cutting planes reduce the ball to a
sequence of such polyhedral problems; an operator-splitting (ADMM) iteration
is kept as a fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.special import ndtri

from ._parallel import chunked_map, replicate_uniforms
from .cones import ConeSpec, orthonormal_columns
from .projection import NonConvergenceError, nnls_active_set
from .engine import (
    NullDistribution,
    TestOutcome,
    cone_set_hash,
    critical_value,
    p_value,
)

__all__ = [
    "ConvexFit",
    "ConvergenceError",
    "affine_basis",
    "default_lipschitz",
    "fit_concave",
    "fit_convex",
    "simulate_null_affine_multid",
    "statistic_affine_multid",
    "test_affine_multid",
]

# relative slack on the Lipschitz ball accepted as feasible
BALL_RTOL = 1e-6
# pair-row slack accepted for a bounded fit, relative to 1 + max|y|
BOUNDED_PAIR_TOL = 1e-7
# cutting-plane rounds before the bounded fit falls back to ADMM
MAX_CUT_ROUNDS = 8


class ConvergenceError(RuntimeError):
    """Iteration cap reached; ``diagnostics`` holds the last residuals."""

    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class ConvexFit:
    """Fitted values and subgradients of a convex regression.

    Attributes
    ----------
    theta : ndarray (n,)
    subgradients : ndarray (n, d)
        Row ``j`` is the subgradient ``xi_j`` at point ``j``.
    sse : float
    max_primal_violation : float
        Largest ``theta_j + <x_i - x_j, xi_j> - theta_i`` (and ball excess).
    lipschitz_bound : float or None
    iterations : int
    polished : bool
        Whether the active-set polish certified the solution.
    """

    theta: np.ndarray
    subgradients: np.ndarray
    sse: float
    max_primal_violation: float
    lipschitz_bound: float | None
    iterations: int
    polished: bool = False


def _check_problem(points, y):
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("points must be an n x d matrix matching y")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("points and y must be finite")
    if np.unique(X, axis=0).shape[0] != X.shape[0]:
        raise ValueError("points must be distinct")
    return X, y


def _pair_matrix(X):
    """Sparse rows of ``theta_j - theta_i + <x_i - x_j, xi_j> <= 0``, unit norm."""
    n, d = X.shape
    I, J = np.nonzero(~np.eye(n, dtype=bool))
    m = I.shape[0]
    delta = X[I] - X[J]
    norms = np.sqrt(2.0 + np.sum(delta ** 2, axis=1))
    rows = np.repeat(np.arange(m), 2 + d)
    cols = np.empty((m, 2 + d), dtype=np.int64)
    vals = np.empty((m, 2 + d))
    cols[:, 0] = J
    vals[:, 0] = 1.0
    cols[:, 1] = I
    vals[:, 1] = -1.0
    cols[:, 2:] = n + J[:, None] * d + np.arange(d)[None, :]
    vals[:, 2:] = delta
    vals /= norms[:, None]
    C = sparse.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(m, n * (d + 1)))
    return C, I, J, norms


def _project_z(v, m, n, d, L, norm):
    out = v.copy()
    np.minimum(out[:m], 0.0, out=out[:m])
    if L is not None:
        blk = out[m:].reshape(n, d)
        if norm == "l2":
            nr = np.linalg.norm(blk, axis=1)
            scale = np.where(nr > L, L / np.maximum(nr, 1e-300), 1.0)
            blk *= scale[:, None]
        else:
            np.clip(blk, -L, L, out=blk)
    return out


def _violations(theta, xi, X, I, J, L, norm):
    viol = theta[J] - theta[I] + np.sum((X[I] - X[J]) * xi[J], axis=1)
    worst = float(max(0.0, viol.max())) if viol.size else 0.0
    if L is not None:
        nr = np.linalg.norm(xi, axis=1) if norm == "l2" else np.max(np.abs(xi), axis=1)
        worst = max(worst, float(max(0.0, nr.max() - L)))
    return worst


def _candidate_sets(C, b, w, lam, scale):
    """Guesses of the active rows, from the multipliers and the slacks."""
    m = C.shape[0]
    slack = b - C @ w
    seen = set()
    guesses = [np.flatnonzero(lam[:m] > 1e-7 * scale), np.flatnonzero(lam[:m] > 0)]
    guesses += [np.flatnonzero(slack <= t * scale)
                for t in (1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)]
    for g in guesses:
        key = g.tobytes()
        if key not in seen:
            seen.add(key)
            yield g


def _polish(y, C, b, w0, lam, X):
    """Equality-constrained solve on guessed active rows; None if not certified.

    Rows read ``C w <= b``.  The equality solution with non-negative
    multipliers is optimal for the relaxation that keeps only the guessed
    rows (as inequalities).  It is accepted when its ``theta`` is feasible
    for all rows, with its own subgradients or with the minimum-norm ones,
    since a feasible optimum of a relaxation is optimal.
    """
    n, d = X.shape
    p = n * (d + 1)
    scale = max(1.0, float(np.max(np.abs(y))))
    for active in _candidate_sets(C, b, w0, lam, scale):
        CA = C[active].toarray()
        if active.size:
            U, s, Vt = np.linalg.svd(CA, full_matrices=True)
            rank = int(np.sum(s > 1e-10 * s[0])) if s.size else 0
            N = Vt[rank:].T
            # minimum-norm particular solution of C_A w = b_A
            wp = Vt[:rank].T @ ((U[:, :rank].T @ b[active]) / s[:rank])
            if np.max(np.abs(CA @ wp - b[active]), initial=0.0) > 1e-9 * scale:
                continue
        else:
            N = np.eye(p)
            wp = np.zeros(p)
        Nt = N[:n]
        u = np.linalg.lstsq(Nt, y - wp[:n], rcond=1e-10)[0]
        w = wp + N @ u
        theta = w[:n]
        # multipliers from stationarity: [theta - y; 0] + C_A^T lam_A = 0
        grad = np.concatenate([theta - y, np.zeros(p - n)])
        if active.size:
            # active rows are often redundant, so the multipliers are not
            # unique: look for a non-negative set rather than the min-norm one
            try:
                lam_a, _ = nnls_active_set(CA.T, -grad)
            except NonConvergenceError:
                continue
            stat = float(np.max(np.abs(grad + CA.T @ lam_a)))
            if stat > 1e-8 * scale:
                continue
        elif np.max(np.abs(grad)) > 1e-8 * scale:
            continue
        if (C @ w - b).max(initial=0.0) <= 1e-9 * scale:
            return w
        # subgradients are not unique; try the smallest ones for this theta
        xi = _min_norm_subgradients(X, theta)
        if xi is None:
            continue
        w = np.concatenate([theta, xi.ravel()])
        if (C @ w - b).max(initial=0.0) <= 1e-9 * scale:
            return w
    return None


def _fit_dual(X, y, n, d, C, b=None, weight=1e4, rounds=8):
    """Exact fit through the dual non-negative least-squares problem.

    Rows read ``D theta + E xi <= b``.  With ``eps = 1 / M^2`` the dual of the
    proximal problem ``min 1/2 ||y - theta||^2 + eps/2 ||xi - xi_k||^2``
    subject to the rows is

        min 1/2 ||y - D^T lam||^2 + 1/(2 eps) ||E^T lam - eps xi_k||^2 + b^T lam

    over ``lam >= 0``, an NNLS problem once one extra row ``(-b / k)^T lam - k``
    carries the linear term up to an ``O(1/k^2)`` ridge.  Its primal point is
    ``theta = y - D^T lam``, ``xi = xi_k - E^T lam / eps``.  Each round is
    polished on the rows with ``lam > 0``; when no active-set guess certifies,
    the next round recentres the proximal term at the current ``xi``, which
    removes the bias the ridge puts on large subgradients.
    """
    Cd = C.toarray()
    m = Cd.shape[0]
    b = np.zeros(m) if b is None else np.asarray(b, dtype=float)
    K = np.vstack([Cd[:, :n].T, weight * Cd[:, n:].T])
    base = np.concatenate([y, np.zeros(n * d)])
    tol = None
    if np.any(b != 0):
        k = weight * (1.0 + float(np.linalg.norm(y)))
        K = np.vstack([K, -b[None, :] / k])
        base = np.append(base, k)
        # the dual gradient is the primal slack; the large target entry would
        # otherwise loosen the default stopping rule
        tol = 1e-9 * (1.0 + float(np.max(np.abs(y))))
    xi_k = np.zeros(n * d)
    iters = 0
    for _ in range(rounds):
        target = base.copy()
        target[n:n + n * d] = xi_k / weight
        lam, more = nnls_active_set(K, target, tol=tol)
        iters += more
        theta = y - Cd[:, :n].T @ lam
        xi = xi_k - (weight ** 2) * (Cd[:, n:].T @ lam)
        w = np.concatenate([theta, xi])
        wp = _polish(y, C, b, w, lam, X)
        if wp is not None:
            return wp, iters, True
        xi_k = xi
    return w, iters, False


def _admm(y, C, m, n, d, L, norm, w, lam, max_iter, tol, rho, sigma, relax):
    """OSQP-style splitting for the Lipschitz-bounded problem.

    The ball constraint on each ``xi_j`` is handled by clipping rows of the
    split variable.  Returns ``(w, iterations)``.
    """
    p = n * (d + 1)
    CtC = (C.T @ C).toarray()
    Pdiag = np.concatenate([np.ones(n), np.zeros(n * d)])
    q = np.concatenate([-y, np.zeros(n * d)])
    eps = tol * (1.0 + float(np.linalg.norm(y)))
    z = _project_z(C @ w, m, n, d, L, norm)

    def factor(r):
        K = CtC * r
        K[np.diag_indices(p)] += Pdiag + sigma
        return linalg.cho_factor(K)

    fac = factor(rho)
    r_p = r_d = np.inf
    for it in range(1, max_iter + 1):
        rhs = sigma * w - q + C.T @ (rho * z - lam)
        w_t = linalg.cho_solve(fac, rhs)
        z_t = C @ w_t
        w = relax * w_t + (1 - relax) * w
        v = relax * z_t + (1 - relax) * z
        z_new = _project_z(v + lam / rho, m, n, d, L, norm)
        lam = lam + rho * (v - z_new)
        z = z_new
        if it % 10 == 0 or it == max_iter:
            Cw = C @ w
            Ctl = C.T @ lam
            r_p = float(np.max(np.abs(Cw - z)))
            r_d = float(np.max(np.abs(Pdiag * w + q + Ctl)))
            if r_p <= eps and r_d <= eps:
                return w, it
            if it % 50 == 0:
                num = r_p / max(np.max(np.abs(Cw)), np.max(np.abs(z)), 1e-12)
                den = r_d / max(np.max(np.abs(Pdiag * w)), np.max(np.abs(Ctl)),
                                np.max(np.abs(q)), 1e-12)
                new_rho = float(np.clip(rho * math.sqrt(num / max(den, 1e-300)), 1e-6, 1e6))
                if new_rho > 5 * rho or new_rho < rho / 5:
                    rho = new_rho
                    fac = factor(rho)
    raise ConvergenceError(
        f"convex fit did not converge in {max_iter} iterations",
        {"primal_residual": r_p, "dual_residual": r_d, "tolerance": eps},
    )


def _min_norm_subgradients(X, theta):
    """Smallest Euclidean subgradient at each point for a fixed convex fit.

    For fixed ``theta`` the rows ``<x_j - x_i, xi_j> >= theta_j - theta_i``
    constrain ``xi_j`` alone.  Each least-distance problem is solved through
    the non-negative least-squares dual ``min ||E u - e_{d+1}||``,
    ``E = [G^T; h^T]``, with ``xi_j = -r[:d] / r[d]`` for the residual ``r``.
    Returns ``None`` when some problem is numerically infeasible.
    """
    n, d = X.shape
    out = np.empty((n, d))
    f = np.zeros(d + 1)
    f[-1] = 1.0
    for j in range(n):
        G = np.delete(X[j] - X, j, axis=0)
        h = np.delete(theta[j] - theta, j)
        E = np.vstack([G.T, h[None, :]])
        u, _ = nnls_active_set(E, f)
        r = E @ u - f
        if abs(r[-1]) < 1e-12:
            return None
        out[j] = -r[:d] / r[-1]
    return out


def _row_norms(xi, norm):
    return np.linalg.norm(xi, axis=1) if norm == "l2" else np.max(np.abs(xi), axis=1)


def _within(xi, L, norm):
    return _row_norms(xi, norm) <= L * (1.0 + BALL_RTOL)


def _cut_rows(j, xi_j, L, norm, n, d):
    """Halfspaces containing the ball that cut off ``xi_j``."""
    rows = []
    if norm == "l2":
        rows.append(xi_j / np.linalg.norm(xi_j))
    else:
        for k in np.flatnonzero(np.abs(xi_j) > L):
            e = np.zeros(d)
            e[k] = np.sign(xi_j[k])
            rows.append(e)
    out = np.zeros((len(rows), n * (d + 1)))
    for r, u in enumerate(rows):
        out[r, n + j * d:n + (j + 1) * d] = u
    return out


def _fit_bounded(X, y, n, d, Cpair, w, L, norm, max_iter, tol, rho, sigma, relax):
    """Lipschitz-bounded fit by tangent cutting planes, ADMM as a fallback.

    Cuts converge quickly when few subgradients press on the ball, the case
    in which splitting is slowest; many active balls are left to ADMM.

    Each round solves the polyhedral problem with the current cuts and asks,
    for the fitted ``theta``, whether every point admits a subgradient inside
    the ball (enlarged by ``BALL_RTOL``): the round's own subgradients or the
    minimum-norm ones.  Points without one receive a cut through the round's
    subgradient.  A polished round is optimal for a relaxation of the bounded
    problem, so the accepted fit has an sse between the optima for ``L`` and
    ``L (1 + BALL_RTOL)``.
    """
    m = Cpair.shape[0]
    scale = 1.0 + float(np.max(np.abs(y)))
    w_free = w
    cuts = []
    iters = 0
    polished = True
    for _ in range(MAX_CUT_ROUNDS):
        theta = w[:n]
        xi = w[n:].reshape(n, d).copy()
        ok = _within(xi, L, norm)
        if not ok.all():
            xi_min = _min_norm_subgradients(X, theta)
            if xi_min is not None:
                use = ~ok & _within(xi_min, L, norm)
                xi[use] = xi_min[use]
                ok |= use
        if ok.all():
            cand = np.concatenate([theta, xi.ravel()])
            if (Cpair @ cand).max(initial=0.0) <= BOUNDED_PAIR_TOL * scale:
                return cand, iters, polished
        for j in np.flatnonzero(~ok):
            cuts.append(_cut_rows(j, w[n + j * d:n + (j + 1) * d], L, norm, n, d))
        C = sparse.vstack([Cpair, sparse.csr_matrix(np.vstack(cuts))]).tocsr()
        b = np.concatenate([np.zeros(m), np.full(C.shape[0] - m, L)])
        try:
            w_next, more, polished = _fit_dual(X, y, n, d, C, b)
        except NonConvergenceError:
            break
        w = w_next
        iters += more
    ball = sparse.hstack([sparse.csr_matrix((n * d, n)), sparse.identity(n * d)])
    C = sparse.vstack([Cpair, ball]).tocsr()
    # splitting converges better from the clipped unbounded fit than from
    # the last cut round
    w0 = w_free.copy()
    blk = w0[n:].reshape(n, d)
    blk[:] = _project_z(np.concatenate([np.zeros(m), blk.ravel()]), m, n, d, L,
                        norm)[m:].reshape(n, d)
    w, more = _admm(y, C, m, n, d, L, norm, w0, np.zeros(C.shape[0]), max_iter, tol, rho,
                    sigma, relax)
    return w, iters + more, False


def fit_convex(points, y, L=None, norm="l2", max_iter=20000, tol=1e-6, rho=0.1,
               sigma=1e-6, relax=1.6):
    """Least-squares convex fit, optionally with subgradient norms bounded by ``L``.

    Without ``L`` (or when the bound turns out inactive) the fit is exact and
    certified by an active-set polish.  With an active bound the ball is
    approached by tangent cuts, each round an exact polyhedral fit; returned
    subgradients satisfy ``||xi_j|| <= L (1 + BALL_RTOL)`` and pair rows hold
    to ``BOUNDED_PAIR_TOL * (1 + max|y|)``.  If the cuts stall
    the problem goes to operator splitting, stopped when primal and dual
    residuals are below ``tol * (1 + ||y||)``.

    Parameters
    ----------
    points : array_like (n, d)
        Distinct design points.
    y : array_like (n,)
    L : float, optional
        Lipschitz bound on every subgradient.
    norm : {"l2", "linf"}
        Norm for the Lipschitz ball.
    max_iter : int
        Splitting iteration cap; exceeding it raises :class:`ConvergenceError`.
    """
    X, y = _check_problem(points, y)
    if norm not in ("l2", "linf"):
        raise ValueError("norm must be 'l2' or 'linf'")
    if L is not None:
        L = float(L)
        if not L > 0:
            raise ValueError("Lipschitz bound must be positive")
    n, d = X.shape
    Cpair, I, J, _ = _pair_matrix(X)
    m = Cpair.shape[0]
    w, iters, polished = _fit_dual(X, y, n, d, Cpair)
    if L is not None:
        w, more, polished = _fit_bounded(X, y, n, d, Cpair, w, L, norm, max_iter, tol,
                                         rho, sigma, relax)
        iters += more
    theta = w[:n].copy()
    xi = w[n:].reshape(n, d).copy()
    r = y - theta
    return ConvexFit(theta=theta, subgradients=xi, sse=float(r @ r),
                     max_primal_violation=_violations(theta, xi, X, I, J, L, norm),
                     lipschitz_bound=L, iterations=iters, polished=polished)


def fit_concave(points, y, L=None, **kwargs):
    """Concave fit: the negated convex fit of ``-y``."""
    f = fit_convex(points, -np.asarray(y, dtype=float), L=L, **kwargs)
    return ConvexFit(theta=-f.theta, subgradients=-f.subgradients, sse=f.sse,
                     max_primal_violation=f.max_primal_violation,
                     lipschitz_bound=f.lipschitz_bound, iterations=f.iterations,
                     polished=f.polished)


def default_lipschitz(points, y):
    """Heuristic bound ``10 * range(y) / (smallest pairwise distance)``."""
    X, y = _check_problem(points, y)
    diff = X[:, None, :] - X[None, :, :]
    dist = np.sqrt(np.sum(diff ** 2, axis=2))
    dmin = np.min(dist[~np.eye(X.shape[0], dtype=bool)])
    spread = float(np.ptp(y))
    return 10.0 * max(spread, 1e-12) / dmin


def affine_basis(points):
    """Orthonormal basis of ``span{1, x_1, ..., x_d}``."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return orthonormal_columns(np.hstack([np.ones((X.shape[0], 1)), X]))


def statistic_affine_multid(points, y, L=None, norm="l2", **kwargs):
    """``T = max(||theta_S - theta_I||^2, ||theta_S - theta_D||^2) / SSE_0``.

    Returns a :class:`TestOutcome` without p-value.
    """
    X, y = _check_problem(points, y)
    Q = affine_basis(X)
    fit_s = Q @ (Q.T @ y)
    r0 = y - fit_s
    sse0 = float(r0 @ r0)
    if sse0 <= 1e-12 * float(y @ y) or sse0 == 0.0:
        raise ValueError("degenerate: zero residual under H0")
    fi = fit_convex(X, y, L=L, norm=norm, **kwargs)
    fd = fit_concave(X, y, L=L, norm=norm, **kwargs)
    comps = []
    for f in (fi, fd):
        diff = f.theta - fit_s
        comps.append(min(1.0, float(diff @ diff) / sse0))
    j = int(np.argmax(comps))
    return TestOutcome(T=comps[j], components=comps,
                       argmax_cone=("convex", "concave")[j], sse0=sse0,
                       fits={"S": fit_s, "0:convex": fi.theta, "1:concave": fd.theta})


def _null_chunk(X, L, norm, base, scale, seed, start, stop):
    out = []
    n = X.shape[0]
    for i in range(start, stop):
        eps = ndtri(replicate_uniforms(seed, i, n))
        out.append(statistic_affine_multid(X, base + scale * eps, L=L, norm=norm).T)
    return out


def simulate_null_affine_multid(points, nsim=1000, seed=0, L=None, norm="l2",
                                plug_in=None):
    """Gaussian null distribution of the multivariate convex statistic.

    Without ``L`` the statistic is invariant to affine shifts and scale, so
    replicates use pure noise and the null is exact.  The Lipschitz class is
    not a cone, so with ``L`` the caller passes ``plug_in = (theta_S, sigma)``
    and replicates are ``theta_S + sigma * eps``.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if L is None:
        base, scale, prov = np.zeros(n), 1.0, "known-G"
    else:
        if plug_in is None:
            raise ValueError("a Lipschitz-bounded null needs plug_in=(theta_S, sigma)")
        base, scale = np.asarray(plug_in[0], dtype=float), float(plug_in[1])
        prov = "bootstrap"
    samples = chunked_map(_null_chunk, int(nsim), (X, L, norm, base, scale, int(seed)))
    tag = ConeSpec.from_generators(affine_basis(X), np.zeros((n, 0)),
                                   label=f"convex-multid:L={L}:{norm}")
    extra = np.ascontiguousarray(base, "<f8").tobytes() + repr(scale).encode()
    return NullDistribution(samples=np.asarray(samples), seed=int(seed), nsim=int(nsim),
                            provenance=prov,
                            cone_set_hash=cone_set_hash([tag], None, prov, extra))


def test_affine_multid(points, y, L=None, null=None, alpha=0.05, nsim=1000, seed=0,
                       norm="l2"):
    """Test ``H0: E y`` affine in the points against convex or concave.

    ``L="auto"`` selects :func:`default_lipschitz`.
    """
    X, y = _check_problem(points, y)
    if isinstance(L, str):
        if L != "auto":
            raise ValueError("L must be a number, None or 'auto'")
        L = default_lipschitz(X, y)
    out = statistic_affine_multid(X, y, L=L, norm=norm)
    if null is None:
        plug = None
        if L is not None:
            k = X.shape[1] + 1
            plug = (out.fits["S"], math.sqrt(out.sse0 / max(X.shape[0] - k, 1)))
        null = simulate_null_affine_multid(X, nsim=nsim, seed=seed, L=L, norm=norm,
                                           plug_in=plug)
    out.p_value = p_value(out.T, null)
    out.critical_value = critical_value(null, alpha)
    out.alpha = alpha
    out.null_provenance = null.provenance
    out.nsim = null.nsim
    out.seed = null.seed
    return out


test_affine_multid.__test__ = False
