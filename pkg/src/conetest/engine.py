"""The cone test: statistic, simulated null distributions, p-values.

The statistic is ``T = max_j ||theta_S - theta_j||^2 / SSE_0`` over a family
of cones sharing the null space ``S``.  Under ``H0`` its law does not depend
on the position in ``S`` or on the error scale, so it is simulated exactly
from the error law (known ``G``) or approximately from resampled standardized
residuals (bootstrap).
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from ._parallel import chunked_map, replicate_uniforms
from .cones import orthonormal_columns
from .projection import project_cone, project_isotonic_pava

__all__ = [
    "Dataset",
    "NullDistribution",
    "TestOutcome",
    "cone_set_hash",
    "critical_value",
    "p_value",
    "run_test",
    "simulate_null_bootstrap",
    "simulate_null_knownG",
    "standardized_residuals",
    "statistic_T",
]

PROVENANCES = ("known-G", "bootstrap")
CACHE_MAGIC = b"CONENULL"
CACHE_VERSION = 1
DEGENERATE_RTOL = 1e-12


@dataclass
class Dataset:
    """Design, response and optional covariates of one regression problem.

    Attributes
    ----------
    x : ndarray (n, d)
    y : ndarray (n,)
    Z : ndarray (n, q) or None
        Parametrically modelled covariates.
    weights : ndarray (n,) or None
        Observation weights (inverse variances).
    covariance : ndarray (n, n) or None
        Known error covariance up to scale.
    column_names : tuple of str
    """

    x: np.ndarray
    y: np.ndarray
    Z: np.ndarray | None = None
    weights: np.ndarray | None = None
    covariance: np.ndarray | None = None
    column_names: tuple = ()

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        n = self.y.shape[0]
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] != n:
            raise ValueError(f"x must have {n} rows, got shape {x.shape}")
        self.x = x
        if self.Z is not None:
            Z = np.asarray(self.Z, dtype=float)
            if Z.ndim == 1:
                Z = Z[:, None]
            if Z.shape[0] != n:
                raise ValueError(f"Z must have {n} rows, got shape {Z.shape}")
            self.Z = Z if Z.shape[1] else None
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.shape != (n,) or np.any(w <= 0):
                raise ValueError("weights must be n positive values")
            self.weights = w
        if self.covariance is not None:
            C = np.asarray(self.covariance, dtype=float)
            if C.shape != (n, n):
                raise ValueError(f"covariance must be {n} x {n}")
            self.covariance = C
        for name in ("x", "y", "Z", "weights", "covariance"):
            v = getattr(self, name)
            if v is not None and not np.all(np.isfinite(v)):
                raise ValueError(f"{name} contains NaN or Inf")
        self.column_names = tuple(self.column_names)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def d(self):
        return self.x.shape[1]


@dataclass
class NullDistribution:
    """Sorted Monte Carlo draws of ``T`` under ``H0``."""

    samples: np.ndarray
    seed: int
    nsim: int
    provenance: str
    cone_set_hash: bytes

    def __post_init__(self):
        self.samples = np.sort(np.asarray(self.samples, dtype=float))
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        if self.samples.shape != (self.nsim,):
            raise ValueError("samples must have length nsim")

    def save(self, path):
        """Write the binary cache file (header, then little-endian float64)."""
        header = CACHE_MAGIC + struct.pack("<I", CACHE_VERSION) + self.cone_set_hash
        header += struct.pack("<QQ", int(self.seed) & 0xFFFFFFFFFFFFFFFF, int(self.nsim))
        header += self.provenance.encode().ljust(16, b"\0")
        Path(path).write_bytes(header + self.samples.astype("<f8").tobytes())

    @classmethod
    def load(cls, path, expected_hash=None):
        raw = Path(path).read_bytes()
        if raw[:8] != CACHE_MAGIC:
            raise ValueError(f"{path}: not a null-distribution cache file")
        (version,) = struct.unpack("<I", raw[8:12])
        if version != CACHE_VERSION:
            raise ValueError(f"{path}: unsupported cache version {version}")
        digest = raw[12:44]
        seed, nsim = struct.unpack("<QQ", raw[44:60])
        provenance = raw[60:76].rstrip(b"\0").decode()
        if expected_hash is not None and digest != expected_hash:
            raise ValueError(f"{path}: cached null belongs to a different cone family")
        samples = np.frombuffer(raw[76:], dtype="<f8").astype(float)
        if samples.shape[0] != nsim:
            raise ValueError(f"{path}: truncated cache file")
        return cls(samples=samples, seed=seed, nsim=nsim, provenance=provenance,
                   cone_set_hash=digest)


@dataclass
class TestOutcome:
    """Result of one test; ``p_value`` is ``None`` for a bare statistic."""

    __test__ = False  # not a pytest class

    T: float
    components: list
    argmax_cone: str
    sse0: float
    fits: dict = field(repr=False)
    p_value: float | None = None
    critical_value: float | None = None
    alpha: float | None = None
    null_provenance: str | None = None
    nsim: int | None = None
    seed: int | None = None

    @property
    def reject(self):
        if self.critical_value is None:
            raise ValueError("no null distribution attached")
        return self.T > self.critical_value

    def to_json(self, include_fits=False):
        out = {
            "T": self.T,
            "components": list(self.components),
            "argmaxCone": self.argmax_cone,
            "sse0": self.sse0,
            "pValue": self.p_value,
            "criticalValue": self.critical_value,
            "alpha": self.alpha,
            "provenance": self.null_provenance,
            "nsim": self.nsim,
            "seed": self.seed,
        }
        if self.critical_value is not None:
            out["reject"] = bool(self.reject)
        if include_fits:
            out["fits"] = {k: np.asarray(v).tolist() for k, v in self.fits.items()}
        return out


# ----------------------------------------------------------------------------
# statistic

def _basis(cone_family, null_basis):
    if null_basis is None:
        return cone_family[0].null_basis
    X = np.asarray(null_basis, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return orthonormal_columns(X)


def _fast_fit(y, cone):
    sign = cone.isotonic_sign
    if sign:
        return sign * project_isotonic_pava(sign * y)
    grouped = cone.meta.get("pava")
    if grouped is not None:
        groups, sign = grouped
        counts = np.bincount(groups)
        means = np.bincount(groups, weights=sign * y) / counts
        return sign * project_isotonic_pava(means, counts)[groups]
    return project_cone(y, cone).fit


def _check_family(cone_family, Q):
    if not cone_family:
        raise ValueError("empty cone family")
    n = Q.shape[0]
    for c in cone_family:
        if c.n != n:
            raise ValueError("cones and null basis disagree on n")


def statistic_T(y, cone_family, null_basis=None):
    """``T`` and its per-cone components for one response vector.

    Parameters
    ----------
    y : array_like, shape (n,)
    cone_family : list of ConeSpec
        Cones sharing the null space ``S``.
    null_basis : array_like, optional
        Basis of ``S``; defaults to the first cone's.

    Returns
    -------
    TestOutcome
        Without p-value or critical value.  Ties in the maximum go to the
        lowest cone index.
    """
    y = np.asarray(y, dtype=float)
    Q = _basis(cone_family, null_basis)
    _check_family(cone_family, Q)
    if y.shape != (Q.shape[0],):
        raise ValueError(f"y has shape {y.shape}, expected ({Q.shape[0]},)")
    fit_s = Q @ (Q.T @ y)
    r0 = y - fit_s
    sse0 = float(r0 @ r0)
    if sse0 <= DEGENERATE_RTOL * float(y @ y) or sse0 == 0.0:
        raise ValueError("degenerate: y in S")
    comps = []
    fits = {"S": fit_s}
    for j, cone in enumerate(cone_family):
        fit = _fast_fit(y, cone)
        diff = fit - fit_s
        comps.append(min(1.0, max(0.0, float(diff @ diff) / sse0)))
        fits[f"{j}:{cone.label}"] = fit
    j = int(np.argmax(comps))
    return TestOutcome(T=comps[j], components=comps, argmax_cone=cone_family[j].label,
                       sse0=sse0, fits=fits)


def _stat_only(y, cone_family, Q):
    fit_s = Q @ (Q.T @ y)
    r0 = y - fit_s
    sse0 = float(r0 @ r0)
    best = 0.0
    for cone in cone_family:
        diff = _fast_fit(y, cone) - fit_s
        best = max(best, float(diff @ diff))
    return min(1.0, best / sse0)


# ----------------------------------------------------------------------------
# null distributions

def cone_set_hash(cone_family, null_basis=None, provenance="known-G", extra=b""):
    """SHA-256 digest binding simulated samples to the cones, ``S`` and error law."""
    h = hashlib.sha256()
    Q = _basis(cone_family, null_basis)
    h.update(np.ascontiguousarray(Q, dtype="<f8").tobytes())
    for c in cone_family:
        h.update(c.label.encode() + b"\0")
        for M in (c.A, c.B, c.null_basis, c.generators):
            if M is None:
                h.update(b"-")
            else:
                h.update(str(M.shape).encode())
                h.update(np.ascontiguousarray(M, dtype="<f8").tobytes())
    h.update(provenance.encode())
    h.update(extra)
    return h.digest()


def _draw_errors(law, u):
    kind, payload = law
    if kind == "gaussian":
        return ndtri(u)
    if kind == "ppf":
        return np.asarray(payload(u), dtype=float)
    if kind == "bootstrap":
        m = payload.shape[0]
        idx = np.minimum((u * m).astype(np.int64), m - 1)
        return payload[idx]
    raise ValueError(f"unknown error law {kind!r}")


def _simulate_chunk(cone_family, Q, law, seed, start, stop):
    n = Q.shape[0]
    out = []
    for i in range(start, stop):
        eps = _draw_errors(law, replicate_uniforms(seed, i, n))
        out.append(_stat_only(eps, cone_family, Q))
    return out


def _simulate(cone_family, null_basis, nsim, seed, law, provenance, extra):
    nsim = int(nsim)
    if nsim < 1:
        raise ValueError("nsim must be >= 1")
    Q = _basis(cone_family, null_basis)
    _check_family(cone_family, Q)
    samples = chunked_map(_simulate_chunk, nsim, (cone_family, Q, law, int(seed)))
    return NullDistribution(samples=np.asarray(samples), seed=int(seed), nsim=nsim,
                            provenance=provenance,
                            cone_set_hash=cone_set_hash(cone_family, null_basis, provenance,
                                                        extra))


def simulate_null_knownG(cone_family, null_basis=None, nsim=10000, seed=0, G="gaussian"):
    """Exact null distribution of ``T`` for a known error law.

    Replicate ``i`` turns ``n`` uniforms from the stream ``(seed, i)`` into
    errors by the inverse CDF of ``G`` (standard normal by default, or any
    vectorised quantile function).
    """
    if isinstance(G, str):
        if G != "gaussian":
            raise ValueError(f"unknown built-in error law {G!r}")
        law, extra = ("gaussian", None), b"gaussian"
    elif callable(G):
        law = ("ppf", G)
        extra = getattr(G, "__qualname__", repr(G)).encode()
    else:
        raise TypeError("G must be 'gaussian' or a quantile function")
    return _simulate(cone_family, null_basis, nsim, seed, law, "known-G", extra)


def standardized_residuals(y, null_basis):
    """Residuals from ``S``, centred and scaled to standard deviation 1 (divisor n)."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(null_basis, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Q = orthonormal_columns(X)
    if y.shape[0] < Q.shape[1] + 2:
        raise ValueError("need n >= k + 2 observations")
    r = y - Q @ (Q.T @ y)
    r = r - r.mean()
    sd = math.sqrt(float(r @ r) / r.shape[0])
    if sd <= DEGENERATE_RTOL * max(1.0, float(np.max(np.abs(y)))):
        raise ValueError("zero residual variance")
    return r / sd


def simulate_null_bootstrap(cone_family, null_basis=None, residuals=None, nsim=10000, seed=0):
    """Null distribution from i.i.d. draws of the residual empirical law.

    Uses the same uniforms as :func:`simulate_null_knownG` with the same
    seed: a draw is ``sorted_residuals[floor(u * n)]``, the empirical quantile
    function at ``u``.
    """
    if residuals is None:
        raise ValueError("residuals are required")
    res = np.sort(np.asarray(residuals, dtype=float))
    extra = np.ascontiguousarray(res, dtype="<f8").tobytes()
    return _simulate(cone_family, null_basis, nsim, seed, ("bootstrap", res),
                     "bootstrap", extra)


def p_value(T, null):
    """``(1 + #{samples >= T}) / (1 + nsim)``."""
    count = null.nsim - int(np.searchsorted(null.samples, T, side="left"))
    return (1 + count) / (1 + null.nsim)


def critical_value(null, alpha):
    """Order statistic ``ceil((1 - alpha)(nsim + 1))`` of the null samples."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    k = math.ceil((1 - alpha) * (null.nsim + 1) - 1e-9)
    k = min(max(k, 1), null.nsim)
    return float(null.samples[k - 1])


def run_test(data, cone_family, null_basis=None, alpha=0.05, nsim=10000, seed=0,
             null_mode="known-gaussian", cache_dir=None, null=None):
    """Statistic plus simulated null: p-value, critical value, decision.

    Parameters
    ----------
    data : Dataset or array_like
        Only the response is used; cones already encode the design.
    null_mode : {"known-gaussian", "bootstrap"}
    cache_dir : path, optional
        Directory for null-distribution cache files keyed by the cone hash
        and seed.
    null : NullDistribution, optional
        Pre-simulated null to reuse; must match the cone family.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    y = data.y if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    Q = _basis(cone_family, null_basis)
    outcome = statistic_T(y, cone_family, Q)
    if null is None:
        null = _null_for(y, cone_family, Q, nsim, seed, null_mode, cache_dir)
    outcome.p_value = p_value(outcome.T, null)
    outcome.critical_value = critical_value(null, alpha)
    outcome.alpha = alpha
    outcome.null_provenance = null.provenance
    outcome.nsim = null.nsim
    outcome.seed = null.seed
    return outcome


def _null_for(y, cone_family, Q, nsim, seed, null_mode, cache_dir):
    if null_mode == "known-gaussian":
        provenance, extra, residuals = "known-G", b"gaussian", None
    elif null_mode == "bootstrap":
        residuals = np.sort(standardized_residuals(y, Q))
        provenance, extra = "bootstrap", np.ascontiguousarray(residuals, "<f8").tobytes()
    else:
        raise ValueError("null_mode must be 'known-gaussian' or 'bootstrap'")
    path = None
    if cache_dir is not None:
        digest = cone_set_hash(cone_family, Q, provenance, extra)
        path = Path(cache_dir) / f"{digest.hex()[:32]}-{int(seed)}-{int(nsim)}.null"
        if path.exists():
            return NullDistribution.load(path, expected_hash=digest)
    if residuals is None:
        null = simulate_null_knownG(cone_family, Q, nsim, seed)
    else:
        null = simulate_null_bootstrap(cone_family, Q, residuals, nsim, seed)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        null.save(path)
    return null
