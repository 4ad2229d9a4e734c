"""Gaussian process regression over the joint context-parameter space.

Inputs are joint points ``x = [s, theta]`` (context dimensions first). The
kernel is an anisotropic Matern-5/2 with a constant prior mean equal to the
mean of the observed returns.

A fitted :class:`GaussianProcess` is never mutated; :func:`fit`,
:func:`fantasize` and :func:`optimize_hyperparameters` return new objects.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

SQRT5 = np.sqrt(5.0)

JITTER_START = 1e-10
JITTER_MAX = 1e-4


class CholeskyError(np.linalg.LinAlgError):
    """Raised when a covariance matrix cannot be factorized even with jitter."""


@dataclass(frozen=True)
class KernelSpec:
    signal_variance: float
    length_scales: np.ndarray
    noise_variance: float = 1e-6

    def __post_init__(self):
        ls = np.asarray(self.length_scales, dtype=float).copy()
        ls.setflags(write=False)
        object.__setattr__(self, "length_scales", ls)
        if np.any(ls <= 0):
            raise ValueError("length scales must be strictly positive")
        if self.signal_variance <= 0:
            raise ValueError("signal_variance must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be non-negative")

    @property
    def dim(self) -> int:
        return self.length_scales.shape[0]


def default_spec(X, y, ranges) -> KernelSpec:
    """Kernel used before enough data exist for hyperparameter search."""
    y = np.asarray(y, dtype=float)
    sv = float(np.var(y)) if y.size >= 2 else 1.0
    if not sv > 0:
        sv = 1.0
    return KernelSpec(sv, 0.3 * np.asarray(ranges, dtype=float), 1e-6)


def matern52(r):
    """Matern-5/2 correlation profile of the scaled distance ``r``."""
    sr = SQRT5 * r
    return (1.0 + sr + sr * sr / 3.0) * np.exp(-sr)


@numba.njit(cache=True)
def _matern_matrix(A, B, inv_ls, sv):
    n, m = A.shape[0], B.shape[0]
    D = A.shape[1]
    K = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            r2 = 0.0
            for d in range(D):
                t = (A[i, d] - B[j, d]) * inv_ls[d]
                r2 += t * t
            sr = np.sqrt(5.0 * r2)
            K[i, j] = sv * (1.0 + sr + sr * sr / 3.0) * np.exp(-sr)
    return K


@numba.njit(cache=True)
def _matern_gram(A, inv_ls, sv):
    n, D = A.shape
    K = np.empty((n, n))
    for i in range(n):
        K[i, i] = sv
        for j in range(i + 1, n):
            r2 = 0.0
            for d in range(D):
                t = (A[i, d] - A[j, d]) * inv_ls[d]
                r2 += t * t
            sr = np.sqrt(5.0 * r2)
            K[i, j] = K[j, i] = sv * (1.0 + sr + sr * sr / 3.0) * np.exp(-sr)
    return K


def kernel_matrix(A, B, spec: KernelSpec):
    same = A is B
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != spec.dim or B.shape[1] != spec.dim:
        raise ValueError(
            f"dimension mismatch: points have {A.shape[1]}/{B.shape[1]} dims, "
            f"kernel has {spec.dim}")
    inv_ls = 1.0 / spec.length_scales
    if same:
        return _matern_gram(np.ascontiguousarray(A), inv_ls, float(spec.signal_variance))
    return _matern_matrix(np.ascontiguousarray(A), np.ascontiguousarray(B),
                          inv_ls, float(spec.signal_variance))


def kernel_eval(x1, x2, spec: KernelSpec) -> float:
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != (spec.dim,) or x2.shape != (spec.dim,):
        raise ValueError("dimension mismatch between points and length scales")
    r = np.sqrt(np.sum(((x1 - x2) / spec.length_scales) ** 2))
    return float(spec.signal_variance * matern52(r))


def jittered_cholesky(K, scale):
    """Cholesky of ``K + j*I`` with ``j`` escalating from 1e-10 to 1e-4 of ``scale``.

    Returns ``(L, j)``.
    """
    n = K.shape[0]
    jitter = JITTER_START * scale
    while jitter <= JITTER_MAX * scale * (1 + 1e-9):
        try:
            return np.linalg.cholesky(K + jitter * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    try:
        cond = np.linalg.cond(K)
    except np.linalg.LinAlgError:
        cond = np.inf
    raise CholeskyError(
        f"Cholesky failed with jitter up to {JITTER_MAX:g}*scale "
        f"(condition estimate {cond:.3g})")


@dataclass(frozen=True)
class GaussianProcess:
    """Fitted GP posterior. Construct via :func:`fit`."""
    kernel: KernelSpec
    X: np.ndarray
    y: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    mean_offset: float
    jitter: float
    # L^{-1} 1, used by fantasy updates that shift the constant mean
    ones_solve: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def effective_noise(self) -> float:
        return self.kernel.noise_variance + self.jitter

    def solve_lower(self, Kxs):
        """``L^{-1} K(X, *)``; shape (n, m)."""
        if self.n == 0:
            return np.zeros((0, Kxs.shape[1]))
        return solve_triangular(self.chol, Kxs, lower=True, check_finite=False)

    def predict(self, x, return_cov=False):
        return predict(self, x, return_cov=return_cov)


def fit(X, y, kernel: KernelSpec) -> GaussianProcess:
    """Condition the GP on ``(X, y)``. ``n = 0`` gives the prior with zero mean."""
    X = np.asarray(X, dtype=float).reshape(-1, kernel.dim)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y have different lengths")
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite returns")
    n = X.shape[0]
    if n == 0:
        return GaussianProcess(kernel, X, y, np.zeros((0, 0)), np.zeros(0),
                               0.0, 0.0, np.zeros(0))
    m = float(np.mean(y))
    K = kernel_matrix(X, X, kernel) + kernel.noise_variance * np.eye(n)
    L, jitter = jittered_cholesky(K, kernel.signal_variance)
    alpha = cho_solve((L, True), y - m, check_finite=False)
    ones_solve = solve_triangular(L, np.ones(n), lower=True, check_finite=False)
    return GaussianProcess(kernel, X, y, L, alpha, m, jitter, ones_solve)


def predict(gp: GaussianProcess, x, return_cov=False):
    """Posterior mean and standard deviation at one point or a batch.

    With ``return_cov`` the full posterior covariance over the batch is
    returned instead of the standard deviation.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xs = np.atleast_2d(x)
    if Xs.shape[1] != gp.kernel.dim:
        raise ValueError("dimension mismatch")
    Ks = kernel_matrix(gp.X, Xs, gp.kernel) if gp.n else np.zeros((0, Xs.shape[0]))
    mean = Ks.T @ gp.alpha + gp.mean_offset
    V = gp.solve_lower(Ks)
    if return_cov:
        cov = kernel_matrix(Xs, Xs, gp.kernel) - V.T @ V
        return mean, cov
    var = gp.kernel.signal_variance - np.sum(V * V, axis=0)
    std = np.sqrt(np.maximum(var, 0.0))
    if single:
        return float(mean[0]), float(std[0])
    return mean, std


def standard_normals(rng, n_samples: int, dim: int, antithetic: bool = False):
    """``(n_samples, dim)`` standard normals, optionally as mirrored pairs ``z, -z``."""
    if not antithetic:
        return rng.standard_normal((n_samples, dim))
    half = rng.standard_normal(((n_samples + 1) // 2, dim))
    return np.concatenate([half, -half])[:n_samples]


def sample_posterior(gp: GaussianProcess, points, n_samples: int, rng,
                     antithetic: bool = False):
    """Joint posterior draws at ``points``; shape ``(n_samples, len(points))``.

    Rows are independent unless ``antithetic`` is set, in which case row
    ``i`` and row ``i + ceil(n/2)`` are reflections about the posterior mean.
    Each row is an exact posterior draw either way.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[0] < 1:
        raise ValueError("need at least one point")
    mean, cov = predict(gp, P, return_cov=True)
    L, _ = jittered_cholesky(cov, gp.kernel.signal_variance)
    Z = standard_normals(rng, n_samples, P.shape[0], antithetic)
    return mean + Z @ L.T


def fantasize(gp: GaussianProcess, x_q, y_assumed: float) -> GaussianProcess:
    """GP conditioned additionally on ``(x_q, y_assumed)``, hyperparameters fixed.

    Extends the Cholesky factor by one row (O(n^2)); the constant mean is
    recomputed so the result matches a full refit.
    """
    x_q = np.asarray(x_q, dtype=float).reshape(1, gp.kernel.dim)
    if gp.n == 0:
        return fit(x_q, [y_assumed], gp.kernel)
    k_q = kernel_matrix(gp.X, x_q, gp.kernel)[:, 0]
    l = solve_triangular(gp.chol, k_q, lower=True, check_finite=False)
    d2 = gp.kernel.signal_variance + gp.kernel.noise_variance + gp.jitter - l @ l
    X = np.vstack([gp.X, x_q])
    y = np.append(gp.y, y_assumed)
    if d2 <= 0:
        return fit(X, y, gp.kernel)
    n = gp.n
    L = np.zeros((n + 1, n + 1))
    L[:n, :n] = gp.chol
    L[n, :n] = l
    L[n, n] = np.sqrt(d2)
    m = float(np.mean(y))
    alpha = cho_solve((L, True), y - m, check_finite=False)
    ones_solve = np.append(gp.ones_solve, (1.0 - l @ gp.ones_solve) / L[n, n])
    return GaussianProcess(gp.kernel, X, y, L, alpha, m, gp.jitter, ones_solve)


# -- hyperparameters ---------------------------------------------------------

LENGTH_BOUNDS = (0.05, 5.0)   # times the per-dimension range
NOISE_BOUNDS = (1e-8, 1e-1)   # times the signal variance
SIGNAL_BOUNDS = (1e-4, 1e2)   # times max(var(y), 1e-8)


def _unpack(theta, d):
    sv = np.exp(theta[0])
    ls = np.exp(theta[1:1 + d])
    noise = sv * np.exp(theta[1 + d])
    return sv, ls, noise


def _pack(spec: KernelSpec):
    ratio = max(spec.noise_variance / spec.signal_variance, 1e-300)
    return np.concatenate([[np.log(spec.signal_variance)],
                           np.log(spec.length_scales), [np.log(ratio)]])


def neg_log_marginal_likelihood(theta, X, y):
    """Negative log marginal likelihood and its gradient in log-parameters.

    ``theta = [log sv, log l_1..l_d, log(noise/sv)]``.
    """
    n, d = X.shape
    sv, ls, noise = _unpack(theta, d)
    r = y - np.mean(y)
    diff2 = (X[:, None, :] - X[None, :, :]) ** 2 / ls ** 2
    dist = np.sqrt(np.sum(diff2, axis=2))
    e = np.exp(-SQRT5 * dist)
    M = (1.0 + SQRT5 * dist + 5.0 * dist ** 2 / 3.0) * e
    K = sv * M + noise * np.eye(n)
    try:
        L, _ = jittered_cholesky(K, sv)
    except CholeskyError:
        return np.inf, np.zeros_like(theta)
    alpha = cho_solve((L, True), r, check_finite=False)
    nll = 0.5 * r @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * n * np.log(2 * np.pi)
    Kinv = cho_solve((L, True), np.eye(n), check_finite=False)
    W = np.outer(alpha, alpha) - Kinv
    grad = np.empty_like(theta)
    grad[0] = -0.5 * np.sum(W * K)
    base = sv * (5.0 / 3.0) * (1.0 + SQRT5 * dist) * e
    for k in range(d):
        grad[1 + k] = -0.5 * np.sum(W * (base * diff2[:, :, k]))
    grad[1 + d] = -0.5 * noise * np.trace(W)
    return nll, grad


def log_marginal_likelihood(X, y, spec: KernelSpec) -> float:
    nll, _ = neg_log_marginal_likelihood(_pack(spec), np.asarray(X, float),
                                         np.asarray(y, float))
    return -nll


@dataclass(frozen=True)
class HyperparameterResult:
    spec: KernelSpec
    failed: bool = False


def hyperparameter_bounds(y, ranges):
    ranges = np.asarray(ranges, dtype=float)
    scale = max(float(np.var(y)), 1e-8)
    lo = np.concatenate([[np.log(SIGNAL_BOUNDS[0] * scale)],
                         np.log(LENGTH_BOUNDS[0] * ranges), [np.log(NOISE_BOUNDS[0])]])
    hi = np.concatenate([[np.log(SIGNAL_BOUNDS[1] * scale)],
                         np.log(LENGTH_BOUNDS[1] * ranges), [np.log(NOISE_BOUNDS[1])]])
    return lo, hi


def optimize_hyperparameters(X, y, ranges, rng, previous: KernelSpec | None = None,
                             n_restarts: int = 5) -> HyperparameterResult:
    """Maximize the log marginal likelihood by multi-start L-BFGS-B in log space.

    Starts from the default spec, the previous spec (if given) and
    ``n_restarts`` uniform random points within the bounds. With fewer than
    five observations the default spec is returned unchanged.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    default = default_spec(X, y, ranges)
    if X.shape[0] < 5:
        return HyperparameterResult(default)
    lo, hi = hyperparameter_bounds(y, ranges)
    starts = [np.clip(_pack(default), lo, hi)]
    if previous is not None:
        starts.append(np.clip(_pack(previous), lo, hi))
    starts.extend(rng.uniform(lo, hi) for _ in range(n_restarts))

    best_theta, best_val = None, np.inf
    for x0 in starts:
        try:
            res = minimize(neg_log_marginal_likelihood, x0, args=(X, y), jac=True,
                           method="L-BFGS-B", bounds=list(zip(lo, hi)))
        except (ValueError, np.linalg.LinAlgError):
            continue
        if np.isfinite(res.fun) and res.fun < best_val:
            best_theta, best_val = res.x, res.fun
    if best_theta is None:
        warnings.warn("hyperparameter optimization failed; keeping previous spec")
        return HyperparameterResult(previous or default, failed=True)
    d = X.shape[1]
    sv, ls, noise = _unpack(best_theta, d)
    return HyperparameterResult(KernelSpec(float(sv), ls, float(noise)))


def with_noise(spec: KernelSpec, noise_variance: float) -> KernelSpec:
    return replace(spec, noise_variance=noise_variance)
