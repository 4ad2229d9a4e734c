"""Acquisition functions: GP-UCB, entropy search and active contextual entropy search.

The entropy-based criteria represent the distribution of the maximizer,
``p_max(theta | s)``, on a small candidate set per context. Candidates come
from Thompson sampling; ``p_max`` is estimated by counting argmax positions
over antithetic pairs of joint posterior draws.

Fantasized observations are handled pathwise: the posterior draws used for
the baseline ``p_max`` are shifted by the rank-1 conditioning update, so the
baseline and the fantasized estimates share random numbers. The result is
distributionally identical to calling :func:`aces.gp.fantasize` and redrawing,
but costs O(n_mc * N_theta) per outcome.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.linalg import cho_solve
from scipy.stats import norm

from .gp import (GaussianProcess, jittered_cholesky, kernel_matrix, predict, sample_posterior,
                 standard_normals)


@dataclass(frozen=True)
class AcquisitionParams:
    kappa: float = 5.0
    n_pool: int = 500
    n_candidates: int = 20
    n_context_pool: int = 100
    n_nn: int = 20
    n_fantasy: int = 10
    n_mc: int = 1000

    def __post_init__(self):
        counts = (self.n_pool, self.n_candidates, self.n_context_pool,
                  self.n_nn, self.n_fantasy, self.n_mc)
        if min(counts) < 1:
            raise ValueError("all acquisition counts must be >= 1")
        if self.n_candidates > self.n_pool:
            raise ValueError("n_candidates must not exceed n_pool")
        if self.n_nn > self.n_context_pool:
            raise ValueError("n_nn must not exceed n_context_pool")


@dataclass
class CandidateSet:
    context: np.ndarray
    thetas: np.ndarray
    pmax: np.ndarray | None = None

    @property
    def joint_points(self) -> np.ndarray:
        s = np.broadcast_to(self.context, (len(self.thetas), len(self.context)))
        return np.hstack([s, self.thetas])


def _join(s, theta):
    return np.concatenate([np.asarray(s, float), np.asarray(theta, float)])


def ucb(gp: GaussianProcess, s, theta, kappa: float = 5.0) -> float:
    mean, std = predict(gp, _join(s, theta))
    return mean + kappa * std


def thompson_candidates(gp: GaussianProcess, s, params: AcquisitionParams,
                        bounds, rng) -> CandidateSet:
    """Pick ``n_candidates`` parameter vectors as argmaxes of posterior draws.

    All draws share one uniform pool of ``n_pool`` parameter vectors. A
    repeated argmax is replaced by the draw's best unused pool point.
    """
    s = np.asarray(s, dtype=float)
    pool = bounds.sample(rng, params.n_pool)
    P = np.hstack([np.broadcast_to(s, (params.n_pool, s.size)), pool])
    draws = sample_posterior(gp, P, params.n_candidates, rng)
    used = np.zeros(params.n_pool, dtype=bool)
    chosen = []
    for f in draws:
        for idx in np.argsort(-f, kind="stable"):
            if not used[idx]:
                used[idx] = True
                chosen.append(pool[idx])
                break
        else:
            chosen.append(bounds.sample(rng))
    return CandidateSet(s, np.array(chosen))


def pmax_from_samples(F) -> np.ndarray:
    F = np.atleast_2d(F)
    counts = np.bincount(np.argmax(F, axis=1), minlength=F.shape[1])
    return counts / F.shape[0]


def estimate_pmax(gp: GaussianProcess, cs: CandidateSet, n_mc: int, rng) -> CandidateSet:
    if len(cs.thetas) == 0:
        raise ValueError("empty candidate set")
    F = sample_posterior(gp, cs.joint_points, n_mc, rng, antithetic=True)
    return CandidateSet(cs.context, cs.thetas, pmax_from_samples(F))


def entropy_loss(pmax) -> float:
    """Negative relative entropy of ``pmax`` against the uniform distribution."""
    p = np.asarray(pmax, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz * p.size)))


def mahalanobis(s1, s2, length_scales_context) -> float:
    d = np.asarray(s1, float) - np.asarray(s2, float)
    return float(np.sqrt(np.sum(d * d / np.asarray(length_scales_context, float))))


def fantasy_quantiles(n_fantasy: int) -> np.ndarray:
    """Standard-normal quantiles at the midpoints of ``n_fantasy`` equal strata."""
    return norm.ppf((np.arange(n_fantasy) + 0.5) / n_fantasy)


# -- cached per-context state --------------------------------------------------

@dataclass
class PreparedCandidates:
    """Candidate set plus the posterior quantities reused by every query."""
    candidates: CandidateSet
    points: np.ndarray        # (J, D) joint points
    mean: np.ndarray          # posterior mean at points
    cov_inv: np.ndarray       # inverse of the jittered posterior covariance
    samples: np.ndarray       # (n_mc, J) joint posterior draws
    centered: np.ndarray      # samples - mean
    zeta: np.ndarray          # (n_mc,) extra normals for the fantasized observation
    V: np.ndarray             # L^{-1} K(X, points)
    h: np.ndarray             # 1 - k^T K^{-1} 1 at points
    baseline_loss: float

    @property
    def pmax(self):
        return self.candidates.pmax


def prepare_candidates(gp: GaussianProcess, cs: CandidateSet, n_mc: int,
                       rng) -> PreparedCandidates:
    P = np.ascontiguousarray(cs.joint_points)
    Kxp = kernel_matrix(gp.X, P, gp.kernel) if gp.n else np.zeros((0, len(P)))
    V = np.ascontiguousarray(gp.solve_lower(Kxp))
    mean = Kxp.T @ gp.alpha + gp.mean_offset
    cov = kernel_matrix(P, P, gp.kernel) - V.T @ V
    L, _ = jittered_cholesky(cov, gp.kernel.signal_variance)
    cov_inv = cho_solve((L, True), np.eye(len(P)), check_finite=False)
    # mirrored pairs (z, zeta) and (-z, -zeta) stay mirrored after the fantasy shift
    Z = standard_normals(rng, n_mc, len(P) + 1, antithetic=True)
    F = mean + Z[:, :-1] @ L.T
    zeta = np.ascontiguousarray(Z[:, -1])
    h = 1.0 - V.T @ gp.ones_solve if gp.n else np.ones(len(P))
    pmax = pmax_from_samples(F)
    return PreparedCandidates(CandidateSet(cs.context, cs.thetas, pmax), P, mean,
                              cov_inv, F, F - mean, zeta, V, h, entropy_loss(pmax))


@numba.njit(cache=True)
def _fantasy_counts(P, ls, sv, V, v, cov_inv, F, centered, zeta, h,
                    x, q_mean, q_var, q_h, noise, mean_offset, n, outcomes):
    """Argmax counts over the candidates for each assumed outcome at ``x``.

    Fantasized draw: ``F + delta*h + b*(y - g - delta*h_q)`` where ``g`` is the
    draw of the noisy observation at ``x`` jointly with ``F``, ``b`` the
    conditioning gain and ``delta = (y - mean_offset) / (n + 1)`` the shift of
    the constant prior mean. Per draw this is ``A[j] + B[j] * y`` with slopes
    ``B`` shared by all draws, so the argmax over ``j`` walks the convex upper
    envelope as ``y`` grows. ``outcomes`` must be sorted ascending.
    """
    n_mc, J = F.shape
    D = P.shape[1]
    c = np.empty(J)
    for j in range(J):
        r2 = 0.0
        for d in range(D):
            t = (P[j, d] - x[d]) / ls[d]
            r2 += t * t
        sr = np.sqrt(5.0 * r2)
        c[j] = sv * (1.0 + sr + sr * sr / 3.0) * np.exp(-sr)
        for k in range(V.shape[0]):
            c[j] -= V[k, j] * v[k]
    a = cov_inv @ c
    resid = q_var - a @ c
    if resid < 0.0:
        resid = 0.0
    resid = np.sqrt(resid + noise)
    b = c / (q_var + noise)
    g = q_mean + centered @ a + resid * zeta

    inv = 1.0 / (n + 1)
    slope = np.empty(J)
    const = np.empty(J)
    for j in range(J):
        slope[j] = h[j] * inv + b[j] * (1.0 - q_h * inv)
        const[j] = -h[j] * mean_offset * inv + b[j] * mean_offset * q_h * inv
    n_y = outcomes.shape[0]
    y_lo = outcomes[0]
    y_hi = outcomes[n_y - 1]
    counts = np.zeros((n_y, J))
    A = np.empty(J)
    for m in range(n_mc):
        for j in range(J):
            A[j] = F[m, j] + const[j] - b[j] * g[m]
        j_lo = 0
        j_hi = 0
        best_lo = A[0] + slope[0] * y_lo
        best_hi = A[0] + slope[0] * y_hi
        for j in range(1, J):
            v_lo = A[j] + slope[j] * y_lo
            if v_lo > best_lo:
                best_lo = v_lo
                j_lo = j
            v_hi = A[j] + slope[j] * y_hi
            if v_hi > best_hi:
                best_hi = v_hi
                j_hi = j
        if j_lo == j_hi:
            # the same line tops the convex envelope at both ends
            for i in range(n_y):
                counts[i, j_lo] += 1
            continue
        counts[0, j_lo] += 1
        counts[n_y - 1, j_hi] += 1
        for i in range(1, n_y - 1):
            y = outcomes[i]
            best = A[0] + slope[0] * y
            bj = 0
            for j in range(1, J):
                val = A[j] + slope[j] * y
                if val > best:
                    best = val
                    bj = j
            counts[i, bj] += 1
    return counts


@numba.njit(cache=True)
def _mean_loss(counts):
    n_y, J = counts.shape
    total = 0.0
    for i in range(n_y):
        n_mc = counts[i].sum()
        for j in range(J):
            if counts[i, j] > 0:
                p = counts[i, j] / n_mc
                total -= p * np.log(p * J)
    return total / n_y


@dataclass
class QueryState:
    x: np.ndarray
    k_X: np.ndarray
    v: np.ndarray
    mean: float
    var: float
    h: float


def query_state(gp: GaussianProcess, s_q, theta_q) -> QueryState:
    x = _join(s_q, theta_q)
    if gp.n:
        k = kernel_matrix(gp.X, x[None, :], gp.kernel)[:, 0]
        v = gp.solve_lower(k[:, None])[:, 0]
        mean = float(k @ gp.alpha + gp.mean_offset)
        var = max(gp.kernel.signal_variance - float(v @ v), 0.0)
        h = 1.0 - float(v @ gp.ones_solve)
    else:
        k = v = np.zeros(0)
        mean, var, h = 0.0, gp.kernel.signal_variance, 1.0
    return QueryState(x, k, v, mean, var, h)


def _counts(gp, prep, q, outcomes):
    order = np.argsort(outcomes, kind="stable")
    counts = _fantasy_counts(prep.points, gp.kernel.length_scales,
                             gp.kernel.signal_variance, prep.V, q.v, prep.cov_inv,
                             prep.samples, prep.centered, prep.zeta, prep.h, q.x,
                             q.mean, q.var, q.h, gp.effective_noise, gp.mean_offset,
                             gp.n, outcomes[order])
    out = np.empty_like(counts)
    out[order] = counts
    return out


def fantasy_pmax(gp: GaussianProcess, prep: PreparedCandidates, q: QueryState,
                 outcomes) -> np.ndarray:
    """``p_max`` on the prepared candidates after each assumed outcome at ``q``.

    Returns an array of shape ``(len(outcomes), J)``.
    """
    outcomes = np.atleast_1d(np.asarray(outcomes, dtype=float))
    return _counts(gp, prep, q, outcomes) / prep.samples.shape[0]


@lru_cache(maxsize=64)
def _quantiles(n_fantasy):
    return fantasy_quantiles(n_fantasy)


def _loss_change(gp, prep, q, params):
    outcomes = q.mean + np.sqrt(q.var + gp.effective_noise) * _quantiles(params.n_fantasy)
    return _mean_loss(_counts(gp, prep, q, outcomes)) - prep.baseline_loss


class CandidateCache:
    """Prepared candidate sets keyed by context, fixed for one episode.

    Each context gets its own random stream derived from ``seed`` and the
    context's bytes, so results do not depend on the order of requests.
    """

    def __init__(self, gp: GaussianProcess, params: AcquisitionParams, theta_bounds,
                 seed: int):
        self.gp = gp
        self.params = params
        self.theta_bounds = theta_bounds
        self.seed = int(seed)
        self._store: dict[bytes, PreparedCandidates] = {}

    def _rng(self, s):
        words = np.frombuffer(np.asarray(s, dtype=np.float64).tobytes(), dtype=np.uint32)
        return np.random.default_rng(np.random.SeedSequence([self.seed, *words.tolist()]))

    def get(self, s) -> PreparedCandidates:
        s = np.asarray(s, dtype=float)
        key = s.tobytes()
        if key not in self._store:
            rng = self._rng(s)
            cs = thompson_candidates(self.gp, s, self.params, self.theta_bounds, rng)
            self._store[key] = prepare_candidates(self.gp, cs, self.params.n_mc, rng)
        return self._store[key]

    def __len__(self):
        return len(self._store)


def expected_loss_change(gp: GaussianProcess, s_eval, s_q, theta_q,
                         params: AcquisitionParams, cache: CandidateCache) -> float:
    """Mean change of ``entropy_loss`` at ``s_eval`` after a trial at ``(s_q, theta_q)``.

    The ``n_fantasy`` outcomes are the stratified quantiles of the predictive
    distribution of the observation at the query.
    """
    prep = cache.get(s_eval)
    return _loss_change(gp, prep, query_state(gp, s_q, theta_q), params)


def nearest_contexts(s_q, context_pool, length_scales_context, n_nn: int) -> np.ndarray:
    """Indices of the ``n_nn`` pool contexts closest to ``s_q`` (ties: lowest index)."""
    pool = np.asarray(context_pool, dtype=float)
    d = np.sqrt(np.sum((pool - np.asarray(s_q, float)) ** 2
                       / np.asarray(length_scales_context, float), axis=1))
    k = min(n_nn, len(pool))
    return np.argsort(d, kind="stable")[:k]


def aces(gp: GaussianProcess, s_q, theta_q, context_pool, params: AcquisitionParams,
         cache: CandidateCache) -> float:
    """Summed expected loss change over the Mahalanobis nearest pool contexts.

    Lower is better. Distances use the GP's context length scales.
    """
    s_q = np.asarray(s_q, dtype=float)
    pool = np.asarray(context_pool, dtype=float)
    ls = gp.kernel.length_scales[:pool.shape[1]]
    q = query_state(gp, s_q, theta_q)
    total = 0.0
    for i in nearest_contexts(s_q, pool, ls, params.n_nn):
        total += _loss_change(gp, cache.get(pool[i]), q, params)
    return total
