"""Deterministic affine upper-level policy trained with C-REPS weights."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp


@dataclass(frozen=True)
class AffinePolicy:
    W: np.ndarray  # (d_theta, d_s + 1)

    def __call__(self, s):
        return self.W @ features(s)


@dataclass(frozen=True)
class RepsConfig:
    epsilon: float = 1.0
    eta_bounds: tuple = (1e-3, 1e3)  # times std(R)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class RepsWeights:
    weights: np.ndarray
    eta: float
    v: np.ndarray
    fallback: bool = False


def features(s):
    s = np.asarray(s, dtype=float)
    if s.ndim == 1:
        return np.append(s, 1.0)
    return np.hstack([s, np.ones((s.shape[0], 1))])


def _dual(params, Phi, R, epsilon):
    log_eta, v = params[0], params[1:]
    eta = np.exp(log_eta)
    adv = (R - Phi @ v) / eta
    lse = logsumexp(adv) - np.log(len(R))
    g = eta * epsilon + v @ Phi.mean(axis=0) + eta * lse
    w = np.exp(adv - logsumexp(adv))
    dv = Phi.mean(axis=0) - w @ Phi
    deta = epsilon + lse - w @ adv
    return g, np.concatenate([[deta * eta], dv])


def creps_weights(contexts, returns, config: RepsConfig = RepsConfig()) -> RepsWeights:
    """Sample weights from the contextual REPS dual.

    Minimizes ``g(eta, v)`` over the log-temperature (within
    ``eta_bounds * std(R)``) and the context baseline ``v`` with L-BFGS-B.
    Falls back to softmax weights at ``eta = std(R)`` when the dual fails.
    """
    Phi = features(np.atleast_2d(contexts))
    R = np.asarray(returns, dtype=float)
    n = len(R)
    if n < Phi.shape[1] + 1:
        raise ValueError(f"need at least {Phi.shape[1] + 1} records, got {n}")
    scale = float(np.std(R))
    if scale <= 1e-12 * max(1.0, float(np.max(np.abs(R)))):
        return RepsWeights(np.full(n, 1.0 / n), np.inf, np.zeros(Phi.shape[1]))
    lo = np.log(config.eta_bounds[0] * scale)
    hi = np.log(config.eta_bounds[1] * scale)
    x0 = np.concatenate([[np.log(scale)], np.zeros(Phi.shape[1])])
    bounds = [(lo, hi)] + [(None, None)] * Phi.shape[1]
    try:
        res = minimize(_dual, x0, args=(Phi, R, config.epsilon), jac=True,
                       method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": 1000, "ftol": 1e-14, "gtol": 1e-10})
        ok = np.all(np.isfinite(res.x)) and np.isfinite(res.fun)
    except (ValueError, FloatingPointError):
        ok = False
    if not ok:
        warnings.warn("C-REPS dual failed; using softmax weights")
        logits = (R - R.max()) / scale
        w = np.exp(logits - logsumexp(logits))
        return RepsWeights(w, scale, np.zeros(Phi.shape[1]), fallback=True)
    eta, v = float(np.exp(res.x[0])), res.x[1:]
    adv = (R - Phi @ v) / eta
    w = np.exp(adv - logsumexp(adv))
    return RepsWeights(w, eta, v)


def fit_policy(contexts, thetas, weights) -> AffinePolicy:
    """Weighted least-squares affine map from ``[s; 1]`` to ``theta``.

    A ridge of ``1e-8 * trace`` is added only when the weighted normal
    matrix is numerically singular.
    """
    Phi = features(np.atleast_2d(contexts))
    Theta = np.atleast_2d(np.asarray(thetas, dtype=float))
    w = np.asarray(weights, dtype=float)
    A = (Phi.T * w) @ Phi
    B = (Phi.T * w) @ Theta
    if np.linalg.cond(A) > 1e12:
        A = A + 1e-8 * np.trace(A) * np.eye(A.shape[0])
        if np.linalg.cond(A) > 1e15:
            raise np.linalg.LinAlgError("weighted design matrix is rank deficient")
    return AffinePolicy(np.linalg.solve(A, B).T)


def policy_act(policy: AffinePolicy, s, bounds) -> np.ndarray:
    return bounds.clip(policy(s))
