"""Analytic ball-throw task.

The arm sits at the origin and throws at a target ``s = (x, y)`` on the
ground. A trial is parametrized by ``theta = (tau, g0)``: the execution time
``tau`` sets the throw distance, the final angle ``g0`` of the first joint
sets the direction. Faster throws (small ``tau``) cost a larger velocity
penalty, so the best achievable reward differs between targets.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .optimizers import BoxBounds, local_refine

CONTEXT_BOUNDS = BoxBounds([1.0, -1.0], [2.5, 1.0])
PARAM_BOUNDS = BoxBounds([0.4, -np.pi / 2], [2.0, np.pi / 2])

RANGE_SCALE = 0.85
RANGE_OFFSET = 0.55
VELOCITY_SCALE = 1.5
PENALTY_WEIGHT = 0.01


@dataclass(frozen=True)
class ThrowOutcome:
    landing: np.ndarray
    reward: float
    distance_cost: float
    velocity_penalty: float


def throw_range(tau):
    return RANGE_SCALE / tau + RANGE_OFFSET


def simulate_throw(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if not PARAM_BOUNDS.contains(theta):
        raise ValueError(f"parameters {theta} outside {PARAM_BOUNDS}")
    tau, g0 = theta
    rho = throw_range(tau)
    return np.array([rho * np.cos(g0), rho * np.sin(g0)])


def velocity_penalty(tau):
    return PENALTY_WEIGHT * (VELOCITY_SCALE / tau) ** 2


def reward(s, theta, noise_std: float = 0.0, rng=None) -> ThrowOutcome:
    """Negative squared miss distance minus the velocity penalty.

    Gaussian noise with ``noise_std`` is added to the returned reward only.
    """
    s = np.asarray(s, dtype=float)
    landing = simulate_throw(theta)
    dx = s[0] - landing[0]
    dy = s[1] - landing[1]
    dist = dx * dx + dy * dy
    pen = velocity_penalty(float(theta[0]))
    r = -dist - pen
    if noise_std > 0:
        r += noise_std * rng.standard_normal()
    return ThrowOutcome(landing, float(r), float(dist), float(pen))


def reward_grid(s, taus, g0s):
    """Noise-free reward on the outer product of ``taus`` and ``g0s``."""
    rho = throw_range(np.asarray(taus))[:, None]
    g0s = np.asarray(g0s)[None, :]
    dx = s[0] - rho * np.cos(g0s)
    dy = s[1] - rho * np.sin(g0s)
    return -(dx * dx + dy * dy) - velocity_penalty(np.asarray(taus))[:, None]


@lru_cache(maxsize=4096)
def _optimal_reward_cached(sx: float, sy: float, grid: int):
    s = np.array([sx, sy])
    taus = np.linspace(PARAM_BOUNDS.lower[0], PARAM_BOUNDS.upper[0], grid)
    g0s = np.linspace(PARAM_BOUNDS.lower[1], PARAM_BOUNDS.upper[1], grid)
    R = reward_grid(s, taus, g0s)
    i, j = np.unravel_index(np.argmax(R), R.shape)
    theta0 = np.array([taus[i], g0s[j]])
    theta = local_refine(lambda th: reward(s, th).reward, theta0, PARAM_BOUNDS,
                         rel_step=1e-7)
    return reward(s, theta).reward, tuple(theta)


def optimal_reward(s, grid: int = 500):
    """Best noise-free reward for target ``s`` and the parameters achieving it.

    Brute-force ``grid x grid`` search over the parameter box followed by
    local refinement.
    """
    s = np.asarray(s, dtype=float)
    r, theta = _optimal_reward_cached(float(s[0]), float(s[1]), int(grid))
    return r, np.array(theta)
