"""Derivative-free optimizers for acquisition surfaces.

* :func:`cmaes_minimize` -- (mu/mu_w, lambda)-CMA-ES for noisy objectives.
* :func:`direct_maximize` -- DIRECT rectangle subdivision, deterministic.
* :func:`local_refine` -- bounded quasi-Newton ascent with finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize


@dataclass(frozen=True)
class BoxBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).copy()
        hi = np.asarray(self.upper, dtype=float).copy()
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or not np.all(lo < hi):
            raise ValueError("bounds require lower < upper elementwise")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def clip(self, x):
        return np.clip(x, self.lower, self.upper)

    def sample(self, rng, size=None):
        if size is None:
            return rng.uniform(self.lower, self.upper)
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))

    def contains(self, x, tol=0.0) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    @staticmethod
    def concat(*boxes: "BoxBounds") -> "BoxBounds":
        return BoxBounds(np.concatenate([b.lower for b in boxes]),
                         np.concatenate([b.upper for b in boxes]))


# -- CMA-ES ------------------------------------------------------------------

@dataclass(frozen=True)
class CmaesConfig:
    population_size: int | None = None
    initial_sigma: float | None = None   # in units of the box; default 0.3 * mean width
    max_evaluations: int = 1000
    seed: int | None = None
    restarts: int = 0

    def __post_init__(self):
        if self.population_size is not None and self.population_size < 4:
            raise ValueError("population_size must be >= 4")
        if self.initial_sigma is not None and self.initial_sigma <= 0:
            raise ValueError("initial_sigma must be > 0")


def _safe(value) -> float:
    value = float(value)
    return value if math.isfinite(value) else math.inf


def _cmaes_single(objective, bounds, x0, sigma, lam, budget, rng):
    n = bounds.dim
    mu = lam // 2
    w = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mueff = 1.0 / np.sum(w ** 2)

    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    cs = (mueff + 2) / (n + mueff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + cs
    chiN = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n ** 2))

    mean = np.array(x0, dtype=float)
    pc = np.zeros(n)
    ps = np.zeros(n)
    C = np.eye(n)
    B = np.eye(n)
    D = np.ones(n)
    invsqrtC = np.eye(n)
    eigen_eval = 0

    x_best, f_best = None, math.inf
    evals = 0
    gen = 0
    while evals < budget:
        lam_g = min(lam, budget - evals)
        Z = rng.standard_normal((lam_g, n))
        Y = Z @ (B * D).T
        X = bounds.clip(mean + sigma * Y)
        f = np.array([_safe(objective(x)) for x in X])
        evals += lam_g
        i = int(np.argmin(f))
        if f[i] < f_best or x_best is None:
            x_best, f_best = X[i].copy(), float(f[i])
        if lam_g < lam:
            break
        gen += 1

        order = np.argsort(f, kind="stable")[:mu]
        # steps measured on the clipped points so the update follows feasible samples
        Ysel = (X[order] - mean) / sigma
        old_mean = mean
        mean = mean + sigma * (w @ Ysel)
        ymean = (mean - old_mean) / sigma

        ps = (1 - cs) * ps + math.sqrt(cs * (2 - cs) * mueff) * (invsqrtC @ ymean)
        hsig = (np.linalg.norm(ps) / math.sqrt(1 - (1 - cs) ** (2 * gen)) / chiN
                < 1.4 + 2 / (n + 1))
        pc = (1 - cc) * pc + hsig * math.sqrt(cc * (2 - cc) * mueff) * ymean
        C = ((1 - c1 - cmu) * C
             + c1 * (np.outer(pc, pc) + (1 - hsig) * cc * (2 - cc) * C)
             + cmu * (Ysel.T * w) @ Ysel)
        sigma *= math.exp((cs / damps) * (np.linalg.norm(ps) / chiN - 1))

        if evals - eigen_eval > lam / (c1 + cmu) / n / 10:
            eigen_eval = evals
            C = np.triu(C) + np.triu(C, 1).T
            D2, B = np.linalg.eigh(C)
            D = np.sqrt(np.maximum(D2, 1e-300))
            invsqrtC = (B / D) @ B.T
        if sigma * D.max() < 1e-14 * bounds.width.max() or not np.isfinite(sigma):
            break
    return x_best, f_best, evals


def cmaes_minimize(objective, bounds: BoxBounds, config: CmaesConfig = CmaesConfig(),
                   rng=None):
    """Minimize ``objective`` over a box with CMA-ES.

    Sampled points are clipped to the box before evaluation; non-finite
    values count as +inf. The budget ``config.max_evaluations`` is shared
    between the initial run (started at the box center) and
    ``config.restarts`` restarts from uniform random points.

    Returns
    -------
    x_best, f_best : ndarray, float
        Best point ever evaluated and its value.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = bounds.dim
    lam = config.population_size or 4 + int(3 * math.log(n))
    sigma0 = config.initial_sigma or 0.3 * float(np.mean(bounds.width))
    n_starts = config.restarts + 1
    x_best, f_best = None, math.inf
    spent = 0
    for k in range(n_starts):
        budget = (config.max_evaluations - spent) // (n_starts - k)
        if budget < 1:
            continue
        x0 = bounds.center if k == 0 else bounds.sample(rng)
        x, f, used = _cmaes_single(objective, bounds, x0, sigma0, lam, budget, rng)
        spent += used
        if x_best is None or f < f_best:
            x_best, f_best = x, f
    return x_best, f_best


# -- DIRECT ------------------------------------------------------------------

def _potentially_optimal(sizes, values, eps=1e-4):
    """Indices of potentially optimal rectangles (minimization form).

    Keeps the best rectangle of each size, takes the lower-right convex hull
    of (size, value) starting at the global minimum, and drops hull points
    that cannot improve on ``f_min`` by at least ``eps * |f_min|``.
    """
    best = {}
    for j in range(len(sizes)):
        key = round(float(sizes[j]), 12)
        if key not in best or values[j] < values[best[key]]:
            best[key] = j
    pts = [best[k] for k in sorted(best)]
    f_min = values.min()
    start = max(k for k, j in enumerate(pts) if values[j] == f_min)
    hull = []
    for j in pts[start:]:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = ((sizes[b] - sizes[a]) * (values[j] - values[a])
                     - (values[b] - values[a]) * (sizes[j] - sizes[a]))
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(j)
    out = []
    for k, j in enumerate(hull):
        if k + 1 < len(hull):
            nxt = hull[k + 1]
            slope = (values[nxt] - values[j]) / (sizes[nxt] - sizes[j])
            if values[j] - slope * sizes[j] > f_min - eps * abs(f_min):
                continue
        out.append(j)
    return out


def direct_maximize(objective, bounds: BoxBounds, max_evaluations: int = 300):
    """Maximize a deterministic ``objective`` over a box with DIRECT.

    The box is mapped to the unit cube; potentially optimal rectangles are
    trisected along their longest sides until the budget is spent.
    """
    n = bounds.dim
    lo, width = bounds.lower, bounds.width

    def f_unit(u):
        return -_safe(objective(lo + u * width))

    centers = [np.full(n, 0.5)]
    sides = [np.ones(n)]
    values = [f_unit(centers[0])]
    evals = 1
    if max_evaluations < 3:
        return lo + centers[0] * width

    while evals < max_evaluations:
        S = np.array(sides)
        sizes = 0.5 * np.linalg.norm(S, axis=1)
        V = np.array(values)
        chosen = _potentially_optimal(sizes, V)
        progressed = False
        for j in chosen:
            if evals >= max_evaluations:
                break
            c, s = centers[j], sides[j]
            longest = np.flatnonzero(np.isclose(s, s.max()))
            delta = s.max() / 3.0
            trial = []
            for d in longest:
                e = np.zeros(n)
                e[d] = delta
                fp = f_unit(c + e)
                fm = f_unit(c - e)
                evals += 2
                trial.append((min(fp, fm), d, c + e, fp, c - e, fm))
            trial.sort(key=lambda t: (t[0], t[1]))
            s = s.copy()
            for _, d, cp, fp, cm, fm in trial:
                s[d] = delta
                centers.extend([cp, cm])
                sides.extend([s.copy(), s.copy()])
                values.extend([fp, fm])
            sides[j] = s
            progressed = True
        if not progressed:
            break
    best = int(np.argmin(values))
    return bounds.clip(lo + centers[best] * width)


# -- local refinement --------------------------------------------------------

def local_refine(objective, x0, bounds: BoxBounds, max_iter: int = 50,
                 rel_step: float = 1e-5):
    """Ascend ``objective`` from ``x0`` with L-BFGS-B and central differences.

    The difference step is ``rel_step`` times the box width per coordinate,
    shrunk near the faces so every probe stays feasible. Never returns a
    point worse than ``x0``.
    """
    x0 = bounds.clip(np.asarray(x0, dtype=float))
    h = rel_step * bounds.width

    def neg(x):
        return -_safe(objective(x))

    def grad(x):
        g = np.empty_like(x)
        for i in range(x.size):
            hp = min(h[i], bounds.upper[i] - x[i])
            hm = min(h[i], x[i] - bounds.lower[i])
            xp = x.copy()
            xm = x.copy()
            xp[i] += hp
            xm[i] -= hm
            g[i] = (neg(xp) - neg(xm)) / (hp + hm)
        return g

    f0 = neg(x0)
    try:
        res = minimize(neg, x0, jac=grad, method="L-BFGS-B",
                       bounds=list(zip(bounds.lower, bounds.upper)),
                       options={"maxiter": max_iter, "gtol": 1e-10, "ftol": 1e-15})
    except (ValueError, FloatingPointError):
        return x0
    x = bounds.clip(res.x)
    return x if neg(x) <= f0 else x0
