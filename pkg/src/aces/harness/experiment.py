"""Episode loop, offline evaluation and multi-run experiments."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import gp as gpr
from ..acquisition import CandidateCache, aces, expected_loss_change, ucb
from ..environment import CONTEXT_BOUNDS, PARAM_BOUNDS, optimal_reward, reward
from ..optimizers import BoxBounds, CmaesConfig, cmaes_minimize, direct_maximize, local_refine
from ..policy import RepsConfig, creps_weights, fit_policy, policy_act
from .config import ExperimentConfig, ensure_writable, evaluation_grid
from .results import write_results

log = logging.getLogger(__name__)

JOINT_BOUNDS = BoxBounds.concat(CONTEXT_BOUNDS, PARAM_BOUNDS)
D_S = CONTEXT_BOUNDS.dim


@dataclass(frozen=True)
class TrialRecord:
    episode: int
    context: np.ndarray
    params: np.ndarray
    observed_return: float


@dataclass
class RunState:
    """Trial history and the GP fitted to it."""
    history: list = field(default_factory=list)
    kernel: gpr.KernelSpec = None
    gp: gpr.GaussianProcess = None
    fallbacks: int = 0

    def __post_init__(self):
        if self.kernel is None:
            self.kernel = gpr.default_spec(np.zeros((0, JOINT_BOUNDS.dim)), [],
                                           JOINT_BOUNDS.width)
        if self.gp is None:
            self.gp = gpr.fit(np.zeros((0, JOINT_BOUNDS.dim)), [], self.kernel)

    def arrays(self):
        if not self.history:
            return np.zeros((0, D_S)), np.zeros((0, PARAM_BOUNDS.dim)), np.zeros(0)
        S = np.array([r.context for r in self.history])
        T = np.array([r.params for r in self.history])
        R = np.array([r.observed_return for r in self.history])
        return S, T, R


def _update_model(state: RunState, config: ExperimentConfig, rng):
    S, T, R = state.arrays()
    X = np.hstack([S, T])
    n = len(R)
    if n < config.hyper_interval:
        state.kernel = gpr.default_spec(X, R, JOINT_BOUNDS.width)
    elif n % config.hyper_interval == 0:
        res = gpr.optimize_hyperparameters(X, R, JOINT_BOUNDS.width, rng,
                                           previous=state.kernel)
        if res.failed:
            log.warning("hyperparameter search failed at n=%d", n)
        state.kernel = res.spec
    state.gp = gpr.fit(X, R, state.kernel)


def _cmaes(config: ExperimentConfig, budget: int) -> CmaesConfig:
    return CmaesConfig(max_evaluations=budget, restarts=config.cmaes_restarts)


def select_query(state: RunState, config: ExperimentConfig, rng):
    """Context and parameters for the next trial under ``config.strategy``."""
    gp = state.gp
    params = config.acquisition
    if config.strategy == "random":
        return CONTEXT_BOUNDS.sample(rng), PARAM_BOUNDS.sample(rng)

    if config.strategy == "aces":
        pool = CONTEXT_BOUNDS.sample(rng, params.n_context_pool)
        cache = CandidateCache(gp, params, PARAM_BOUNDS, rng.integers(2 ** 62))
        x, _ = cmaes_minimize(lambda x: aces(gp, x[:D_S], x[D_S:], pool, params, cache),
                              JOINT_BOUNDS, _cmaes(config, config.aces_evaluations), rng)
        return x[:D_S], x[D_S:]

    s = CONTEXT_BOUNDS.sample(rng)
    if config.strategy == "ucb":
        def objective(theta):
            return ucb(gp, s, theta, params.kappa)
        theta = direct_maximize(objective, PARAM_BOUNDS, config.direct_evaluations)
        return s, local_refine(objective, theta, PARAM_BOUNDS)

    cache = CandidateCache(gp, params, PARAM_BOUNDS, rng.integers(2 ** 62))
    theta, _ = cmaes_minimize(lambda th: expected_loss_change(gp, s, s, th, params, cache),
                              PARAM_BOUNDS, _cmaes(config, config.es_evaluations), rng)
    return s, theta


def run_episode(state: RunState, config: ExperimentConfig, rng) -> TrialRecord:
    """Select a query, execute the throw, record it and refit the model."""
    episode = len(state.history)
    try:
        s, theta = select_query(state, config, rng)
        s, theta = CONTEXT_BOUNDS.clip(s), PARAM_BOUNDS.clip(theta)
    except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
        log.warning("selection failed in episode %d (%s); sampling uniformly", episode, exc)
        state.fallbacks += 1
        s, theta = CONTEXT_BOUNDS.sample(rng), PARAM_BOUNDS.sample(rng)
    outcome = reward(s, theta, config.noise_std, rng)
    record = TrialRecord(episode, np.asarray(s, float), np.asarray(theta, float),
                         outcome.reward)
    state.history.append(record)
    _update_model(state, config, rng)
    return record


@dataclass(frozen=True)
class OfflineEvaluation:
    mean_performance: float
    rewards: np.ndarray
    regrets: np.ndarray

    @property
    def mean_regret(self) -> float:
        return float(np.mean(self.regrets))


def offline_evaluate(history, reps: RepsConfig = RepsConfig(), grid=None):
    """Train the affine policy on ``history`` and score it on the test grid.

    Returns ``None`` when there are too few trials to fit the policy.
    """
    grid = evaluation_grid() if grid is None else np.asarray(grid, float)
    if len(history) < D_S + 2:
        return None
    S = np.array([r.context for r in history])
    T = np.array([r.params for r in history])
    R = np.array([r.observed_return for r in history])
    w = creps_weights(S, R, reps).weights
    policy = fit_policy(S, T, w)
    rewards = np.array([reward(s, policy_act(policy, s, PARAM_BOUNDS)).reward for s in grid])
    optimal = np.array([optimal_reward(s)[0] for s in grid])
    return OfflineEvaluation(float(np.mean(rewards)), rewards, optimal - rewards)


def run_stream(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(k)]))


@dataclass
class RunResult:
    run: int
    records: list
    evaluations: dict  # episode -> OfflineEvaluation | None
    fallbacks: int = 0


def run_single(config: ExperimentConfig, k: int) -> RunResult:
    rng = run_stream(config.seed, k)
    state = RunState()
    grid = evaluation_grid()
    evals = {}
    due = set(config.eval_episodes())
    for episode in range(1, config.episodes + 1):
        run_episode(state, config, rng)
        if episode in due:
            evals[episode] = offline_evaluate(state.history, config.reps, grid)
    log.info("%s run %d done (%d fallbacks)", config.label, k, state.fallbacks)
    return RunResult(k, state.history, evals, state.fallbacks)


def _run_single_args(args):
    return run_single(*args)


def run_experiment(config: ExperimentConfig, write: bool = True) -> list[RunResult]:
    """Execute ``config.runs`` independent runs and write the result files."""
    if write:
        ensure_writable(config.output_dir)
    jobs = [(config, k) for k in range(config.runs)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_run_single_args, jobs))
    else:
        results = [run_single(*a) for a in jobs]
    if write:
        write_results(config, results)
    return results
