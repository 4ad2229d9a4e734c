"""Experiment configuration and config-file loading."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import tomli

from ..acquisition import AcquisitionParams
from ..environment import CONTEXT_BOUNDS
from ..policy import RepsConfig

STRATEGIES = ("random", "ucb", "es", "aces")


@dataclass(frozen=True)
class ExperimentConfig:
    strategy: str = "aces"
    n_nn: int = 20
    episodes: int = 150
    runs: int = 20
    eval_interval: int = 10
    seed: int = 0
    noise_std: float = 0.0
    output_dir: str = "results"
    acquisition: AcquisitionParams = field(default_factory=AcquisitionParams)
    reps: RepsConfig = field(default_factory=RepsConfig)
    aces_evaluations: int = 1000
    es_evaluations: int = 1000
    cmaes_restarts: int = 2
    direct_evaluations: int = 300
    hyper_interval: int = 10
    jobs: int = 1
    plots: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.strategy == "aces" and self.n_nn < 1:
            raise ValueError("ACES requires n_nn >= 1")
        if self.runs < 1 or self.episodes < 0 or self.eval_interval < 1:
            raise ValueError("runs >= 1, episodes >= 0 and eval_interval >= 1 required")
        if self.acquisition.n_nn != self.n_nn:
            # n_nn is a top-level knob; keep the acquisition copy in sync
            nn = min(self.n_nn, self.acquisition.n_context_pool)
            object.__setattr__(self, "acquisition", replace(self.acquisition, n_nn=nn))

    @property
    def label(self) -> str:
        if self.strategy == "aces":
            return f"ACES_{self.n_nn:02d}"
        return {"random": "Random", "ucb": "BOCPS-UCB", "es": "BOCPS-ES"}[self.strategy]

    def eval_episodes(self) -> list[int]:
        return list(range(self.eval_interval, self.episodes + 1, self.eval_interval))

    def as_flat_dict(self) -> dict:
        d = asdict(self)
        acq = d.pop("acquisition")
        reps = d.pop("reps")
        acq.pop("n_nn")
        d.update(acq)
        d["epsilon"] = reps["epsilon"]
        return d


_ACQ_KEYS = {f.name for f in fields(AcquisitionParams)} - {"n_nn"}
_ALIASES = {"nnn": "n_nn", "out": "output_dir", "eval-interval": "eval_interval",
            "noise-std": "noise_std"}


def config_from_dict(values: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Build a config from flat keys; unknown keys raise ``KeyError``."""
    base = base or ExperimentConfig()
    top, acq = {}, {}
    reps = base.reps
    top_names = {f.name for f in fields(ExperimentConfig)} - {"acquisition", "reps"}
    for key, value in values.items():
        key = _ALIASES.get(key, key).replace("-", "_")
        key = _ALIASES.get(key, key)
        if key in _ACQ_KEYS:
            acq[key] = value
        elif key == "epsilon":
            reps = RepsConfig(float(value), reps.eta_bounds)
        elif key in top_names:
            top[key] = value
        else:
            raise KeyError(f"unknown config key {key!r}")
    n_nn = int(top.get("n_nn", base.n_nn))
    acquisition = replace(base.acquisition, **{k: int(v) if k != "kappa" else float(v)
                                               for k, v in acq.items()})
    acquisition = replace(acquisition, n_nn=min(n_nn, acquisition.n_context_pool))
    return replace(base, acquisition=acquisition, reps=reps, **top)


def load_config_file(path) -> dict:
    """Read a flat ``key = value`` file (TOML syntax)."""
    with open(path, "rb") as fh:
        data = tomli.load(fh)
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ValueError(f"config file must be flat; found tables {nested}")
    return data


def evaluation_grid(n: int = 4) -> np.ndarray:
    """``n x n`` contexts at the cell centers of the context box."""
    offsets = (2 * np.arange(n) + 1) / (2 * n)
    lo, w = CONTEXT_BOUNDS.lower, CONTEXT_BOUNDS.width
    xs = lo[0] + offsets * w[0]
    ys = lo[1] + offsets * w[1]
    return np.array([[x, y] for x in xs for y in ys])


def boundary_fraction(contexts, margin: float = 0.1) -> float:
    """Fraction of contexts within ``margin`` of a dimension's range from any edge."""
    c = np.atleast_2d(contexts)
    lo, w = CONTEXT_BOUNDS.lower, CONTEXT_BOUNDS.width
    rel = (c - lo) / w
    near = np.any((rel < margin) | (rel > 1 - margin), axis=1)
    return float(np.mean(near))


def ensure_writable(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-test"
    probe.write_text("")
    probe.unlink()
    return out
