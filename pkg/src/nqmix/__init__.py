"""Non-monotonic value-function factorization for cooperative multi-agent RL.

A desk-scale laboratory: a minimal float64 autodiff engine, recurrent agent
networks with per-agent policy heads, four mixing functions (sum, monotone
hypernetwork, its non-monotone ablation, and a direct MLP), sign-modulated
off-policy actor-critic learners with Q-learning baselines, enumerable toy
games with brute-force oracles, and a seeded experiment harness.
"""

from . import agents, autodiff, envs, harness, learner, mixers, nn
from .autodiff import NumericsError, Tensor
from .envs import MatrixGame, ProductGame, TwoStepGame, brute_force_optimum, make_env
from .harness import RunConfig, evaluate, parse_config, run_ablation, run_experiment
from .learner import LearnerConfig, make_learner, train
from .mixers import make_mixer

__version__ = "0.1.0"

__all__ = [
    "agents",
    "autodiff",
    "envs",
    "harness",
    "learner",
    "mixers",
    "nn",
    "NumericsError",
    "Tensor",
    "MatrixGame",
    "TwoStepGame",
    "ProductGame",
    "brute_force_optimum",
    "make_env",
    "RunConfig",
    "evaluate",
    "parse_config",
    "run_ablation",
    "run_experiment",
    "LearnerConfig",
    "make_learner",
    "train",
    "make_mixer",
    "__version__",
]
