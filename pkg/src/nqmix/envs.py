"""Cooperative Dec-POMDP toy games with a brute-force return oracle.

Three deterministic desk-scale games:

* `MatrixGame` - one shot, two agents, payoff table lookup.  The default
  table rewards exactly one coordinated joint action and punishes
  near-misses, which no monotone factorization can represent greedily.
* `TwoStepGame` - agent 1's first action picks a branch (a flat 7-payoff
  table, or the default matrix), the branch matrix is played at step two.
  Agent 2 never observes the branch, so history encoding carries the load.
* `ProductGame` - continuous actions in [-1, 1], reward u1*u2, with two
  symmetric optima.

Observations are (step-index one-hot, own previous action); the global
state carries the true step/branch information and is only seen by mixers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

DEFAULT_PAYOFFS = np.array(
    [
        [8.0, -12.0, -12.0],
        [-12.0, 0.0, 0.0],
        [-12.0, 0.0, 0.0],
    ]
)

ENUMERATION_BUDGET = 10**6


@dataclass(frozen=True)
class DecPomdpDescriptor:
    """Static shape information shared by agents, mixers and the learner."""

    n_agents: int
    horizon: int
    obs_width: int
    state_width: int
    n_actions: int | None = None  # discrete games
    action_dim: int | None = None  # continuous games
    action_low: float | None = None
    action_high: float | None = None

    def __post_init__(self):
        if self.n_agents < 2:
            raise ValueError(f"need at least 2 agents, got {self.n_agents}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if (self.n_actions is None) == (self.action_dim is None):
            raise ValueError("exactly one of n_actions / action_dim must be set")
        if self.action_dim is not None and not (self.action_low < self.action_high):
            raise ValueError("continuous bounds need low < high")

    @property
    def discrete(self) -> bool:
        return self.n_actions is not None


@dataclass(frozen=True)
class StepResult:
    observations: tuple[np.ndarray, ...]
    state: np.ndarray
    reward: float
    terminal: bool

    def __post_init__(self):
        if not np.isfinite(self.reward):
            raise ValueError("reward must be finite")


@dataclass(frozen=True)
class MatrixGameSpec:
    n_actions_per_agent: int
    payoffs: np.ndarray  # (K, K)

    def __post_init__(self):
        k = self.n_actions_per_agent
        if k < 1:
            raise ValueError("n_actions_per_agent must be positive")
        if self.payoffs.shape != (k, k):
            raise ValueError(f"payoff table must be {k}x{k}, got {self.payoffs.shape}")
        if not np.isfinite(self.payoffs).all():
            raise ValueError("payoff entries must be finite")


def load_matrix_game_spec(path) -> MatrixGameSpec:
    """Read a payoff table from a JSON file.

    Keys: `n_actions_per_agent` (int) and `payoffs` (row-major flat list).
    """
    with open(path) as fh:
        raw = json.load(fh)
    missing = {"n_actions_per_agent", "payoffs"} - raw.keys()
    if missing:
        raise ValueError(f"matrix game file missing keys: {sorted(missing)}")
    unknown = raw.keys() - {"n_actions_per_agent", "payoffs"}
    if unknown:
        raise ValueError(f"matrix game file has unknown keys: {sorted(unknown)}")
    k = int(raw["n_actions_per_agent"])
    flat = np.asarray(raw["payoffs"], dtype=np.float64)
    if flat.shape != (k * k,):
        raise ValueError(f"expected {k * k} payoffs, got {flat.size}")
    return MatrixGameSpec(k, flat.reshape(k, k))


def _one_hot(index: int, width: int) -> np.ndarray:
    v = np.zeros(width)
    if 0 <= index < width:
        v[index] = 1.0
    return v


class _ToyEnv:
    """Deterministic episodic base: tracks the step index and terminality."""

    descriptor: DecPomdpDescriptor

    def __init__(self):
        self._t = 0
        self._terminal = True  # force a reset before stepping
        self._rng = np.random.default_rng(0)

    def reset(self, seed: int | None = None) -> StepResult:
        self._rng = np.random.default_rng(seed)
        self._t = 0
        self._terminal = False
        return StepResult(self._observations(), self._state(), 0.0, False)

    def step(self, joint_action) -> StepResult:
        if self._terminal:
            raise RuntimeError("step() after terminal; call reset() first")
        self._validate_action(joint_action)
        reward = self._apply(joint_action)
        self._t += 1
        self._terminal = self._t >= self.descriptor.horizon
        return StepResult(self._observations(), self._state(), reward, self._terminal)

    # hooks -----------------------------------------------------------------
    def _observations(self) -> tuple[np.ndarray, ...]:
        raise NotImplementedError

    def _state(self) -> np.ndarray:
        raise NotImplementedError

    def _apply(self, joint_action) -> float:
        raise NotImplementedError

    def _validate_action(self, joint_action) -> None:
        d = self.descriptor
        if len(joint_action) != d.n_agents:
            raise ValueError(f"expected {d.n_agents} actions, got {len(joint_action)}")
        if d.discrete:
            for a in joint_action:
                if not 0 <= int(a) < d.n_actions:
                    raise ValueError(f"action {a} outside [0, {d.n_actions})")
        else:
            for u in joint_action:
                u = np.atleast_1d(np.asarray(u, dtype=np.float64))
                if u.shape != (d.action_dim,):
                    raise ValueError(f"continuous action must have dim {d.action_dim}")
                if (u < d.action_low - 1e-12).any() or (u > d.action_high + 1e-12).any():
                    raise ValueError(f"action {u} outside [{d.action_low}, {d.action_high}]")


class MatrixGame(_ToyEnv):
    def __init__(self, spec: MatrixGameSpec | None = None):
        super().__init__()
        self.spec = spec or MatrixGameSpec(3, DEFAULT_PAYOFFS.copy())
        k = self.spec.n_actions_per_agent
        self.descriptor = DecPomdpDescriptor(
            n_agents=2, horizon=1, obs_width=1 + k, state_width=1, n_actions=k
        )
        self._prev = [None, None]

    def reset(self, seed: int | None = None) -> StepResult:
        self._prev = [None, None]
        return super().reset(seed)

    def _observations(self):
        k = self.spec.n_actions_per_agent
        step = _one_hot(self._t, 1)
        return tuple(
            np.concatenate([step, _one_hot(-1 if p is None else p, k)]) for p in self._prev
        )

    def _state(self):
        return _one_hot(self._t, 1)

    def _apply(self, joint_action):
        a, b = int(joint_action[0]), int(joint_action[1])
        self._prev = [a, b]
        return float(self.spec.payoffs[a, b])


class TwoStepGame(_ToyEnv):
    """Branch selection at step 0 (reward 0), branch matrix payoff at step 1.

    Agent 1's first action picks the branch: action 0 plays a flat
    all-`safe_payoff` table, any other action plays `risky_payoffs`.
    """

    N_ACTIONS = 3

    def __init__(self, safe_payoff: float = 7.0, risky_payoffs: np.ndarray | None = None):
        super().__init__()
        k = self.N_ACTIONS
        self.branch_payoffs = (
            np.full((k, k), float(safe_payoff)),
            np.array(risky_payoffs, dtype=np.float64) if risky_payoffs is not None else DEFAULT_PAYOFFS.copy(),
        )
        if self.branch_payoffs[1].shape != (k, k):
            raise ValueError("risky payoff table must be 3x3")
        # state = step one-hot (2) + branch one-hot (unset/safe/risky)
        self.descriptor = DecPomdpDescriptor(
            n_agents=2, horizon=2, obs_width=2 + k, state_width=5, n_actions=k
        )
        self._prev = [None, None]
        self._branch = None

    def reset(self, seed: int | None = None) -> StepResult:
        self._prev = [None, None]
        self._branch = None
        return super().reset(seed)

    def _observations(self):
        k = self.N_ACTIONS
        step = _one_hot(self._t, 2)
        return tuple(
            np.concatenate([step, _one_hot(-1 if p is None else p, k)]) for p in self._prev
        )

    def _state(self):
        branch = _one_hot(0 if self._branch is None else self._branch + 1, 3)
        return np.concatenate([_one_hot(self._t, 2), branch])

    def _apply(self, joint_action):
        a, b = int(joint_action[0]), int(joint_action[1])
        self._prev = [a, b]
        if self._t == 0:
            self._branch = 0 if a == 0 else 1
            return 0.0
        return float(self.branch_payoffs[self._branch][a, b])


class ProductGame(_ToyEnv):
    """One-shot continuous coordination: reward is the product of actions."""

    def __init__(self):
        super().__init__()
        self.descriptor = DecPomdpDescriptor(
            n_agents=2,
            horizon=1,
            obs_width=2,
            state_width=1,
            action_dim=1,
            action_low=-1.0,
            action_high=1.0,
        )
        self._prev = [None, None]
        self.analytic_optimum = 1.0

    def reset(self, seed: int | None = None) -> StepResult:
        self._prev = [None, None]
        return super().reset(seed)

    def _observations(self):
        step = _one_hot(self._t, 1)
        return tuple(
            np.concatenate([step, np.zeros(1) if p is None else np.atleast_1d(p)])
            for p in self._prev
        )

    def _state(self):
        return _one_hot(self._t, 1)

    def _apply(self, joint_action):
        u = [float(np.asarray(a).reshape(())) for a in joint_action]
        self._prev = u
        return u[0] * u[1]


def brute_force_optimum(env: _ToyEnv) -> float:
    """Exact maximum undiscounted episode return.

    Discrete games are solved by enumerating every joint-action sequence
    (resetting and replaying the env); continuous games must declare an
    `analytic_optimum`.
    """
    d = env.descriptor
    if not d.discrete:
        opt = getattr(env, "analytic_optimum", None)
        if opt is None:
            raise ValueError("continuous env declares no analytic optimum")
        return float(opt)
    n_joint = d.n_actions**d.n_agents
    if n_joint**d.horizon > ENUMERATION_BUDGET:
        raise ValueError(
            f"enumeration budget exceeded: {n_joint}^{d.horizon} joint-action sequences"
        )
    joint_actions = [
        tuple((j // d.n_actions**i) % d.n_actions for i in range(d.n_agents))
        for j in range(n_joint)
    ]
    best = -np.inf
    stack = [((), 0.0)]
    while stack:
        prefix, ret = stack.pop()
        if len(prefix) == d.horizon:
            best = max(best, ret)
            continue
        for ja in joint_actions:
            env.reset(0)
            total = 0.0
            for step_action in prefix + (ja,):
                total += env.step(step_action).reward
            stack.append((prefix + (ja,), total))
    return float(best)


ENV_NAMES = ("matrix", "two_step", "product")


def make_env(name: str, env_params: dict | None = None) -> _ToyEnv:
    params = dict(env_params or {})
    if name == "matrix":
        spec = None
        if "payoffs_file" in params:
            spec = load_matrix_game_spec(params.pop("payoffs_file"))
        if params:
            raise ValueError(f"unknown matrix game params: {sorted(params)}")
        return MatrixGame(spec)
    if name == "two_step":
        env = TwoStepGame(**params)
        return env
    if name == "product":
        if params:
            raise ValueError(f"product game takes no params, got {sorted(params)}")
        return ProductGame()
    raise ValueError(f"unknown env {name!r}; choose from {ENV_NAMES}")
