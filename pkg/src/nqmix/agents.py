"""Agent networks: one shared recurrent critic, one policy head per agent.

The critic trunk (input layer -> GRU -> value head) is a single parameter
set reused by every agent; inputs carry an agent-id one-hot so the trunk
can specialize.  Policy heads are never shared: the per-agent update
directions can point opposite ways, so each agent owns its head outright.

For discrete actions the trunk emits one value per action and the policy
head emits logits over actions.  For continuous actions the value head
scores a (history, action) pair and the policy head emits a tanh-squashed
action inside the env bounds.
"""

from __future__ import annotations

import json

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .envs import DecPomdpDescriptor

HIDDEN_WIDTH = 64
CHECKPOINT_VERSION = 1


def one_hot(index: int, width: int) -> np.ndarray:
    v = np.zeros(width)
    if 0 <= index < width:
        v[index] = 1.0
    return v


def agent_input_width(desc: DecPomdpDescriptor) -> int:
    prev = desc.n_actions if desc.discrete else desc.action_dim
    return desc.obs_width + prev + desc.n_agents


def build_agent_input(
    obs: np.ndarray, prev_action: np.ndarray, agent_id: np.ndarray
) -> np.ndarray:
    """(observation, previous-action encoding, agent-id one-hot) -> one row."""
    if int((agent_id != 0).sum()) != 1:
        raise ValueError("agent_id must be a one-hot vector")
    return np.concatenate([obs, prev_action, agent_id])


class SharedCritic:
    """FC -> GRU -> value head; one parameter set for all agents."""

    def __init__(self, desc: DecPomdpDescriptor, rng: np.random.Generator, hidden: int = HIDDEN_WIDTH):
        self.desc = desc
        self.hidden = hidden
        in_width = agent_input_width(desc)
        self.fc_spec = nn.MlpSpec((in_width, hidden), ("relu",))
        self.gru_spec = nn.GruSpec(hidden, hidden)
        if desc.discrete:
            self.head_spec = nn.MlpSpec((hidden, desc.n_actions), ("identity",))
        else:
            self.head_spec = nn.MlpSpec(
                (hidden + desc.action_dim, hidden, 1), ("relu", "identity")
            )
        self.params: dict[str, Tensor] = {}
        self.params.update(nn.init_mlp_params(self.fc_spec, rng, prefix="fc."))
        self.params.update(nn.init_gru_params(self.gru_spec, rng, prefix="gru."))
        self.params.update(nn.init_mlp_params(self.head_spec, rng, prefix="head."))

    def init_hidden(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.hidden)))

    def encode(self, x: Tensor, h: Tensor) -> Tensor:
        """Fold one (obs, prev action, agent id) row into the history state."""
        y = nn.mlp_forward(self.fc_spec, self.params, x, prefix="fc.")
        return nn.gru_step(self.gru_spec, self.params, y, h, prefix="gru.")

    def q_values(self, h: Tensor) -> Tensor:
        """Per-action values (B, n_actions) for a discrete action space."""
        if not self.desc.discrete:
            raise ValueError("q_values is for discrete action spaces; use q_value")
        return nn.mlp_forward(self.head_spec, self.params, h, prefix="head.")

    def q_value(self, h: Tensor, action: Tensor) -> Tensor:
        """Value (B,) of taking `action` (B, action_dim) at history `h`."""
        if self.desc.discrete:
            raise ValueError("q_value is for continuous action spaces; use q_values")
        out = nn.mlp_forward(
            self.head_spec, self.params, ad.concat([h, action], axis=1), prefix="head."
        )
        return ad.reshape(out, (h.data.shape[0],))

    def encode_step(self, x: Tensor, h: Tensor) -> tuple[Tensor, Tensor]:
        h1 = self.encode(x, h)
        return h1, self.q_values(h1)


class DiscretePolicy:
    """Per-agent stochastic policy: hidden state -> masked action distribution."""

    def __init__(self, n_actions: int, rng: np.random.Generator, hidden: int = HIDDEN_WIDTH):
        self.spec = nn.MlpSpec((hidden, hidden, n_actions), ("relu", "identity"))
        self.params = nn.init_mlp_params(self.spec, rng)

    def logits(self, h: Tensor) -> Tensor:
        return nn.mlp_forward(self.spec, self.params, h)

    def probs(self, h: Tensor, mask: np.ndarray | None = None) -> Tensor:
        return ad.softmax(self.logits(h), mask)


class ContinuousPolicy:
    """Per-agent deterministic policy, tanh-squashed into the action box."""

    def __init__(
        self,
        action_dim: int,
        low: float,
        high: float,
        rng: np.random.Generator,
        hidden: int = HIDDEN_WIDTH,
    ):
        self.low, self.high = float(low), float(high)
        self.spec = nn.MlpSpec((hidden, hidden, action_dim), ("relu", "tanh"))
        self.params = nn.init_mlp_params(self.spec, rng)

    def action(self, h: Tensor) -> Tensor:
        squashed = nn.mlp_forward(self.spec, self.params, h)
        half = 0.5 * (self.high - self.low)
        mid = 0.5 * (self.high + self.low)
        return ad.scale(squashed, half) + Tensor(np.full_like(squashed.data, mid))


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an index from a probability vector, deterministic given rng state."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.min() < 0 or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("sample_action needs a valid probability vector")
    edges = np.cumsum(p)
    return int(min(np.searchsorted(edges, rng.random(), side="right"), len(p) - 1))


# ---------------------------------------------------------------------------
# checkpointing


def clone_params(params: dict[str, Tensor], requires_grad: bool = False) -> dict[str, Tensor]:
    return {k: Tensor(v.data.copy(), requires_grad=requires_grad) for k, v in params.items()}


def save_params(path, named: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named float64 arrays plus JSON metadata; round-trips bit-exactly."""
    payload = dict(meta or {})
    payload["format_version"] = CHECKPOINT_VERSION
    payload["shapes"] = {k: list(v.shape) for k, v in named.items()}
    blob = np.frombuffer(json.dumps(payload).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=blob, **named)


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        named = {k: data[k] for k in data.files if k != "__meta__"}
    for k, arr in named.items():
        expected = tuple(meta["shapes"].get(k, ()))
        if arr.shape != expected:
            raise ValueError(f"checkpoint shape mismatch for {k}: {arr.shape} vs {expected}")
    return named, meta
