"""Mixing functions that combine per-agent values and the global state.

Four variants share one `mix(q, state)` interface:

* `VdnMixer` - plain sum, state ignored.
* `QmixMixer` - state-conditioned hypernetworks generate the weights of a
  two-layer mixing net; absolute value keeps the generated weights
  non-negative, which makes the mix monotone in every agent value and the
  joint argmax decomposable into per-agent argmaxes.
* `NqmixMMixer` - same hypernetworks with the absolute value removed, so
  generated weights (and hence the slopes in each agent value) may be
  negative.
* `NqmixMlpMixer` - a direct two-layer MLP over (agent values, raw state);
  its hidden width is chosen so the parameter count tracks the QMIX mixer
  at realistic state widths.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor

MIXING_EMBED = 32
HYPERNET_HIDDEN = 64


def hidden_width(n_agents: int) -> int:
    """Hidden width of the MLP mixer: 32*(A+4) - A for A agents."""
    if n_agents < 1:
        raise ValueError(f"n_agents must be >= 1, got {n_agents}")
    return 32 * (n_agents + 4) - n_agents


def sgn(x: float) -> float:
    """Two-valued sign: +1 for x >= 0 (zero counts as ascent), -1 otherwise."""
    if not np.isfinite(x):
        raise ValueError(f"sgn of non-finite value {x}")
    return 1.0 if x >= 0.0 else -1.0


def sgn_array(x: np.ndarray) -> np.ndarray:
    if not np.isfinite(x).all():
        raise ValueError("sgn of non-finite values")
    return np.where(x >= 0.0, 1.0, -1.0)


class _MixerBase:
    name: str

    def __init__(self, n_agents: int, state_width: int):
        self.n_agents = n_agents
        self.state_width = state_width
        self.params: dict[str, Tensor] = {}

    def _check(self, q: Tensor, state: Tensor) -> None:
        if q.data.ndim != 2 or q.data.shape[1] != self.n_agents:
            raise ValueError(f"q must be (batch, {self.n_agents}), got {q.data.shape}")
        if state.data.ndim != 2 or state.data.shape[1] != self.state_width:
            raise ValueError(
                f"state must be (batch, {self.state_width}), got {state.data.shape}"
            )

    def mix(self, q: Tensor, state: Tensor) -> Tensor:
        """Map per-agent values (B, n) and state (B, S) to joint values (B,)."""
        raise NotImplementedError

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params.values())


class VdnMixer(_MixerBase):
    name = "vdn"

    def mix(self, q: Tensor, state: Tensor) -> Tensor:
        self._check(q, state)
        return ad.sum_axis(q, 1)


class NqmixMlpMixer(_MixerBase):
    name = "nqmix"

    def __init__(
        self,
        n_agents: int,
        state_width: int,
        rng: np.random.Generator,
        hidden: int | None = None,
    ):
        super().__init__(n_agents, state_width)
        self.spec = nn.MlpSpec(
            (n_agents + state_width, hidden or hidden_width(n_agents), 1), ("relu", "identity")
        )
        self.params = nn.init_mlp_params(self.spec, rng)

    def mix(self, q: Tensor, state: Tensor) -> Tensor:
        self._check(q, state)
        out = nn.mlp_forward(self.spec, self.params, ad.concat([q, state], axis=1))
        return ad.reshape(out, (q.data.shape[0],))


class QmixMixer(_MixerBase):
    """Hypernetwork mixer; `abs_weights=False` drops the non-negativity."""

    name = "qmix"
    abs_weights = True

    def __init__(
        self,
        n_agents: int,
        state_width: int,
        rng: np.random.Generator,
        embed: int = MIXING_EMBED,
        hyper_hidden: int = HYPERNET_HIDDEN,
    ):
        super().__init__(n_agents, state_width)
        e, hh = embed, hyper_hidden
        self.embed = e
        self._w1_spec = nn.MlpSpec((state_width, hh, n_agents * e), ("relu", "identity"))
        self._w2_spec = nn.MlpSpec((state_width, hh, e), ("relu", "identity"))
        self._b1_spec = nn.MlpSpec((state_width, e), ("identity",))
        self._v_spec = nn.MlpSpec((state_width, e, 1), ("relu", "identity"))
        self.params = {}
        for prefix, spec in (
            ("hyper_w1.", self._w1_spec),
            ("hyper_w2.", self._w2_spec),
            ("hyper_b1.", self._b1_spec),
            ("v.", self._v_spec),
        ):
            self.params.update(nn.init_mlp_params(spec, rng, prefix=prefix))

    def mix(self, q: Tensor, state: Tensor) -> Tensor:
        self._check(q, state)
        batch = q.data.shape[0]
        n, e = self.n_agents, self.embed
        w1 = nn.mlp_forward(self._w1_spec, self.params, state, prefix="hyper_w1.")
        w2 = nn.mlp_forward(self._w2_spec, self.params, state, prefix="hyper_w2.")
        if self.abs_weights:
            w1 = ad.abs_(w1)
            w2 = ad.abs_(w2)
        b1 = nn.mlp_forward(self._b1_spec, self.params, state, prefix="hyper_b1.")
        v = nn.mlp_forward(self._v_spec, self.params, state, prefix="v.")
        hidden = ad.elu(ad.bmm(q, ad.reshape(w1, (batch, n, e))) + b1)
        out = ad.bmm(hidden, ad.reshape(w2, (batch, e, 1))) + v
        return ad.reshape(out, (batch,))


class NqmixMMixer(QmixMixer):
    name = "nqmix_m"
    abs_weights = False


MIXER_NAMES = ("vdn", "qmix", "nqmix", "nqmix_m")


def make_mixer(
    name: str, n_agents: int, state_width: int, rng: np.random.Generator, **kwargs
) -> _MixerBase:
    if name == "vdn":
        return VdnMixer(n_agents, state_width)
    if name == "qmix":
        return QmixMixer(n_agents, state_width, rng, **kwargs)
    if name == "nqmix":
        return NqmixMlpMixer(n_agents, state_width, rng, **kwargs)
    if name == "nqmix_m":
        return NqmixMMixer(n_agents, state_width, rng, **kwargs)
    raise ValueError(f"unknown mixer {name!r}; choose from {MIXER_NAMES}")


def grad_wrt_agent_q(mixer: _MixerBase, q_agents: np.ndarray, state: np.ndarray) -> np.ndarray:
    """d(joint value)/d(agent value) at the given point, one row per sample.

    Accepts (n,)+(S,) for a single sample or (B, n)+(B, S) batched; the
    per-sample gradients are exact because each row mixes independently.
    """
    q = np.asarray(q_agents, dtype=np.float64)
    s = np.asarray(state, dtype=np.float64)
    single = q.ndim == 1
    if single:
        q, s = q[None, :], s[None, :]
    leaf = Tensor(q, requires_grad=True)
    total = ad.tsum(mixer.mix(leaf, Tensor(s)))
    ad.backward(total)
    g = leaf.grad if leaf.grad is not None else np.zeros_like(q)
    return g[0] if single else g


def argmax_consistency_check(
    mixer: _MixerBase, q_tables: np.ndarray, state: np.ndarray, budget: int = 10**5
) -> bool:
    """Does the joint argmax of the mix equal the per-agent argmaxes?

    `q_tables` has shape (n_agents, n_actions).  The joint argmax is found
    by enumerating every joint action.
    """
    q_tables = np.asarray(q_tables, dtype=np.float64)
    n, k = q_tables.shape
    if n != mixer.n_agents:
        raise ValueError(f"q_tables has {n} rows, mixer expects {mixer.n_agents}")
    if k**n > budget:
        raise ValueError(f"enumeration budget exceeded: {k}^{n} joint actions")
    combos = np.stack(np.meshgrid(*[np.arange(k)] * n, indexing="ij"), axis=-1).reshape(-1, n)
    q_values = q_tables[np.arange(n)[None, :], combos]
    states = np.broadcast_to(np.asarray(state, dtype=np.float64), (len(combos), len(state)))
    q_tot = mixer.mix(Tensor(q_values), Tensor(states.copy())).data
    joint_best = tuple(combos[int(np.argmax(q_tot))])
    per_agent_best = tuple(int(np.argmax(row)) for row in q_tables)
    return joint_best == per_agent_best
