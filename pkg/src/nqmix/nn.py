"""Feed-forward and recurrent building blocks plus the RMSprop optimizer.

All parameters are float64 leaf tensors initialized uniformly in
[-1/sqrt(fan_in), +1/sqrt(fan_in)] with zero biases.  Parameter collections
are plain `dict[str, Tensor]` so they can be checkpointed by name.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

ACTIVATIONS = {
    "relu": ad.relu,
    "tanh": ad.tanh,
    "abs": ad.abs_,
    "identity": lambda t: t,
}


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths plus one activation name per layer transition."""

    widths: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("MlpSpec needs at least input and output widths")
        if any(w <= 0 for w in self.widths):
            raise ValueError(f"widths must be positive, got {self.widths}")
        if len(self.activations) != len(self.widths) - 1:
            raise ValueError(
                f"need {len(self.widths) - 1} activations, got {len(self.activations)}"
            )
        unknown = set(self.activations) - set(ACTIVATIONS)
        if unknown:
            raise ValueError(f"unknown activations: {sorted(unknown)}")


@dataclass(frozen=True)
class GruSpec:
    input_width: int
    hidden_width: int = 64

    def __post_init__(self):
        if self.input_width <= 0 or self.hidden_width <= 0:
            raise ValueError("GRU widths must be positive")


def init_weight(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_mlp_params(spec: MlpSpec, rng: np.random.Generator, prefix: str = "") -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    for i, (w_in, w_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
        params[f"{prefix}w{i}"] = init_weight(rng, w_in, (w_in, w_out))
        params[f"{prefix}b{i}"] = Tensor(np.zeros(w_out), requires_grad=True)
    return params


def mlp_forward(spec: MlpSpec, params: dict[str, Tensor], x: Tensor, prefix: str = "") -> Tensor:
    if x.data.shape[-1] != spec.widths[0]:
        raise ValueError(
            f"input width {x.data.shape[-1]} does not match spec width {spec.widths[0]}"
        )
    out = x
    for i, act in enumerate(spec.activations):
        out = ACTIVATIONS[act](ad.matmul(out, params[f"{prefix}w{i}"]) + params[f"{prefix}b{i}"])
    return out


def init_gru_params(spec: GruSpec, rng: np.random.Generator, prefix: str = "") -> dict[str, Tensor]:
    """Fused gate parameters: w/b act on x, u_zr and u_n on the hidden state."""
    h = spec.hidden_width
    return {
        f"{prefix}w": init_weight(rng, spec.input_width, (spec.input_width, 3 * h)),
        f"{prefix}b": Tensor(np.zeros(3 * h), requires_grad=True),
        f"{prefix}u_zr": init_weight(rng, h, (h, 2 * h)),
        f"{prefix}u_n": init_weight(rng, h, (h, h)),
    }


def gru_step(
    spec: GruSpec, params: dict[str, Tensor], x: Tensor, h: Tensor, prefix: str = ""
) -> Tensor:
    """One step of a gated recurrent unit.

    z = sigmoid(Wz x + Uz h + bz)
    r = sigmoid(Wr x + Ur h + br)
    n = tanh(Wn x + Un (r * h) + bn)
    h' = (1 - z) * n + z * h
    """
    hw = spec.hidden_width
    if x.data.shape[-1] != spec.input_width:
        raise ValueError(f"GRU input width {x.data.shape[-1]} != {spec.input_width}")
    if h.data.shape[-1] != hw:
        raise ValueError(f"GRU hidden width {h.data.shape[-1]} != {hw}")
    xa = ad.matmul(x, params[f"{prefix}w"]) + params[f"{prefix}b"]
    ha = ad.matmul(h, params[f"{prefix}u_zr"])
    z = ad.sigmoid(ad.slice_cols(xa, 0, hw) + ad.slice_cols(ha, 0, hw))
    r = ad.sigmoid(ad.slice_cols(xa, hw, 2 * hw) + ad.slice_cols(ha, hw, 2 * hw))
    n = ad.tanh(
        ad.slice_cols(xa, 2 * hw, 3 * hw) + ad.matmul(ad.mul(r, h), params[f"{prefix}u_n"])
    )
    return n + ad.mul(z, h - n)  # (1-z)*n + z*h without materializing the ones


@dataclass
class Rmsprop:
    """RMSprop over a named parameter set.

    `step(direction=+1)` ascends the objective whose gradient sits in
    `.grad`; `direction=-1` descends (callers minimizing a loss use -1).
    Parameters with a missing or identically-zero gradient are left
    untouched, running statistics included.
    """

    params: dict[str, Tensor]
    lr: float = 5e-4
    rho: float = 0.99
    eps: float = 1e-8
    step_count: int = 0
    mean_sq: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.rho < 1.0):
            raise ValueError(f"rho must be in (0,1), got {self.rho}")
        if self.lr <= 0 or self.eps <= 0:
            raise ValueError("lr and eps must be positive")
        for name, p in self.params.items():
            self.mean_sq.setdefault(name, np.zeros_like(p.data))

    def zero_grad(self) -> None:
        ad.zero_grad(self.params)

    def step(self, direction: int = 1) -> None:
        if direction not in (1, -1):
            raise ValueError(f"direction must be +1 or -1, got {direction}")
        for name, p in self.params.items():
            g = p.grad
            if g is None or not g.any():
                continue
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape {g.shape} != param shape {p.data.shape} for {name}")
            m = self.mean_sq[name]
            m *= self.rho
            m += (1.0 - self.rho) * g * g
            p.data += direction * self.lr * g / np.sqrt(m + self.eps)
        self.step_count += 1
