"""The float64 autodiff engine: forward graphs, backward, finite differences.

Everything the agents and mixers do runs through these few operations, so
the whole laboratory is checkable against central finite differences.
"""

import numpy as np

from nqmix import autodiff as ad
from nqmix import nn
from nqmix.autodiff import Tensor
from nqmix.gradcheck import max_relative_error

rng = np.random.default_rng(0)

print("=== scalar chain rule ===")
x = Tensor(np.array([3.0]), requires_grad=True)
y = ad.tsum(ad.mul(x, x))  # f(x) = x^2
ad.backward(y)
print("d(x^2)/dx at 3 =", x.grad[0])

print()
print("=== a small recurrent step ===")
spec = nn.GruSpec(input_width=3, hidden_width=4)
params = nn.init_gru_params(spec, rng)
h = nn.gru_step(spec, params, Tensor(rng.normal(size=(1, 3))), Tensor(np.zeros((1, 4))))
print("fresh hidden state:", np.round(h.data, 4))

zeroed = {k: Tensor(np.zeros_like(p.data), requires_grad=True) for k, p in params.items()}
h0 = Tensor(rng.normal(size=(1, 4)))
h1 = nn.gru_step(spec, zeroed, Tensor(np.zeros((1, 3))), h0)
print("zero-parameter cell halves the hidden state:", np.allclose(h1.data, 0.5 * h0.data))

print()
print("=== gradients vs central finite differences ===")
mlp_spec = nn.MlpSpec((4, 8, 1), ("tanh", "identity"))
mlp_params = nn.init_mlp_params(mlp_spec, rng)
batch = Tensor(rng.normal(size=(5, 4)))
err = max_relative_error(lambda: ad.mean(nn.mlp_forward(mlp_spec, mlp_params, batch)), mlp_params)
print(f"worst relative disagreement across all parameters: {err:.3e}")

print()
print("=== masked softmax ===")
logits = Tensor(np.array([2.0, -1.0, 0.5, 0.5]))
mask = np.array([True, True, False, True])
probs = ad.softmax(logits, mask)
print("probabilities:", np.round(probs.data, 4), "| sum:", probs.data.sum())
