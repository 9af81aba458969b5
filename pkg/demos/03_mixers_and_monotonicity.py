"""The four mixing functions and what monotonicity buys (and costs).

The monotone hypernetwork mixer guarantees that per-agent greedy actions
assemble the joint greedy action, which is exactly why it cannot represent
payoffs where one agent's value should count against the team in some
states.  Removing the absolute value (or switching to the direct MLP)
trades that guarantee for expressiveness.
"""

import numpy as np

from nqmix.autodiff import Tensor
from nqmix.mixers import (
    argmax_consistency_check,
    grad_wrt_agent_q,
    hidden_width,
    make_mixer,
)

rng = np.random.default_rng(7)
n_agents, state_width = 3, 4
state = rng.normal(size=state_width)

print("=== slopes of the joint value in each agent value ===")
for name in ("vdn", "qmix", "nqmix", "nqmix_m"):
    mixer = make_mixer(name, n_agents, state_width, rng)
    slopes = grad_wrt_agent_q(mixer, rng.normal(size=n_agents), state)
    print(f"{name:8s} dQtot/dQa = {np.round(slopes, 3)}")
print("(vdn is exactly ones; qmix is non-negative by construction)")

print()
print("=== joint argmax vs per-agent argmaxes ===")
trials = 500
for name in ("qmix", "nqmix_m"):
    ok = sum(
        argmax_consistency_check(
            make_mixer(name, n_agents, state_width, rng),
            rng.normal(size=(n_agents, 4)),
            rng.normal(size=state_width),
        )
        for _ in range(trials)
    )
    print(f"{name:8s} joint argmax decomposed in {ok}/{trials} random trials")

print()
print("=== mixer sizes ===")
print("MLP-mixer hidden width for 1..5 agents:", [hidden_width(a) for a in range(1, 6)])
for agents in (2, 3):
    qmix = make_mixer("qmix", agents, 320, rng)
    mlp = make_mixer("nqmix", agents, 320, rng)
    print(
        f"agents={agents}, state=320: qmix {qmix.param_count()} params, "
        f"mlp {mlp.param_count()} params (ratio {mlp.param_count() / qmix.param_count():.3f})"
    )
