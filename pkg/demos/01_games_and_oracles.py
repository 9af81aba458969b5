"""Tour of the three toy games and the brute-force return oracle.

Each game is deterministic given the joint actions, so the exact optimum
comes from enumerating joint-action sequences (or, for the continuous
game, from its declared analytic maximum).
"""

import numpy as np

from nqmix.envs import MatrixGame, ProductGame, TwoStepGame, brute_force_optimum

print("=== one-shot matrix game ===")
env = MatrixGame()
print("payoff table:\n", env.spec.payoffs)
print("brute-force optimum:", brute_force_optimum(env))

res = env.reset(seed=0)
print("initial observation of agent 0:", res.observations[0])
res = env.step((0, 0))
print("joint action (0, 0) pays", res.reward, "| terminal:", res.terminal)

env.reset(seed=0)
print("joint action (0, 2) pays", env.step((0, 2)).reward, "(miscoordination hurts)")

print()
print("=== two-step branch game ===")
env = TwoStepGame()
print("agent 1's first action picks the branch; agent 2 never sees which")
for first_action, label in [(0, "safe branch (flat 7)"), (1, "risky branch")]:
    env.reset(seed=0)
    env.step((first_action, 0))
    reward = env.step((0, 0)).reward
    print(f"  first action {first_action} -> {label}: final payoff {reward}")
print("brute-force optimum over all 81 paths:", brute_force_optimum(env))

print()
print("=== continuous product game ===")
env = ProductGame()
env.reset(seed=0)
print("reward for (0.5, -0.5):", env.step((np.array([0.5]), np.array([-0.5]))).reward)
print("analytic optimum:", brute_force_optimum(env), "(two symmetric optima at +-1, +-1)")
