"""Train the sign-modulated actor-critic on the non-monotone matrix game.

The payoff peaks at the coordinated joint action (0, 0) and punishes any
near miss, so a monotone factorization settles for the safe zero-payoff
block.  A short run here shows the learning curve; the full acceptance
budget is 50k steps (see tests/test_acceptance.py).
"""

import numpy as np

from nqmix.envs import MatrixGame, brute_force_optimum
from nqmix.harness import evaluate
from nqmix.learner import LearnerConfig, make_learner

TOTAL_STEPS = 6000
SEED = 1

env = MatrixGame()
optimum = brute_force_optimum(env)
print(f"optimum {optimum}; training nqmix for {TOTAL_STEPS} steps, seed {SEED}")

cfg = LearnerConfig(total_steps=TOTAL_STEPS)
learner = make_learner(env, "nqmix", cfg, seed=SEED)
eval_rng = np.random.default_rng(0)

while learner.env_steps < TOTAL_STEPS:
    learner.train_iteration(env)
    if learner.env_steps % 500 == 0:
        mean_ret, _, success = evaluate(learner, env, 8, rng=eval_rng, optimum=optimum)
        print(f"step {learner.env_steps:5d}  greedy return {mean_ret:6.2f}  success {success:.2f}")

print()
print("greedy joint action after training:")
episode = learner.play_episode(env, explore=False, rng=np.random.default_rng(0))
print("  actions:", episode.actions[0], "return:", episode.total_return)
