"""The deterministic-policy variant on the continuous product game.

Reward u1*u2 has two symmetric optima at (+1, +1) and (-1, -1); the useful
gradient direction for one agent depends on the sign of the other agent's
action, which is what the sign-modulated value-gradient handles.
"""

import numpy as np

from nqmix.envs import ProductGame
from nqmix.harness import evaluate
from nqmix.learner import LearnerConfig, make_learner

env = ProductGame()
cfg = LearnerConfig(total_steps=2000)
learner = make_learner(env, "nqmix_continuous", cfg, seed=0)
eval_rng = np.random.default_rng(0)

while learner.env_steps < cfg.total_steps:
    learner.train_iteration(env)
    if learner.env_steps % 250 == 0:
        mean_ret, _, _ = evaluate(learner, env, 4, rng=eval_rng, optimum=1.0)
        print(f"step {learner.env_steps:4d}  noise-free return {mean_ret:7.4f}")

episode = learner.play_episode(env, explore=False, rng=np.random.default_rng(0))
print()
print("final joint action:", episode.actions[0].ravel(), "return:", round(episode.total_return, 4))
print("both agents settle on the same sign, as the product demands")
