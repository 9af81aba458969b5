"""Training algorithms: sign-modulated actor-critic plus Q-learning baselines.

All algorithms share the same skeleton: generate an episode with the
current behavior policy, push it into an episode replay buffer, sample a
mini-batch, take one critic descent step on the mean squared TD error over
every timestep of the batch, and soft-update the target networks.  The
actor-critic variants additionally take one ascent step per agent policy
on the discount-weighted, sign-modulated policy-gradient objective.

The per-agent sign is sgn(d Q_tot / d Q_a), evaluated at the joint values
of the actions actually taken, with the pre-update evaluate mixer: a
positive slope means improving agent a's own value helps the joint value
(ascend), a negative slope means it hurts (descend).

Critic and actors are strictly isolated: policy parameters never receive
critic gradients and the actor step treats all agent values as constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import agents as ag
from . import mixers as mx
from .autodiff import Tensor
from .envs import DecPomdpDescriptor
from .nn import Rmsprop

ALGO_NAMES = ("nqmix", "nqmix_m", "qmix", "vdn", "nqmix_continuous")

EPSILON_START = 1.0
EPSILON_FINAL = 0.05
EPSILON_ANNEAL_FRACTION = 0.3
NOISE_SCALE = 0.1  # stddev of behavior noise as a fraction of the action range


@dataclass
class LearnerConfig:
    gamma: float = 0.99
    tau_soft: float = 0.001
    lr_critic: float = 5e-4
    lr_actor: float = 5e-4
    batch_episodes: int = 32
    buffer_capacity: int = 5000
    total_steps: int = 50_000
    eval_interval_steps: int = 1000

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma must be in (0,1), got {self.gamma}")
        if not (0.0 < self.tau_soft <= 1.0):
            raise ValueError(f"tau_soft must be in (0,1], got {self.tau_soft}")
        if self.lr_critic <= 0 or self.lr_actor <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_episodes < 1 or self.buffer_capacity < 1:
            raise ValueError("batch_episodes and buffer_capacity must be positive")
        if self.total_steps < 0 or self.eval_interval_steps < 1:
            raise ValueError("total_steps must be >= 0 and eval_interval_steps >= 1")


@dataclass
class Episode:
    """One trajectory; index 0..T-1 for transitions, 0..T for obs/state."""

    obs: np.ndarray  # (T+1, n, obs_width)
    state: np.ndarray  # (T+1, state_width)
    actions: np.ndarray  # (T, n) int64 or (T, n, action_dim) float64
    rewards: np.ndarray  # (T,)
    terminal: np.ndarray  # (T,) bool
    masks: np.ndarray  # (T+1, n, n_actions) float64; all-ones when unrestricted
    param_version: int = 0

    def __post_init__(self):
        t = len(self.rewards)
        if t < 1:
            raise ValueError("episode must contain at least one transition")
        if len(self.obs) != t + 1 or len(self.state) != t + 1 or len(self.actions) != t:
            raise ValueError("episode field lengths are inconsistent")
        if not (self.terminal[-1] and not self.terminal[:-1].any()):
            raise ValueError("episode must terminate exactly once, at the end")

    @property
    def length(self) -> int:
        return len(self.rewards)

    @property
    def total_return(self) -> float:
        return float(self.rewards.sum())


class ReplayBuffer:
    """Ring of the most recent episodes with uniform seeded sampling.

    Index 0 is always the oldest retained episode; storage is a rotating
    list so sampling stays O(1) per draw at any capacity.
    """

    def __init__(self, capacity: int, rng: np.random.Generator):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list[Episode] = []
        self._cursor = 0
        self._rng = rng

    def __len__(self) -> int:
        return len(self._items)

    def add(self, episode: Episode) -> None:
        if len(self._items) < self.capacity:
            self._items.append(episode)
        else:
            self._items[self._cursor] = episode
            self._cursor = (self._cursor + 1) % self.capacity

    def _oldest_first(self, i: int) -> Episode:
        if len(self._items) < self.capacity:
            return self._items[i]
        return self._items[(self._cursor + i) % self.capacity]

    def sample(self, n: int) -> list[Episode]:
        if n > len(self._items):
            raise ValueError(f"cannot sample {n} episodes from buffer of {len(self)}")
        idx = self._rng.choice(len(self._items), size=n, replace=False)
        return [self._oldest_first(int(i)) for i in idx]

    def episodes(self) -> tuple[Episode, ...]:
        return tuple(self._oldest_first(i) for i in range(len(self._items)))


# ---------------------------------------------------------------------------
# small reusable pieces (each independently testable)


def expected_state_value(probs: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Probability-weighted value sum over the action axis."""
    probs = np.asarray(probs, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if probs.shape != q.shape:
        raise ValueError(f"probs shape {probs.shape} != q shape {q.shape}")
    return (probs * q).sum(axis=-1)


def td_target(reward, gamma: float, next_value, terminal) -> np.ndarray:
    """Bootstrap target r + gamma * next_value, cut at terminal transitions."""
    reward = np.asarray(reward, dtype=np.float64)
    cont = 1.0 - np.asarray(terminal, dtype=np.float64)
    return reward + gamma * np.asarray(next_value, dtype=np.float64) * cont


def discount_weights(gamma: float, t_len: int) -> np.ndarray:
    """Per-timestep actor step scales: gamma^0, gamma^1, ..., gamma^(T-1)."""
    return gamma ** np.arange(t_len)


def all_actions_gradient(
    policy: ag.DiscretePolicy,
    h: np.ndarray,
    q: np.ndarray,
    masks: np.ndarray | None = None,
    weights: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Gradient on policy parameters of sum_u pi(u|h) q_u, batched.

    `h` is (M, hidden), `q` is (M, n_actions) and is treated as constant;
    rows are combined as mean over M after applying per-row `weights`.
    """
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    m = h.shape[0]
    probs = policy.probs(Tensor(h), masks)
    score = ad.sum_axis(ad.mul(probs, Tensor(q)), 1)
    if weights is not None:
        score = ad.mul(score, Tensor(np.asarray(weights, dtype=np.float64)))
    ad.zero_grad(policy.params)
    ad.backward(ad.scale(ad.tsum(score), 1.0 / m))
    grads = {
        k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for k, p in policy.params.items()
    }
    ad.zero_grad(policy.params)
    return grads


def soft_update(target: dict[str, Tensor], source: dict[str, Tensor], tau: float) -> None:
    """target <- tau * source + (1 - tau) * target, elementwise."""
    if not (0.0 <= tau <= 1.0):
        raise ValueError(f"tau must be in [0,1], got {tau}")
    if target.keys() != source.keys():
        raise ValueError("parameter sets differ in names")
    for k in target:
        t, s = target[k], source[k]
        if t.data.shape != s.data.shape:
            raise ValueError(f"shape mismatch for {k}: {t.data.shape} vs {s.data.shape}")
        t.data *= 1.0 - tau
        t.data += tau * s.data


def _by_episode(per_step: list, n_ep: int, n_agents: int) -> np.ndarray:
    """Stack per-step (N*n, W) tensors into an (N, T, n, W) constant array."""
    stacked = np.stack([t.data for t in per_step])  # (T, N*n, W)
    t_len, _, width = stacked.shape
    return stacked.reshape(t_len, n_ep, n_agents, width).transpose(1, 0, 2, 3)


@dataclass
class _Batch:
    obs: np.ndarray  # (N, T+1, n, obs_w)
    state: np.ndarray  # (N, T+1, state_w)
    actions: np.ndarray  # (N, T, n[, D])
    rewards: np.ndarray  # (N, T)
    terminal: np.ndarray  # (N, T)
    masks: np.ndarray  # (N, T+1, n, K)
    valid: np.ndarray  # (N, T)


def collate(episodes: list[Episode]) -> _Batch:
    n_ep = len(episodes)
    t_max = max(ep.length for ep in episodes)

    def pad(field: str, steps: int, fill: float = 0.0) -> np.ndarray:
        proto = getattr(episodes[0], field)
        out = np.full((n_ep, steps) + proto.shape[1:], fill, dtype=proto.dtype)
        for i, ep in enumerate(episodes):
            arr = getattr(ep, field)
            out[i, : len(arr)] = arr
        return out

    valid = np.zeros((n_ep, t_max))
    for i, ep in enumerate(episodes):
        valid[i, : ep.length] = 1.0
    return _Batch(
        obs=pad("obs", t_max + 1),
        state=pad("state", t_max + 1),
        actions=pad("actions", t_max),
        rewards=pad("rewards", t_max),
        terminal=pad("terminal", t_max),
        masks=pad("masks", t_max + 1, fill=1.0),  # keep padded rows soft-maxable
        valid=valid,
    )


# ---------------------------------------------------------------------------
# learners


class _LearnerBase:
    """Shared plumbing: nets, targets, optimizers, buffer, episode rollout."""

    def __init__(self, env, cfg: LearnerConfig, mixer_name: str, seed: int):
        self.cfg = cfg
        self.desc: DecPomdpDescriptor = env.descriptor
        self.algo = "base"
        self.mixer_name = mixer_name
        self.seed = seed
        init_ss, rollout_ss, buffer_ss = np.random.SeedSequence(seed).spawn(3)
        init_rng = np.random.default_rng(init_ss)
        self.rollout_rng = np.random.default_rng(rollout_ss)
        self.buffer_rng = np.random.default_rng(buffer_ss)

        d = self.desc
        self.critic = ag.SharedCritic(d, init_rng)
        self.mixer = mx.make_mixer(mixer_name, d.n_agents, d.state_width, init_rng)
        self.policies = self._make_policies(init_rng)

        self.critic_target = ag.SharedCritic(d, init_rng)
        self.critic_target.params = ag.clone_params(self.critic.params)
        self.mixer_target = mx.make_mixer(mixer_name, d.n_agents, d.state_width, init_rng)
        self.mixer_target.params = ag.clone_params(self.mixer.params)
        self.policies_target = self._make_policies(init_rng)
        for pol, pol_t in zip(self.policies, self.policies_target):
            pol_t.params = ag.clone_params(pol.params)

        critic_side = {f"critic.{k}": v for k, v in self.critic.params.items()}
        critic_side.update({f"mixer.{k}": v for k, v in self.mixer.params.items()})
        self.opt_critic = Rmsprop(critic_side, lr=cfg.lr_critic)
        self.opt_actors = [Rmsprop(p.params, lr=cfg.lr_actor) for p in self.policies]

        self.buffer = ReplayBuffer(cfg.buffer_capacity, self.buffer_rng)
        self.env_steps = 0
        self.episode_count = 0
        self.param_version = 0

    # --- subclass hooks ----------------------------------------------------
    def _make_policies(self, rng: np.random.Generator) -> list:
        return []

    def _behavior_actions(self, h_rows: Tensor, masks: np.ndarray, explore: bool, rng):
        raise NotImplementedError

    def update(self, episodes: list[Episode]) -> float:
        raise NotImplementedError

    # --- rollout -----------------------------------------------------------
    def _prev_action_encoding(self, actions: np.ndarray | None) -> np.ndarray:
        n = self.desc.n_agents
        if self.desc.discrete:
            enc = np.zeros((n, self.desc.n_actions))
            if actions is not None:
                enc[np.arange(n), actions.astype(int)] = 1.0
            return enc
        if actions is None:
            return np.zeros((n, self.desc.action_dim))
        return np.asarray(actions, dtype=np.float64).reshape(n, self.desc.action_dim)

    def _input_rows(self, obs: np.ndarray, prev: np.ndarray) -> np.ndarray:
        n = self.desc.n_agents
        return np.concatenate([obs.reshape(n, -1), prev, np.eye(n)], axis=1)

    def play_episode(self, env, explore: bool, rng: np.random.Generator) -> Episode:
        """Roll out one episode; `explore=False` plays the evaluation policy."""
        d = self.desc
        n = d.n_agents
        res = env.reset(int(rng.integers(2**31 - 1)))
        obs_seq = [np.stack(res.observations)]
        state_seq = [res.state]
        masks_seq = [np.ones((n, d.n_actions if d.discrete else 1))]
        act_seq, rew_seq, term_seq = [], [], []
        with ad.no_grad():
            h = self.critic.init_hidden(n)
            prev = None
            while not res.terminal:
                x = Tensor(self._input_rows(obs_seq[-1], self._prev_action_encoding(prev)))
                h = self.critic.encode(x, h)
                joint = self._behavior_actions(h, masks_seq[-1], explore, rng)
                res = env.step(joint)
                prev = np.asarray(joint)
                act_seq.append(prev)
                rew_seq.append(res.reward)
                term_seq.append(res.terminal)
                obs_seq.append(np.stack(res.observations))
                state_seq.append(res.state)
                masks_seq.append(np.ones((n, d.n_actions if d.discrete else 1)))
        return Episode(
            obs=np.stack(obs_seq),
            state=np.stack(state_seq),
            actions=np.stack(act_seq),
            rewards=np.asarray(rew_seq, dtype=np.float64),
            terminal=np.asarray(term_seq, dtype=bool),
            masks=np.stack(masks_seq),
            param_version=self.param_version,
        )

    def generate_episode(self, env) -> Episode:
        return self.play_episode(env, explore=True, rng=self.rollout_rng)

    # --- shared update machinery --------------------------------------------
    def _unroll_eval(self, batch: _Batch):
        """Evaluate-trunk unroll over all timesteps; returns graph tensors."""
        n_ep, t_len = batch.valid.shape
        n = self.desc.n_agents
        rows = n_ep * n
        ids = np.tile(np.eye(n), (n_ep, 1))
        h = self.critic.init_hidden(rows)
        hs, qs = [], []
        for t in range(t_len):
            prev = self._prev_enc_batch(batch, t)
            x = np.concatenate([batch.obs[:, t].reshape(rows, -1), prev, ids], axis=1)
            h = self.critic.encode(Tensor(x), h)
            hs.append(h)
            if self.desc.discrete:
                qs.append(self.critic.q_values(h))
        return hs, qs

    def _unroll_target(self, batch: _Batch):
        """Target-trunk hidden states for every step 0..T (no gradients)."""
        n_ep, t_len = batch.valid.shape
        n = self.desc.n_agents
        rows = n_ep * n
        ids = np.tile(np.eye(n), (n_ep, 1))
        hs = []
        with ad.no_grad():
            h = self.critic_target.init_hidden(rows)
            for t in range(t_len + 1):
                prev = self._prev_enc_batch(batch, t)
                x = np.concatenate([batch.obs[:, t].reshape(rows, -1), prev, ids], axis=1)
                h = self.critic_target.encode(Tensor(x), h)
                hs.append(h)
        return hs

    def _prev_enc_batch(self, batch: _Batch, t: int) -> np.ndarray:
        n_ep = batch.valid.shape[0]
        n = self.desc.n_agents
        rows = n_ep * n
        if t == 0:
            width = self.desc.n_actions if self.desc.discrete else self.desc.action_dim
            return np.zeros((rows, width))
        if self.desc.discrete:
            enc = np.zeros((rows, self.desc.n_actions))
            enc[np.arange(rows), batch.actions[:, t - 1].reshape(rows).astype(int)] = 1.0
            return enc
        return batch.actions[:, t - 1].reshape(rows, self.desc.action_dim)

    def _critic_step(self, q_tot_t: list[Tensor], targets: np.ndarray, batch: _Batch) -> float:
        """One descent step on mean squared TD error over all valid steps."""
        n_valid = batch.valid.sum()
        pieces = []
        for t, q_tot in enumerate(q_tot_t):
            delta = Tensor(targets[:, t]) - q_tot
            pieces.append(ad.tsum(ad.mul(ad.mul(delta, delta), Tensor(batch.valid[:, t]))))
        loss = pieces[0]
        for piece in pieces[1:]:
            loss = loss + piece
        loss = ad.scale(loss, 1.0 / n_valid)
        self.opt_critic.zero_grad()
        ad.backward(loss)
        self.opt_critic.step(direction=-1)
        return float(loss.data)

    def _signs(self, q_taken: np.ndarray, states: np.ndarray) -> np.ndarray:
        """sgn(d Q_tot / d Q_a) per (episode, step, agent) at taken actions."""
        n_ep, t_len, n = q_taken.shape
        flat_q = q_taken.reshape(n_ep * t_len, n)
        flat_s = states.reshape(n_ep * t_len, -1)
        ad.zero_grad(self.mixer.params)
        grads = mx.grad_wrt_agent_q(self.mixer, flat_q, flat_s)
        ad.zero_grad(self.mixer.params)
        return mx.sgn_array(grads).reshape(n_ep, t_len, n)

    def _soft_update_all(self) -> None:
        tau = self.cfg.tau_soft
        soft_update(self.critic_target.params, self.critic.params, tau)
        soft_update(self.mixer_target.params, self.mixer.params, tau)
        for pol_t, pol in zip(self.policies_target, self.policies):
            soft_update(pol_t.params, pol.params, tau)

    def train_iteration(self, env) -> float | None:
        """One outer-loop pass: rollout, store, then learn if enough data."""
        episode = self.generate_episode(env)
        self.buffer.add(episode)
        self.env_steps += episode.length
        self.episode_count += 1
        if len(self.buffer) < self.cfg.batch_episodes:
            return None
        return self.update(self.buffer.sample(self.cfg.batch_episodes))


class DiscreteActorCriticLearner(_LearnerBase):
    """Stochastic per-agent policies trained with the sign-modulated
    all-actions gradient; critic bootstraps on the target-policy state value."""

    def __init__(self, env, cfg: LearnerConfig, mixer_name: str = "nqmix", seed: int = 0):
        if not env.descriptor.discrete:
            raise ValueError("discrete learner needs a discrete action space")
        super().__init__(env, cfg, mixer_name, seed)
        self.algo = mixer_name if mixer_name in ("nqmix", "nqmix_m") else f"nqmix+{mixer_name}"

    def _make_policies(self, rng):
        return [ag.DiscretePolicy(self.desc.n_actions, rng) for _ in range(self.desc.n_agents)]

    def _behavior_actions(self, h_rows, masks, explore, rng):
        joint = []
        for a, policy in enumerate(self.policies):
            h_a = Tensor(h_rows.data[a : a + 1])
            probs = policy.probs(h_a, masks[a : a + 1].astype(bool)).data[0]
            if explore:
                joint.append(ag.sample_action(probs, rng))
            else:
                joint.append(int(np.argmax(probs)))
        return joint

    def bootstrap_targets(self, batch: _Batch) -> np.ndarray:
        """Per-transition targets r + gamma * V'_tot, where V'_tot mixes the
        target-policy expected values of the target critic at the next step."""
        n_ep, t_len = batch.valid.shape
        n, k = self.desc.n_agents, self.desc.n_actions
        hs_target = self._unroll_target(batch)
        v_tot_next = np.zeros((n_ep, t_len))
        for t in range(t_len):
            h_next = hs_target[t + 1]
            q_next = self.critic_target.q_values(h_next).data.reshape(n_ep, n, k)
            probs = np.zeros((n_ep, n, k))
            for a, policy in enumerate(self.policies_target):
                h_a = Tensor(h_next.data.reshape(n_ep, n, -1)[:, a])
                probs[:, a] = policy.probs(h_a, batch.masks[:, t + 1, a].astype(bool)).data
            v_next = expected_state_value(probs, q_next)  # (n_ep, n)
            v_tot_next[:, t] = self.mixer_target.mix(
                Tensor(v_next), Tensor(batch.state[:, t + 1])
            ).data
        return td_target(batch.rewards, self.cfg.gamma, v_tot_next, batch.terminal)

    def update(self, episodes: list[Episode]) -> float:
        batch = collate(episodes)
        n_ep, t_len = batch.valid.shape
        n, k = self.desc.n_agents, self.desc.n_actions
        rows = n_ep * n

        # evaluate-side forward pass (graph kept for the critic step)
        hs, qs = self._unroll_eval(batch)
        q_taken_t, q_tot_t = [], []
        for t in range(t_len):
            taken = ad.gather(qs[t], batch.actions[:, t].reshape(rows).astype(int))
            q_taken = ad.reshape(taken, (n_ep, n))
            q_taken_t.append(q_taken)
            q_tot_t.append(self.mixer.mix(q_taken, Tensor(batch.state[:, t])))

        targets = self.bootstrap_targets(batch)

        # pre-update values feed the actor: snapshot before the critic step
        q_taken_data = np.stack([q.data for q in q_taken_t], axis=1)  # (N, T, n)
        q_data = _by_episode(qs, n_ep, n)  # (N, T, n, K)
        h_data = _by_episode(hs, n_ep, n)  # (N, T, n, H)
        signs = self._signs(q_taken_data, batch.state[:, :t_len])

        loss = self._critic_step(q_tot_t, targets, batch)
        self.actor_update(h_data, q_data, signs, batch.masks[:, :t_len], batch.valid)
        self._soft_update_all()
        self.param_version += 1
        return loss

    def actor_update(
        self,
        h_data: np.ndarray,  # (N, T, n, hidden), constants
        q_data: np.ndarray,  # (N, T, n, K), constants
        signs: np.ndarray,  # (N, T, n)
        masks: np.ndarray,  # (N, T, n, K)
        valid: np.ndarray,  # (N, T)
    ) -> None:
        """One sign-modulated all-actions ascent step per agent policy."""
        n_ep, t_len, _, k = q_data.shape
        discount_i = discount_weights(self.cfg.gamma, t_len)
        for a, (policy, opt) in enumerate(zip(self.policies, self.opt_actors)):
            weights = (signs[:, :, a] * discount_i * valid).reshape(-1)
            grads = all_actions_gradient(
                policy,
                h_data[:, :, a].reshape(n_ep * t_len, -1),
                q_data[:, :, a].reshape(n_ep * t_len, k),
                masks[:, :, a].reshape(n_ep * t_len, k).astype(bool),
                weights,
            )
            # mean over episodes (sum over time): rescale the row mean
            opt.zero_grad()
            for name, p in policy.params.items():
                p.grad = grads[name] * t_len
            opt.step(direction=1)


class QLearningLearner(_LearnerBase):
    """Monotone-mixing baseline: epsilon-greedy behavior, per-agent greedy
    bootstrap (the decomposable joint argmax), squared TD error descent."""

    def __init__(self, env, cfg: LearnerConfig, mixer_name: str = "qmix", seed: int = 0):
        if not env.descriptor.discrete:
            raise ValueError("Q-learning baseline needs a discrete action space")
        super().__init__(env, cfg, mixer_name, seed)
        self.algo = mixer_name

    def epsilon(self) -> float:
        anneal = EPSILON_ANNEAL_FRACTION * max(self.cfg.total_steps, 1)
        frac = min(self.env_steps / anneal, 1.0)
        return EPSILON_START + frac * (EPSILON_FINAL - EPSILON_START)

    def _behavior_actions(self, h_rows, masks, explore, rng):
        q = self.critic.q_values(h_rows).data
        joint = []
        eps = self.epsilon() if explore else 0.0
        for a in range(self.desc.n_agents):
            avail = np.flatnonzero(masks[a])
            if explore and rng.random() < eps:
                joint.append(int(avail[rng.integers(len(avail))]))
            else:
                masked = np.where(masks[a] > 0, q[a], -np.inf)
                joint.append(int(np.argmax(masked)))
        return joint

    def bootstrap_targets(self, batch: _Batch) -> np.ndarray:
        """Targets r + gamma * Q'_tot at the per-agent greedy next actions
        (which the monotone mixers make equal to the joint greedy value)."""
        n_ep, t_len = batch.valid.shape
        n, k = self.desc.n_agents, self.desc.n_actions
        hs_target = self._unroll_target(batch)
        q_tot_next = np.zeros((n_ep, t_len))
        for t in range(t_len):
            q_next = self.critic_target.q_values(hs_target[t + 1]).data.reshape(n_ep, n, k)
            avail = batch.masks[:, t + 1] > 0
            q_best = np.where(avail, q_next, -np.inf).max(axis=2)  # per-agent greedy
            q_tot_next[:, t] = self.mixer_target.mix(
                Tensor(q_best), Tensor(batch.state[:, t + 1])
            ).data
        return td_target(batch.rewards, self.cfg.gamma, q_tot_next, batch.terminal)

    def update(self, episodes: list[Episode]) -> float:
        batch = collate(episodes)
        n_ep, t_len = batch.valid.shape
        n = self.desc.n_agents
        rows = n_ep * n

        hs, qs = self._unroll_eval(batch)
        q_tot_t = []
        for t in range(t_len):
            taken = ad.gather(qs[t], batch.actions[:, t].reshape(rows).astype(int))
            q_tot_t.append(self.mixer.mix(ad.reshape(taken, (n_ep, n)), Tensor(batch.state[:, t])))

        targets = self.bootstrap_targets(batch)
        loss = self._critic_step(q_tot_t, targets, batch)
        self._soft_update_all()
        self.param_version += 1
        return loss


class ContinuousActorCriticLearner(_LearnerBase):
    """Deterministic per-agent policies trained by the sign-modulated
    value-gradient chain; behavior adds clipped Gaussian noise."""

    def __init__(self, env, cfg: LearnerConfig, mixer_name: str = "nqmix", seed: int = 0):
        if env.descriptor.discrete:
            raise ValueError("continuous learner needs a continuous action space")
        super().__init__(env, cfg, mixer_name, seed)
        self.algo = "nqmix_continuous"

    def _make_policies(self, rng):
        d = self.desc
        return [
            ag.ContinuousPolicy(d.action_dim, d.action_low, d.action_high, rng)
            for _ in range(d.n_agents)
        ]

    def _behavior_actions(self, h_rows, masks, explore, rng):
        d = self.desc
        joint = []
        for a, policy in enumerate(self.policies):
            u = policy.action(Tensor(h_rows.data[a : a + 1])).data[0]
            if explore:
                u = u + rng.normal(0.0, NOISE_SCALE * (d.action_high - d.action_low), size=u.shape)
                u = np.clip(u, d.action_low, d.action_high)
            joint.append(u)
        return joint

    def bootstrap_targets(self, batch: _Batch) -> np.ndarray:
        """Targets r + gamma * Q'_tot at the target-policy next actions."""
        n_ep, t_len = batch.valid.shape
        n, dim = self.desc.n_agents, self.desc.action_dim
        rows = n_ep * n
        hs_target = self._unroll_target(batch)
        q_tot_next = np.zeros((n_ep, t_len))
        for t in range(t_len):
            h_next = hs_target[t + 1]
            h_by_agent = h_next.data.reshape(n_ep, n, -1)
            u_next = np.zeros((n_ep, n, dim))
            for a, policy in enumerate(self.policies_target):
                u_next[:, a] = policy.action(Tensor(h_by_agent[:, a])).data
            q_next = self.critic_target.q_value(
                h_next, Tensor(u_next.reshape(rows, dim))
            ).data.reshape(n_ep, n)
            q_tot_next[:, t] = self.mixer_target.mix(
                Tensor(q_next), Tensor(batch.state[:, t + 1])
            ).data
        return td_target(batch.rewards, self.cfg.gamma, q_tot_next, batch.terminal)

    def update(self, episodes: list[Episode]) -> float:
        batch = collate(episodes)
        n_ep, t_len = batch.valid.shape
        n, dim = self.desc.n_agents, self.desc.action_dim
        rows = n_ep * n

        hs, _ = self._unroll_eval(batch)
        q_taken_t, q_tot_t = [], []
        for t in range(t_len):
            u = Tensor(batch.actions[:, t].reshape(rows, dim))
            q_taken = ad.reshape(self.critic.q_value(hs[t], u), (n_ep, n))
            q_taken_t.append(q_taken)
            q_tot_t.append(self.mixer.mix(q_taken, Tensor(batch.state[:, t])))

        targets = self.bootstrap_targets(batch)

        q_taken_data = np.stack([q.data for q in q_taken_t], axis=1)
        h_data = _by_episode(hs, n_ep, n)  # (N, T, n, H)
        signs = self._signs(q_taken_data, batch.state[:, :t_len])

        loss = self._critic_step(q_tot_t, targets, batch)
        self.actor_update(h_data, signs, batch.valid)
        self._soft_update_all()
        self.param_version += 1
        return loss

    def actor_update(self, h_data: np.ndarray, signs: np.ndarray, valid: np.ndarray) -> None:
        """Deterministic-policy ascent through the frozen value head."""
        n_ep, t_len = valid.shape
        discount_i = discount_weights(self.cfg.gamma, t_len)
        for a, (policy, opt) in enumerate(zip(self.policies, self.opt_actors)):
            h_rows = Tensor(np.ascontiguousarray(h_data[:, :, a].reshape(n_ep * t_len, -1)))
            u = policy.action(h_rows)
            q = self.critic.q_value(h_rows, u)
            weights = (signs[:, :, a] * discount_i * valid).reshape(-1)
            obj = ad.scale(ad.tsum(ad.mul(q, Tensor(weights))), t_len / (n_ep * t_len))
            opt.zero_grad()
            self.opt_critic.zero_grad()  # value-head grads from this pass are discarded
            ad.backward(obj)
            opt.step(direction=1)
            self.opt_critic.zero_grad()


def make_learner(env, algo: str, cfg: LearnerConfig, seed: int, mixer_override: str | None = None):
    if algo not in ALGO_NAMES:
        raise ValueError(f"unknown algo {algo!r}; choose from {ALGO_NAMES}")
    if algo in ("nqmix", "nqmix_m"):
        learner = DiscreteActorCriticLearner(env, cfg, mixer_override or algo, seed)
    elif algo in ("qmix", "vdn"):
        learner = QLearningLearner(env, cfg, mixer_override or algo, seed)
    else:
        learner = ContinuousActorCriticLearner(env, cfg, mixer_override or "nqmix", seed)
    learner.algo = algo
    return learner


# ---------------------------------------------------------------------------
# checkpointing (nets, optimizer statistics, RNG streams and the buffer,
# so a restored learner continues bit-exactly)


def _named_arrays(learner: _LearnerBase) -> dict[str, np.ndarray]:
    named: dict[str, np.ndarray] = {}

    def put(prefix: str, params: dict[str, Tensor]) -> None:
        for k, p in params.items():
            named[f"{prefix}.{k}"] = p.data

    put("critic", learner.critic.params)
    put("mixer", learner.mixer.params)
    put("target_critic", learner.critic_target.params)
    put("target_mixer", learner.mixer_target.params)
    for a, (pol, pol_t) in enumerate(zip(learner.policies, learner.policies_target)):
        put(f"policy{a}", pol.params)
        put(f"target_policy{a}", pol_t.params)
    for k, m in learner.opt_critic.mean_sq.items():
        named[f"opt_critic.m.{k}"] = m
    for a, opt in enumerate(learner.opt_actors):
        for k, m in opt.mean_sq.items():
            named[f"opt_actor{a}.m.{k}"] = m
    return named


def save_checkpoint(learner: _LearnerBase, path) -> None:
    named = _named_arrays(learner)
    episodes = learner.buffer.episodes()
    if episodes:
        for fname in ("obs", "state", "actions", "rewards", "terminal", "masks"):
            named[f"buffer.{fname}"] = np.concatenate([getattr(e, fname) for e in episodes])
        named["buffer.lengths"] = np.array([e.length for e in episodes], dtype=np.int64)
        named["buffer.versions"] = np.array([e.param_version for e in episodes], dtype=np.int64)
    meta = {
        "algo": learner.algo,
        "mixer_name": learner.mixer_name,
        "seed": learner.seed,
        "config": {k: getattr(learner.cfg, k) for k in vars(learner.cfg)},
        "env_steps": learner.env_steps,
        "episode_count": learner.episode_count,
        "param_version": learner.param_version,
        "opt_steps": [learner.opt_critic.step_count] + [o.step_count for o in learner.opt_actors],
        "rollout_rng": learner.rollout_rng.bit_generator.state,
        "buffer_rng": learner.buffer_rng.bit_generator.state,
        "n_buffer_episodes": len(episodes),
    }
    ag.save_params(path, named, meta)


def load_checkpoint(path, env) -> _LearnerBase:
    named, meta = ag.load_params(path)
    cfg = LearnerConfig(**meta["config"])
    learner = make_learner(env, meta["algo"], cfg, meta["seed"], mixer_override=meta["mixer_name"])

    def fill(prefix: str, params: dict[str, Tensor]) -> None:
        for k, p in params.items():
            p.data[...] = named[f"{prefix}.{k}"]

    fill("critic", learner.critic.params)
    fill("mixer", learner.mixer.params)
    fill("target_critic", learner.critic_target.params)
    fill("target_mixer", learner.mixer_target.params)
    for a, (pol, pol_t) in enumerate(zip(learner.policies, learner.policies_target)):
        fill(f"policy{a}", pol.params)
        fill(f"target_policy{a}", pol_t.params)
    for k in learner.opt_critic.mean_sq:
        learner.opt_critic.mean_sq[k][...] = named[f"opt_critic.m.{k}"]
    for a, opt in enumerate(learner.opt_actors):
        for k in opt.mean_sq:
            opt.mean_sq[k][...] = named[f"opt_actor{a}.m.{k}"]
    learner.env_steps = meta["env_steps"]
    learner.episode_count = meta["episode_count"]
    learner.param_version = meta["param_version"]
    learner.opt_critic.step_count = meta["opt_steps"][0]
    for opt, count in zip(learner.opt_actors, meta["opt_steps"][1:]):
        opt.step_count = count
    learner.rollout_rng.bit_generator.state = meta["rollout_rng"]
    learner.buffer_rng.bit_generator.state = meta["buffer_rng"]
    if meta["n_buffer_episodes"]:
        lengths = named["buffer.lengths"]
        versions = named["buffer.versions"]
        bounds = np.cumsum(lengths)
        obs_bounds = np.cumsum(lengths + 1)
        start = obs_start = 0
        for i, t in enumerate(lengths):
            learner.buffer.add(
                Episode(
                    obs=named["buffer.obs"][obs_start : obs_bounds[i]],
                    state=named["buffer.state"][obs_start : obs_bounds[i]],
                    actions=named["buffer.actions"][start : bounds[i]],
                    rewards=named["buffer.rewards"][start : bounds[i]],
                    terminal=named["buffer.terminal"][start : bounds[i]].astype(bool),
                    masks=named["buffer.masks"][obs_start : obs_bounds[i]],
                    param_version=int(versions[i]),
                )
            )
            start, obs_start = bounds[i], obs_bounds[i]
    return learner


def train(env, algo: str, cfg: LearnerConfig, seed: int, evaluate_fn=None, stop_on_success=False,
          learner: _LearnerBase | None = None):
    """Generator interleaving rollouts, updates and periodic evaluation.

    Yields one metrics dict per evaluation point; `evaluate_fn(learner)`
    must return (mean_return, return_stddev, success_rate).
    """
    if learner is None:
        learner = make_learner(env, algo, cfg, seed)
    next_eval = cfg.eval_interval_steps
    while learner.env_steps < cfg.total_steps:
        learner.train_iteration(env)
        if evaluate_fn is not None and learner.env_steps >= next_eval:
            mean_ret, std_ret, success = evaluate_fn(learner)
            yield {
                "env_steps": learner.env_steps,
                "episode_count": learner.episode_count,
                "mean_eval_return": mean_ret,
                "eval_return_stddev": std_ret,
                "mean_eval_success": success,
                "seed": seed,
                "learner": learner,
            }
            interval = cfg.eval_interval_steps
            next_eval = (learner.env_steps // interval + 1) * interval
            if stop_on_success and success >= 0.95:
                return
