"""Soft Actor-Critic with a tanh-squashed Gaussian policy and twin critics.

All gradients are written out by hand on top of :mod:`pregrasp.nn`; the loss
functions are exposed separately so they can be checked against finite
differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .env import ACTION_BOUND
from .nn import (
    HIDDEN,
    AdamState,
    MlpParams,
    adam_update,
    mlp_backward,
    mlp_forward,
    mlp_init,
    mlp_layout,
    polyak_update,
)

OBS_DIM = 7
ACT_DIM = 3
LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
# log-density offset between the bound-scaled action and the unit box a / bound
LOG_BOUND_VOLUME = float(np.log(ACTION_BOUND).sum())


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class SacConfig:
    gamma: float = 0.99
    polyak: float = 0.995
    learning_rate: float = 1e-3
    batch_size: int = 100
    target_entropy: float = -3.0
    replay_capacity: int = 300_000
    warmup_steps: int = 1_000
    updates_per_env_step: int = 1
    total_env_steps: int = 250_000
    init_log_alpha: float = 0.0
    fixed_alpha: float | None = None
    hidden: tuple[int, ...] = HIDDEN

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.polyak < 1.0:
            raise ValueError("polyak must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.replay_capacity < 1 or self.warmup_steps < 0 or self.total_env_steps < 0:
            raise ValueError("replay/warmup/total step counts must be non-negative")
        if self.updates_per_env_step < 0 or self.learning_rate <= 0:
            raise ValueError("updates_per_env_step >= 0 and learning_rate > 0 required")


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    absorbing: bool


@dataclass
class Batch:
    obs: np.ndarray
    act: np.ndarray
    rew: np.ndarray
    next_obs: np.ndarray
    absorbing: np.ndarray

    def __len__(self) -> int:
        return len(self.rew)

    @classmethod
    def from_transitions(cls, items: list[Transition]) -> "Batch":
        return cls(
            np.array([t.state for t in items], dtype=float),
            np.array([t.action for t in items], dtype=float),
            np.array([t.reward for t in items], dtype=float),
            np.array([t.next_state for t in items], dtype=float),
            np.array([t.absorbing for t in items], dtype=float),
        )


class ReplayBuffer:
    """FIFO ring buffer with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int = OBS_DIM, act_dim: int = ACT_DIM):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.absorbing = np.zeros(capacity)
        self.ptr = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def store(self, t: Transition) -> None:
        values = (t.state, t.action, t.reward, t.next_state, float(t.absorbing))
        if not all(np.all(np.isfinite(v)) for v in values):
            raise ValueError("transition contains non-finite values")
        i = self.ptr
        self.obs[i], self.act[i], self.rew[i], self.next_obs[i], self.absorbing[i] = values
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=n)

    def sample(self, rng: np.random.Generator, n: int) -> Batch:
        idx = self.sample_indices(rng, n)
        return Batch(self.obs[idx], self.act[idx], self.rew[idx], self.next_obs[idx], self.absorbing[idx])


# ---------------------------------------------------------------------------
# policy
# ---------------------------------------------------------------------------


def _log1m_tanh_sq(u: np.ndarray) -> np.ndarray:
    # log(1 - tanh(u)^2), stable for large |u|
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


@dataclass
class PolicySample:
    action: np.ndarray  # scaled to the action bounds
    squashed: np.ndarray  # tanh(u) in (-1, 1)
    log_prob: np.ndarray  # density of the bound-scaled action

    # intermediates for the reparameterized gradient
    mu: np.ndarray
    raw_log_std: np.ndarray
    log_std: np.ndarray
    std: np.ndarray
    eps: np.ndarray
    u: np.ndarray
    cache: object

    @property
    def log_prob_unit(self) -> np.ndarray:
        """Density of the normalized action ``action / bound``, used for the entropy terms."""
        return self.log_prob + LOG_BOUND_VOLUME


def actor_heads(actor: MlpParams, obs: np.ndarray):
    out, cache = mlp_forward(actor, obs)
    mu = out[..., :ACT_DIM]
    raw = out[..., ACT_DIM:]
    return mu, raw, cache


def squashed_gaussian(actor: MlpParams, obs: np.ndarray, eps: np.ndarray) -> PolicySample:
    """Reparameterized sample ``bound * tanh(mu + std * eps)`` with its log-density."""
    mu, raw, cache = actor_heads(actor, obs)
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    std = np.exp(log_std)
    u = mu + std * eps
    t = np.tanh(u)
    logp = (-0.5 * eps**2 - log_std - _HALF_LOG_2PI - np.log(ACTION_BOUND) - _log1m_tanh_sq(u)).sum(axis=-1)
    return PolicySample(ACTION_BOUND * t, t, logp, mu, raw, log_std, std, eps, u, cache)


def policy_sample(actor: MlpParams, observation, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    obs = np.asarray(observation, dtype=float)
    eps = rng.standard_normal(obs.shape[:-1] + (ACT_DIM,))
    s = squashed_gaussian(actor, obs, eps)
    return s.action, s.log_prob


def policy_mean(actor: MlpParams, observation) -> np.ndarray:
    mu, _, _ = actor_heads(actor, np.asarray(observation, dtype=float))
    return ACTION_BOUND * np.tanh(mu)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def critic_input(obs: np.ndarray, act: np.ndarray) -> np.ndarray:
    return np.concatenate([obs, act / ACTION_BOUND], axis=-1)


def q_value(critic: MlpParams, obs: np.ndarray, act: np.ndarray) -> np.ndarray:
    out, _ = mlp_forward(critic, critic_input(obs, act))
    return out[..., 0]


def critic_target(
    target1: MlpParams, target2: MlpParams, actor: MlpParams, alpha: float,
    gamma: float, batch: Batch, eps_next: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Soft Bellman target. Returns (y, q1_target, q2_target)."""
    nxt = squashed_gaussian(actor, batch.next_obs, eps_next)
    q1 = q_value(target1, batch.next_obs, nxt.action)
    q2 = q_value(target2, batch.next_obs, nxt.action)
    soft = np.minimum(q1, q2) - alpha * nxt.log_prob_unit
    return batch.rew + gamma * (1.0 - batch.absorbing) * soft, q1, q2


def critic_loss_and_grad(critic: MlpParams, batch: Batch, y: np.ndarray) -> tuple[float, MlpParams]:
    out, cache = mlp_forward(critic, critic_input(batch.obs, batch.act))
    err = out[:, 0] - y
    loss = float(np.mean(err**2))
    grads, _ = mlp_backward(critic, cache, (2.0 / len(y)) * err[:, None])
    return loss, grads


def actor_loss_and_grad(
    actor: MlpParams, critic1: MlpParams, critic2: MlpParams, alpha: float,
    obs: np.ndarray, eps: np.ndarray,
) -> tuple[float, MlpParams, np.ndarray]:
    """``mean(alpha * log pi(a|s) - min(Q1, Q2)(s, a))`` through a reparameterized
    sample, with log pi taken on the normalized action.

    Returns the loss, the actor gradient, and the per-sample log-probabilities.
    """
    n = len(obs)
    s = squashed_gaussian(actor, obs, eps)
    x = critic_input(obs, s.action)
    o1, c1 = mlp_forward(critic1, x)
    o2, c2 = mlp_forward(critic2, x)
    use1 = o1[:, 0] <= o2[:, 0]
    qmin = np.where(use1, o1[:, 0], o2[:, 0])
    logp = s.log_prob_unit
    loss = float(np.mean(alpha * logp - qmin))

    # dQmin/d(critic input), only the selected critic contributes per row
    _, gx1 = mlp_backward(critic1, c1, use1[:, None].astype(float))
    _, gx2 = mlp_backward(critic2, c2, (~use1)[:, None].astype(float))
    dq_dt = (gx1 + gx2)[:, OBS_DIM:]  # critic sees tanh(u) = action / bound

    t = s.squashed
    d_u = (alpha * 2.0 * t - dq_dt * (1.0 - t**2)) / n
    d_logstd = -alpha / n + d_u * s.std * s.eps
    inside = (s.raw_log_std > LOG_STD_MIN) & (s.raw_log_std < LOG_STD_MAX)
    d_raw = d_logstd * inside
    grads, _ = mlp_backward(actor, s.cache, np.concatenate([d_u, d_raw], axis=-1))
    return loss, grads, logp


def alpha_loss_and_grad(log_alpha: float, log_prob: np.ndarray, target_entropy: float) -> tuple[float, float]:
    """``mean(alpha * (-log pi - target_entropy))``; gradient w.r.t. log_alpha."""
    alpha = math.exp(log_alpha)
    inner = float(np.mean(-log_prob - target_entropy))
    return alpha * inner, alpha * inner


# ---------------------------------------------------------------------------
# agent
# ---------------------------------------------------------------------------


@dataclass
class SacAgent:
    actor: MlpParams
    critic1: MlpParams
    critic2: MlpParams
    target1: MlpParams
    target2: MlpParams
    log_alpha: float
    actor_opt: AdamState
    critic1_opt: AdamState
    critic2_opt: AdamState
    alpha_opt: AdamState
    updates: int = 0

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    @classmethod
    def create(cls, config: SacConfig, rng: np.random.Generator) -> "SacAgent":
        actor = mlp_init(mlp_layout(OBS_DIM, 2 * ACT_DIM, config.hidden), rng)
        c1 = mlp_init(mlp_layout(OBS_DIM + ACT_DIM, 1, config.hidden), rng)
        c2 = mlp_init(mlp_layout(OBS_DIM + ACT_DIM, 1, config.hidden), rng)
        return cls(
            actor, c1, c2, c1.copy(), c2.copy(), config.init_log_alpha,
            AdamState.zeros(actor.flat.size), AdamState.zeros(c1.flat.size),
            AdamState.zeros(c2.flat.size), AdamState.zeros(1),
        )

    def effective_alpha(self, config: SacConfig) -> float:
        return config.fixed_alpha if config.fixed_alpha is not None else self.alpha


@dataclass
class UpdateInfo:
    critic1_loss: float
    critic2_loss: float
    actor_loss: float
    alpha_loss: float
    alpha: float
    target: np.ndarray = field(repr=False)
    target_q1: np.ndarray = field(repr=False)
    target_q2: np.ndarray = field(repr=False)
    entropy: float = 0.0


def sac_update(agent: SacAgent, batch: Batch, config: SacConfig, rng: np.random.Generator) -> UpdateInfo:
    """One gradient step on both critics, the actor and the temperature, then
    polyak-average the target critics. Mutates ``agent``."""
    n = len(batch)
    alpha = agent.effective_alpha(config)
    eps_next = rng.standard_normal((n, ACT_DIM))
    eps_now = rng.standard_normal((n, ACT_DIM))

    y, tq1, tq2 = critic_target(agent.target1, agent.target2, agent.actor, alpha,
                                config.gamma, batch, eps_next)
    l1, g1 = critic_loss_and_grad(agent.critic1, batch, y)
    l2, g2 = critic_loss_and_grad(agent.critic2, batch, y)
    if not (math.isfinite(l1) and math.isfinite(l2)):
        raise NonFiniteLoss(f"critic loss diverged: {l1}, {l2} after {agent.updates} updates")
    adam_update(agent.critic1_opt, agent.critic1.flat, g1.flat, config.learning_rate)
    adam_update(agent.critic2_opt, agent.critic2.flat, g2.flat, config.learning_rate)

    la, ga, logp = actor_loss_and_grad(agent.actor, agent.critic1, agent.critic2, alpha, batch.obs, eps_now)
    if not math.isfinite(la):
        raise NonFiniteLoss(f"actor loss diverged after {agent.updates} updates")
    adam_update(agent.actor_opt, agent.actor.flat, ga.flat, config.learning_rate)

    lt, gt = alpha_loss_and_grad(agent.log_alpha, logp, config.target_entropy)
    if config.fixed_alpha is None:
        la_vec = np.array([agent.log_alpha])
        adam_update(agent.alpha_opt, la_vec, np.array([gt]), config.learning_rate)
        agent.log_alpha = float(la_vec[0])

    polyak_update(agent.target1, agent.critic1, config.polyak)
    polyak_update(agent.target2, agent.critic2, config.polyak)
    agent.updates += 1
    return UpdateInfo(l1, l2, la, lt, alpha, y, tq1, tq2, float(np.mean(-logp)))
