import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pregrasp.env import ACTION_BOUND, EnvConfig, PregraspEnv
from pregrasp.nn import MlpParams, mlp_layout
from pregrasp.sac import (
    ACT_DIM,
    LOG_BOUND_VOLUME,
    LOG_STD_MIN,
    OBS_DIM,
    Batch,
    ReplayBuffer,
    SacAgent,
    SacConfig,
    Transition,
    alpha_loss_and_grad,
    critic_target,
    policy_mean,
    policy_sample,
    q_value,
    sac_update,
    squashed_gaussian,
)
from pregrasp.training import TrainSettings, train

from gradient_checks import check_many

MU = np.array([0.3, -0.5, 0.1])
LOG_STD = np.array([-0.4, 0.2, -1.0])


def constant_actor(mu=MU, log_std=LOG_STD) -> MlpParams:
    """Actor whose heads ignore the observation: only the output biases are set."""
    p = MlpParams(mlp_layout(OBS_DIM, 2 * ACT_DIM))
    p.biases[-1][...] = np.concatenate([mu, log_std])
    return p


def obs(n=1, seed=0):
    return np.random.default_rng(seed).uniform(-0.3, 0.3, (n, OBS_DIM))


def test_log_bound_volume():
    assert LOG_BOUND_VOLUME == pytest.approx(math.log(0.025 * 0.025 * 0.01), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_actions_inside_bounds(seed):
    rng = np.random.default_rng(seed)
    agent = SacAgent.create(SacConfig(), rng)
    agent.actor.flat *= 10.0
    a, logp = policy_sample(agent.actor, obs(16, seed), rng)
    assert np.all(np.abs(a) <= ACTION_BOUND)
    assert np.all(np.isfinite(logp))


def test_vanishing_std_gives_mean_action():
    actor = constant_actor(log_std=np.full(3, LOG_STD_MIN - 5))
    eps = np.random.default_rng(0).normal(size=(5, ACT_DIM))
    s = squashed_gaussian(actor, obs(5), eps)
    assert np.allclose(s.action, ACTION_BOUND * np.tanh(MU), atol=1e-12)
    assert np.allclose(policy_mean(actor, obs(5)), ACTION_BOUND * np.tanh(MU), atol=1e-15)


def test_policy_mean_of_zero_actor_is_zero():
    assert np.array_equal(policy_mean(MlpParams(mlp_layout(OBS_DIM, 6)), obs(3)), np.zeros((3, 3)))


def _density_at_eps_zero(k):
    std = math.exp(LOG_STD[k])
    t = math.tanh(MU[k])
    return 1.0 / (math.sqrt(2 * math.pi) * std * ACTION_BOUND[k] * (1 - t * t))


def test_log_prob_integrates_to_one_along_an_axis():
    # integrate the joint density over a_0 with eps_1 = eps_2 = 0; the result is
    # the product of the other two marginal densities at those points
    actor = constant_actor()
    std0 = math.exp(LOG_STD[0])
    u = np.linspace(MU[0] - 14 * std0, MU[0] + 14 * std0, 40001)
    eps = np.zeros((u.size, ACT_DIM))
    eps[:, 0] = (u - MU[0]) / std0
    s = squashed_gaussian(actor, np.zeros((u.size, OBS_DIM)), eps)
    da_du = ACTION_BOUND[0] * (1 - np.tanh(u) ** 2)
    integral = np.trapezoid(np.exp(s.log_prob) * da_du, u)
    assert integral == pytest.approx(_density_at_eps_zero(1) * _density_at_eps_zero(2), rel=1e-6)


def test_log_prob_unit_shift():
    s = squashed_gaussian(constant_actor(), obs(), np.zeros((1, 3)))
    assert s.log_prob_unit[0] - s.log_prob[0] == pytest.approx(LOG_BOUND_VOLUME, abs=1e-12)
    expected = sum(math.log(_density_at_eps_zero(k)) for k in range(3))
    assert s.log_prob[0] == pytest.approx(expected, abs=1e-12)


def _single_batch(absorbing=0.0, reward=0.7):
    o = np.array([[0.05, -0.1, 0.18, -2.75, 0.21, 0.03, 0.0]])
    return Batch(o, np.array([[0.01, -0.02, 0.005]]), np.array([reward]), o + 0.01, np.array([absorbing]))


def test_zero_discount_zero_alpha_target_is_reward():
    cfg = SacConfig(gamma=1e-300, fixed_alpha=0.0)
    agent = SacAgent.create(cfg, np.random.default_rng(0))
    batch = Batch(obs(20), np.zeros((20, 3)), np.linspace(-1, 1, 20), obs(20, 1), np.zeros(20))
    y, _, _ = critic_target(agent.target1, agent.target2, agent.actor, 0.0, cfg.gamma, batch,
                            np.zeros((20, 3)))
    assert np.allclose(y, batch.rew, atol=1e-250)


def _tiny_q(p: MlpParams, x: np.ndarray) -> float:
    w1, b1, w2, b2 = p.weights[0], p.biases[0], p.weights[1], p.biases[1]
    h = [math.tanh(sum(x[i] * w1[i, j] for i in range(len(x))) + b1[j]) for j in range(w1.shape[1])]
    return sum(h[j] * w2[j, 0] for j in range(len(h))) + b2[0]


def test_hand_computed_single_target():
    cfg = SacConfig(hidden=(2,))
    agent = SacAgent.create(cfg, np.random.default_rng(7))
    agent.target2.flat += 0.05
    agent.actor.biases[-1][3:] = LOG_STD
    batch = _single_batch()
    eps = np.array([[0.4, -1.1, 0.2]])
    alpha, gamma = 0.2, 0.99
    y, _, _ = critic_target(agent.target1, agent.target2, agent.actor, alpha, gamma, batch, eps)

    # independent evaluation of the actor output, sample and unit log-density
    x = batch.next_obs[0]
    w1, b1, w2, b2 = agent.actor.weights[0], agent.actor.biases[0], agent.actor.weights[1], agent.actor.biases[1]
    h = [math.tanh(sum(x[i] * w1[i, j] for i in range(OBS_DIM)) + b1[j]) for j in range(2)]
    out = [sum(h[j] * w2[j, k] for j in range(2)) + b2[k] for k in range(6)]
    logp_unit = 0.0
    act = []
    for k in range(3):
        ls = min(max(out[3 + k], -20.0), 2.0)
        u = out[k] + math.exp(ls) * eps[0, k]
        act.append(math.tanh(u))
        logp_unit += -0.5 * eps[0, k] ** 2 - ls - 0.5 * math.log(2 * math.pi) - math.log(1 - math.tanh(u) ** 2)
    xin = list(x) + act
    q = min(_tiny_q(agent.target1, np.array(xin)), _tiny_q(agent.target2, np.array(xin)))
    assert y[0] == pytest.approx(0.7 + gamma * (q - alpha * logp_unit), abs=1e-10)

    y_abs, _, _ = critic_target(agent.target1, agent.target2, agent.actor, alpha, gamma,
                                _single_batch(absorbing=1.0), eps)
    assert y_abs[0] == 0.7


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_target_uses_the_smaller_critic(seed):
    rng = np.random.default_rng(seed)
    agent = SacAgent.create(SacConfig(), rng)
    agent.target2.flat += 0.1 * rng.normal(size=agent.target2.flat.size)
    n = 16
    batch = Batch(obs(n, seed), np.zeros((n, 3)), rng.normal(size=n), obs(n, seed + 1), np.zeros(n))
    y, q1, q2 = critic_target(agent.target1, agent.target2, agent.actor, 0.0, 0.9, batch,
                              rng.normal(size=(n, 3)))
    assert np.all(y <= batch.rew + 0.9 * q1 + 1e-12)
    assert np.all(y <= batch.rew + 0.9 * q2 + 1e-12)
    assert np.allclose(y, batch.rew + 0.9 * np.minimum(q1, q2), atol=1e-12)


def test_critic_fits_a_bandit_batch():
    rng = np.random.default_rng(0)
    n = 100
    o = rng.uniform(-0.3, 0.3, (n, OBS_DIM))
    a = rng.uniform(-1, 1, (n, 3)) * ACTION_BOUND
    r = np.sin(3 * o[:, 0]) + a[:, 0] / ACTION_BOUND[0]
    batch = Batch(o, a, r, o, np.ones(n))
    cfg = SacConfig()
    agent = SacAgent.create(cfg, rng)
    first = sac_update(agent, batch, cfg, rng).critic1_loss
    for _ in range(999):
        last = sac_update(agent, batch, cfg, rng).critic1_loss
    assert last <= first / 10
    assert np.mean((q_value(agent.critic1, o, a) - r) ** 2) <= first / 10


@settings(max_examples=50)
@given(mean_logp=st.floats(-30, 30), la=st.floats(-5, 2))
def test_temperature_gradient_direction(mean_logp, la):
    # entropy above target pushes log_alpha down under descent, below target pushes it up
    _, g = alpha_loss_and_grad(la, np.full(4, mean_logp), -3.0)
    entropy = -mean_logp
    if entropy > -3.0:
        assert g > 0
    elif entropy < -3.0:
        assert g < 0


def test_fixed_alpha_is_not_updated():
    cfg = SacConfig(fixed_alpha=0.1)
    rng = np.random.default_rng(1)
    agent = SacAgent.create(cfg, rng)
    batch = Batch(obs(8), np.zeros((8, 3)), np.zeros(8), obs(8, 2), np.zeros(8))
    info = sac_update(agent, batch, cfg, rng)
    assert agent.log_alpha == 0.0 and info.alpha == 0.1


def test_targets_track_critics_by_polyak():
    cfg = SacConfig()
    rng = np.random.default_rng(2)
    agent = SacAgent.create(cfg, rng)
    before = agent.target1.flat.copy()
    batch = Batch(obs(8), np.zeros((8, 3)), np.ones(8), obs(8, 2), np.zeros(8))
    sac_update(agent, batch, cfg, rng)
    assert np.allclose(agent.target1.flat, 0.995 * before + 0.005 * agent.critic1.flat, atol=1e-15)


def test_replay_fifo_and_sampling():
    buf = ReplayBuffer(3)
    for i in range(5):
        buf.store(Transition(np.full(7, i), np.zeros(3), float(i), np.zeros(7), False))
    assert len(buf) == 3
    assert sorted(buf.rew.tolist()) == [2.0, 3.0, 4.0]
    idx = buf.sample_indices(np.random.default_rng(0), 1000)
    assert idx.min() >= 0 and idx.max() <= 2 and len(set(idx.tolist())) == 3
    with pytest.raises(ValueError):
        ReplayBuffer(2).sample(np.random.default_rng(0), 1)
    with pytest.raises(ValueError):
        buf.store(Transition(np.full(7, np.nan), np.zeros(3), 0.0, np.zeros(7), False))


def test_config_validation():
    with pytest.raises(ValueError):
        SacConfig(gamma=1.0)
    with pytest.raises(ValueError):
        SacConfig(batch_size=0)


def test_all_gradients_match_finite_differences():
    worst = check_many(range(100))
    assert set(worst) == {"actor", "critic1", "critic2", "log_alpha"}
    assert max(worst.values()) < 1e-4


def _short_run(tmp_path, name, steps):
    cfg = SacConfig(total_env_steps=steps, warmup_steps=50, batch_size=16, hidden=(16, 16))
    return train(cfg, lambda: PregraspEnv(EnvConfig(horizon=20)), 3, tmp_path / name,
                 settings=TrainSettings(eval_every=100, eval_episodes=2))


def test_zero_step_run_writes_metrics(tmp_path):
    res = _short_run(tmp_path, "zero", 0)
    assert res.metrics_path.exists()
    assert res.agent.updates == 0


def test_training_is_deterministic(tmp_path):
    a = _short_run(tmp_path, "a", 200)
    b = _short_run(tmp_path, "b", 200)
    assert a.agent.updates > 0
    assert a.metrics_path.read_bytes() == b.metrics_path.read_bytes()
    assert a.agent.actor == b.agent.actor
