"""Policy-learning agents: REINFORCE, PPO (clipped + KL-regularized), DDPG.

All agents flatten the environment's port-feature matrix, shift it by -0.5
(features live in [0, 1]), and emit one raw action per host. The environment
clamps raw actions; agents are told the clamped action they actually got.
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .nn import (AdamState, Mlp, OuState, ReplayBuffer, adam_step,
                 gaussian_logprob, ou_step, soft_update)


class AgentError(ValueError):
    pass


@dataclass
class AgentConfig:
    """Hyperparameters; defaults follow the published benchmark configuration."""

    algorithm: str = "ddpg"
    gamma: float = 0.99
    # Shared policy/value trunk for REINFORCE and PPO.
    hidden: tuple = (256, 256)
    activation: str = "tanh"
    init_log_std: float = math.log(0.3)
    # REINFORCE
    reinforce_lr: float = 1e-4
    # PPO
    use_gae: bool = True
    gae_lambda: float = 1.0
    kl_coeff: float = 0.2
    train_batch_size: int = 4000
    minibatch_size: int = 128
    num_sgd_iter: int = 30
    ppo_lr: float = 5e-5
    vf_coeff: float = 1.0
    entropy_coeff: float = 0.0
    clip_param: float = 0.3
    kl_target: float = 0.01
    # DDPG
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    noise_scale: float = 1.0
    tau: float = 1e-3
    target_update_every: int = 1
    prioritized_replay: bool = False
    actor_hidden: tuple = (400, 300)
    actor_activation: str = "relu"
    critic_hidden: tuple = (400, 300)
    critic_activation: str = "relu"
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    weight_decay: float = 1e-2
    critic_loss: str = "square"
    replay_capacity: int = 100_000
    batch_size: int = 64
    warmup: int = 1000
    # Exploration-noise annealing horizon (steps); None keeps scale constant.
    noise_decay_steps: int | None = None

    def replace(self, **kw):
        unknown = set(kw) - {f.name for f in fields(self)}
        if unknown:
            raise AgentError(f"unknown agent config keys: {sorted(unknown)}")
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return AgentConfig(**d)


def compute_gae(rewards, values, dones, gamma, lam):
    """Generalized advantage estimation; values has length T+1 (bootstrap).

    Returns (advantages, returns) with returns = advantages + values[:T].
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    T = len(rewards)
    if len(values) != T + 1 or len(dones) != T:
        raise AgentError("GAE input length mismatch")
    adv = np.zeros(T)
    acc = 0.0
    for t in reversed(range(T)):
        nonterm = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * nonterm - values[t]
        acc = delta + gamma * lam * nonterm * acc
        adv[t] = acc
    return adv, adv + values[:T]


def discounted_returns(rewards, gamma):
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in reversed(range(len(rewards))):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def _flat(state):
    return np.asarray(state, dtype=np.float64).reshape(-1) - 0.5


class BaseAgent:
    trains = True

    def __init__(self, state_shape, n_hosts, config, rng):
        self.state_dim = int(np.prod(state_shape))
        self.n_hosts = n_hosts
        self.config = config
        self.rng = rng

    def act(self, state, explore):
        raise NotImplementedError

    def observe(self, state, action, reward, next_state, done):
        """Feed back one transition; `action` is the env-clamped vector."""

    def _check_state(self, s):
        if s.shape[0] != self.state_dim:
            raise AgentError(
                f"state has {s.shape[0]} features, expected {self.state_dim}")


class NoneAgent(BaseAgent):
    """Baseline: the policy is ignored; hosts keep their full rate."""

    trains = False

    def __init__(self, state_shape, n_hosts, config=None, rng=None):
        super().__init__(state_shape, n_hosts, config or AgentConfig("none"), rng)

    def act(self, state, explore):
        return np.ones(self.n_hosts)


class _GaussianPolicyAgent(BaseAgent):
    """Shared machinery for REINFORCE and PPO: MLP mean + learned log_std."""

    def __init__(self, state_shape, n_hosts, config, rng):
        super().__init__(state_shape, n_hosts, config, rng)
        dims = [self.state_dim, *config.hidden, n_hosts]
        acts = [config.activation] * len(config.hidden) + ["identity"]
        self.policy = Mlp(dims, acts, rng)
        self.log_std = np.full(n_hosts, config.init_log_std)
        self._pending = None

    def _policy_mean(self, s):
        mean, cache = self.policy.forward(s)
        return mean, cache

    def act(self, state, explore):
        s = _flat(state)
        self._check_state(s)
        mean, _ = self._policy_mean(s)
        if not explore:
            return mean
        a = mean + np.exp(self.log_std) * self.rng.standard_normal(self.n_hosts)
        self._pending = (s, a, mean.copy())
        return a

    def _grad_logp_mean(self, mean, a):
        # d log N(a; mean, sigma) / d mean
        return (a - mean) / np.exp(2.0 * self.log_std)

    def _grad_logp_log_std(self, mean, a):
        z = (a - mean) / np.exp(self.log_std)
        return z * z - 1.0


class ReinforceAgent(_GaussianPolicyAgent):
    """Vanilla policy gradient on complete episodes, no baseline."""

    def __init__(self, state_shape, n_hosts, config, rng):
        super().__init__(state_shape, n_hosts, config, rng)
        self.opt = AdamState()
        self._episode = []

    def observe(self, state, action, reward, next_state, done):
        if self._pending is None:
            return  # exploitation step; nothing to learn from
        s, a_raw, _ = self._pending
        self._pending = None
        self._episode.append((s, a_raw, reward))
        if done:
            self._update()
            self._episode = []

    def _update(self):
        if not self._episode:
            raise AgentError("cannot update from an empty episode")
        S = np.stack([e[0] for e in self._episode])
        A = np.stack([e[1] for e in self._episode])
        R = np.array([e[2] for e in self._episode])
        G = discounted_returns(R, self.config.gamma)
        mean, cache = self.policy.forward(S)
        # Ascend sum_t logpi(a_t|s_t) * G_t.
        d_mean = -G[:, None] * self._grad_logp_mean(mean, A)
        grads, _ = self.policy.backward(cache, d_mean)
        d_log_std = -(G[:, None] * self._grad_logp_log_std(mean, A)).sum(axis=0)
        adam_step(self.policy.params + [self.log_std],
                  grads + [d_log_std], self.opt, self.config.reinforce_lr)


class PpoAgent(_GaussianPolicyAgent):
    """Clipped surrogate with a KL(old||new) penalty whose coefficient is
    adapted toward a KL target after each update round."""

    def __init__(self, state_shape, n_hosts, config, rng):
        super().__init__(state_shape, n_hosts, config, rng)
        dims = [self.state_dim, *config.hidden, 1]
        acts = [config.activation] * len(config.hidden) + ["identity"]
        self.value = Mlp(dims, acts, rng)
        self.opt = AdamState()
        self.kl_coeff = config.kl_coeff
        self._segment = []  # current-episode transitions
        self._batch = []  # finished segments awaiting an update
        self._batch_len = 0
        self.last_kl = None

    def observe(self, state, action, reward, next_state, done):
        if self._pending is None:
            return
        s, a_raw, mean_old = self._pending
        self._pending = None
        logp = gaussian_logprob(mean_old, self.log_std, a_raw)
        v, _ = self.value.forward(s)
        self._segment.append((s, a_raw, reward, mean_old, self.log_std.copy(),
                              logp, float(v[0])))
        if done:
            s2 = _flat(next_state)
            v_boot, _ = self.value.forward(s2)
            self._batch.append((self._segment, float(v_boot[0])))
            self._batch_len += len(self._segment)
            self._segment = []
            if self._batch_len >= self.config.train_batch_size:
                self._update()
                self._batch = []
                self._batch_len = 0

    def _update(self):
        cfg = self.config
        S, A, MeanOld, LogStdOld, LogpOld, Adv, Ret = [], [], [], [], [], [], []
        for segment, v_boot in self._batch:
            rew = [t[2] for t in segment]
            vals = [t[6] for t in segment] + [v_boot]
            dones = [0.0] * len(segment)  # horizon truncation bootstraps
            lam = cfg.gae_lambda if cfg.use_gae else 0.0
            adv, ret = compute_gae(rew, vals, dones, cfg.gamma, lam)
            for t, (s, a, _, m, ls, lp, _) in enumerate(segment):
                S.append(s)
                A.append(a)
                MeanOld.append(m)
                LogStdOld.append(ls)
                LogpOld.append(lp)
                Adv.append(adv[t])
                Ret.append(ret[t])
        S = np.stack(S)
        A = np.stack(A)
        MeanOld = np.stack(MeanOld)
        LogStdOld = np.stack(LogStdOld)
        LogpOld = np.array(LogpOld)
        Adv = np.array(Adv)
        Ret = np.array(Ret)
        Adv = (Adv - Adv.mean()) / (Adv.std() + 1e-8)
        if len(S) < cfg.minibatch_size:
            raise AgentError("train batch smaller than the SGD minibatch")

        n = len(S)
        params = self.policy.params + self.value.params + [self.log_std]
        for _ in range(cfg.num_sgd_iter):
            order = self.rng.permutation(n)
            for lo in range(0, n - cfg.minibatch_size + 1, cfg.minibatch_size):
                idx = order[lo:lo + cfg.minibatch_size]
                grads = self._minibatch_grads(S[idx], A[idx], MeanOld[idx],
                                              LogStdOld[idx], LogpOld[idx],
                                              Adv[idx], Ret[idx])
                adam_step(params, grads, self.opt, cfg.ppo_lr)

        kl = self._mean_kl(S, MeanOld, LogStdOld)
        self.last_kl = kl
        if kl > 1.5 * cfg.kl_target:
            self.kl_coeff *= 2.0
        elif kl < cfg.kl_target / 1.5:
            self.kl_coeff *= 0.5

    def _mean_kl(self, S, mean_old, log_std_old):
        mean_new, _ = self.policy.forward(S)
        var_old = np.exp(2.0 * log_std_old)
        var_new = np.exp(2.0 * self.log_std)
        kl = (self.log_std - log_std_old
              + (var_old + (mean_old - mean_new) ** 2) / (2.0 * var_new) - 0.5)
        return float(kl.sum(axis=1).mean())

    def _minibatch_grads(self, S, A, mean_old, log_std_old, logp_old, adv, ret):
        cfg = self.config
        B = len(S)
        mean_new, cache_p = self.policy.forward(S)
        logp_new = gaussian_logprob(mean_new, self.log_std, A)
        ratio = np.exp(logp_new - logp_old)
        clipped = np.clip(ratio, 1.0 - cfg.clip_param, 1.0 + cfg.clip_param)
        # d(-min(r*A, clip(r)*A))/d logp_new: zero where the clipped branch
        # is active and smaller.
        use_unclipped = (ratio * adv) <= (clipped * adv)
        d_logp = np.where(use_unclipped, -ratio * adv, 0.0) / B

        dlogp_dmean = self._grad_logp_mean(mean_new, A)
        dlogp_dlogstd = self._grad_logp_log_std(mean_new, A)
        d_mean = d_logp[:, None] * dlogp_dmean
        d_log_std = (d_logp[:, None] * dlogp_dlogstd).sum(axis=0)

        # KL(old || new) penalty.
        var_old = np.exp(2.0 * log_std_old)
        var_new = np.exp(2.0 * self.log_std)
        d_mean += self.kl_coeff * (mean_new - mean_old) / var_new / B
        d_kl_logstd = 1.0 - (var_old + (mean_old - mean_new) ** 2) / var_new
        d_log_std += self.kl_coeff * d_kl_logstd.sum(axis=0) / B

        grads_p, _ = self.policy.backward(cache_p, d_mean)

        v, cache_v = self.value.forward(S)
        d_v = cfg.vf_coeff * 2.0 * (v[:, 0] - ret)[:, None] / B
        grads_v, _ = self.value.backward(cache_v, d_v)
        return grads_p + grads_v + [d_log_std]


class DdpgAgent(BaseAgent):
    """Deterministic actor-critic with replay, OU exploration, and soft
    target updates every training step."""

    def __init__(self, state_shape, n_hosts, config, rng):
        super().__init__(state_shape, n_hosts, config, rng)
        if config.prioritized_replay:
            raise AgentError("prioritized replay is not supported")
        cfg = config
        a_dims = [self.state_dim, *cfg.actor_hidden, n_hosts]
        a_acts = [cfg.actor_activation] * len(cfg.actor_hidden) + ["sigmoid"]
        c_dims = [self.state_dim + n_hosts, *cfg.critic_hidden, 1]
        c_acts = [cfg.critic_activation] * len(cfg.critic_hidden) + ["identity"]
        self.actor = Mlp(a_dims, a_acts, rng, final_init_scale=3e-3)
        self.critic = Mlp(c_dims, c_acts, rng, final_init_scale=3e-3)
        self.actor_target = self.actor.clone()
        self.critic_target = self.critic.clone()
        self.actor_opt = AdamState()
        self.critic_opt = AdamState()
        self.noise = OuState(dim=n_hosts, theta=cfg.ou_theta,
                             sigma=cfg.ou_sigma, scale=cfg.noise_scale)
        self.buffer = ReplayBuffer(cfg.replay_capacity, self.state_dim, n_hosts)
        self.step_count = 0
        self.updates = 0

    def _noise_scale(self):
        decay = self.config.noise_decay_steps
        if decay is None:
            return 1.0
        return max(0.0, 1.0 - self.step_count / decay)

    def act(self, state, explore):
        s = _flat(state)
        self._check_state(s)
        a, _ = self.actor.forward(s)
        if explore:
            z = self.rng.standard_normal(self.n_hosts)
            a = a + ou_step(self.noise, z) * self._noise_scale()
        return a

    def observe(self, state, action, reward, next_state, done):
        self.step_count += 1
        # Horizon truncation is not a terminal: always bootstrap.
        self.buffer.add(_flat(state), action, reward, _flat(next_state), False)
        if self.buffer.size >= self.config.warmup:
            self._update()

    def _update(self):
        cfg = self.config
        s, a, r, s2, done = self.buffer.sample(self.rng, cfg.batch_size)
        B = cfg.batch_size

        a2, _ = self.actor_target.forward(s2)
        q2, _ = self.critic_target.forward(np.concatenate([s2, a2], axis=1))
        y = r + cfg.gamma * (1.0 - done) * q2[:, 0]

        q, cache_c = self.critic.forward(np.concatenate([s, a], axis=1))
        d_q = (2.0 * (q[:, 0] - y) / B)[:, None]
        grads_c, _ = self.critic.backward(cache_c, d_q)
        adam_step(self.critic.params, grads_c, self.critic_opt, cfg.critic_lr,
                  weight_decay=cfg.weight_decay)

        a_pred, cache_a = self.actor.forward(s)
        q_a, cache_ca = self.critic.forward(np.concatenate([s, a_pred], axis=1))
        _, dxa = self.critic.backward(cache_ca, np.ones((B, 1)) / B)
        d_action = -dxa[:, self.state_dim:]  # ascend Q
        grads_a, _ = self.actor.backward(cache_a, d_action)
        adam_step(self.actor.params, grads_a, self.actor_opt, cfg.actor_lr)

        self.updates += 1
        if self.updates % cfg.target_update_every == 0:
            soft_update(self.critic_target.params, self.critic.params, cfg.tau)
            soft_update(self.actor_target.params, self.actor.params, cfg.tau)


_AGENTS = {
    "none": NoneAgent,
    "reinforce": ReinforceAgent,
    "ppo": PpoAgent,
    "ddpg": DdpgAgent,
}


def make_agent(name, state_shape, n_hosts, config, rng):
    if name not in _AGENTS:
        raise AgentError(f"unknown agent {name!r}; choose from {sorted(_AGENTS)}")
    cfg = config.replace(algorithm=name)
    return _AGENTS[name](state_shape, n_hosts, cfg, rng)
