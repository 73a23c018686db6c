"""Minimal numpy neural-network kit: MLP forward/backward, Adam, OU noise,
replay buffer, soft target updates, diagonal-Gaussian log density.

Everything is deterministic given the caller's numpy Generator.
"""

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "relu", "sigmoid", "identity")


class NnError(ValueError):
    pass


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    return z


def _act_grad(name, z, y):
    # y = activation(z), reused where cheaper.
    if name == "tanh":
        return 1.0 - y * y
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "sigmoid":
        return y * (1.0 - y)
    return np.ones_like(z)


class Mlp:
    """Fully connected net; params is a flat list [W0, b0, W1, b1, ...]."""

    def __init__(self, dims, activations, rng, final_init_scale=None):
        if len(activations) != len(dims) - 1:
            raise NnError("need one activation per layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise NnError(f"unknown activation {a!r}")
        self.dims = list(dims)
        self.activations = list(activations)
        self.params = []
        n_layers = len(dims) - 1
        for i in range(n_layers):
            fan_in = dims[i]
            bound = 1.0 / np.sqrt(fan_in)
            if final_init_scale is not None and i == n_layers - 1:
                bound = final_init_scale
            W = rng.uniform(-bound, bound, size=(dims[i + 1], dims[i]))
            b = rng.uniform(-bound, bound, size=dims[i + 1])
            self.params.extend([W, b])

    def clone(self):
        out = object.__new__(Mlp)
        out.dims = list(self.dims)
        out.activations = list(self.activations)
        out.params = [p.copy() for p in self.params]
        return out

    def forward(self, x):
        """Returns (output, cache). Accepts (N, d_in) or (d_in,)."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        h = x.reshape(1, -1) if squeeze else x
        if h.shape[1] != self.dims[0]:
            raise NnError(f"input dim {h.shape[1]} != {self.dims[0]}")
        cache = [h]
        for i, act in enumerate(self.activations):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ W.T + b
            h = _act(act, z)
            cache.append(z)
            cache.append(h)
        y = h[0] if squeeze else h
        return y, (cache, squeeze)

    def backward(self, cache_pack, dy):
        """Gradients of sum(dy * output) w.r.t. params and input.

        Returns (grads, dx) with grads in the same flat layout as params.
        """
        cache, squeeze = cache_pack
        dy = np.asarray(dy, dtype=np.float64)
        d = dy.reshape(1, -1) if squeeze else dy
        n_layers = len(self.activations)
        if len(cache) != 1 + 2 * n_layers:
            raise NnError("cache does not match this network")
        grads = [None] * len(self.params)
        for i in reversed(range(n_layers)):
            z, h = cache[1 + 2 * i], cache[2 + 2 * i]
            h_in = cache[2 * i]
            dz = d * _act_grad(self.activations[i], z, h)
            W = self.params[2 * i]
            grads[2 * i] = dz.T @ h_in
            grads[2 * i + 1] = dz.sum(axis=0)
            d = dz @ W
        dx = d[0] if squeeze else d
        return grads, dx


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state, lr, weight_decay=0.0):
    """In-place Adam update (gradient-descent direction) with bias correction."""
    if len(params) != len(grads):
        raise NnError("params/grads length mismatch")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        if weight_decay and p.ndim > 1:  # decay weights, not biases
            g = g + weight_decay * p
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        m_hat = state.m[i] / (1 - b1 ** state.t)
        v_hat = state.v[i] / (1 - b2 ** state.t)
        p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class OuState:
    """Discrete Ornstein-Uhlenbeck process, x += theta*(mu - x) + sigma*z."""

    dim: int
    theta: float = 0.15
    sigma: float = 0.2
    mu: float = 0.0
    scale: float = 1.0
    x: np.ndarray = None

    def __post_init__(self):
        if self.x is None:
            self.x = np.zeros(self.dim)


def ou_step(state, z):
    """Advance the noise process with a standard-normal draw z; returns
    scale * x."""
    z = np.asarray(z, dtype=np.float64)
    state.x = state.x + state.theta * (state.mu - state.x) + state.sigma * z
    return state.scale * state.x


def soft_update(target_params, source_params, tau):
    """target <- tau*source + (1-tau)*target, elementwise and in place."""
    if len(target_params) != len(source_params):
        raise NnError("parameter list length mismatch")
    for t, s in zip(target_params, source_params):
        if t.shape != s.shape:
            raise NnError(f"shape mismatch {t.shape} vs {s.shape}")
        t *= 1.0 - tau
        t += tau * s


def gaussian_logprob(mean, log_std, a):
    """Diagonal-Gaussian log density; batched over leading axis if 2-D."""
    mean = np.asarray(mean, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    if mean.shape != a.shape:
        raise NnError("mean/action shape mismatch")
    z = (a - mean) / np.exp(log_std)
    per_dim = -0.5 * z * z - log_std - 0.5 * np.log(2.0 * np.pi)
    return per_dim.sum(axis=-1)


class ReplayBuffer:
    """Uniform-sampling ring buffer of (s, a, r, s', done) transitions."""

    def __init__(self, capacity, state_dim, action_dim):
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self._next = 0
        self.size = 0

    def add(self, s, a, r, s2, done):
        i = self._next
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s2[i] = s2
        self.done[i] = float(done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, batch_size):
        idx = rng.integers(0, self.size, size=batch_size)
        return (self.s[idx], self.a[idx], self.r[idx], self.s2[idx],
                self.done[idx])
