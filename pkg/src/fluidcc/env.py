"""Gym-style congestion-control environment.

One step: clamp the raw action, set per-host rate limits (bw_max * a_i),
advance the simulator a fixed number of ticks, then assemble the port-feature
state matrix and the bandwidth/queue/deviation reward.
"""

from dataclasses import dataclass

import numpy as np

from .simnet import Simulation, measure_utilization

DEFAULT_TICKS_PER_STEP = 500  # 0.5 s at the 1 ms tick
DEFAULT_A_MIN = 0.01  # minimum bandwidth guarantee, as a fraction of bw_max
DEFAULT_HORIZON = 200


class EnvError(RuntimeError):
    pass


@dataclass
class RewardBreakdown:
    bw_term: float  # sum over hosts of bw_i / bw_max
    queue_term: float  # sum over monitored ports of (q_p / q_max)^2
    std_term: float  # population std of the clamped action vector

    @property
    def total(self):
        return self.bw_term - self.queue_term - self.std_term


@dataclass
class StepResult:
    state: np.ndarray
    reward: RewardBreakdown
    done: bool
    info: dict


def clamp_action(a_raw, n_hosts, a_min=DEFAULT_A_MIN):
    """Squash raw actions into [a_min, 1.0]."""
    a = np.asarray(a_raw, dtype=np.float64).reshape(-1)
    if a.shape[0] != n_hosts:
        raise EnvError(f"action length {a.shape[0]} != {n_hosts} hosts")
    if np.isnan(a).any():
        raise EnvError("action contains NaN")
    return np.clip(a, a_min, 1.0)


def compute_reward(host_bw, bw_max, port_queues, q_max, action):
    """Reward = bandwidth term - queue penalty - action-deviation penalty.

    host_bw are per-step time-averaged host rates (bits/s), port_queues the
    time-averaged monitored-port queues (bytes).
    """
    host_bw = np.asarray(host_bw, dtype=np.float64)
    port_queues = np.asarray(port_queues, dtype=np.float64)
    bw_term = float(np.sum(host_bw / bw_max))
    queue_term = float(np.sum((port_queues / q_max) ** 2))
    std_term = float(np.std(action))
    return RewardBreakdown(bw_term, queue_term, std_term)


class CongestionEnv:
    """Centralized rate-limiting environment over one simulated network.

    The observation is a (monitored ports) x (2 + n_hosts) matrix in [0, 1]:
    columns are time-averaged queue fraction, utilization, and a one-hot
    active-source flag per host. Actions are per-host fractions of bw_max.
    """

    def __init__(self, topology, flow_specs, *, dt=0.001,
                 ticks_per_step=DEFAULT_TICKS_PER_STEP, a_min=DEFAULT_A_MIN,
                 horizon=DEFAULT_HORIZON):
        if horizon < 1:
            raise EnvError(f"horizon must be >= 1, got {horizon}")
        self.topology = topology
        self.flow_specs = list(flow_specs)
        self.dt = dt
        self.ticks_per_step = ticks_per_step
        self.a_min = a_min
        self.horizon = horizon
        self.sim = None
        self._step_idx = 0
        self._done = True
        # Probe dimensions once; also validates routes exist for every flow.
        probe = Simulation(topology, self.flow_specs, dt=dt)
        self.bw_max = probe.bw_max
        self.n_hosts = topology.n_hosts
        self.n_ports = len(topology.monitored_ports)
        self._qmax_by_port = probe.qmax[probe.monitored_idx].copy()

    @property
    def state_shape(self):
        return (self.n_ports, 2 + self.n_hosts)

    @property
    def action_len(self):
        return self.n_hosts

    @property
    def step_seconds(self):
        return self.ticks_per_step * self.dt

    def metadata(self):
        """Shape/scale description for external tooling."""
        return {
            "state_shape": self.state_shape,
            "action_len": self.action_len,
            "bw_max": self.bw_max,
            "step_seconds": self.step_seconds,
        }

    def reset(self):
        self.sim = Simulation(self.topology, self.flow_specs, dt=self.dt)
        self._step_idx = 0
        self._done = False
        return np.zeros(self.state_shape)

    def step(self, a_raw):
        if self.sim is None or self._done:
            raise EnvError("step() called before reset() or after episode end")
        a = clamp_action(a_raw, self.n_hosts, self.a_min)
        for host in range(self.n_hosts):
            self.sim.set_rate_limit(host, self.bw_max * a[host])

        stats = self.sim.run(self.ticks_per_step)
        state = self._collect_state(stats)

        host_bw = self._host_bandwidth(stats)
        q_mean = stats.queue_mean[self.sim.monitored_idx]
        reward = compute_reward(host_bw, self.bw_max, q_mean,
                                self._qmax_by_port, a)

        self._step_idx += 1
        self._done = self._step_idx >= self.horizon
        info = {
            "action": a,
            "host_bw_bps": host_bw,
            "host_tx_bps": self._host_rate(stats, rx=False),
            "host_rx_bps": self._host_rate(stats, rx=True),
            "port_queue_mean_B": q_mean,
            "port_queue_peak_B": stats.queue_peak[self.sim.monitored_idx],
            "dropped_B": float(stats.dropped.sum()),
            "step": self._step_idx - 1,
        }
        return StepResult(state, reward, self._done, info)

    def _host_rate(self, stats, rx):
        """Per-host achieved rate (bits/s) on its access link, one direction."""
        rates = np.zeros(self.n_hosts)
        window = stats.window
        for fi, fr in enumerate(self.sim.flows):
            if rx:
                rates[fr.spec.dst] += stats.delivered[fi] * 8.0 / window
            else:
                rates[fr.spec.src] += stats.tx_port_flow[fr.route_ports[0], fi] * 8.0 / window
        return rates

    def _host_bandwidth(self, stats):
        # Reward bandwidth: traffic achieved on the host's interface in either
        # direction, capped at line rate. Receivers earn their delivered
        # bandwidth; senders their admitted egress.
        bw = self._host_rate(stats, rx=False) + self._host_rate(stats, rx=True)
        return np.minimum(bw, self.bw_max)

    def _collect_state(self, stats):
        sim = self.sim
        idx = sim.monitored_idx
        state = np.zeros(self.state_shape)
        state[:, 0] = stats.queue_mean[idx] / sim.qmax[idx]
        for row, p in enumerate(idx):
            state[row, 1] = measure_utilization(stats.tx_bytes[p],
                                                sim.capacity[p], stats.window)
        for fi, fr in enumerate(sim.flows):
            src = fr.spec.src
            for row, p in enumerate(idx):
                if stats.tx_port_flow[p, fi] > 0.0:
                    state[row, 2 + src] = 1.0
        return np.clip(state, 0.0, 1.0)
