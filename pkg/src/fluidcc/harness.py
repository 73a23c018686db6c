"""Experiment harness: config parsing, single runs, multi-seed suites, plots.

Every run writes a self-contained output directory: the resolved config, a
per-step trace.csv, and a summary.txt. Runs are deterministic given the seed.
"""

import os
from dataclasses import dataclass, fields

import numpy as np

from .agents import AgentConfig, make_agent
from .env import CongestionEnv
from .topo import (DEFAULT_ECN_THRESHOLD, DEFAULT_PROP_DELAY, DEFAULT_Q_MAX,
                   build_dumbbell, build_fattree)
from .transport import FlowSpec

TRACE_SCHEMA_VERSION = 1


def trace_columns(n_hosts):
    """Fixed column order: step bookkeeping, reward terms, per-host
    bandwidth, queue aggregates, then the applied action vector."""
    cols = ["step", "time_s", "reward", "bw_term", "queue_term", "std_term"]
    cols += [f"bw_h{i}_bps" for i in range(n_hosts)]
    cols += ["queue_mean_B", "queue_max_B", "dropped_B"]
    cols += [f"a_h{i}" for i in range(n_hosts)]
    return cols


class HarnessError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Flat run description; see parse_config for the file format."""

    topology: str = "dumbbell"  # dumbbell | fattree
    n_hosts: int = 4  # dumbbell only
    fattree_k: int = 4  # fattree only
    bw_max: float = 10e6
    prop_delay: float = DEFAULT_PROP_DELAY
    q_max: float = DEFAULT_Q_MAX
    ecn_threshold: float = DEFAULT_ECN_THRESHOLD
    pattern: str = "cross"  # cross | stride
    transport: str = "udp"  # udp | vegas | dctcp
    agent: str = "ddpg"  # none | reinforce | ppo | ddpg
    steps: int = 5000
    horizon: int = 200
    ticks_per_step: int = 500
    dt: float = 0.001
    a_min: float = 0.01
    seed: int = 0
    explore: bool = True

    def replace(self, **kw):
        unknown = set(kw) - {f.name for f in fields(self)}
        if unknown:
            raise HarnessError(f"unknown experiment config keys: {sorted(unknown)}")
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return ExperimentConfig(**d)


_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def _coerce(current, text, key):
    if isinstance(current, bool):
        if text.lower() not in _BOOL:
            raise HarnessError(f"{key}: expected a boolean, got {text!r}")
        return _BOOL[text.lower()]
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        return tuple(int(v) for v in text.split(",") if v.strip())
    if current is None:  # optional ints (e.g. noise_decay_steps)
        return None if text.lower() in ("none", "") else int(text)
    return text


def parse_config(text):
    """Parse `section.key = value` lines into experiment + agent configs.

    Sections are `run` (ExperimentConfig fields) and `agent` (AgentConfig
    fields). Blank lines and `#` comments are ignored; unknown keys are
    rejected.
    """
    exp = ExperimentConfig()
    agent = AgentConfig()
    exp_kw, agent_kw = {}, {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise HarnessError(f"line {ln}: expected 'section.key = value'")
        lhs, value = (s.strip() for s in line.split("=", 1))
        if "." not in lhs:
            raise HarnessError(f"line {ln}: key {lhs!r} is missing its section")
        section, key = lhs.split(".", 1)
        if section == "run":
            target, kw = exp, exp_kw
        elif section == "agent":
            target, kw = agent, agent_kw
        else:
            raise HarnessError(f"line {ln}: unknown section {section!r}")
        if not hasattr(target, key):
            raise HarnessError(f"line {ln}: unknown key {lhs!r}")
        try:
            kw[key] = _coerce(getattr(target, key), value, lhs)
        except ValueError as e:
            raise HarnessError(f"line {ln}: bad value for {lhs!r}: {e}") from e
    return exp.replace(**exp_kw), agent.replace(**agent_kw)


def load_config(path):
    with open(path) as f:
        return parse_config(f.read())


def format_config(exp, agent):
    """Render configs back into the parseable file format."""
    lines = []
    for section, cfg in (("run", exp), ("agent", agent)):
        for f in fields(cfg):
            v = getattr(cfg, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{section}.{f.name} = {v}")
    return "\n".join(lines) + "\n"


def build_topology(exp):
    kw = dict(prop_delay=exp.prop_delay, q_max=exp.q_max,
              ecn_threshold=exp.ecn_threshold)
    if exp.topology == "dumbbell":
        return build_dumbbell(exp.n_hosts, exp.bw_max, **kw)
    if exp.topology == "fattree":
        return build_fattree(exp.fattree_k, exp.bw_max, **kw)
    raise HarnessError(f"unknown topology {exp.topology!r}")


def build_flows(exp, topology):
    """Traffic patterns over host indices.

    cross: host i on the left sends to its mirror on the right (dumbbell
    pairing i -> i + n/2). stride: host i sends to (i + n/2) mod n.
    Every pattern keeps each host either a pure sender or a pure receiver.
    """
    n = topology.n_hosts
    if exp.pattern == "cross":
        pairs = [(i, i + n // 2) for i in range(n // 2)]
    elif exp.pattern == "stride":
        pairs = [(i, (i + n // 2) % n) for i in range(n // 2)]
    else:
        raise HarnessError(f"unknown traffic pattern {exp.pattern!r}")
    return [FlowSpec(s, d, exp.transport, demand=exp.bw_max) for s, d in pairs]


def build_env(exp):
    topology = build_topology(exp)
    flows = build_flows(exp, topology)
    return CongestionEnv(topology, flows, dt=exp.dt,
                         ticks_per_step=exp.ticks_per_step, a_min=exp.a_min,
                         horizon=exp.horizon)


def _rngs(seed):
    """Independent agent/environment streams derived from one seed."""
    ss = np.random.SeedSequence(seed)
    agent_ss, spare_ss = ss.spawn(2)
    return np.random.default_rng(agent_ss), np.random.default_rng(spare_ss)


def run_experiment(exp, agent_cfg, out_dir=None, progress=None):
    """Run one seed to completion; returns the trace as a structured array.

    If out_dir is given, writes config.txt, trace.csv, and summary.txt there.
    """
    env = build_env(exp)
    if exp.agent == "ddpg" and agent_cfg.noise_decay_steps is None:
        # Anneal exploration over the first 80% of training so the final
        # window measures the learned policy rather than the noise.
        agent_cfg = agent_cfg.replace(noise_decay_steps=max(1, int(0.8 * exp.steps)))
    agent_rng, _ = _rngs(exp.seed)
    agent = make_agent(exp.agent, env.state_shape, env.action_len, agent_cfg,
                       agent_rng)

    rows = []
    state = env.reset()
    for step in range(exp.steps):
        a_raw = agent.act(state, explore=exp.explore and agent.trains)
        res = env.step(a_raw)
        agent.observe(state, res.info["action"], res.reward.total, res.state,
                      res.done)
        a = res.info["action"]
        row = [step, (step + 1) * env.step_seconds, res.reward.total,
               res.reward.bw_term, res.reward.queue_term, res.reward.std_term]
        row += list(res.info["host_bw_bps"])
        row += [float(res.info["port_queue_mean_B"].mean()),
                float(res.info["port_queue_peak_B"].max()),
                res.info["dropped_B"]]
        row += list(a)
        rows.append(tuple(row))
        state = res.state
        if res.done:
            state = env.reset()
        if progress is not None and (step + 1) % progress == 0:
            print(f"  step {step + 1}/{exp.steps} "
                  f"reward {rows[-1][2]:.4f}", flush=True)

    cols = trace_columns(env.n_hosts)
    trace = np.array(rows, dtype=[(c, np.float64) for c in cols])
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.txt"), "w") as f:
            f.write(format_config(exp, agent_cfg))
        write_trace(os.path.join(out_dir, "trace.csv"), trace)
        with open(os.path.join(out_dir, "summary.txt"), "w") as f:
            f.write(summarize(exp, trace))
    return trace


def write_trace(path, trace):
    names = trace.dtype.names
    header = (f"# fluidcc trace schema_version={TRACE_SCHEMA_VERSION}\n"
              + ",".join(names))
    cols = np.stack([trace[c] for c in names], axis=1)
    np.savetxt(path, cols, delimiter=",", header=header, comments="",
               fmt="%.10g")


def read_trace(path):
    with open(path) as f:
        first = f.readline()
        names = f.readline().strip().split(",")
    if "schema_version=" not in first:
        raise HarnessError(f"{path} is not a fluidcc trace")
    version = int(first.rsplit("schema_version=", 1)[1])
    if version != TRACE_SCHEMA_VERSION:
        raise HarnessError(f"trace schema version {version} unsupported")
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    if data.size == 0:
        raise HarnessError(f"{path} contains no data rows")
    out = np.zeros(len(data), dtype=[(c, np.float64) for c in names])
    for i, c in enumerate(names):
        out[c] = data[:, i]
    return out


def host_bw_mean(trace):
    """Mean achieved bandwidth across hosts, per step."""
    cols = [c for c in trace.dtype.names if c.startswith("bw_h")]
    return np.stack([trace[c] for c in cols], axis=1).mean(axis=1)


def final_window_mean(trace, window=500):
    return float(trace["reward"][-window:].mean())


def summarize(exp, trace):
    r = trace["reward"]
    tail = max(1, len(r) // 10)
    rt = r[-tail:]
    lines = [
        f"agent = {exp.agent}",
        f"transport = {exp.transport}",
        f"topology = {exp.topology}",
        f"seed = {exp.seed}",
        f"steps = {len(r)}",
        f"reward_mean = {r.mean():.6f}",
        f"reward_min = {r.min():.6f}",
        f"reward_max = {r.max():.6f}",
        f"reward_final10pct_mean = {rt.mean():.6f}",
        f"reward_final10pct_min = {rt.min():.6f}",
        f"reward_final10pct_max = {rt.max():.6f}",
        f"queue_mean_B = {trace['queue_mean_B'].mean():.3f}",
        f"dropped_B_total = {trace['dropped_B'].sum():.1f}",
        f"host_bw_mean_bps = {host_bw_mean(trace).mean():.1f}",
    ]
    return "\n".join(lines) + "\n"


def run_suite(exp, agent_cfg, seeds, out_dir, progress=None):
    """Run one configuration across seeds; returns the per-seed traces.

    Layout: out_dir/seed<k>/{config.txt,trace.csv,summary.txt} plus an
    aggregate.csv with one row per step (mean and std of reward over seeds).
    """
    if not seeds:
        raise HarnessError("need at least one seed")
    traces = []
    for seed in seeds:
        run_dir = os.path.join(out_dir, f"seed{seed}")
        traces.append(run_experiment(exp.replace(seed=seed), agent_cfg,
                                     run_dir, progress=progress))
    rewards = np.stack([t["reward"] for t in traces], axis=1)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "aggregate.csv"), "w") as f:
        f.write("step,reward_mean,reward_std\n")
        for step in range(rewards.shape[0]):
            f.write(f"{step},{rewards[step].mean():.10g},"
                    f"{rewards[step].std():.10g}\n")
    return traces


def emit_plots(trace_paths, labels, out_dir, smooth=50):
    """Write reward/queue/bandwidth learning-curve PNGs from saved traces."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if len(trace_paths) != len(labels):
        raise HarnessError("one label per trace, please")
    os.makedirs(out_dir, exist_ok=True)
    traces = [read_trace(p) for p in trace_paths]

    def smoothed(y):
        if smooth <= 1 or len(y) < smooth:
            return y
        kern = np.ones(smooth) / smooth
        return np.convolve(y, kern, mode="valid")

    panels = [("reward", "reward", "reward.png"),
              ("queue_mean_B", "mean queue (bytes)", "queue.png"),
              ("bandwidth", "mean host bandwidth (bit/s)", "bandwidth.png")]
    written = []
    for col, ylabel, fname in panels:
        fig, ax = plt.subplots(figsize=(7, 4))
        for trace, label in zip(traces, labels):
            y = host_bw_mean(trace) if col == "bandwidth" else trace[col]
            ax.plot(smoothed(y), label=label, linewidth=1.0)
        ax.set_xlabel("environment step")
        ax.set_ylabel(ylabel)
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, fname)
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
