"""Command-line entry point.

Subcommands:
  run       one training/evaluation run, trace + summary to --out
  suite     the same configuration across several seeds, with an aggregate
  baseline  transport-only comparison (agent fixed to 'none')
  plot      learning curves from saved trace.csv files
  validate  parse a config file and echo the resolved settings
"""

import argparse
import sys

from . import harness
from .kernel import BACKEND


def _add_common(p):
    p.add_argument("--config", help="config file (section.key = value lines)")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--steps", type=int, help="override run.steps")
    p.add_argument("--agent", choices=["none", "reinforce", "ppo", "ddpg"],
                   help="override run.agent")
    p.add_argument("--transport", choices=["udp", "vegas", "dctcp"],
                   help="override run.transport")
    p.add_argument("--topo", choices=["dumbbell", "fattree"],
                   help="override run.topology")


def _load(args, **forced):
    if args.config:
        exp, agent_cfg = harness.load_config(args.config)
    else:
        exp, agent_cfg = harness.ExperimentConfig(), harness.AgentConfig()
    overrides = {}
    for cli_key, cfg_key in (("seed", "seed"), ("steps", "steps"),
                             ("agent", "agent"), ("transport", "transport"),
                             ("topo", "topology")):
        v = getattr(args, cli_key, None)
        if v is not None:
            overrides[cfg_key] = v
    overrides.update(forced)
    return exp.replace(**overrides), agent_cfg


def _cmd_run(args):
    exp, agent_cfg = _load(args)
    print(f"backend={BACKEND} agent={exp.agent} transport={exp.transport} "
          f"topology={exp.topology} seed={exp.seed} steps={exp.steps}")
    trace = harness.run_experiment(exp, agent_cfg, args.out,
                                   progress=args.progress)
    tail = harness.final_window_mean(trace, min(500, len(trace)))
    print(f"reward mean {trace['reward'].mean():.4f}, final window {tail:.4f}")
    if args.out:
        print(f"wrote {args.out}/trace.csv")
    return 0


def _cmd_suite(args):
    exp, agent_cfg = _load(args)
    seeds = list(range(args.seeds)) if args.seed is None else \
        list(range(args.seed, args.seed + args.seeds))
    print(f"backend={BACKEND} agent={exp.agent} seeds={seeds} steps={exp.steps}")
    traces = harness.run_suite(exp, agent_cfg, seeds, args.out,
                               progress=args.progress)
    window = min(500, exp.steps)
    finals = [harness.final_window_mean(t, window) for t in traces]
    for seed, v in zip(seeds, finals):
        print(f"seed {seed}: final-{window} reward {v:.4f}")
    import numpy as np
    print(f"mean {np.mean(finals):.4f} +- {np.std(finals):.4f}")
    print(f"wrote {args.out}/aggregate.csv")
    return 0


def _cmd_baseline(args):
    exp, agent_cfg = _load(args, agent="none")
    if exp.transport == "udp":
        print("note: baseline with transport=udp measures raw constant-rate "
              "traffic", file=sys.stderr)
    return _cmd_run_resolved(exp, agent_cfg, args)


def _cmd_run_resolved(exp, agent_cfg, args):
    trace = harness.run_experiment(exp, agent_cfg, args.out,
                                   progress=args.progress)
    tail = harness.final_window_mean(trace, min(500, len(trace)))
    print(f"{exp.transport} baseline: reward mean {trace['reward'].mean():.4f}, "
          f"final window {tail:.4f}")
    return 0


def _cmd_plot(args):
    labels = args.labels.split(",") if args.labels else \
        [f"trace{i}" for i in range(len(args.traces))]
    written = harness.emit_plots(args.traces, labels, args.out,
                                 smooth=args.smooth)
    for p in written:
        print(f"wrote {p}")
    return 0


def _cmd_validate(args):
    if not args.config:
        print("validate requires --config", file=sys.stderr)
        return 2
    exp, agent_cfg = harness.load_config(args.config)
    sys.stdout.write(harness.format_config(exp, agent_cfg))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fluidcc",
        description="Fluid network simulator with RL congestion control.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single training run")
    _add_common(p)
    p.add_argument("--out", help="output directory for trace/summary/config")
    p.add_argument("--progress", type=int, default=None,
                   help="print progress every N steps")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("suite", help="multi-seed suite")
    _add_common(p)
    p.add_argument("--out", required=True, help="suite output directory")
    p.add_argument("--seeds", type=int, default=5,
                   help="number of seeds (starting at --seed or 0)")
    p.add_argument("--progress", type=int, default=None)
    p.set_defaults(fn=_cmd_suite)

    p = sub.add_parser("baseline", help="transport baseline (no agent)")
    _add_common(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--progress", type=int, default=None)
    p.set_defaults(fn=_cmd_baseline)

    p = sub.add_parser("plot", help="plot saved traces")
    p.add_argument("traces", nargs="+", help="trace.csv paths")
    p.add_argument("--out", required=True, help="directory for PNGs")
    p.add_argument("--labels", help="comma-separated legend labels")
    p.add_argument("--smooth", type=int, default=50,
                   help="moving-average window (steps)")
    p.set_defaults(fn=_cmd_plot)

    p = sub.add_parser("validate", help="check a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_validate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (harness.HarnessError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
