"""fluidcc: fluid datacenter network simulator with an RL congestion-control
environment, TCP baselines (Vegas-style, DCTCP), and policy-gradient agents."""

__version__ = "0.1.0"
