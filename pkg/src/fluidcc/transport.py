"""Per-flow traffic sources and congestion-control state machines.

Three transports: constant-rate UDP, a Vegas-style window law standing in for
TCP New Vegas, and DCTCP. Window-based transports update once per smoothed
RTT of simulated time; rates derive from cwnd/srtt, so no per-packet state is
kept. Slow start is omitted and cwnd starts at 10 packets.
"""

from dataclasses import dataclass, field, replace

MSS = 1500.0  # bytes; window <-> rate conversion unit
INITIAL_CWND = 10.0
SRTT_GAIN = 0.125

TRANSPORTS = ("udp", "vegas", "dctcp")


class TransportError(ValueError):
    pass


@dataclass(frozen=True)
class FlowSpec:
    src: int
    dst: int
    transport: str = "udp"
    demand: float = 10e6  # bits/s
    start: float = 0.0
    stop: float | None = None

    def __post_init__(self):
        if self.transport not in TRANSPORTS:
            raise TransportError(f"unknown transport {self.transport!r}")
        if self.demand <= 0:
            raise TransportError("flow demand must be positive")
        if self.stop is not None and self.start >= self.stop:
            raise TransportError("flow start must precede stop")


@dataclass
class VegasState:
    cwnd: float = INITIAL_CWND  # packets, real-valued
    base_rtt: float = float("inf")  # min RTT seen
    alpha_pkts: float = 2.0
    beta_pkts: float = 4.0


@dataclass
class DctcpState:
    cwnd: float = INITIAL_CWND
    alpha: float = 0.0  # EWMA of marked fraction
    g: float = 1.0 / 16.0


def vegas_on_rtt(state, rtt_sample, lost):
    """Classic Vegas window law: one update per RTT.

    diff = cwnd * (1 - base_rtt/rtt) estimates packets queued in the network;
    hold it between alpha and beta. Loss halves the window.
    """
    if rtt_sample <= 0:
        raise TransportError(f"rtt sample must be positive, got {rtt_sample}")
    base = min(state.base_rtt, rtt_sample)
    cwnd = state.cwnd
    if lost:
        cwnd = max(cwnd / 2.0, 1.0)
    else:
        diff = cwnd * (1.0 - base / rtt_sample)
        # Small tolerance so boundary cases (diff exactly alpha/beta) hold
        # steady despite floating-point division error.
        if diff < state.alpha_pkts - 1e-9:
            cwnd += 1.0
        elif diff > state.beta_pkts + 1e-9:
            cwnd -= 1.0
        cwnd = max(cwnd, 1.0)
    return replace(state, cwnd=cwnd, base_rtt=base)


def dctcp_on_window(state, marked_fraction, lost):
    """DCTCP window update: alpha <- (1-g)*alpha + g*F, then scale the cut.

    Alpha is updated before the window is cut.
    """
    if not (0.0 <= marked_fraction <= 1.0):
        raise TransportError(f"marked fraction {marked_fraction} outside [0, 1]")
    alpha = (1.0 - state.g) * state.alpha + state.g * marked_fraction
    cwnd = state.cwnd
    if lost:
        cwnd = cwnd / 2.0
    elif marked_fraction > 0.0:
        cwnd = cwnd * (1.0 - alpha / 2.0)
    else:
        cwnd = cwnd + 1.0
    return replace(state, cwnd=max(cwnd, 1.0), alpha=alpha)


def path_rtt(prop_rtt, queues_bytes, capacities_bps):
    """RTT = propagation RTT + one-way queueing delay along the forward path."""
    rtt = prop_rtt
    for q, cap in zip(queues_bytes, capacities_bps):
        rtt += q * 8.0 / cap
    return rtt


class FlowRuntime:
    """A flow bound to a route, driving its transport inside the simulator."""

    def __init__(self, spec, route_ports, prop_rtt):
        self.spec = spec
        self.route_ports = route_ports  # port indices, source first
        self.prop_rtt = prop_rtt
        self.state = None
        if spec.transport == "vegas":
            self.state = VegasState()
        elif spec.transport == "dctcp":
            self.state = DctcpState()
        self.srtt = prop_rtt
        self.next_update = spec.start + self.srtt
        self._win_ticks = 0
        self._win_marked = 0
        self._win_dropped = 0.0

    def active(self, now):
        return self.spec.start <= now and (self.spec.stop is None or now < self.spec.stop)

    @property
    def windowed(self):
        return self.state is not None

    def desired_rate(self, now):
        """Sender's target rate in bits/s before the host rate limit."""
        if not self.active(now):
            return 0.0
        if self.state is None:
            return self.spec.demand
        return min(self.state.cwnd * MSS * 8.0 / self.srtt, self.spec.demand)

    def observe_tick(self, dropped_bytes, marked, rtt_sample):
        """Per-tick bookkeeping. RTT samples arrive continuously (ACKs are
        per-packet in real TCP), so srtt tracks at tick granularity even
        though cwnd only moves once per window."""
        self._win_ticks += 1
        self._win_marked += int(marked)
        self._win_dropped += dropped_bytes
        self.srtt = (1.0 - SRTT_GAIN) * self.srtt + SRTT_GAIN * rtt_sample

    def maybe_window_update(self, now, rtt_sample):
        """Run one cwnd update if a window (one srtt) has elapsed."""
        if self.state is None or now < self.next_update or self._win_ticks == 0:
            return False
        lost = self._win_dropped > 0.0
        if isinstance(self.state, VegasState):
            self.state = vegas_on_rtt(self.state, rtt_sample, lost)
        else:
            frac = self._win_marked / self._win_ticks
            self.state = dctcp_on_window(self.state, frac, lost)
        self.next_update = now + self.srtt
        self._win_ticks = 0
        self._win_marked = 0
        self._win_dropped = 0.0
        return True
