"""Fluid network simulator advanced in fixed ticks.

Byte volumes flow through per-egress-port FIFO queues; host rate limiters cap
admission; ports drop what overflows q_max and ECN-mark above a threshold.
The per-tick inner loop lives in a kernel with two interchangeable backends
(see fluidcc.kernel).
"""

from dataclasses import dataclass

import numpy as np

from . import kernel
from .topo import PortId
from .transport import FlowRuntime, path_rtt

DEFAULT_DT = 0.001  # seconds per tick


class SimulationError(RuntimeError):
    pass


def next_queue(q, arrivals, capacity, dt, q_max):
    """Single-port queue update: returns (new queue, dropped bytes).

    Service capacity*dt (converted to bytes) applies to backlog plus this
    tick's arrivals; the excess over q_max is dropped. Total function.
    """
    service = capacity * dt / 8.0
    total = q + arrivals
    out = min(total, service)
    rem = total - out
    dropped = max(0.0, rem - q_max)
    return rem - dropped, dropped


def measure_utilization(tx_bytes, capacity, window):
    """Fraction of a port's capacity used over a window of `window` seconds."""
    if window <= 0:
        raise SimulationError(f"utilization window must be positive, got {window}")
    return min(1.0, tx_bytes * 8.0 / (capacity * window))


@dataclass
class TickReport:
    delivered: np.ndarray  # (F,) bytes reaching the destination this tick
    dropped: np.ndarray  # (F,) bytes dropped anywhere on the path
    marked: np.ndarray  # (F,) 0/1 ECN mark seen this tick
    queues: np.ndarray  # (P,) per-port queue after the tick
    transmitted: np.ndarray  # (P,) per-port bytes sent this tick


@dataclass
class StepStats:
    """Aggregates over a run() window of n_ticks."""

    n_ticks: int
    dt: float
    queue_mean: np.ndarray  # (P,) time-averaged queue, bytes
    queue_peak: np.ndarray  # (P,) max end-of-tick queue, bytes
    tx_bytes: np.ndarray  # (P,)
    tx_port_flow: np.ndarray  # (P, F) bytes each flow sent through each port
    offered: np.ndarray  # (F,) bytes admitted at the source
    delivered: np.ndarray  # (F,)
    dropped: np.ndarray  # (F,)

    @property
    def window(self):
        return self.n_ticks * self.dt


class Simulation:
    """One network instance; strictly single-threaded, deterministic."""

    def __init__(self, topology, flow_specs, dt=DEFAULT_DT):
        self.topology = topology
        self.dt = dt
        ports = topology.all_ports()
        self.ports = ports
        self.port_index = {p: i for i, p in enumerate(ports)}
        P = len(ports)

        self.capacity = np.empty(P)
        self.qmax = np.empty(P)
        self.ecn = np.empty(P)
        for i, p in enumerate(ports):
            link = topology.link_of(p)
            self.capacity[i] = link.capacity
            self.qmax[i] = link.q_max
            self.ecn[i] = np.inf if link.ecn_threshold is None else link.ecn_threshold
        self.service = self.capacity * dt / 8.0
        # bw_max is the (homogeneous) host access-link capacity.
        self.bw_max = topology.link_of(PortId(topology.hosts[0], 0)).capacity
        self.monitored_idx = np.array(
            [self.port_index[p] for p in topology.monitored_ports], dtype=np.intp)

        self.flows = []
        for spec in flow_specs:
            route = topology.routes.get((spec.src, spec.dst))
            if route is None:
                raise SimulationError(f"no route for flow {spec.src}->{spec.dst}")
            idx = [self.port_index[p] for p in route]
            prop = 2.0 * sum(topology.link_of(p).prop_delay for p in route)
            self.flows.append(FlowRuntime(spec, idx, prop))
        F = len(self.flows)
        self._flows_by_host = {}
        for fi, fr in enumerate(self.flows):
            self._flows_by_host.setdefault(fr.spec.src, []).append(fi)

        self._build_plan()
        self.Q = np.zeros((P, F))
        self.qtot = np.zeros(P)
        self._carry = np.zeros(F)
        self.time = 0.0
        self.tick_count = 0
        self.rate_limit = np.full(topology.n_hosts, self.bw_max)
        self._all_udp = all(not fr.windowed for fr in self.flows)

    def _build_plan(self):
        """Topological layering of ports actually used by routes."""
        succ = {}
        active = []
        seen = set()
        for fr in self.flows:
            for a, b in zip(fr.route_ports, fr.route_ports[1:]):
                succ.setdefault(a, set()).add(b)
            for p in fr.route_ports:
                if p not in seen:
                    seen.add(p)
                    active.append(p)
        depth = {p: 0 for p in active}
        for _ in range(len(active) + 1):
            changed = False
            for a, nexts in succ.items():
                for b in nexts:
                    if depth[b] < depth[a] + 1:
                        depth[b] = depth[a] + 1
                        changed = True
            if not changed:
                break
        else:
            raise SimulationError("routing produced a cyclic port graph")

        order = sorted(active, key=lambda p: (depth[p], p))
        pos = {p: i for i, p in enumerate(order)}
        per_port = [[] for _ in order]
        for fi, fr in enumerate(self.flows):
            n = len(fr.route_ports)
            for k, p in enumerate(fr.route_ports):
                per_port[pos[p]].append((fi, k == 0, k == n - 1))

        self.order = np.array(order, dtype=np.int32)
        starts = [0]
        flow_ids, firsts, lasts = [], [], []
        for entries in per_port:
            for fi, first, last in entries:
                flow_ids.append(fi)
                firsts.append(first)
                lasts.append(last)
            starts.append(len(flow_ids))
        self.pf_start = np.array(starts, dtype=np.int32)
        self.pf_flow = np.array(flow_ids, dtype=np.int32)
        self.pf_first = np.array(firsts, dtype=np.uint8)
        self.pf_last = np.array(lasts, dtype=np.uint8)

    @property
    def n_ports(self):
        return len(self.ports)

    @property
    def n_flows(self):
        return len(self.flows)

    def set_rate_limit(self, host, rate):
        """Cap a host's summed egress; flows share proportionally to demand."""
        if not (0 < rate <= self.bw_max):
            raise SimulationError(
                f"rate limit {rate} outside (0, bw_max={self.bw_max}]")
        self.rate_limit[host] = rate

    def _offers_now(self):
        """Per-flow admitted bytes for the next tick, rate limits applied."""
        offers = np.zeros(self.n_flows)
        now = self.time
        for host, fids in self._flows_by_host.items():
            desired = [self.flows[fi].desired_rate(now) for fi in fids]
            total = sum(desired)
            scale = min(1.0, self.rate_limit[host] / total) if total > 0 else 0.0
            for fi, d in zip(fids, desired):
                offers[fi] = d * scale * self.dt / 8.0
        return offers

    def _udp_offer_block(self, chunk):
        """Vectorized per-tick offers for a block of all-UDP traffic."""
        F = self.n_flows
        times = self.time + np.arange(chunk) * self.dt
        desired = np.zeros((chunk, F))
        for fi, fr in enumerate(self.flows):
            s = fr.spec
            on = times >= s.start
            if s.stop is not None:
                on &= times < s.stop
            desired[on, fi] = s.demand
        offers = np.zeros((chunk, F))
        for host, fids in self._flows_by_host.items():
            d = desired[:, fids]
            total = d.sum(axis=1)
            scale = np.ones(chunk)
            over = total > self.rate_limit[host]
            scale[over] = self.rate_limit[host] / total[over]
            offers[:, fids] = d * scale[:, None] * (self.dt / 8.0)
        return offers

    def _run_kernel(self, offers):
        T = offers.shape[0]
        F = self.n_flows
        P = self.n_ports
        delivered = np.zeros((T, F))
        dropped = np.zeros((T, F))
        marked = np.zeros((T, F), dtype=np.uint8)
        qsum = np.zeros((T, P))
        tx = np.zeros((T, P))
        tx_pf = np.zeros((P, F))
        kernel.run_ticks(T, offers, self.service, self.qmax, self.ecn,
                         self.order, self.pf_start, self.pf_flow,
                         self.pf_first, self.pf_last, self.Q, self.qtot,
                         self._carry, delivered, dropped, marked, qsum, tx,
                         tx_pf)
        self.time += T * self.dt
        self.tick_count += T
        return delivered, dropped, marked, qsum, tx, tx_pf

    def tick(self, offers):
        """Advance one tick with explicit per-flow offered bytes."""
        offers = np.asarray(offers, dtype=np.float64).reshape(1, -1)
        if offers.shape[1] != self.n_flows:
            raise SimulationError(
                f"expected {self.n_flows} offers, got {offers.shape[1]}")
        delivered, dropped, marked, qsum, tx, _ = self._run_kernel(offers)
        return TickReport(delivered[0], dropped[0], marked[0].astype(np.float64),
                          qsum[0].copy(), tx[0])

    def _flow_rtt(self, fr):
        queues = [self.qtot[p] for p in fr.route_ports]
        caps = [self.capacity[p] for p in fr.route_ports]
        return path_rtt(fr.prop_rtt, queues, caps)

    def run(self, n_ticks):
        """Advance n_ticks, driving transports; returns step aggregates."""
        P, F = self.n_ports, self.n_flows
        queue_acc = np.zeros(P)
        queue_peak = np.zeros(P)
        tx_acc = np.zeros(P)
        tx_pf_acc = np.zeros((P, F))
        offered_acc = np.zeros(F)
        delivered_acc = np.zeros(F)
        dropped_acc = np.zeros(F)

        if self._all_udp:
            # Constant-rate sources: offers only change at start/stop
            # boundaries, so whole chunks go through the kernel in one call.
            done = 0
            while done < n_ticks:
                chunk = min(n_ticks - done, 4096)
                offers = self._udp_offer_block(chunk)
                delivered, dropped, marked, qsum, tx, tx_pf = self._run_kernel(offers)
                queue_acc += qsum.sum(axis=0)
                np.maximum(queue_peak, qsum.max(axis=0), out=queue_peak)
                tx_acc += tx.sum(axis=0)
                tx_pf_acc += tx_pf
                offered_acc += offers.sum(axis=0)
                delivered_acc += delivered.sum(axis=0)
                dropped_acc += dropped.sum(axis=0)
                done += chunk
        else:
            for _ in range(n_ticks):
                offers = self._offers_now().reshape(1, -1)
                delivered, dropped, marked, qsum, tx, tx_pf = self._run_kernel(offers)
                queue_acc += qsum[0]
                np.maximum(queue_peak, qsum[0], out=queue_peak)
                tx_acc += tx[0]
                tx_pf_acc += tx_pf
                offered_acc += offers[0]
                delivered_acc += delivered[0]
                dropped_acc += dropped[0]
                for fi, fr in enumerate(self.flows):
                    if fr.windowed:
                        rtt = self._flow_rtt(fr)
                        fr.observe_tick(dropped[0, fi], marked[0, fi], rtt)
                        fr.maybe_window_update(self.time, rtt)

        return StepStats(n_ticks=n_ticks, dt=self.dt,
                         queue_mean=queue_acc / n_ticks, queue_peak=queue_peak,
                         tx_bytes=tx_acc, tx_port_flow=tx_pf_acc,
                         offered=offered_acc, delivered=delivered_acc,
                         dropped=dropped_acc)
