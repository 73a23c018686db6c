"""Network topologies: dumbbell and k-ary fat-tree builders with deterministic routing.

Port ordering conventions fix the observation-matrix row order, so they are
part of the public contract: monitored ports are enumerated switch by switch
in construction order, local port indices ascending.
"""

from dataclasses import dataclass, field

DEFAULT_PROP_DELAY = 0.0005  # seconds per link, one way
DEFAULT_Q_MAX = 150_000.0  # bytes (100 x 1500 B MSS)
# 5 MSS: the marking threshold has to sit near the bandwidth-delay product
# (~8 packets at 10 Mbit and a few ms RTT) for DCTCP to keep full utilization
# with a small standing queue. Configurable per link.
DEFAULT_ECN_THRESHOLD = 7_500.0  # bytes


class TopologyError(ValueError):
    """Invalid topology configuration or unknown host lookup."""


@dataclass(frozen=True, order=True)
class NodeId:
    kind: str  # 'host' or 'switch'
    index: int

    def __str__(self):
        return f"{'h' if self.kind == 'host' else 's'}{self.index}"


@dataclass(frozen=True, order=True)
class PortId:
    node: NodeId
    port: int

    def __str__(self):
        return f"{self.node}:{self.port}"


@dataclass(frozen=True)
class Link:
    a: PortId
    b: PortId
    capacity: float  # bits/s
    prop_delay: float = DEFAULT_PROP_DELAY
    q_max: float = DEFAULT_Q_MAX
    ecn_threshold: float | None = DEFAULT_ECN_THRESHOLD

    def __post_init__(self):
        if self.capacity <= 0:
            raise TopologyError(f"link capacity must be positive, got {self.capacity}")
        if self.q_max <= 0:
            raise TopologyError(f"q_max must be positive, got {self.q_max}")
        if self.ecn_threshold is not None and not (0 < self.ecn_threshold <= self.q_max):
            raise TopologyError(
                f"ecn_threshold {self.ecn_threshold} outside (0, q_max={self.q_max}]"
            )

    def peer(self, port):
        if port == self.a:
            return self.b
        if port == self.b:
            return self.a
        raise TopologyError(f"port {port} not on link {self.a}<->{self.b}")


@dataclass
class Topology:
    """Immutable after construction; safe to share read-only."""

    name: str
    nodes: list[NodeId]
    links: list[Link]
    hosts: list[NodeId]  # ordered; index i is host i
    monitored_ports: list[PortId]  # ordered switch ports
    routes: dict[tuple[int, int], tuple[PortId, ...]] = field(default_factory=dict)

    @property
    def n_hosts(self):
        return len(self.hosts)

    @property
    def n_switches(self):
        return sum(1 for n in self.nodes if n.kind == "switch")

    def link_of(self, port):
        return self._port_links[port]

    def finalize(self):
        self._port_links = {}
        for link in self.links:
            for p in (link.a, link.b):
                if p in self._port_links:
                    raise TopologyError(f"port {p} attached to more than one link")
                self._port_links[p] = link
        return self

    def all_ports(self):
        """Every directed egress port, grouped by node in construction order."""
        by_node = {}
        for link in self.links:
            for p in (link.a, link.b):
                by_node.setdefault(p.node, []).append(p)
        out = []
        for node in self.nodes:
            out.extend(sorted(by_node.get(node, []), key=lambda p: p.port))
        return out


def compute_routes(topology, src, dst):
    """Egress-port path from host `src` to host `dst` (host indices)."""
    if src == dst:
        raise TopologyError("src and dst must differ")
    if not (0 <= src < topology.n_hosts and 0 <= dst < topology.n_hosts):
        raise TopologyError(f"unknown host pair ({src}, {dst})")
    return list(topology.routes[(src, dst)])


def _ecmp_pick(src, dst, n_choices):
    # Fixed integer hash: reproducible training requires deterministic paths.
    return (src * 31 + dst) % n_choices


def build_dumbbell(n_hosts, bw_max, *, prop_delay=DEFAULT_PROP_DELAY,
                   q_max=DEFAULT_Q_MAX, ecn_threshold=DEFAULT_ECN_THRESHOLD):
    """Two switches joined by a single trunk, n_hosts/2 hosts per side.

    All links (host access and trunk) share the capacity bw_max.
    """
    if n_hosts < 2 or n_hosts % 2 != 0:
        raise TopologyError(f"dumbbell needs an even host count >= 2, got {n_hosts}")
    if bw_max <= 0:
        raise TopologyError(f"bw_max must be positive, got {bw_max}")

    half = n_hosts // 2
    hosts = [NodeId("host", i) for i in range(n_hosts)]
    switches = [NodeId("switch", 0), NodeId("switch", 1)]
    link_kw = dict(capacity=bw_max, prop_delay=prop_delay, q_max=q_max,
                   ecn_threshold=ecn_threshold)

    links = []
    host_port = {}  # host index -> (host egress port, switch egress port)
    for i, h in enumerate(hosts):
        sw = switches[0] if i < half else switches[1]
        local = i % half
        hp = PortId(h, 0)
        sp = PortId(sw, local)
        links.append(Link(hp, sp, **link_kw))
        host_port[i] = (hp, sp)
    trunk_a = PortId(switches[0], half)
    trunk_b = PortId(switches[1], half)
    links.append(Link(trunk_a, trunk_b, **link_kw))

    monitored = [PortId(sw, p) for sw in switches for p in range(half + 1)]

    topo = Topology(
        name=f"dumbbell-{n_hosts}",
        nodes=hosts + switches,
        links=links,
        hosts=hosts,
        monitored_ports=monitored,
    ).finalize()

    for s in range(n_hosts):
        for d in range(n_hosts):
            if s == d:
                continue
            path = [host_port[s][0]]
            same_side = (s < half) == (d < half)
            if not same_side:
                path.append(trunk_a if s < half else trunk_b)
            # Egress port on dst's switch facing dst.
            path.append(host_port[d][1])
            topo.routes[(s, d)] = tuple(path)
    return topo


def build_fattree(k, bw_max, *, prop_delay=DEFAULT_PROP_DELAY,
                  q_max=DEFAULT_Q_MAX, ecn_threshold=DEFAULT_ECN_THRESHOLD):
    """Standard k-ary fat-tree: k^3/4 hosts, 5k^2/4 switches, ECMP routing.

    Switch construction order (and hence monitored-port order): all edge
    switches pod-major, then all aggregation switches pod-major, then cores.
    """
    if k < 2 or k % 2 != 0:
        raise TopologyError(f"fat-tree arity k must be even and >= 2, got {k}")
    if bw_max <= 0:
        raise TopologyError(f"bw_max must be positive, got {bw_max}")

    half = k // 2
    n_hosts = k * k * k // 4
    n_edge = n_agg = k * half  # k/2 per pod, k pods
    n_core = half * half

    hosts = [NodeId("host", i) for i in range(n_hosts)]
    edge = [NodeId("switch", i) for i in range(n_edge)]
    agg = [NodeId("switch", n_edge + i) for i in range(n_agg)]
    core = [NodeId("switch", n_edge + n_agg + i) for i in range(n_core)]
    link_kw = dict(capacity=bw_max, prop_delay=prop_delay, q_max=q_max,
                   ecn_threshold=ecn_threshold)

    def edge_sw(pod, i):
        return edge[pod * half + i]

    def agg_sw(pod, i):
        return agg[pod * half + i]

    links = []
    # Host links: edge switch ports 0..k/2-1 face hosts.
    for h_idx, h in enumerate(hosts):
        pod, rem = divmod(h_idx, half * half)
        e, slot = divmod(rem, half)
        links.append(Link(PortId(h, 0), PortId(edge_sw(pod, e), slot), **link_kw))
    # Edge<->agg: edge ports k/2..k-1 face aggs; agg ports 0..k/2-1 face edges.
    for pod in range(k):
        for e in range(half):
            for a in range(half):
                links.append(Link(PortId(edge_sw(pod, e), half + a),
                                  PortId(agg_sw(pod, a), e), **link_kw))
    # Agg<->core: agg ports k/2..k-1 face cores; core port j faces pod j.
    # Agg a in a pod owns cores a*k/2 .. a*k/2 + k/2 - 1.
    for pod in range(k):
        for a in range(half):
            for c in range(half):
                links.append(Link(PortId(agg_sw(pod, a), half + c),
                                  PortId(core[a * half + c], pod), **link_kw))

    monitored = []
    for sw in edge + agg + core:
        ports = sorted((p for link in links for p in (link.a, link.b)
                        if p.node == sw), key=lambda p: p.port)
        monitored.extend(ports)

    topo = Topology(
        name=f"fattree-{k}",
        nodes=hosts + edge + agg + core,
        links=links,
        hosts=hosts,
        monitored_ports=monitored,
    ).finalize()

    def locate(h_idx):
        pod, rem = divmod(h_idx, half * half)
        e, slot = divmod(rem, half)
        return pod, e, slot

    for s in range(n_hosts):
        s_pod, s_e, s_slot = locate(s)
        for d in range(n_hosts):
            if s == d:
                continue
            d_pod, d_e, d_slot = locate(d)
            path = [PortId(hosts[s], 0)]
            if s_pod == d_pod and s_e == d_e:
                pass  # same edge switch, turn around immediately
            elif s_pod == d_pod:
                a = _ecmp_pick(s, d, half)
                path.append(PortId(edge_sw(s_pod, s_e), half + a))
                path.append(PortId(agg_sw(s_pod, a), d_e))
            else:
                a = _ecmp_pick(s, d, half)
                c = _ecmp_pick(s, d, half)  # same hash law at the core stage
                path.append(PortId(edge_sw(s_pod, s_e), half + a))
                path.append(PortId(agg_sw(s_pod, a), half + c))
                path.append(PortId(core[a * half + c], d_pod))
                path.append(PortId(agg_sw(d_pod, a), d_e))
            path.append(PortId(edge_sw(d_pod, d_e), d_slot))
            topo.routes[(s, d)] = tuple(path)
    return topo
