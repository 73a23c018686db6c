"""Kernel backends must agree bit-for-bit: the Cython kernel mirrors the
Python reference expression-for-expression."""

import numpy as np
import pytest

from fluidcc import kernel
from fluidcc.simnet import Simulation
from fluidcc.topo import build_dumbbell, build_fattree
from fluidcc.transport import FlowSpec


def run_with_backend(fn, topo, specs, offer_blocks):
    sim = Simulation(topo, specs)
    saved = kernel.run_ticks
    kernel.run_ticks = fn
    try:
        outs = []
        for offers in offer_blocks:
            outs.append(sim._run_kernel(offers))
    finally:
        kernel.run_ticks = saved
    return outs, sim.Q.copy(), sim.qtot.copy()


@pytest.fixture(scope="module")
def both_backends():
    backends = kernel.backends()
    if "cython" not in backends:
        pytest.skip("compiled kernel not built")
    return backends


def offer_blocks(n_flows, rng, blocks=4, ticks=50):
    return [rng.uniform(0, 3000, size=(ticks, n_flows)) for _ in range(blocks)]


class TestBackendParity:
    def test_dumbbell_bit_identical(self, both_backends):
        topo = build_dumbbell(4, 10e6)
        specs = [FlowSpec(0, 2, "udp"), FlowSpec(1, 3, "udp")]
        blocks = offer_blocks(2, np.random.default_rng(0))
        out_py, Q_py, qtot_py = run_with_backend(
            both_backends["python"], topo, specs, blocks)
        out_cy, Q_cy, qtot_cy = run_with_backend(
            both_backends["cython"], topo, specs, blocks)
        for a, b in zip(out_py, out_cy):
            for x, y in zip(a, b):
                np.testing.assert_array_equal(x, y)
        np.testing.assert_array_equal(Q_py, Q_cy)
        np.testing.assert_array_equal(qtot_py, qtot_cy)

    def test_fattree_bit_identical(self, both_backends):
        topo = build_fattree(4, 10e6)
        n = topo.n_hosts
        specs = [FlowSpec(i, (i + n // 2) % n, "udp") for i in range(n)]
        blocks = offer_blocks(n, np.random.default_rng(1), blocks=2)
        out_py, Q_py, _ = run_with_backend(
            both_backends["python"], topo, specs, blocks)
        out_cy, Q_cy, _ = run_with_backend(
            both_backends["cython"], topo, specs, blocks)
        for a, b in zip(out_py, out_cy):
            for x, y in zip(a, b):
                np.testing.assert_array_equal(x, y)
        np.testing.assert_array_equal(Q_py, Q_cy)

    def test_backend_names(self):
        assert kernel.BACKEND in ("python", "cython")
        assert "python" in kernel.backends()
