"""Tick-kernel backend selection.

Prefers the compiled Cython kernel when built; falls back to the pure-Python
reference otherwise. Set FLUIDCC_PURE_PY=1 to force the fallback (useful for
debugging and for the backend-parity tests/benchmark).
"""

import os

from . import _kernel_py

BACKEND = "python"
run_ticks = _kernel_py.run_ticks

if not os.environ.get("FLUIDCC_PURE_PY"):
    try:
        from . import _kernel_c

        run_ticks = _kernel_c.run_ticks
        BACKEND = "cython"
    except ImportError:
        pass


def backends():
    """All importable kernel backends, name -> run_ticks."""
    out = {"python": _kernel_py.run_ticks}
    try:
        from . import _kernel_c

        out["cython"] = _kernel_c.run_ticks
    except ImportError:
        pass
    return out
