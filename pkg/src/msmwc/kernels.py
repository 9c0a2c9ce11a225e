"""Kernel backend selection.

The compiled extension is used when importable. Set ``MSMWC_KERNELS=python``
to force the numpy fallback, or call :func:`use` at runtime (benchmarks and
tests compare the two paths this way).
"""

import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

entropy_solve = _kernels_py.entropy_solve
ball_multipliers = _kernels_py.ball_multipliers
backend = "python"


def available():
    return sorted(_BACKENDS)


def use(name):
    """Switch the active backend; returns the previous backend name."""
    global entropy_solve, ball_multipliers, backend
    if name == "auto":
        name = "compiled" if _compiled is not None else "python"
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {available()}")
    previous = backend
    mod = _BACKENDS[name]
    entropy_solve = mod.entropy_solve
    ball_multipliers = mod.ball_multipliers
    backend = name
    return previous


_requested = os.environ.get("MSMWC_KERNELS", "auto")
if _requested == "compiled" and _compiled is None:
    log.warning("MSMWC_KERNELS=compiled but the extension is not built; using python")
    _requested = "python"
use(_requested)
