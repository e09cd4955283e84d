"""Hot-loop kernels with a compiled core and a numpy fallback.

The compiled extension (``prefdiv.kernels._fast``, Cython) is preferred;
if it is missing, or ``PREFDIV_PURE_PYTHON`` is set in the environment,
the numpy implementation is used. Both expose the same four functions.
"""

from __future__ import annotations

import os

from . import _pure

if os.environ.get("PREFDIV_PURE_PYTHON"):
    _impl = _pure
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

BACKEND = _impl.BACKEND

pairwise_sim_sum = _impl.pairwise_sim_sum
greedy_pick = _impl.greedy_pick
build_tree = _impl.build_tree
forest_path_lengths = _impl.forest_path_lengths


def backend_name() -> str:
    """Which kernel implementation is active: ``fast`` or ``pure``."""
    return BACKEND
