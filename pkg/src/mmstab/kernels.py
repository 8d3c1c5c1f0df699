"""Backend selection for the grid-oracle kernel.

The compiled extension is used when it imports; setting
``MMSTAB_PURE_PYTHON=1`` forces the numpy implementation.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
grid_inner_max = _kernels_py.grid_inner_max

if os.environ.get("MMSTAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        grid_inner_max = _compiled.grid_inner_max
        BACKEND = "cython"

__all__ = ["BACKEND", "grid_inner_max"]
