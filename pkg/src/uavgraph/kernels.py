"""Route kernel selection: compiled extension when importable, else pure Python.

Set ``UAVGRAPH_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py as python_impl

if os.environ.get("UAVGRAPH_PURE_PYTHON", "") not in ("", "0"):
    compiled_impl = None
else:
    try:
        from . import _kernels as compiled_impl
    except ImportError:  # extension not built
        compiled_impl = None

active = compiled_impl if compiled_impl is not None else python_impl
IMPLEMENTATION: str = active.IMPLEMENTATION

segment_energies = active.segment_energies
best_insertion = active.best_insertion
exhaustive_search = active.exhaustive_search
min_peak_search = active.min_peak_search
