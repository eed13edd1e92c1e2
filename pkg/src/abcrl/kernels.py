"""Backend selection for the hot loops.

The compiled ``_kernels`` extension is used when it imports; otherwise (or
when ``ABCRL_PURE_PYTHON`` is set to a non-empty value other than ``0``)
the pure-Python versions in ``_kernels_py`` are used.  ``BACKEND`` names
the active one.
"""

from __future__ import annotations

import os

from . import _kernels_py

_force_py = os.environ.get("ABCRL_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_py:
        raise ImportError("pure-Python backend forced by ABCRL_PURE_PYTHON")
    from . import _kernels as _impl  # type: ignore[attr-defined]
    BACKEND = "compiled"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

COMPILED = BACKEND == "compiled"

shake_counts = _impl.shake_counts
spin_counts = _impl.spin_counts
rollout_episode = _impl.rollout_episode

__all__ = ["BACKEND", "COMPILED", "shake_counts", "spin_counts", "rollout_episode"]
