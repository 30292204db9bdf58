"""Tick-kernel backend selection.

Prefers the compiled extension, falls back to the pure-Python kernel.
Set ``PNEUTWIN_PURE=1`` to force the fallback (used by the benchmark and
the cross-backend tests).  Both backends produce bit-identical results.
"""

from __future__ import annotations

import os

from . import _kernel_py


def _load():
    if os.environ.get("PNEUTWIN_PURE") == "1":
        return _kernel_py
    try:
        from . import _kernel  # compiled extension
    except ImportError:
        return _kernel_py
    return _kernel


_active = _load()

channel_tick = _active.channel_tick
BACKEND_NAME: str = _active.BACKEND_NAME


def available_backends() -> dict[str, object]:
    """Importable kernels keyed by name ('python' always, 'compiled' if built)."""
    backends: dict[str, object] = {_kernel_py.BACKEND_NAME: _kernel_py}
    try:
        from . import _kernel
    except ImportError:
        pass
    else:
        backends[_kernel.BACKEND_NAME] = _kernel
    return backends
