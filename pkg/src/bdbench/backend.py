"""Kernel backend selection.

The compiled extension is preferred; the pure-Python mirror is the fallback.
Set BDBENCH_BACKEND=python to force the fallback (used by the benchmark and
the cross-backend tests).  Both backends implement the same functions with
bit-identical results.
"""

import os

from . import _kernels_py

if os.environ.get("BDBENCH_BACKEND") == "python":
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.BACKEND


def get_kernels(backend: str | None = None):
    """Kernel module by name: 'compiled', 'python', or None for the default."""
    if backend is None:
        return kernels
    if backend == "python":
        return _kernels_py
    if backend == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {backend!r}")
