"""Hot scoring kernels: compiled core with a NumPy fallback.

The compiled extension (``probaudit.kernels._native``) is selected at
import when present; set ``PROBAUDIT_PURE_PYTHON=1`` to force the NumPy
backend.  Both backends implement the same ``score_blocks`` contract and
agree to tight numerical tolerance; ``benchmarks/bench_kernels.py``
compares their throughput.
"""

import os

from . import _numpy


def _load_native():
    try:
        from . import _native  # built by setup.py; absent on pure installs
    except ImportError:
        return None
    return _native


if os.environ.get("PROBAUDIT_PURE_PYTHON"):
    _backend = _numpy
else:
    _backend = _load_native() or _numpy

BACKEND = _backend.NAME
score_blocks = _backend.score_blocks


def available_backends() -> list:
    """Names of usable backends, preferred first."""
    native = _load_native()
    return (["native"] if native else []) + ["numpy"]


def get_backend(name: str):
    """Fetch a backend module by name ("native" or "numpy")."""
    if name == "numpy":
        return _numpy
    if name == "native":
        native = _load_native()
        if native is None:
            raise ImportError("compiled kernel not available; rebuild with setup.py")
        return native
    raise ValueError(f"unknown backend {name!r}")
