"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when importable; otherwise the
pure-Python ``_pykernels`` twin. Set ``NSSG_PURE_PYTHON=1`` to force the
fallback.
"""

import importlib
import os

BACKENDS = ("cython", "python")
_MODULES = {"cython": "nssg._ckernels", "python": "nssg._pykernels"}


def load_backend(name):
    """Import and return the kernel module for backend ``name``."""
    if name not in _MODULES:
        raise ValueError(f"unknown kernel backend {name!r}; choose from {BACKENDS}")
    return importlib.import_module(_MODULES[name])


def available_backends():
    out = []
    for name in BACKENDS:
        try:
            load_backend(name)
        except ImportError:
            continue
        out.append(name)
    return out


def _select():
    if os.environ.get("NSSG_PURE_PYTHON", "") not in ("", "0"):
        return "python", load_backend("python")
    try:
        return "cython", load_backend("cython")
    except ImportError:
        return "python", load_backend("python")


BACKEND, kernels = _select()
