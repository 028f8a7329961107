"""Select the kernel implementation at import time.

The compiled ``_ckernels`` extension is preferred; ``_pykernels`` is the
fallback. Set ``GEOPRIOR_BACKEND=python`` to force the fallback.
"""
import importlib
import os

_MODULES = {"cython": "geoprior._ckernels", "python": "geoprior._pykernels"}


def load(name):
    """Return the kernel module called ``name`` ('cython' or 'python')."""
    if name not in _MODULES:
        raise ValueError(f"unknown backend {name!r}; expected one of {sorted(_MODULES)}")
    return importlib.import_module(_MODULES[name])


def available():
    names = []
    for name in _MODULES:
        try:
            load(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select():
    wanted = os.environ.get("GEOPRIOR_BACKEND", "").strip().lower()
    if wanted:
        return load(wanted)
    try:
        return load("cython")
    except ImportError:
        return load("python")


kernels = _select()
