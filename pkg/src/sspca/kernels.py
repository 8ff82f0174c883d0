"""Backend selection for the BCD sweep kernels.

The compiled Cython module is used when importable; otherwise, or when the
environment variable ``SSPCA_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the numpy implementation is used.
"""

import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)


def _load_compiled():
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()
_force_py = os.environ.get("SSPCA_PURE_PYTHON", "") not in ("", "0")

if _compiled is not None and not _force_py:
    backend = _compiled
    BACKEND = "cython"
else:
    backend = _kernels_py
    BACKEND = "python"
    if _compiled is None:
        log.debug("compiled kernels unavailable; using pure-Python sweeps")


def available_backends():
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out


def get_backend(name=None):
    """Return the kernel module ``name`` (``"cython"``/``"python"``) or the active one."""
    if name is None:
        return backend
    try:
        return available_backends()[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available") from None


sweep_u = backend.sweep_u
sweep_v = backend.sweep_v
project_l1 = backend.project_l1
project_l2 = backend.project_l2
