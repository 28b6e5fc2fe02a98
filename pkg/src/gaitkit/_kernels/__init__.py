"""Kernel backend selection.

The compiled Cython core is preferred when it imported cleanly; the NumPy
reference implementation is the fallback. ``GAITKIT_KERNELS=numpy`` (or
``=compiled``) forces a backend, which the benchmark suite uses to compare
both on the same machine.
"""

import os

from . import _ref

try:
    from . import _core
except ImportError:  # pragma: no cover - depends on build environment
    _core = None


def available_backends():
    names = ["numpy"]
    if _core is not None:
        names.append("compiled")
    return names


def get_backend(name):
    if name == "numpy":
        return _ref
    if name == "compiled":
        if _core is None:
            raise RuntimeError("compiled kernel core is not available")
        return _core
    raise ValueError(f"unknown kernel backend {name!r}")


_forced = os.environ.get("GAITKIT_KERNELS")
if _forced:
    backend = get_backend(_forced)
else:
    backend = _core if _core is not None else _ref

NAME = backend.NAME

conv1d_fwd = backend.conv1d_fwd
conv1d_bwd = backend.conv1d_bwd
depthwise_fwd = backend.depthwise_fwd
depthwise_bwd = backend.depthwise_bwd
round_away = backend.round_away
rounddiv_pow2 = backend.rounddiv_pow2
int_conv1d = backend.int_conv1d
int_depthwise = backend.int_depthwise
int_dense = backend.int_dense
