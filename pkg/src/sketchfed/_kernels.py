"""Kernel selection.

Set ``SKETCHFED_DISABLE_NUMBA=1`` to force the pure-numpy path. The compiled
path is used whenever numba imports cleanly.
"""
import os

from . import _kernels_numpy as numpy_kernels

_disabled = os.environ.get("SKETCHFED_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

numba_kernels = None
if not _disabled:
    try:
        from . import _kernels_numba as numba_kernels
    except ImportError:  # pragma: no cover - numba missing
        numba_kernels = None

USE_NUMBA = numba_kernels is not None
active = numba_kernels if USE_NUMBA else numpy_kernels

fwht = active.fwht
gaussian_sk = active.gaussian_sk
gaussian_desk = active.gaussian_desk
countsketch_sk = active.countsketch_sk
countsketch_desk = active.countsketch_desk
scatter_add = active.scatter_add

# construction-time hashing is vectorized numpy on both paths
counter_hash = numpy_kernels.counter_hash
counter_uniform = numpy_kernels.counter_uniform
