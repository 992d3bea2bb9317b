"""Kernel selection: compiled extension where it wins, numpy elsewhere.

The distance transform and the marching-cubes cell loop are serial,
branchy loops; the Cython versions are two orders of magnitude faster
than the numpy fallbacks and bit-identical to them, so they are selected
whenever the extension built. The 3x3 convolutions stay on the im2col +
BLAS formulation, which wins at the desk-scale training sizes and stays
comparable at larger ones (see benchmarks/bench_kernels.py); the compiled
variants remain available for the benchmark and the equivalence tests.

Set SDFSEG_NO_COMPILED=1 to force the pure-numpy fallbacks everywhere.
"""

import os

from . import _fallback

if os.environ.get("SDFSEG_NO_COMPILED"):
    _impl = _fallback
    HAVE_COMPILED = False
else:
    try:
        from . import _fastcore as _impl

        HAVE_COMPILED = True
    except ImportError:
        _impl = _fallback
        HAVE_COMPILED = False

edt2d_sq = _impl.edt2d_sq
mc_core = _impl.mc_core
conv3x3_forward = _fallback.conv3x3_forward
conv3x3_backward = _fallback.conv3x3_backward
