"""Shape-aware segmentation toolkit.

Pipeline: binary masks -> per-slice signed distance fields -> jointly
trained two-head encoder-decoder -> marching-cubes surface reconstruction
-> volumetric and surface-distance metrics. Synthetic phantom volumes
stand in for clinical data.
"""

from ._kernels import HAVE_COMPILED

__version__ = "0.1.0"

__all__ = ["HAVE_COMPILED", "__version__"]
