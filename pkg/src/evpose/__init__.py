"""Event-driven continuous 3D body pose estimation.

The package turns an asynchronous event stream into a stream of 3D body
poses: events are binned into fixed windows and encoded as normalized time
surfaces, a convolutional encoder with deformable attention and diagonal
state-space sequence blocks produces per-window joint features, and two
regression heads (absolute and inter-window displacement) are combined by a
learned Kalman-style filter into a smooth, drift-free pose stream.
"""

import os as _os

# Honor the documented thread cap before numpy (and its BLAS) is loaded
# anywhere in the package. Must run at import of the top-level package.
_threads = _os.environ.get("E3DPSM_THREADS")
if _threads:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
    ):
        _os.environ.setdefault(_var, _threads)
del _os

__version__ = "0.1.0"
