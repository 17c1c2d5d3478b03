"""Hot-kernel dispatch: numba when available and enabled, numpy otherwise."""

from ..backend import USE_NUMBA

if USE_NUMBA:
    from .numba_impl import (
        adam_update,
        conv3d_down_backward,
        conv3d_down_forward,
        gather_rows,
        nn_min_dists,
        scatter_rows,
    )
else:
    from .numpy_impl import (
        adam_update,
        conv3d_down_backward,
        conv3d_down_forward,
        gather_rows,
        nn_min_dists,
        scatter_rows,
    )

__all__ = [
    "adam_update",
    "conv3d_down_backward",
    "conv3d_down_forward",
    "gather_rows",
    "nn_min_dists",
    "scatter_rows",
]
