"""Fixed-resolution sampling of feature grids for the 3D-conv encoder.

The lattice has (2N)^3 points with per-axis values +-(1/(2N) + n/N) for
n in 0..N-1, so points sit at cell centers relative to a resolution-N grid
and never on its cell boundaries. 2N must be a power of two so the stride-2
convolution pyramid closes at 1^3 (conv depth = log2(2N)).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UnsupportedArchitectureError
from .tensor import no_grad


@dataclass(frozen=True)
class SampleLattice:
    n_half: int
    coords: np.ndarray  # ((2N)^3, 3) float32, x fastest

    @property
    def dim(self):
        return 2 * self.n_half


def sample_coords(n_half):
    """Build the symmetric (2N)^3 lattice for half-resolution N."""
    n = int(n_half)
    if n < 1:
        raise ConfigError("lattice half-resolution must be >= 1")
    d = 2 * n
    if d & (d - 1):
        raise ConfigError(f"2N must be a power of two, got {d}")
    axis = (2.0 * np.arange(d) + 1.0) / d - 1.0  # ascending, symmetric
    zz, yy, xx = np.meshgrid(axis, axis, axis, indexing="ij")
    coords = np.stack([xx, yy, zz], axis=-1).reshape(-1, 3)
    return SampleLattice(n, coords.astype(np.float32))


def gather_features(model, lattice):
    """Feature volume (C, 2N, 2N, 2N) sampled from a grid INR's feature grid.

    Octree/triplane features arrive summed across levels/planes, hash-grid
    features concatenated, exactly as each grid class defines; the volume's
    flattened spatial order matches the lattice (x fastest).
    """
    if model.grid is None:
        raise UnsupportedArchitectureError(
            "feature volumes require a grid-based INR, not an MLP-only model"
        )
    d = lattice.dim
    with no_grad():
        feats = model.grid.interp(lattice.coords).data  # (B, C)
    c = feats.shape[1]
    return np.ascontiguousarray(feats.reshape(d, d, d, c).transpose(3, 0, 1, 2))


def flatten_volume(volume):
    """Inverse of the reshape in gather_features: (C,D,D,D) -> (D^3, C)."""
    c = volume.shape[0]
    return np.ascontiguousarray(volume.reshape(c, -1).T)
