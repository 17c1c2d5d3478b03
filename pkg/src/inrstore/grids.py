"""Learnable spatial feature grids: sparse octree, triplane, multi-level hash.

Query coordinates live in the max-norm domain [-1,1]^3 and are mapped to
[0,1]^3 internally. Interpolation is an autodiff operation with gradients
flowing into the stored feature tables (never into the coordinates).

How per-level features combine is a fixed property of each grid class:
octree and triplane features are summed, hash-grid level features are
concatenated in ascending resolution order. There is deliberately no switch
to swap these.
"""

import numpy as np

from . import kernels
from .corpus import check_domain
from .errors import ConfigError, ShapeMismatchError
from .tensor import Tensor, _record

HASH_PRIMES = (np.uint32(1), np.uint32(2654435761), np.uint32(805459861))

# corner order: x fastest (bit 0), then y, then z
_CORNERS = np.array(
    [[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], dtype=np.int64
)
_CORNERS = _CORNERS[np.argsort(_CORNERS[:, 0] + 2 * _CORNERS[:, 1] + 4 * _CORNERS[:, 2])]


def _to_unit(coords):
    coords = check_domain(np.asarray(coords, dtype=np.float64))
    return (coords + 1.0) * 0.5


def _cells_and_weights(u, cells):
    """Containing cell (clamped) and the 8 trilinear corner weights."""
    scaled = u * cells
    cell = np.clip(np.floor(scaled), 0, cells - 1).astype(np.int64)
    frac = scaled - cell
    lo_hi = np.stack([1.0 - frac, frac], axis=2)  # (B,3,2)
    w = (
        lo_hi[:, 0, _CORNERS[:, 0]]
        * lo_hi[:, 1, _CORNERS[:, 1]]
        * lo_hi[:, 2, _CORNERS[:, 2]]
    )
    corners = cell[:, None, :] + _CORNERS[None, :, :]  # (B,8,3)
    return corners, w


def _gather(table, idx, w):
    """Autodiff weighted gather into a feature table Tensor."""
    w = np.ascontiguousarray(w, dtype=table.data.dtype)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    out = kernels.gather_rows(table.data, idx, w)

    def bw(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            kernels.scatter_rows(table.grad, idx, w, np.ascontiguousarray(g))

    return _record(out, (table,), bw)


# ---------------------------------------------------------------------------
# multi-level hash grid
# ---------------------------------------------------------------------------


def spatial_hash(corners, table_size):
    """iNGP-style spatial hash of integer corners, masked to table_size slots."""
    c = corners.astype(np.uint32)
    h = c[..., 0] * HASH_PRIMES[0]
    h ^= c[..., 1] * HASH_PRIMES[1]
    h ^= c[..., 2] * HASH_PRIMES[2]
    return (h & np.uint32(table_size - 1)).astype(np.int64)


class HashGrid:
    """Hash grid: per-level tables, dense row-major indexing when the level
    fits, spatial hashing otherwise; level features are concatenated."""

    combine = "concat"

    def __init__(self, resolutions=(16, 50, 161, 512), table_size=2**19, width=2):
        resolutions = tuple(int(r) for r in resolutions)
        if any(b <= a for a, b in zip(resolutions, resolutions[1:])):
            raise ConfigError("level resolutions must be strictly increasing")
        if table_size & (table_size - 1) or table_size <= 0:
            raise ConfigError("hash table size must be a power of two")
        if table_size > 2**19:
            raise ConfigError("hash table size must be at most 2^19 per level")
        self.resolutions = resolutions
        self.table_size = int(table_size)
        self.width = int(width)
        self.tables = []
        for res in resolutions:
            rows = res**3 if self.is_dense(res) else self.table_size
            self.tables.append(Tensor(np.zeros((rows, width), dtype=np.float32)))

    def is_dense(self, res):
        return res**3 <= self.table_size

    def init_features(self, rng, std=0.01):
        for t in self.tables:
            t.data = rng.normal(0.0, std, size=t.data.shape).astype(np.float32)

    @property
    def feature_width(self):
        return self.width * len(self.resolutions)

    def corner_index(self, level, corners):
        """Table slot per corner: dense row-major (x fastest) or spatial hash."""
        res = self.resolutions[level]
        corners = np.asarray(corners, dtype=np.int64)
        if self.is_dense(res):
            return corners[..., 0] + res * corners[..., 1] + res * res * corners[..., 2]
        return spatial_hash(corners, self.table_size)

    def level_interp(self, level, coords):
        u = _to_unit(coords)
        res = self.resolutions[level]
        corners, w = _cells_and_weights(u, res - 1)
        idx = self.corner_index(level, corners)
        return _gather(self.tables[level], idx, w)

    def interp(self, coords):
        from .tensor import concat

        feats = [self.level_interp(lv, coords) for lv in range(len(self.resolutions))]
        return concat(feats, axis=1)

    def parameters(self):
        return list(self.tables)


def hash_index(grid, level, corner):
    """Slot of one integer corner coordinate at a hash-grid level."""
    return int(grid.corner_index(level, np.asarray(corner, dtype=np.int64)))


def interp_hash(grid, coords):
    if not isinstance(grid, HashGrid):
        raise ShapeMismatchError("interp_hash expects a HashGrid")
    return grid.interp(coords)


# ---------------------------------------------------------------------------
# sparse voxel octree
# ---------------------------------------------------------------------------


class OctreeGrid:
    """Six-level octree; corner features stored only for feature_levels
    (default 3..6) at voxels near the surface; level features are summed.

    Missing voxels contribute a zero feature vector.
    """

    combine = "sum"

    def __init__(self, masks, features, width=8, feature_levels=(3, 4, 5, 6)):
        self.feature_levels = tuple(feature_levels)
        self.width = int(width)
        self.masks = masks  # level -> bool (res^3,) voxel occupancy, x fastest
        self.features = features  # level -> Tensor (n_corners, width)
        self.corner_rows = {}
        for lv in self.feature_levels:
            self.corner_rows[lv] = self._build_corner_rows(lv)
            expect = int(self.corner_rows[lv].max()) + 1 if self.corner_rows[lv].max() >= 0 else 0
            if features[lv].data.shape != (expect, self.width):
                raise ShapeMismatchError(
                    f"level {lv} features {features[lv].data.shape} != ({expect},{self.width})"
                )

    def _build_corner_rows(self, level):
        """Row index per corner, -1 where no incident voxel exists.

        Flattened layouts are x-fastest: voxel (x,y,z) -> x + res*y + res^2*z,
        so 3-D views are indexed [z,y,x]. A corner exists iff any of its up to
        8 incident voxels is occupied.
        """
        res = 2**level
        mask = self.masks[level].reshape(res, res, res)  # [z,y,x]
        padded = np.zeros((res + 2, res + 2, res + 2), dtype=bool)
        padded[1:-1, 1:-1, 1:-1] = mask
        exist = np.zeros((res + 1, res + 1, res + 1), dtype=bool)
        for dz in (0, 1):
            for dy in (0, 1):
                for dx in (0, 1):
                    exist |= padded[dz : dz + res + 1, dy : dy + res + 1, dx : dx + res + 1]
        flat = exist.reshape(-1)
        rows = np.full(flat.shape, -1, dtype=np.int64)
        rows[flat] = np.arange(int(flat.sum()))
        return rows

    @classmethod
    def build(cls, field, rng, width=8, feature_levels=(3, 4, 5, 6), std=0.01):
        """Allocate voxels where |field(center)| < cell diagonal, then init
        corner features from N(0, std^2)."""
        masks = {}
        features = {}
        grid = object.__new__(cls)
        grid.feature_levels = tuple(feature_levels)
        grid.width = int(width)
        for lv in feature_levels:
            res = 2**lv
            ax = (np.arange(res) + 0.5) / res * 2.0 - 1.0
            zz, yy, xx = np.meshgrid(ax, ax, ax, indexing="ij")
            centers = np.stack([xx, yy, zz], axis=-1).reshape(-1, 3)
            vals = np.asarray(field(centers)).reshape(-1)
            diag = np.sqrt(3.0) * (2.0 / res)
            mask = np.abs(vals) < diag
            masks[lv] = mask
        grid.masks = masks
        grid.corner_rows = {lv: grid._build_corner_rows(lv) for lv in feature_levels}
        for lv in feature_levels:
            n = int((grid.corner_rows[lv] >= 0).sum())
            features[lv] = Tensor(
                rng.normal(0.0, std, size=(n, width)).astype(np.float32)
            )
        grid.features = features
        return grid

    @property
    def feature_width(self):
        return self.width

    def level_interp(self, level, coords):
        """Trilinear feature at one level; zeros where the voxel is absent."""
        if level not in self.feature_levels:
            raise ConfigError(f"level {level} stores no features")
        u = _to_unit(coords)
        res = 2**level
        corners, w = _cells_and_weights(u, res)
        cell = corners[:, 0, :]  # the (0,0,0) corner == containing cell
        flat_cell = cell[:, 0] + res * cell[:, 1] + res * res * cell[:, 2]
        present = self.masks[level][flat_cell]
        stride = res + 1
        flat_corner = (
            corners[..., 0] + stride * corners[..., 1] + stride * stride * corners[..., 2]
        )
        idx = self.corner_rows[level][flat_corner]
        idx = np.where(present[:, None], idx, -1)
        return _gather(self.features[level], idx, w)

    def interp(self, coords):
        from .tensor import add

        out = self.level_interp(self.feature_levels[0], coords)
        for lv in self.feature_levels[1:]:
            out = add(out, self.level_interp(lv, coords))
        return out

    def parameters(self):
        return [self.features[lv] for lv in self.feature_levels]


def interp_octree(grid, coords, level):
    if not isinstance(grid, OctreeGrid):
        raise ShapeMismatchError("interp_octree expects an OctreeGrid")
    return grid.level_interp(level, coords)


# ---------------------------------------------------------------------------
# triplane
# ---------------------------------------------------------------------------


class TriplaneGrid:
    """Three axis-aligned feature planes (XY, XZ, YZ); bilinear per plane,
    summed across planes."""

    combine = "sum"
    PLANE_AXES = ((0, 1), (0, 2), (1, 2))

    def __init__(self, resolution=64, width=8):
        self.resolution = int(resolution)
        self.width = int(width)
        # single table of 3*R*R rows so one gather covers all planes
        self.planes = Tensor(
            np.zeros((3 * self.resolution * self.resolution, width), dtype=np.float32)
        )

    def init_features(self, rng, std=0.01):
        self.planes.data = rng.normal(0.0, std, size=self.planes.data.shape).astype(
            np.float32
        )

    @property
    def feature_width(self):
        return self.width

    def plane_array(self):
        r = self.resolution
        return self.planes.data.reshape(3, r, r, self.width)

    def set_plane_array(self, arr):
        self.planes.data = np.ascontiguousarray(arr, dtype=np.float32).reshape(
            3 * self.resolution * self.resolution, self.width
        )

    def interp(self, coords):
        u = _to_unit(coords)
        r = self.resolution
        b = len(u)
        idx = np.empty((b, 12), dtype=np.int64)
        w = np.empty((b, 12), dtype=np.float64)
        for pi, (a0, a1) in enumerate(self.PLANE_AXES):
            scaled0 = u[:, a0] * (r - 1)
            scaled1 = u[:, a1] * (r - 1)
            c0 = np.clip(np.floor(scaled0), 0, r - 2).astype(np.int64) if r > 1 else np.zeros(b, np.int64)
            c1 = np.clip(np.floor(scaled1), 0, r - 2).astype(np.int64) if r > 1 else np.zeros(b, np.int64)
            f0 = scaled0 - c0
            f1 = scaled1 - c1
            base = pi * r * r
            for k, (d0, d1) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
                idx[:, 4 * pi + k] = base + (c0 + d0) + r * (c1 + d1)
                w[:, 4 * pi + k] = (f0 if d0 else 1.0 - f0) * (f1 if d1 else 1.0 - f1)
        return _gather(self.planes, idx, w)

    def parameters(self):
        return [self.planes]


def interp_triplane(grid, coords):
    if not isinstance(grid, TriplaneGrid):
        raise ShapeMismatchError("interp_triplane expects a TriplaneGrid")
    return grid.interp(coords)
