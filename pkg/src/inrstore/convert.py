"""Conversion of implicit fields to explicit representations.

Sphere tracing steps a ray by the field value (scaled by a damping factor
for unsigned fields, which otherwise overshoot); a hit is a point whose
field magnitude falls under the tolerance. Occupancy fields cannot be
traced, so their surface points come from sign changes on a lattice.

Works on anything exposing ``fn`` (tag) and ``evaluate((B,3)) -> (B,)``:
trained INRs and the exact-oracle adapter below.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateShapeError, TagError
from .rng import rng_stream

SQRT3 = float(np.sqrt(3.0))


@dataclass
class TraceConfig:
    eps: float = 1e-3
    max_steps: int = 128
    beta: float = 0.7  # damping for unsigned fields, in (0,1]

    def __post_init__(self):
        if self.eps <= 0:
            raise ConfigError("hit tolerance must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if not (0.0 < self.beta <= 1.0):
            raise ConfigError("damping factor must lie in (0, 1]")


class OracleField:
    """Exact implicit function of a ShapeOracle behind the INR interface."""

    def __init__(self, oracle, fn):
        self.oracle = oracle
        self.fn = fn
        self.id = oracle.id

    def evaluate(self, coords):
        return np.asarray(self.oracle.value(self.fn, coords), dtype=np.float32).reshape(-1)


def _ray_box_entry(origins, dirs, lo=-1.0, hi=1.0):
    """Slab test against the domain cube; returns entry distance (inf = miss)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (lo - origins) * inv
        t2 = (hi - origins) * inv
    tmin = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2)).max(axis=1)
    tmax = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2)).min(axis=1)
    entry = np.where((tmax >= tmin) & (tmax >= 0), np.maximum(tmin, 0.0), np.inf)
    return entry


def trace_rays(field, origins, dirs, cfg, damped=False):
    """Batch sphere tracing. Returns (hit mask, hit points).

    Rays are clipped to the domain cube first; stepping uses the field value
    (times the damping factor when damped) and a ray dies once it leaves the
    domain or exhausts the step budget. A hit satisfies |f(x)| < eps.
    """
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    n = len(origins)
    entry = _ray_box_entry(origins, dirs)
    pts = origins + entry[:, None] * dirs
    alive = np.isfinite(entry)
    pts = np.clip(pts, -1.0, 1.0)  # guard boundary rounding
    hit = np.zeros(n, dtype=bool)
    out = np.zeros((n, 3), dtype=np.float64)
    step_scale = cfg.beta if damped else 1.0
    for _ in range(cfg.max_steps):
        if not alive.any():
            break
        idx = np.nonzero(alive)[0]
        vals = np.asarray(field.evaluate(pts[idx].astype(np.float32)), dtype=np.float64)
        got = np.abs(vals) < cfg.eps
        hit_idx = idx[got]
        hit[hit_idx] = True
        out[hit_idx] = pts[hit_idx]
        alive[hit_idx] = False
        move = idx[~got]
        if len(move) == 0:
            continue
        pts[move] += (step_scale * vals[~got])[:, None] * dirs[move]
        escaped = np.abs(pts[move]).max(axis=1) > 1.0
        alive[move[escaped]] = False
    return hit, out


def _require_tag(field, tags, what):
    if field.fn not in tags:
        raise TagError(f"{what} requires a {' or '.join(tags)} field, got {field.fn!r}")


def sphere_trace(field, origin, direction, cfg=None):
    """Trace one ray through a signed distance field; hit point or None."""
    cfg = cfg or TraceConfig()
    _require_tag(field, ("sdf",), "sphere tracing")
    hit, pts = trace_rays(field, np.asarray([origin]), np.asarray([direction]), cfg)
    return pts[0] if hit[0] else None


def damped_sphere_trace(field, origin, direction, cfg=None):
    """Trace one ray through an unsigned distance field with damped steps."""
    cfg = cfg or TraceConfig()
    _require_tag(field, ("udf",), "damped sphere tracing")
    if cfg.beta >= 1.0:
        warnings.warn("damping factor 1.0 on an unsigned field risks overshooting")
    hit, pts = trace_rays(
        field, np.asarray([origin]), np.asarray([direction]), cfg, damped=True
    )
    return pts[0] if hit[0] else None


def sample_point_cloud(
    field, n, cfg=None, seed=0, batch=8192, max_rays=1_000_000, min_hit_rate=0.01
):
    """Exactly n surface points via tracing from random boundary rays.

    Origins lie on the sphere of radius sqrt(3) that circumscribes the
    domain cube; directions aim at jittered interior targets. Deterministic
    in the seed. Raises DegenerateShapeError when the hit rate stays under
    min_hit_rate after max_rays rays.
    """
    cfg = cfg or TraceConfig()
    _require_tag(field, ("sdf", "udf"), "point-cloud sampling")
    damped = field.fn == "udf"
    rng = rng_stream(seed, "point-cloud", getattr(field, "id", "anon"))
    collected = []
    total_rays = 0
    total_hits = 0
    while total_hits < n:
        d = rng.normal(size=(batch, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        origins = SQRT3 * d
        targets = rng.uniform(-0.3, 0.3, size=(batch, 3))
        dirs = targets - origins
        hit, pts = trace_rays(field, origins, dirs, cfg, damped=damped)
        collected.append(pts[hit])
        total_hits += int(hit.sum())
        total_rays += batch
        if total_rays >= max_rays and total_hits < max(1, min_hit_rate * total_rays):
            raise DegenerateShapeError(
                f"hit rate {total_hits}/{total_rays} below {min_hit_rate:%} "
                "after the ray budget; shape appears degenerate"
            )
        if total_rays >= max_rays and total_hits == 0:
            raise DegenerateShapeError("no surface hits within the ray budget")
    return np.concatenate(collected)[:n].astype(np.float32)


def camera_positions(n_views, distance=3.0, elevation=0.65):
    """Evenly spaced azimuths on a circle at the given elevation angle."""
    az = 2.0 * np.pi * np.arange(n_views) / n_views
    ce, se = np.cos(elevation), np.sin(elevation)
    return distance * np.stack([ce * np.cos(az), ce * np.sin(az), np.full(n_views, se)], axis=1)


def render_depth_views(field, n_views=12, resolution=224, cfg=None, fov_deg=60.0):
    """Depth maps from cameras on a circular trajectory looking at the origin.

    Depth is Euclidean distance from the camera center to the hit point;
    background pixels are +inf.
    """
    if resolution < 16:
        raise ConfigError("resolution must be >= 16")
    cfg = cfg or TraceConfig()
    _require_tag(field, ("sdf", "udf"), "depth rendering")
    damped = field.fn == "udf"
    cams = camera_positions(n_views)
    tanf = np.tan(np.radians(fov_deg) / 2.0)
    maps = np.full((n_views, resolution, resolution), np.inf, dtype=np.float32)
    px = (np.arange(resolution) + 0.5) / resolution * 2.0 - 1.0
    for vi, cam in enumerate(cams):
        fwd = -cam / np.linalg.norm(cam)
        right = np.cross(fwd, np.array([0.0, 0.0, 1.0]))
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        xs, ys = np.meshgrid(px, -px)  # image rows top-down
        dirs = (
            fwd[None, :]
            + (xs.reshape(-1, 1) * tanf) * right[None, :]
            + (ys.reshape(-1, 1) * tanf) * up[None, :]
        )
        origins = np.broadcast_to(cam, dirs.shape)
        hit, pts = trace_rays(field, origins, dirs, cfg, damped=damped)
        depth = np.full(len(dirs), np.inf)
        depth[hit] = np.linalg.norm(pts[hit] - cam, axis=1)
        maps[vi] = depth.reshape(resolution, resolution)
    return maps


def occ_surface_points(field, grid_res, n, batch=65536):
    """Surface points of an occupancy field: midpoints of axis-adjacent
    lattice cells with opposite signs, resampled deterministically to n."""
    if grid_res < 16:
        raise ConfigError("grid resolution must be >= 16")
    _require_tag(field, ("occ",), "occupancy surface extraction")
    ax = (np.arange(grid_res) + 0.5) / grid_res * 2.0 - 1.0
    zz, yy, xx = np.meshgrid(ax, ax, ax, indexing="ij")
    coords = np.stack([xx, yy, zz], axis=-1).reshape(-1, 3).astype(np.float32)
    vals = np.empty(len(coords), dtype=np.float32)
    for s in range(0, len(coords), batch):
        vals[s : s + batch] = field.evaluate(coords[s : s + batch])
    inside = (vals < 0).reshape(grid_res, grid_res, grid_res)  # [z,y,x]
    pts3 = coords.reshape(grid_res, grid_res, grid_res, 3)
    mids = []
    for axis in (2, 1, 0):  # x, y, z neighbours
        sl_a = [slice(None)] * 3
        sl_b = [slice(None)] * 3
        sl_a[axis] = slice(0, -1)
        sl_b[axis] = slice(1, None)
        flip = inside[tuple(sl_a)] != inside[tuple(sl_b)]
        if flip.any():
            mids.append(
                0.5 * (pts3[tuple(sl_a)][flip] + pts3[tuple(sl_b)][flip])
            )
    if not mids:
        raise DegenerateShapeError("occupancy field has a uniform sign on the lattice")
    mids = np.concatenate(mids)
    m = len(mids)
    if m >= n:
        idx = np.linspace(0, m - 1, n).round().astype(np.int64)
    else:
        idx = np.arange(n, dtype=np.int64) % m
    return mids[idx].astype(np.float32)


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------


def save_ply(points, path):
    """ASCII PLY with x y z rows."""
    points = np.asarray(points, dtype=np.float32)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(points)}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    for p in points:
        lines.append(f"{p[0]:.8g} {p[1]:.8g} {p[2]:.8g}")
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")


def load_ply(path):
    pts = []
    with open(path, "r", encoding="ascii") as f:
        header = True
        for line in f:
            if header:
                if line.strip() == "end_header":
                    header = False
                continue
            parts = line.split()
            if len(parts) >= 3:
                pts.append([float(parts[0]), float(parts[1]), float(parts[2])])
    return np.asarray(pts, dtype=np.float32)


DEPTH_SCALE = 8192.0  # stored value = depth * DEPTH_SCALE; 65535 = background


def save_pgm16(depth, path, scale=DEPTH_SCALE):
    """16-bit binary PGM; finite depths scale by `scale`, background = 65535."""
    depth = np.asarray(depth, dtype=np.float64)
    vals = np.where(
        np.isfinite(depth), np.clip(np.round(depth * scale), 0, 65534), 65535
    ).astype(">u2")
    header = f"P5\n{depth.shape[1]} {depth.shape[0]}\n65535\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(vals.tobytes())
