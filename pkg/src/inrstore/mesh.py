"""Optional triangle-mesh oracle (brute force, intended for small meshes).

Unsigned distance is the exact minimum point-triangle distance over all
triangles; the sign comes from ray-crossing parity. Deliberately simple and
slow; the procedural corpus is the fast path.
"""

import numpy as np

from .corpus import check_domain
from .errors import InputError


def load_obj(path):
    """Read vertices and (fan-triangulated) faces from a Wavefront OBJ file."""
    verts = []
    faces = []
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            parts = raw.split()
            if not parts:
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise InputError("OBJ vertex line needs 3 coordinates")
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                if len(idx) < 3:
                    raise InputError("OBJ face line needs at least 3 vertices")
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise InputError("OBJ file contains no triangles")
    v = np.asarray(verts, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    return v[f]  # (T,3,3)


def _point_triangle_dist(p, tri):
    """Min distance from point p to each triangle in tri (T,3,3)."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = (ab * ap).sum(1)
    d2 = (ac * ap).sum(1)
    bp = p - b
    d3 = (ab * bp).sum(1)
    d4 = (ac * bp).sum(1)
    cp = p - c
    d5 = (ab * cp).sum(1)
    d6 = (ac * cp).sum(1)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    closest = np.empty_like(a)
    # vertex regions
    m = (d1 <= 0) & (d2 <= 0)
    closest[m] = a[m]
    m2 = (d3 >= 0) & (d4 <= d3) & ~m
    closest[m2] = b[m2]
    done = m | m2
    m3 = (d6 >= 0) & (d5 <= d6) & ~done
    closest[m3] = c[m3]
    done |= m3
    # edge AB
    m4 = (vc <= 0) & (d1 >= 0) & (d3 <= 0) & ~done
    t = np.where(d1 - d3 != 0, d1 / np.where(d1 - d3 == 0, 1.0, d1 - d3), 0.0)
    closest[m4] = a[m4] + t[m4, None] * ab[m4]
    done |= m4
    # edge AC
    m5 = (vb <= 0) & (d2 >= 0) & (d6 <= 0) & ~done
    t = np.where(d2 - d6 != 0, d2 / np.where(d2 - d6 == 0, 1.0, d2 - d6), 0.0)
    closest[m5] = a[m5] + t[m5, None] * ac[m5]
    done |= m5
    # edge BC
    m6 = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0) & ~done
    denom = (d4 - d3) + (d5 - d6)
    t = np.where(denom != 0, (d4 - d3) / np.where(denom == 0, 1.0, denom), 0.0)
    closest[m6] = b[m6] + t[m6, None] * (c[m6] - b[m6])
    done |= m6
    # interior
    mi = ~done
    denom = va + vb + vc
    denom = np.where(denom == 0, 1.0, denom)
    v = vb / denom
    w = vc / denom
    closest[mi] = a[mi] + v[mi, None] * ab[mi] + w[mi, None] * ac[mi]
    return np.linalg.norm(p - closest, axis=1)


class MeshOracle:
    """Brute-force UDF/sign oracle over triangles; same interface as ShapeOracle."""

    _RAY = np.array([1.0, 3.1e-4, 7.3e-4])

    def __init__(self, shape_id, category, triangles):
        self.id = shape_id
        self.category = category
        self.triangles = np.asarray(triangles, dtype=np.float64)
        self._ray = self._RAY / np.linalg.norm(self._RAY)

    @classmethod
    def from_obj(cls, shape_id, category, path):
        return cls(shape_id, category, load_obj(path))

    def udf(self, x):
        x = check_domain(np.asarray(x, dtype=np.float64))
        single = x.ndim == 1
        pts = x[None, :] if single else x
        out = np.empty(len(pts))
        for i, p in enumerate(pts):
            out[i] = _point_triangle_dist(p, self.triangles).min()
        return float(out[0]) if single else out

    def _inside(self, p):
        # Moller-Trumbore crossing count along a fixed jittered direction
        a = self.triangles[:, 0]
        e1 = self.triangles[:, 1] - a
        e2 = self.triangles[:, 2] - a
        d = self._ray
        h = np.cross(np.broadcast_to(d, e2.shape), e2)
        det = (e1 * h).sum(1)
        ok = np.abs(det) > 1e-12
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = p - a
        u = (s * h).sum(1) * inv
        q = np.cross(s, e1)
        v = (np.broadcast_to(d, q.shape) * q).sum(1) * inv
        t = (e2 * q).sum(1) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-12)
        return hit.sum() % 2 == 1

    def sdf(self, x):
        x = check_domain(np.asarray(x, dtype=np.float64))
        single = x.ndim == 1
        pts = x[None, :] if single else x
        u = self.udf(pts)
        sign = np.array([-1.0 if self._inside(p) else 1.0 for p in pts])
        out = sign * u
        return float(out[0]) if single else out

    def occ(self, x):
        s = self.sdf(x)
        if np.isscalar(s):
            return -1.0 if s < 0 else 1.0
        return np.where(np.asarray(s) < 0.0, -1.0, 1.0)

    def value(self, fn_tag, x):
        if fn_tag == "sdf":
            return self.sdf(x)
        if fn_tag == "udf":
            return self.udf(x)
        if fn_tag == "occ":
            return self.occ(x)
        raise InputError(f"unknown implicit-function tag {fn_tag!r}")
