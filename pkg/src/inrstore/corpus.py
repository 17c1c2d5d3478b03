"""Ground-truth implicit functions for a procedural shape corpus.

Shapes are analytic primitives (sphere, box, torus, capsule) under a rigid
transform plus uniform scale, optionally unioned (min of member distances:
exact outside, a lower bound inside overlapping regions). All shapes live
inside the domain ``|x|_inf <= 1`` with a safety margin so rays started on
the domain boundary can converge.

Also houses the exact relations between the three implicit functions
(unsigned distance as ReLU(s)+ReLU(-s), occupancy as the sign of the signed
distance, and the four-term ReLU construction for occupancy) and the
training-point samplers.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InputError, ManifestParseError
from .rng import rng_stream

FN_TAGS = ("sdf", "udf", "occ")
ARCH_TAGS = ("mlp", "octree", "triplane", "hash")

PRIMITIVE_KINDS = ("sphere", "box", "torus", "capsule")

# Near-surface Gaussian offsets use this variance per axis.
NEAR_SURFACE_VARIANCE = 0.015

DOMAIN_MARGIN = 0.05


def check_domain(x):
    """Raise DomainError unless every point has max-norm <= 1."""
    x = np.asarray(x)
    if x.size and np.max(np.abs(x)) > 1.0 + 1e-12:
        raise DomainError("coordinates must satisfy |x|_inf <= 1")
    return x


def relu(x):
    return np.maximum(x, 0.0)


def occ_via_relu_network(s):
    """Four-term ReLU construction for occupancy from a signed distance.

    Returns h1 - h2 - h3 + h4 with h1=relu(s), h2=relu(-s), h3=relu(h1-1),
    h4=relu(h2-1). This equals clamp(s, -1, 1) everywhere and therefore
    matches sign(s) exactly whenever |s| >= 1.
    """
    s = np.asarray(s, dtype=np.float64)
    h1 = relu(s)
    h2 = relu(-s)
    h3 = relu(h1 - 1.0)
    h4 = relu(h2 - 1.0)
    return h1 - h2 - h3 + h4


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def _sdf_sphere(p, params):
    (r,) = params
    return np.linalg.norm(p, axis=-1) - r


def _sdf_box(p, params):
    h = np.asarray(params)
    q = np.abs(p) - h
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return outside + inside


def _sdf_torus(p, params):
    # ring in the xy-plane, axis z
    major, minor = params
    ring = np.sqrt(p[..., 0] ** 2 + p[..., 1] ** 2) - major
    return np.sqrt(ring**2 + p[..., 2] ** 2) - minor


def _sdf_capsule(p, params):
    # segment from (0,0,-h) to (0,0,+h), radius r
    h, r = params
    z = np.clip(p[..., 2], -h, h)
    return np.sqrt(p[..., 0] ** 2 + p[..., 1] ** 2 + (p[..., 2] - z) ** 2) - r


_SDF = {
    "sphere": _sdf_sphere,
    "box": _sdf_box,
    "torus": _sdf_torus,
    "capsule": _sdf_capsule,
}


def _surface_sphere(n, params, rng):
    (r,) = params
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return r * d


def _surface_box(n, params, rng):
    hx, hy, hz = params
    areas = np.array([hy * hz, hx * hz, hx * hy])
    probs = areas / areas.sum()
    axis = rng.choice(3, size=n, p=probs)
    sign = rng.choice([-1.0, 1.0], size=n)
    uv = rng.uniform(-1.0, 1.0, size=(n, 2))
    pts = np.empty((n, 3))
    h = np.array([hx, hy, hz])
    for a in range(3):
        mask = axis == a
        others = [i for i in range(3) if i != a]
        pts[mask, a] = sign[mask] * h[a]
        pts[np.ix_(mask, others)] = uv[mask] * h[others]
    return pts


def _surface_torus(n, params, rng):
    major, minor = params
    out = np.empty((n, 3))
    filled = 0
    while filled < n:
        m = 2 * (n - filled) + 16
        theta = rng.uniform(0.0, 2 * np.pi, size=m)
        phi = rng.uniform(0.0, 2 * np.pi, size=m)
        accept = rng.uniform(size=m) < (major + minor * np.cos(phi)) / (major + minor)
        theta, phi = theta[accept], phi[accept]
        take = min(len(theta), n - filled)
        ring = major + minor * np.cos(phi[:take])
        out[filled : filled + take, 0] = ring * np.cos(theta[:take])
        out[filled : filled + take, 1] = ring * np.sin(theta[:take])
        out[filled : filled + take, 2] = minor * np.sin(phi[:take])
        filled += take
    return out


def _surface_capsule(n, params, rng):
    h, r = params
    side = 2 * np.pi * r * 2 * h
    caps = 4 * np.pi * r**2
    on_side = rng.uniform(size=n) < side / (side + caps)
    pts = np.empty((n, 3))
    theta = rng.uniform(0.0, 2 * np.pi, size=n)
    z = rng.uniform(-h, h, size=n)
    pts[:, 0] = r * np.cos(theta)
    pts[:, 1] = r * np.sin(theta)
    pts[:, 2] = z
    n_cap = int((~on_side).sum())
    if n_cap:
        d = rng.normal(size=(n_cap, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        offset = np.where(d[:, 2] >= 0, h, -h)
        cap_pts = r * d
        cap_pts[:, 2] += offset
        pts[~on_side] = cap_pts
    return pts


_SURFACE = {
    "sphere": _surface_sphere,
    "box": _surface_box,
    "torus": _surface_torus,
    "capsule": _surface_capsule,
}


def primitive_bound(kind, params):
    """Radius of a bounding sphere centered at the local origin."""
    if kind == "sphere":
        return params[0]
    if kind == "box":
        return float(np.linalg.norm(params))
    if kind == "torus":
        return params[0] + params[1]
    if kind == "capsule":
        return params[0] + params[1]
    raise InputError(f"unknown primitive kind {kind!r}")


def euler_to_matrix(rz, ry, rx):
    cz, sz = np.cos(rz), np.sin(rz)
    cy, sy = np.cos(ry), np.sin(ry)
    cx, sx = np.cos(rx), np.sin(rx)
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    return mz @ my @ mx


@dataclass(frozen=True)
class Transform:
    """Rigid transform plus uniform scale: world = R @ (scale * local) + t."""

    translation: tuple = (0.0, 0.0, 0.0)
    rotation_euler: tuple = (0.0, 0.0, 0.0)
    scale: float = 1.0

    def matrix(self):
        return euler_to_matrix(*self.rotation_euler)

    def to_fields(self):
        return (*self.translation, *self.rotation_euler, self.scale)

    @classmethod
    def from_fields(cls, vals):
        if len(vals) != 7:
            raise InputError("transform needs 7 numbers: tx ty tz rz ry rx scale")
        return cls(tuple(vals[0:3]), tuple(vals[3:6]), vals[6])


@dataclass(frozen=True)
class PrimitiveSpec:
    kind: str
    params: tuple
    transform: Transform = field(default_factory=Transform)


class ShapeOracle:
    """Exact implicit-function evaluator for one (possibly unioned) shape."""

    def __init__(self, shape_id, category, primitives):
        if not primitives:
            raise InputError("a shape needs at least one primitive")
        if len(primitives) > 4:
            raise InputError("CSG unions support at most 4 primitives")
        for p in primitives:
            if p.kind not in _SDF:
                raise InputError(f"unknown primitive kind {p.kind!r}")
        self.id = shape_id
        self.category = category
        self.primitives = tuple(primitives)
        self._rot = [p.transform.matrix() for p in primitives]
        self._inv_rot = [r.T for r in self._rot]

    # -- implicit functions ------------------------------------------------

    def _member_sdf(self, i, x):
        p = self.primitives[i]
        local = (x - np.asarray(p.transform.translation)) @ self._rot[i]
        local /= p.transform.scale
        return p.transform.scale * _SDF[p.kind](local, p.params)

    def sdf(self, x):
        """Signed distance, negative inside. Exact for single primitives;
        union of members via min (lower bound inside overlaps)."""
        x = check_domain(np.asarray(x, dtype=np.float64))
        single = x.ndim == 1
        pts = x[None, :] if single else x
        d = self._member_sdf(0, pts)
        for i in range(1, len(self.primitives)):
            d = np.minimum(d, self._member_sdf(i, pts))
        return float(d[0]) if single else d

    def udf(self, x):
        """Unsigned distance: |sdf| for these watertight analytic shapes."""
        return np.abs(self.sdf(x))

    def occ(self, x):
        """Occupancy in {-1,+1}: -1 inside, +1 outside; exact zeros map to +1."""
        s = self.sdf(x)
        return np.where(np.asarray(s) < 0.0, -1.0, 1.0) if not np.isscalar(s) else (
            -1.0 if s < 0.0 else 1.0
        )

    def value(self, fn_tag, x):
        if fn_tag == "sdf":
            return self.sdf(x)
        if fn_tag == "udf":
            return self.udf(x)
        if fn_tag == "occ":
            return self.occ(x)
        raise InputError(f"unknown implicit-function tag {fn_tag!r}")

    # -- geometry ------------------------------------------------------------

    def bound(self):
        """Conservative max-norm extent of the shape."""
        return max(
            float(np.max(np.abs(p.transform.translation)))
            + p.transform.scale * primitive_bound(p.kind, p.params)
            for p in self.primitives
        )

    def _member_surface(self, i, n, rng):
        p = self.primitives[i]
        local = _SURFACE[p.kind](n, p.params, rng)
        return (p.transform.scale * local) @ self._inv_rot[i] + np.asarray(
            p.transform.translation
        )

    def surface_samples(self, n, rng):
        """n exact surface points (rejection over members for unions)."""
        if n == 0:
            return np.empty((0, 3))
        if len(self.primitives) == 1:
            return self._member_surface(0, n, rng)
        out = np.empty((n, 3))
        filled = 0
        while filled < n:
            m = n - filled
            member = rng.integers(0, len(self.primitives), size=m)
            batch = np.empty((m, 3))
            for i in range(len(self.primitives)):
                mask = member == i
                if mask.any():
                    batch[mask] = self._member_surface(i, int(mask.sum()), rng)
            keep = np.abs(self.sdf(np.clip(batch, -1.0, 1.0))) < 1e-9
            keep &= np.max(np.abs(batch), axis=1) <= 1.0
            kept = batch[keep]
            take = min(len(kept), n - filled)
            out[filled : filled + take] = kept[:take]
            filled += take
        return out


def project_to_surface(oracle, pts, iters=3, h=1e-6):
    """Newton-style projection x <- x - d * grad(d) with central differences."""
    pts = np.array(pts, dtype=np.float64)
    for _ in range(iters):
        d = oracle.sdf(pts)
        grad = np.empty_like(pts)
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            grad[:, a] = (
                oracle.sdf(np.clip(pts + e, -1, 1)) - oracle.sdf(np.clip(pts - e, -1, 1))
            ) / (2 * h)
        norm = np.linalg.norm(grad, axis=1, keepdims=True)
        norm[norm == 0] = 1.0
        pts = np.clip(pts - d[:, None] * grad / norm, -1.0, 1.0)
    return pts


# ---------------------------------------------------------------------------
# training point batches
# ---------------------------------------------------------------------------

KIND_UNIFORM, KIND_SURFACE, KIND_NEAR = 0, 1, 2


@dataclass
class PointBatch:
    coords: np.ndarray  # (P,3) float32, inside the domain
    values: np.ndarray  # (P,) float32
    kinds: np.ndarray  # (P,) uint8: 0 uniform, 1 surface, 2 near-surface


def sample_training_points(oracle, fn_tag, n_uniform, n_surface, n_near, seed):
    """Sample the uniform / surface / near-surface mix used for INR fitting.

    Near-surface points are exact surface points plus per-axis Gaussian
    offsets of variance 0.015, clamped to the domain. Deterministic in seed.
    """
    if min(n_uniform, n_surface, n_near) < 0:
        raise InputError("sample counts must be nonnegative")
    rng = rng_stream(seed, "training-points", oracle.id, fn_tag)
    uniform = rng.uniform(-1.0, 1.0, size=(n_uniform, 3))
    surface = oracle.surface_samples(n_surface, rng)
    near_base = oracle.surface_samples(n_near, rng)
    offsets = rng.normal(0.0, np.sqrt(NEAR_SURFACE_VARIANCE), size=(n_near, 3))
    near = np.clip(near_base + offsets, -1.0, 1.0)
    coords = np.concatenate([uniform, surface, near], axis=0)
    kinds = np.concatenate(
        [
            np.full(n_uniform, KIND_UNIFORM, dtype=np.uint8),
            np.full(n_surface, KIND_SURFACE, dtype=np.uint8),
            np.full(n_near, KIND_NEAR, dtype=np.uint8),
        ]
    )
    values = oracle.value(fn_tag, coords) if len(coords) else np.empty(0)
    batch = PointBatch(
        coords=coords.astype(np.float32),
        values=np.asarray(values, dtype=np.float32).reshape(-1),
        kinds=kinds,
    )
    if batch.values.size and not np.all(np.isfinite(batch.values)):
        raise InputError("oracle produced non-finite values")
    return batch


# ---------------------------------------------------------------------------
# corpus manifest
# ---------------------------------------------------------------------------


@dataclass
class ShapeDescriptor:
    id: str
    category: str
    primitives: tuple  # of PrimitiveSpec
    split: str  # train | test
    seed: int

    def oracle(self):
        return ShapeOracle(self.id, self.category, self.primitives)


@dataclass
class CorpusManifest:
    shapes: list

    def __iter__(self):
        return iter(self.shapes)

    def __len__(self):
        return len(self.shapes)

    def split(self, which):
        if which == "all":
            return list(self.shapes)
        return [s for s in self.shapes if s.split == which]

    def by_id(self, shape_id):
        for s in self.shapes:
            if s.id == shape_id:
                return s
        raise InputError(f"shape id {shape_id!r} not in manifest")

    def categories(self):
        return sorted({s.category for s in self.shapes})


@dataclass
class CorpusSpec:
    categories: tuple = PRIMITIVE_KINDS
    per_category: int = 10
    train_per_category: int = 7


def _jitter_primitive(kind, rng):
    if kind == "sphere":
        return (float(rng.uniform(0.30, 0.55)),)
    if kind == "box":
        return tuple(float(v) for v in rng.uniform(0.18, 0.45, size=3))
    if kind == "torus":
        return (float(rng.uniform(0.30, 0.45)), float(rng.uniform(0.08, 0.18)))
    if kind == "capsule":
        return (float(rng.uniform(0.18, 0.38)), float(rng.uniform(0.10, 0.20)))
    raise InputError(f"unknown primitive kind {kind!r}")


def generate_corpus(spec=None, seed=7):
    """Procedural corpus: jittered primitives per category, split train/test.

    Every shape fits inside the domain with margin >= 0.05.
    """
    spec = spec or CorpusSpec()
    shapes = []
    for cat in spec.categories:
        for i in range(spec.per_category):
            rng = rng_stream(seed, "corpus", cat, i)
            params = _jitter_primitive(cat, rng)
            scale = float(rng.uniform(0.85, 1.10))
            rot = tuple(float(v) for v in rng.uniform(0.0, 2 * np.pi, size=3))
            room = (1.0 - DOMAIN_MARGIN) - scale * primitive_bound(cat, params)
            room = max(room, 0.0)
            trans = tuple(float(v) for v in rng.uniform(-0.6 * room, 0.6 * room, size=3))
            shapes.append(
                ShapeDescriptor(
                    id=f"{cat}_{i:03d}",
                    category=cat,
                    primitives=(
                        PrimitiveSpec(cat, params, Transform(trans, rot, scale)),
                    ),
                    split="train" if i < spec.train_per_category else "test",
                    seed=int(rng.integers(0, 2**31 - 1)),
                )
            )
    return CorpusManifest(shapes)


def save_manifest(manifest, path):
    lines = []
    for s in manifest:
        lines.append(f"id={s.id}")
        lines.append(f"category={s.category}")
        lines.append("primitive=" + "+".join(p.kind for p in s.primitives))
        lines.append(
            "params=" + ";".join(" ".join(repr(v) for v in p.params) for p in s.primitives)
        )
        lines.append(
            "transform="
            + ";".join(
                " ".join(repr(float(v)) for v in p.transform.to_fields())
                for p in s.primitives
            )
        )
        lines.append(f"split={s.split}")
        lines.append(f"seed={s.seed}")
        lines.append("")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines))


_REQUIRED_KEYS = ("id", "category", "primitive", "params", "transform", "split", "seed")


def load_manifest(path):
    """Parse a manifest file; malformed input raises with a line number."""
    blocks = []
    current = {}
    current_start = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                if current:
                    blocks.append((current_start, current))
                    current = {}
                continue
            if "=" not in line:
                raise ManifestParseError(f"expected key=value, got {line!r}", lineno)
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _REQUIRED_KEYS:
                raise ManifestParseError(f"unknown key {key!r}", lineno)
            if key in current:
                raise ManifestParseError(f"duplicate key {key!r} in block", lineno)
            if not current:
                current_start = lineno
            current[key] = value.strip()
    if current:
        blocks.append((current_start, current))

    shapes = []
    seen = set()
    for lineno, block in blocks:
        missing = [k for k in _REQUIRED_KEYS if k not in block]
        if missing:
            raise ManifestParseError(f"missing keys {missing}", lineno)
        sid = block["id"]
        if sid in seen:
            raise ManifestParseError(f"duplicate shape id {sid!r}", lineno)
        seen.add(sid)
        kinds = block["primitive"].split("+")
        try:
            params = [
                tuple(float(v) for v in part.split()) for part in block["params"].split(";")
            ]
            transforms = [
                Transform.from_fields([float(v) for v in part.split()])
                for part in block["transform"].split(";")
            ]
            seed = int(block["seed"])
        except (ValueError, InputError) as exc:
            raise ManifestParseError(str(exc), lineno) from exc
        if not (len(kinds) == len(params) == len(transforms)):
            raise ManifestParseError(
                "primitive/params/transform member counts disagree", lineno
            )
        if block["split"] not in ("train", "test"):
            raise ManifestParseError(f"bad split {block['split']!r}", lineno)
        prims = tuple(
            PrimitiveSpec(k, p, t) for k, p, t in zip(kinds, params, transforms)
        )
        shapes.append(
            ShapeDescriptor(sid, block["category"], prims, block["split"], seed)
        )

    by_cat = {}
    for s in shapes:
        by_cat.setdefault(s.category, set()).add(s.split)
    for cat, splits in by_cat.items():
        if splits != {"train", "test"}:
            raise ManifestParseError(
                f"category {cat!r} must appear in both train and test splits"
            )
    return CorpusManifest(shapes)
