"""Embedding persistence and cosine top-k retrieval.

Store file layout (little-endian):

    magic "INRS", version u16, record count u32,
    per record: id len u16 + UTF-8, category len u16 + UTF-8,
                implicit-function tag u8, architecture tag u8,
                1024 float32 embedding

Round trips are bit-exact.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .corpus import ARCH_TAGS, FN_TAGS
from .errors import FormatError, InputError

MAGIC = b"INRS"
VERSION = 1
EMBEDDING_WIDTH = 1024


@dataclass
class EmbeddingRecord:
    id: str
    category: str
    fn: str
    arch: str
    embedding: np.ndarray


@dataclass
class RetrievalResult:
    query_id: str
    k: int
    ranked: list  # of (id, cosine score), scores non-increasing


@dataclass
class EmbeddingStore:
    records: list = field(default_factory=list)

    def add(self, record):
        emb = np.asarray(record.embedding, dtype=np.float32).reshape(-1)
        if emb.shape != (EMBEDDING_WIDTH,):
            raise InputError(f"embedding must have length {EMBEDDING_WIDTH}")
        if not np.all(np.isfinite(emb)) or not emb.any():
            raise InputError("embedding must be finite and nonzero")
        if record.fn not in FN_TAGS or record.arch not in ARCH_TAGS:
            raise InputError("unknown implicit-function or architecture tag")
        if any(r.id == record.id for r in self.records):
            raise InputError(f"duplicate record id {record.id!r}")
        record.embedding = emb
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def get(self, record_id):
        for r in self.records:
            if r.id == record_id:
                return r
        raise InputError(f"id {record_id!r} not in store")

    def subset(self, fn=None, arch=None):
        out = EmbeddingStore()
        for r in self.records:
            if (fn is None or r.fn == fn) and (arch is None or r.arch == arch):
                out.records.append(r)
        return out


def _write_str(f, s):
    b = s.encode("utf-8")
    f.write(struct.pack("<H", len(b)))
    f.write(b)


def store_save(store, path):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", VERSION))
        f.write(struct.pack("<I", len(store)))
        for r in store:
            _write_str(f, r.id)
            _write_str(f, r.category)
            f.write(struct.pack("<BB", FN_TAGS.index(r.fn), ARCH_TAGS.index(r.arch)))
            f.write(np.ascontiguousarray(r.embedding, dtype="<f4").tobytes())


def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated store while reading {what}")
    return buf


def store_load(path):
    store = EmbeddingStore()
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != MAGIC:
            raise FormatError("bad magic; not an INRS store")
        (version,) = struct.unpack("<H", _read_exact(f, 2, "version"))
        if version != VERSION:
            raise FormatError(f"unsupported store version {version}")
        (count,) = struct.unpack("<I", _read_exact(f, 4, "record count"))
        for _ in range(count):
            (id_len,) = struct.unpack("<H", _read_exact(f, 2, "id length"))
            rid = _read_exact(f, id_len, "id").decode("utf-8")
            (cat_len,) = struct.unpack("<H", _read_exact(f, 2, "category length"))
            cat = _read_exact(f, cat_len, "category").decode("utf-8")
            fn_i, arch_i = struct.unpack("<BB", _read_exact(f, 2, "tags"))
            if fn_i >= len(FN_TAGS) or arch_i >= len(ARCH_TAGS):
                raise FormatError("unknown tag byte in record")
            emb = np.frombuffer(
                _read_exact(f, 4 * EMBEDDING_WIDTH, "embedding"), dtype="<f4"
            ).copy()
            store.add(
                EmbeddingRecord(rid, cat, FN_TAGS[fn_i], ARCH_TAGS[arch_i], emb)
            )
        if f.read(1):
            raise FormatError("trailing bytes after final record")
    return store


def cosine(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / denom) if denom > 0 else 0.0


def retrieve_topk(query, store, k, exclude_self=None):
    """Top-k records by cosine similarity; ties break by ascending id."""
    if k < 1:
        raise InputError("k must be >= 1")
    candidates = [r for r in store if r.id != exclude_self]
    if not candidates:
        raise InputError("store has no candidates after exclusion")
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    qn = np.linalg.norm(q)
    scored = []
    for r in candidates:
        e = r.embedding.astype(np.float64)
        denom = qn * np.linalg.norm(e)
        scored.append((float(q @ e / denom) if denom > 0 else 0.0, r.id))
    scored.sort(key=lambda t: (-t[0], t[1]))
    top = scored[:k]
    return RetrievalResult(
        query_id=exclude_self if exclude_self is not None else "",
        k=k,
        ranked=[(rid, score) for score, rid in top],
    )
