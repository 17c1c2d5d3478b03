"""Retrieval metrics: hit-rate mAP@k, P/R/F1@10, Chamfer distance, the
category and Category-Chamfer accuracies, and hierarchical Chamfer retrieval.

mAP@k follows the retrieval-papers usage: the fraction of queries whose top
k contains at least one same-category record (not area-under-PR). The
Chamfer distance is the symmetric mean Euclidean nearest-neighbour distance
(not squared); the definition string below is embedded in reports.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InputError

CHAMFER_DEFINITION = "mean_p min_q |p-q|_2 + mean_q min_p |q-p|_2"


def map_at_k(ranked_labels, query_labels, k):
    """Fraction of queries with >= 1 same-category result in the top k."""
    if len(ranked_labels) != len(query_labels):
        raise InputError("one ranked list per query required")
    if not ranked_labels:
        return 0.0
    hits = sum(
        1 for ranked, q in zip(ranked_labels, query_labels) if q in list(ranked)[:k]
    )
    return hits / len(ranked_labels)


def prf1_at_10(ranked_labels, query_labels, class_sizes):
    """Macro-averaged precision/recall/F1 over queries at list length 10.

    class_sizes maps a label to the number of store entries of that class
    including the query itself (recall divides by size - 1).
    """
    if len(ranked_labels) != len(query_labels):
        raise InputError("one ranked list per query required")
    ps, rs, f1s = [], [], []
    for ranked, q in zip(ranked_labels, query_labels):
        top = list(ranked)[:10]
        if len(top) != 10:
            raise InputError("prf1_at_10 requires 10 retrieved entries per query")
        rel = sum(1 for lab in top if lab == q)
        p = rel / 10.0
        denom = class_sizes[q] - 1
        r = rel / denom if denom > 0 else 0.0
        f1 = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
        ps.append(p)
        rs.append(r)
        f1s.append(f1)
    return float(np.mean(ps)), float(np.mean(rs)), float(np.mean(f1s))


@dataclass
class ChamferConfig:
    coarse: int = 128
    fine: int = 4096
    reference: int = 131072  # optional high-fidelity count
    multiplier: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.coarse >= self.fine:
            raise InputError("coarse point count must be below the fine count")
        if self.multiplier < 1.0:
            raise InputError("filter multiplier must be >= 1")


def chamfer(p, q):
    """Symmetric mean Euclidean nearest-neighbour distance between point sets."""
    p = np.ascontiguousarray(p, dtype=np.float32)
    q = np.ascontiguousarray(q, dtype=np.float32)
    if len(p) == 0 or len(q) == 0:
        raise InputError("chamfer distance needs nonempty point sets")
    return float(kernels.nn_min_dists(p, q).mean() + kernels.nn_min_dists(q, p).mean())


def category_accuracy(query_ids, retrieval_fn, categories):
    """A_C: fraction of queries whose retrieved shape shares their category."""
    if not query_ids:
        return 0.0
    hits = sum(
        1 for q in query_ids if categories[retrieval_fn(q)] == categories[q]
    )
    return hits / len(query_ids)


def category_chamfer_accuracy(query_ids, retrieval_fn, categories, cloud_fn, cfg=None):
    """A_CC: correct iff the category matches and the retrieved shape is the
    fine-count Chamfer minimizer among same-category candidates (query
    excluded; ties break by ascending id)."""
    cfg = cfg or ChamferConfig()
    if not query_ids:
        return 0.0
    hits = 0
    all_ids = sorted(categories)
    for q in query_ids:
        r = retrieval_fn(q)
        if categories[r] != categories[q]:
            continue
        same = [s for s in all_ids if s != q and categories[s] == categories[q]]
        if not same:
            continue
        qc = cloud_fn(q, cfg.fine)
        best = min(same, key=lambda s: (chamfer(qc, cloud_fn(s, cfg.fine)), s))
        if r == best:
            hits += 1
    return hits / len(query_ids)


@dataclass
class HierarchicalResult:
    retrieved_id: str
    coarse_evals: int
    fine_evals: int


def hierarchical_retrieve(query_id, query_embedding, candidates, classifier, cloud_fn, cfg=None):
    """Category-Chamfer retrieval with a coarse prefilter.

    1. classify the query embedding into a category;
    2. coarse Chamfer against every candidate of that category;
    3. keep candidates within multiplier x the smallest coarse distance;
    4. fine Chamfer on the survivors, return the argmin (ties: ascending id).

    candidates: list of (id, category) excluding the query.
    """
    cfg = cfg or ChamferConfig()
    predicted = classifier.predict(query_embedding)
    pool = sorted(cid for cid, cat in candidates if cat == predicted and cid != query_id)
    if not pool:
        raise InputError(f"no candidates in predicted category {predicted!r}")
    q_coarse = cloud_fn(query_id, cfg.coarse)
    coarse = {cid: chamfer(q_coarse, cloud_fn(cid, cfg.coarse)) for cid in pool}
    cutoff = cfg.multiplier * min(coarse.values())
    survivors = [cid for cid in pool if coarse[cid] <= cutoff]
    q_fine = cloud_fn(query_id, cfg.fine)
    fine = {cid: chamfer(q_fine, cloud_fn(cid, cfg.fine)) for cid in survivors}
    best = min(survivors, key=lambda cid: (fine[cid], cid))
    return HierarchicalResult(best, coarse_evals=len(pool), fine_evals=len(survivors))


def naive_chamfer_retrieve(query_id, query_embedding, candidates, classifier, cloud_fn, cfg=None):
    """Baseline for hierarchical_retrieve: fine Chamfer against the whole
    predicted category."""
    cfg = cfg or ChamferConfig()
    predicted = classifier.predict(query_embedding)
    pool = sorted(cid for cid, cat in candidates if cat == predicted and cid != query_id)
    if not pool:
        raise InputError(f"no candidates in predicted category {predicted!r}")
    q_fine = cloud_fn(query_id, cfg.fine)
    fine = {cid: chamfer(q_fine, cloud_fn(cid, cfg.fine)) for cid in pool}
    best = min(pool, key=lambda cid: (fine[cid], cid))
    return HierarchicalResult(best, coarse_evals=0, fine_evals=len(pool))
