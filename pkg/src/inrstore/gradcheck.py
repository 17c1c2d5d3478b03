"""Finite-difference gradient checking for the autodiff ops.

Each case builds a fresh scalar-valued graph over float64 parameters; the
analytic gradients from one backward pass are compared against central
finite differences. ``standard_op_cases`` enumerates every differentiable
operation the package uses, sized small enough that hundreds of random
instances run in seconds.
"""

import numpy as np

from . import tensor as T
from .grids import HashGrid, OctreeGrid, TriplaneGrid
from .tensor import Tensor, no_grad


def finite_difference_grads(value_fn, params, h=1e-4):
    """Central-difference gradients of value_fn() w.r.t. each param tensor."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = value_fn()
            flat[i] = orig - h
            fm = value_fn()
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def check_case(build, params, h=1e-4):
    """Max relative error between analytic and finite-difference gradients.

    build() must construct a fresh scalar Tensor from `params` each call.
    """
    for p in params:
        p.grad = None
    loss = build()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    def value():
        with no_grad():
            return float(build().data)

    numeric = finite_difference_grads(value, params, h=h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(float(np.abs(a).max(initial=0.0)), float(np.abs(n).max(initial=0.0)), 1e-8)
        worst = max(worst, float(np.abs(a - n).max(initial=0.0)) / scale)
    return worst


def _p(rng, *shape):
    return T.parameter(rng.normal(size=shape), dtype=np.float64)


def _away_from(x, kink=0.0, margin=0.08):
    """Shift values off a non-differentiable point."""
    return x + np.sign(x - kink + 1e-12) * margin


def standard_op_cases(rng):
    """(name, build, params) for every differentiable op. Fresh random
    instance per call."""
    cases = []

    a = _p(rng, 4, 3)
    b = _p(rng, 3)
    cases.append(("add_broadcast", lambda a=a, b=b: T.tsum(T.add(a, b)), [a, b]))

    a = _p(rng, 4, 3)
    b = _p(rng, 4, 3)
    cases.append(("sub", lambda a=a, b=b: T.tsum(T.sub(a, b)), [a, b]))

    a = _p(rng, 4, 3)
    b = _p(rng, 3)
    cases.append(("mul_broadcast", lambda a=a, b=b: T.tsum(T.mul(a, b)), [a, b]))

    a = _p(rng, 4, 3)
    b = T.parameter(rng.uniform(0.5, 2.0, size=(4, 3)) * rng.choice([-1.0, 1.0], size=(4, 3)), dtype=np.float64)
    cases.append(("div", lambda a=a, b=b: T.tsum(T.div(a, b)), [a, b]))

    a = _p(rng, 5)
    cases.append(("neg", lambda a=a: T.tsum(T.neg(a)), [a]))

    a = _p(rng, 2, 3)
    b = _p(rng, 3, 4)
    cases.append(("matmul", lambda a=a, b=b: T.tsum(T.matmul(a, b)), [a, b]))

    x = _p(rng, 2, 3)
    w = _p(rng, 3, 2)
    bb = _p(rng, 2)
    cases.append(("linear", lambda x=x, w=w, bb=bb: T.tsum(T.linear(x, w, bb)), [x, w, bb]))

    a = T.parameter(_away_from(rng.normal(size=(4, 3))), dtype=np.float64)
    cases.append(("relu", lambda a=a: T.tsum(T.relu(a)), [a]))

    a = _p(rng, 4, 3)
    cases.append(("sin", lambda a=a: T.tsum(T.sin(a)), [a]))

    a = T.parameter(_away_from(rng.normal(size=(4, 3))), dtype=np.float64)
    cases.append(("abs", lambda a=a: T.tsum(T.absolute(a)), [a]))

    a = T.parameter(rng.uniform(0.2, 2.0, size=(4, 3)), dtype=np.float64)
    cases.append(("sqrt", lambda a=a: T.tsum(T.sqrt(a)), [a]))

    a = _p(rng, 4, 3)
    cases.append(("square", lambda a=a: T.tsum(T.square(a)), [a]))

    a = _p(rng, 4, 3)
    cases.append(("sum_axis0", lambda a=a: T.tsum(T.square(T.tsum(a, axis=0))), [a]))

    a = _p(rng, 4, 3)
    cases.append(("mean_axis1", lambda a=a: T.tsum(T.square(T.tmean(a, axis=1))), [a]))

    a = T.parameter(
        rng.normal(size=(5, 3)) + 0.5 * np.eye(5, 3), dtype=np.float64
    )
    # separate the per-column maxima so finite differences stay valid
    col_arg = a.data.argmax(axis=0)
    a.data[col_arg, np.arange(3)] += 0.5
    cases.append(("max_rows", lambda a=a: T.tsum(T.square(T.max_rows(a))), [a]))

    a = _p(rng, 3, 2)
    b = _p(rng, 3, 4)
    cases.append(("concat", lambda a=a, b=b: T.tsum(T.square(T.concat([a, b], axis=1))), [a, b]))

    a = _p(rng, 4, 3)
    cases.append(("reshape", lambda a=a: T.tsum(T.square(T.reshape(a, (2, 6)))), [a]))

    a = _p(rng, 6, 3)
    cases.append(("slice_rows", lambda a=a: T.tsum(T.square(T.slice_rows(a, 1, 4))), [a]))

    v = _p(rng, 4)
    cases.append(("expand_rows", lambda v=v: T.tsum(T.square(T.expand_rows(v, 3))), [v]))

    x = _p(rng, 2, 4, 4, 4)
    k = _p(rng, 3, 2, 2, 2, 2)
    bc = _p(rng, 3)
    cases.append(
        ("conv3d_down", lambda x=x, k=k, bc=bc: T.tsum(T.square(T.conv3d_down(x, k, bc))), [x, k, bc])
    )

    # batch norm, training statistics (composite of primitive ops)
    x = _p(rng, 6, 3)
    gm = T.parameter(rng.uniform(0.5, 1.5, size=3), dtype=np.float64)
    bt = _p(rng, 3)

    def bn_train(x=x, gm=gm, bt=bt):
        mu = T.tmean(x, axis=0)
        xc = T.sub(x, mu)
        var = T.tmean(T.square(xc), axis=0)
        y = T.div(xc, T.sqrt(T.add(var, 1e-5)))
        return T.tsum(T.square(T.add(T.mul(y, gm), bt)))

    cases.append(("batch_norm_train", bn_train, [x, gm, bt]))

    # batch norm, eval statistics (running stats are constants)
    x = _p(rng, 6, 3)
    rm = Tensor(rng.normal(size=3), dtype=np.float64)
    rv = Tensor(rng.uniform(0.5, 1.5, size=3), dtype=np.float64)
    gm = T.parameter(rng.uniform(0.5, 1.5, size=3), dtype=np.float64)
    bt = _p(rng, 3)

    def bn_eval(x=x, rm=rm, rv=rv, gm=gm, bt=bt):
        y = T.div(T.sub(x, rm), T.sqrt(T.add(rv, 1e-5)))
        return T.tsum(T.square(T.add(T.mul(y, gm), bt)))

    cases.append(("batch_norm_eval", bn_eval, [x, gm, bt]))

    # group norm over a (4, 2, 2, 2) volume with 2 groups
    x = _p(rng, 4, 2, 2, 2)
    gm = T.parameter(rng.uniform(0.5, 1.5, size=4), dtype=np.float64)
    bt = _p(rng, 4)

    def gn(x=x, gm=gm, bt=bt):
        xg = T.reshape(x, (2, -1))
        mu = T.reshape(T.tmean(xg, axis=1), (2, 1))
        xc = T.sub(xg, mu)
        var = T.reshape(T.tmean(T.square(xc), axis=1), (2, 1))
        y = T.reshape(T.div(xc, T.sqrt(T.add(var, 1e-5))), (4, 2, 2, 2))
        gma = T.reshape(gm, (4, 1, 1, 1))
        bta = T.reshape(bt, (4, 1, 1, 1))
        return T.tsum(T.square(T.add(T.mul(y, gma), bta)))

    cases.append(("group_norm", gn, [x, gm, bt]))

    logits = _p(rng, 3, 4)
    onehot = Tensor(np.eye(4, dtype=np.float64)[rng.integers(0, 4, size=3)])
    cases.append(
        ("softmax_cross_entropy", lambda l=logits, o=onehot: T.softmax_cross_entropy(l, o), [logits])
    )

    # grid interpolation ops (gradients w.r.t. feature tables)
    coords = rng.uniform(-0.95, 0.95, size=(6, 3))

    hg = HashGrid(resolutions=(3, 5), table_size=64, width=2)
    hg.tables = [T.parameter(rng.normal(size=t.data.shape), dtype=np.float64) for t in hg.tables]
    cases.append(
        ("interp_hash", lambda hg=hg, c=coords: T.tsum(T.square(hg.interp(c))), list(hg.tables))
    )

    tp = TriplaneGrid(resolution=4, width=2)
    tp.planes = T.parameter(rng.normal(size=tp.planes.data.shape), dtype=np.float64)
    cases.append(
        ("interp_triplane", lambda tp=tp, c=coords: T.tsum(T.square(tp.interp(c))), [tp.planes])
    )

    level = 3
    res = 2**level
    mask = rng.uniform(size=res**3) < 0.6
    mask[0] = True
    oc = OctreeGrid.__new__(OctreeGrid)
    oc.feature_levels = (level,)
    oc.width = 2
    oc.masks = {level: mask}
    oc.corner_rows = {level: oc._build_corner_rows(level)}
    n_corners = int((oc.corner_rows[level] >= 0).sum())
    oc.features = {level: T.parameter(rng.normal(size=(n_corners, 2)), dtype=np.float64)}
    cases.append(
        (
            "interp_octree",
            lambda oc=oc, c=coords: T.tsum(T.square(oc.level_interp(level, c))),
            [oc.features[level]],
        )
    )

    return cases
