"""Per-shape INR fitting and cross-architecture distillation.

Each INR overfits one (shape, architecture, implicit function) triple. The
loss is keyed strictly to the implicit-function tag: squared error for
signed distance, absolute error for unsigned distance and occupancy. MLP
weights start from a shared per-architecture template so that weight-space
encoders see comparable inputs; grid features are independent small random
draws per shape.
"""

import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .corpus import sample_training_points
from .errors import InputError, NumericError
from .models import GridMlp, InrModel, SirenMlp, build_grid
from .optim import Adam
from .rng import rng_stream
from .tensor import Tensor

GRID_FEATURE_STD = 0.01


@dataclass
class TrainConfig:
    arch: str
    fn: str
    epochs: int = 10
    n_uniform: int = 4096
    n_surface: int = 8192
    n_near: int = 8192
    batch_size: int = 4096
    lr: float = 1e-3
    seed: int = 0
    template_seed: int = 0
    cosine_lr: bool = False
    omega0: float = 30.0  # SIREN frequency factor (mlp architecture only)


def desk_config(arch, fn, seed, template_seed=0):
    """Desk-scale presets, tuned so a grid INR converges in a couple of
    seconds (the sphere fidelity gate needs ~600 optimizer steps at a raised
    learning rate) and an MLP INR stays under fifteen seconds.

    Grid INRs keep the full 1:2:2 per-epoch sample mix; MLP-only INRs use a
    reduced mix with more epochs.
    """
    if arch == "mlp":
        return TrainConfig(
            arch=arch,
            fn=fn,
            epochs=40,
            n_uniform=1024,
            n_surface=2048,
            n_near=2048,
            batch_size=1024,
            seed=seed,
            template_seed=template_seed,
        )
    return TrainConfig(
        arch=arch,
        fn=fn,
        epochs=30,
        batch_size=1024,
        lr=5e-3,
        seed=seed,
        template_seed=template_seed,
    )


def hq_mlp_config(fn, seed, template_seed=0):
    """Longer MLP-INR schedule with cosine decay; used when the SIREN field
    itself becomes supervision (distillation sources need low residual
    ripple, which the short desk schedule cannot reach)."""
    return TrainConfig(
        arch="mlp",
        fn=fn,
        epochs=400,
        n_uniform=1024,
        n_surface=2048,
        n_near=2048,
        batch_size=1024,
        cosine_lr=True,
        seed=seed,
        template_seed=template_seed,
    )


def shared_mlp_template(arch, seed, omega0=30.0):
    """Initial MLP weights shared by every INR of one architecture family.

    Returns a fresh MLP object each call with identical values for identical
    (arch, seed, omega0)."""
    rng = rng_stream(seed, "mlp-template", arch)
    if arch == "mlp":
        return SirenMlp.init(rng, omega0=omega0)
    return GridMlp.init(8 + 3, rng)


def _loss_for(fn, pred, target):
    if fn == "sdf":
        return T.tmean(T.square(T.sub(pred, target)))
    return T.tmean(T.absolute(T.sub(pred, target)))


def _run_epochs(model, config, batch_fn, label):
    """Shared optimizer loop; batch_fn(epoch) -> (coords f32, values f32)."""
    opt = Adam(model.parameters(), lr=config.lr)
    first_batch = batch_fn(0)
    steps_per_epoch = max(1, int(np.ceil(len(first_batch[0]) / config.batch_size)))
    total_steps = config.epochs * steps_per_epoch
    log = []
    step = 0
    for epoch in range(config.epochs):
        t0 = time.monotonic()
        coords, values = first_batch if epoch == 0 else batch_fn(epoch)
        perm = rng_stream(config.seed, "shuffle", label, epoch).permutation(len(coords))
        coords, values = coords[perm], values[perm]
        losses = []
        for s in range(0, len(coords), config.batch_size):
            cb = coords[s : s + config.batch_size]
            vb = values[s : s + config.batch_size]
            pred = model.forward_tensor(cb)
            loss = _loss_for(config.fn, pred, Tensor(vb))
            if not np.isfinite(loss.data):
                raise NumericError(
                    f"NaN loss while fitting {label} (epoch {epoch}, step {step})"
                )
            opt.zero_grad()
            loss.backward()
            if config.cosine_lr:
                opt.lr = config.lr * 0.5 * (1.0 + np.cos(np.pi * step / max(1, total_steps)))
            opt.step()
            losses.append(float(loss.data))
            step += 1
        log.append(
            {
                "epoch": epoch,
                "loss": float(np.mean(losses)),
                "wall": time.monotonic() - t0,
            }
        )
    return log


def train_inr(oracle, config):
    """Overfit one INR to an oracle; returns (model, per-epoch log)."""
    template = shared_mlp_template(config.arch, config.template_seed, config.omega0)
    if config.arch == "mlp":
        model = InrModel(config.arch, config.fn, template)
    else:
        grid = build_grid(
            config.arch,
            rng_stream(config.seed, "grid-init", oracle.id, config.arch),
            field=oracle.sdf if hasattr(oracle, "sdf") else None,
        )
        model = InrModel(config.arch, config.fn, template, grid)

    def batch_fn(epoch):
        batch = sample_training_points(
            oracle,
            config.fn,
            config.n_uniform,
            config.n_surface,
            config.n_near,
            seed=f"{config.seed}.epoch{epoch}",
        )
        return batch.coords, batch.values

    log = _run_epochs(model, config, batch_fn, oracle.id)
    return model, log


# ---------------------------------------------------------------------------
# distillation
# ---------------------------------------------------------------------------


def _surface_bank(source, n, seed):
    """Surface points of a black-box INR via tracing (or occupancy crossings).

    Returns possibly fewer than n points; empty means no surface was found.
    """
    from . import convert

    try:
        if source.fn == "occ":
            return convert.occ_surface_points(source, 64, n)
        cfg = convert.TraceConfig()
        return convert.sample_point_cloud(
            source, n, cfg, seed=seed, max_rays=200_000, min_hit_rate=0.0
        )
    except Exception:
        return np.empty((0, 3), dtype=np.float32)


def distill_inr(source, target_arch, config):
    """Fit a target-architecture INR against a black-box source INR.

    Only the source's evaluation interface is used. The target inherits the
    source's implicit-function tag; supervision values are source outputs at
    the sampled coordinates.
    """
    config = replace(config, arch=target_arch, fn=source.fn)
    template = shared_mlp_template(target_arch, config.template_seed, config.omega0)
    if target_arch == "mlp":
        model = InrModel(target_arch, source.fn, template)
    else:
        grid = build_grid(
            target_arch,
            rng_stream(config.seed, "grid-init", "distill", target_arch),
            field=source.evaluate,
        )
        model = InrModel(target_arch, source.fn, template, grid)

    bank = _surface_bank(source, max(config.n_surface, 2048), seed=config.seed)
    if len(bank) == 0 and (config.n_surface or config.n_near):
        warnings.warn(
            "source INR exposes no zero level set; distilling from uniform samples only"
        )

    def batch_fn(epoch):
        rng = rng_stream(config.seed, "distill-points", epoch)
        if len(bank):
            uniform = rng.uniform(-1.0, 1.0, size=(config.n_uniform, 3))
            surf = bank[rng.integers(0, len(bank), size=config.n_surface)]
            near_base = bank[rng.integers(0, len(bank), size=config.n_near)]
            offsets = rng.normal(0.0, np.sqrt(0.015), size=(config.n_near, 3))
            near = np.clip(near_base + offsets, -1.0, 1.0)
            coords = np.concatenate([uniform, surf, near]).astype(np.float32)
        else:
            total = config.n_uniform + config.n_surface + config.n_near
            coords = rng.uniform(-1.0, 1.0, size=(total, 3)).astype(np.float32)
        values = source.evaluate(coords).astype(np.float32)
        return coords, values

    log = _run_epochs(model, config, batch_fn, f"distill-{target_arch}")
    return model, log
