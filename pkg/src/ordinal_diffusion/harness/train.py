"""The training loop."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .. import numcore as nc
from ..data import LabeledDataset, OrdinalGaussianSpec, gen_ordinal_gaussians, load_dataset
from ..denoiser import ArchConfig, NoiseModel, init_params
from ..diffusion import ClassBlock, LossBreakdown, TrainBatch, dm_loss, sample_triplets, total_loss
from ..schedule import build_schedule
from .checkpoint import Checkpoint, CheckpointError
from .config import ConfigError, TrainConfig
from .optim import AdamState, adam_step
from .rng import RngStreams

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "t", "lambda", "dm_loss", "ordinal_loss", "total")


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, breakdown: LossBreakdown | None):
        self.iteration = iteration
        self.breakdown = breakdown
        super().__init__(f"non-finite loss at iteration {iteration}; last breakdown: {breakdown}")


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list[tuple] = field(default_factory=list)
    dataset: LabeledDataset | None = None


def load_training_data(config: TrainConfig) -> LabeledDataset:
    if config.dataset is not None:
        return load_dataset(config.dataset)
    spec = OrdinalGaussianSpec(**config.generator)
    return gen_ordinal_gaussians(spec, RngStreams(config.seed)["dataset"])


def build_arch(config: TrainConfig, ds: LabeledDataset) -> ArchConfig:
    return ArchConfig(D=ds.D, C=ds.C, T=config.T, **config.arch)


def draw_batch(by_class: dict[int, np.ndarray], per_class: int, D: int, T: int,
               streams: RngStreams, label_drop: float, noise_pairing: str = "independent") -> TrainBatch:
    """Class-balanced batch: ``per_class`` rows from every class, one shared t.

    With ``noise_pairing="shared"`` row i of every class block gets the same
    noise draw; otherwise each row has its own.
    """
    t = int(streams["timesteps"].integers(1, T + 1))
    shared = streams["noise"].standard_normal((per_class, D)) if noise_pairing == "shared" else None
    blocks = []
    for c, xs in by_class.items():
        x0 = xs[streams["data"].integers(0, xs.shape[0], per_class)]
        eps = shared.copy() if shared is not None else streams["noise"].standard_normal((per_class, D))
        drop = streams["dropout"].random(per_class) < label_drop
        blocks.append(ClassBlock(c, x0, eps, np.where(drop, 0, c).astype(np.intp)))
    return TrainBatch(blocks, t)


def train(config: TrainConfig, resume: Checkpoint | None = None,
          dataset: LabeledDataset | None = None, ordinal: bool = True) -> TrainResult:
    """Train for ``config.iterations`` total steps, optionally resuming.

    ``ordinal=False`` never touches the ordinal loss code; it exists so the
    lambda-off path can be compared against a loop without that term.
    """
    ds = dataset if dataset is not None else load_training_data(config)
    if config.batch_size % ds.C:
        raise ConfigError(f"batch_size {config.batch_size} is not divisible by C={ds.C}")
    arch = build_arch(config, ds)
    sched = build_schedule(config.beta1, config.betaT, config.T)
    streams = RngStreams(config.seed)

    if resume is None:
        params = init_params(arch, streams["init"])
        opt = AdamState.zeros_like(params.tensors)
        start = 0
    else:
        if resume.arch_hash != arch.hash():
            raise CheckpointError("checkpoint architecture does not match the configuration")
        params, opt = resume.params.copy(), AdamState(resume.opt_state.step,
                                                      {k: v.copy() for k, v in resume.opt_state.m.items()},
                                                      {k: v.copy() for k, v in resume.opt_state.v.items()})
        streams.set_state(resume.rng_state)
        start = resume.iteration

    model = NoiseModel(params, trainable=True)
    by_class = ds.by_class()
    per_class = config.batch_size // ds.C
    lam_mode = config.lambda_value
    all_triplets = sample_triplets(ds.C, "all")
    rows: list[tuple] = []
    bd = None
    for it in range(start + 1, config.iterations + 1):
        batch = draw_batch(by_class, per_class, ds.D, config.T, streams, config.label_drop,
                           config.noise_pairing)
        try:
            if ordinal:
                triplets = all_triplets if config.triplet_mode == "all" \
                    else sample_triplets(ds.C, "random", streams["triplets"])
                bd = total_loss(model, batch, sched, config.metric, lam_mode, triplets)
            else:
                dm = dm_loss(model, batch, sched)
                bd = LossBreakdown(float(dm.value), 0.0, 0.0, float(dm.value), dm)
        except nc.NumericalError:
            raise TrainingDiverged(it, bd) from None
        if not np.isfinite(bd.total):
            raise TrainingDiverged(it, bd)
        for node in model.nodes.values():
            node.zero_grad()
        nc.backward(bd.node)
        grads = {k: n.grad for k, n in model.nodes.items()}
        adam_step(params.tensors, grads, opt, config.lr, config.adam_betas, config.adam_eps)
        rows.append((it, batch.t, bd.lambda_t, bd.dm_loss, bd.ordinal_loss, bd.total))
        if it % 1000 == 0:
            log.info("iter %d  t=%d  dm=%.4f  ord=%.4f  total=%.4f",
                     it, batch.t, bd.dm_loss, bd.ordinal_loss, bd.total)

    ckpt = Checkpoint(
        iteration=max(start, config.iterations),
        config=config,
        params=params,
        opt_state=opt,
        rng_state=streams.state(),
        data_source={"N": ds.N, "D": ds.D, "C": ds.C, "counts": ds.counts.tolist()},
    )
    return TrainResult(ckpt, rows, ds)


def write_loss_log(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for it, t, lam, dm, o, tot in rows:
            w.writerow([it, t, repr(lam), repr(dm), repr(o), repr(tot)])
