"""ODM-versus-DM comparison runs on synthetic imbalanced ordinal data."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..metrics import collinearity_probe, frechet_gaussian
from ..sampler import SampleRun, sample
from .checkpoint import Checkpoint
from .config import TrainConfig
from .train import train

log = logging.getLogger(__name__)

DEFAULT_GENERATOR = {"C": 4, "D": 2, "spacing": 2.0, "sigma": 1.0,
                     "counts": [600, 300, 120, 80], "layout": "line"}


@dataclass
class RunOutcome:
    seed: int
    variant: str
    frechet_per_class: list[float]
    probe_residual: float
    seconds: float
    checkpoint: Checkpoint | None = None


@dataclass
class Comparison:
    outcomes: list[RunOutcome] = field(default_factory=list)

    def by_variant(self, variant: str) -> list[RunOutcome]:
        return sorted((o for o in self.outcomes if o.variant == variant), key=lambda o: o.seed)

    def median_frechet(self, variant: str, c: int) -> float:
        return float(np.median([o.frechet_per_class[c - 1] for o in self.by_variant(variant)]))

    def probe_wins(self, a: str = "odm", b: str = "dm") -> int:
        return sum(x.probe_residual < y.probe_residual
                   for x, y in zip(self.by_variant(a), self.by_variant(b)))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            C = len(self.outcomes[0].frechet_per_class)
            w.writerow(["seed", "variant", *[f"frechet_c{c}" for c in range(1, C + 1)],
                        "probe_residual", "seconds"])
            for o in self.outcomes:
                w.writerow([o.seed, o.variant, *[repr(v) for v in o.frechet_per_class],
                            repr(o.probe_residual), f"{o.seconds:.2f}"])


def evaluate_checkpoint(ckpt: Checkpoint, real_by_class: dict[int, np.ndarray], n_gen: int,
                        probe_t: int, seed: int, method: str = "ddim") -> tuple[list[float], float]:
    """Per-class Frechet distance of generated samples and mean euclidean probe residual."""
    cfg = ckpt.config
    sched = ckpt.schedule()
    fds = []
    for c in sorted(real_by_class):
        run = SampleRun(c=c, n=n_gen, method=method, ddim_steps=cfg.ddim_steps,
                        guidance=cfg.guidance, seed=seed * 1000 + c)
        fds.append(frechet_gaussian(real_by_class[c], sample(ckpt.params, sched, run)))
    recs = collinearity_probe(ckpt.params, real_by_class, [probe_t], sched, "euclidean", seed=seed)
    return fds, float(np.mean([r.residual for r in recs]))


def compare(base: TrainConfig, seeds=(0, 1, 2, 3, 4), n_gen: int = 2000,
            probe_frac: float = 0.9, keep_checkpoints: bool = False) -> Comparison:
    """Train ODM (``base.lambda_mode``) and DM (lambda off) per seed and score both."""
    out = Comparison()
    probe_t = int(round(probe_frac * base.T))
    variants = {"odm": base.lambda_mode, "dm": "off"}
    for seed in seeds:
        for name, lam in variants.items():
            cfg = replace(base, seed=seed, lambda_mode=lam)
            t0 = time.time()
            res = train(cfg)
            fds, resid = evaluate_checkpoint(res.checkpoint, res.dataset.by_class(), n_gen,
                                             probe_t, seed)
            dt = time.time() - t0
            log.info("seed %d %s: frechet %s probe %.3g (%.0fs)", seed, name,
                     np.round(fds, 4), resid, dt)
            out.outcomes.append(RunOutcome(seed, name, fds, resid, dt,
                                           res.checkpoint if keep_checkpoints else None))
    return out
