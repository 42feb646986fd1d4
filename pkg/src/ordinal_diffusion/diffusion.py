"""Forward noising, training losses and class-triplet batching."""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from . import numcore as nc
from .numcore import Node
from .schedule import NoiseSchedule

METRICS = ("squared", "euclidean")

# model(x_t, t, labels) -> Node of predicted noise
Model = Callable[[np.ndarray, int, np.ndarray], Node]
LambdaMode = Union[str, float]


def forward_step(x_prev, eps, t: int, sched: NoiseSchedule) -> np.ndarray:
    """One step of the forward chain: sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps."""
    t = sched.check_t(t)
    x_prev, eps = np.asarray(x_prev, float), np.asarray(eps, float)
    if x_prev.shape != eps.shape:
        raise nc.ShapeError(f"shape mismatch {x_prev.shape} vs {eps.shape}")
    return np.sqrt(1.0 - sched.beta[t]) * x_prev + np.sqrt(sched.beta[t]) * eps


def forward_jump(x0, eps, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form marginal x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    t = sched.check_t(t)
    x0, eps = np.asarray(x0, float), np.asarray(eps, float)
    if x0.shape != eps.shape:
        raise nc.ShapeError(f"shape mismatch {x0.shape} vs {eps.shape}")
    ab = sched.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


@dataclass(frozen=True)
class Triplet:
    p: int
    q: int
    r: int

    def __post_init__(self):
        if not (1 <= self.p < self.q < self.r):
            raise ValueError(f"triplet must satisfy 1 <= p < q < r, got {self}")


@dataclass
class ClassBlock:
    label: int
    x0: np.ndarray
    eps: np.ndarray
    # label fed to the model; 0 where dropped to the null class
    cond: np.ndarray | None = None

    def __post_init__(self):
        if self.x0.ndim != 2 or self.x0.shape[0] == 0:
            raise ValueError("class block must hold a nonempty B x D sample matrix")
        if self.eps.shape != self.x0.shape:
            raise nc.ShapeError("noise shape must match sample shape")
        if self.cond is None:
            self.cond = np.full(self.x0.shape[0], self.label, dtype=np.intp)


@dataclass
class TrainBatch:
    """Equal-size per-class blocks sharing one timestep ``t``."""

    blocks: list[ClassBlock]
    t: int

    @property
    def labels(self) -> list[int]:
        return [b.label for b in self.blocks]

    def stacked(self, sched: NoiseSchedule) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x0 = np.concatenate([b.x0 for b in self.blocks])
        eps = np.concatenate([b.eps for b in self.blocks])
        cond = np.concatenate([b.cond for b in self.blocks])
        return forward_jump(x0, eps, self.t, sched), eps, cond

    def block_slices(self) -> dict[int, slice]:
        out, start = {}, 0
        for b in self.blocks:
            n = b.x0.shape[0]
            out[b.label] = slice(start, start + n)
            start += n
        return out


@dataclass
class LossBreakdown:
    dm_loss: float
    ordinal_loss: float
    lambda_t: float
    total: float
    node: Node | None = None


def _mse(pred: Node, target: np.ndarray) -> Node:
    return nc.reduce_mean(nc.square(nc.sub(pred, nc.constant(target))))


def dm_loss(model: Model, batch: TrainBatch, sched: NoiseSchedule) -> Node:
    """Mean squared error between the true and the predicted noise."""
    x_t, eps, cond = batch.stacked(sched)
    return _mse(model(x_t, batch.t, cond), eps)


def row_distance(a: Node, b: Node, metric: str = "squared") -> Node:
    """Per-row distance between two B x D noise matrices (mean over elements)."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if a.shape != b.shape:
        raise nc.ShapeError(f"distance between shapes {a.shape} and {b.shape}")
    d = nc.row_mean(nc.square(nc.sub(a, b)))
    return nc.sqrt(d) if metric == "euclidean" else d


def _as_rows(x) -> Node:
    x = x if isinstance(x, Node) else nc.constant(x)
    return x if x.value.ndim == 2 else _reshape_row(x)


def _reshape_row(x: Node) -> Node:
    shape = x.value.shape
    out = Node(x.value.reshape(1, -1), (x,), "as_row")

    def backward(g, grads):
        nc._accumulate(x, g.reshape(shape), grads)

    out._backward = backward
    return out


def ordinal_distance(eps_a, eps_b, metric: str = "squared") -> Node:
    """Distance between two noise tensors treated as single samples."""
    a = _reshape_row(eps_a if isinstance(eps_a, Node) else nc.constant(eps_a))
    b = _reshape_row(eps_b if isinstance(eps_b, Node) else nc.constant(eps_b))
    return nc.reduce_sum(row_distance(a, b, metric))


def ordinal_loss(eps_p, eps_q, eps_r, metric: str = "squared",
                 mask: np.ndarray | None = None) -> Node:
    """(d(p,r) - (d(p,q) + d(q,r)))^2, averaged over paired rows.

    1-D inputs are single samples. For B x D inputs row i of each argument
    forms one triple. ``mask`` (length B, 0/1) drops rows from the average; if
    every row is masked the loss is 0.
    """
    p, q, r = (_as_rows(e) for e in (eps_p, eps_q, eps_r))
    resid = nc.sub(row_distance(p, r, metric),
                   nc.add(row_distance(p, q, metric), row_distance(q, r, metric)))
    sq = nc.square(resid)
    if mask is None:
        return nc.reduce_mean(sq)
    mask = np.asarray(mask, dtype=np.float64)
    n = mask.sum()
    if n == 0:
        return nc.mul(nc.reduce_sum(sq), 0.0)
    return nc.div(nc.reduce_sum(nc.mul(sq, nc.constant(mask))), float(n))


def sample_triplets(C: int, mode: str = "all", rng: np.random.Generator | None = None) -> list[Triplet]:
    if C < 3:
        return []
    if mode == "all":
        return [Triplet(*c) for c in itertools.combinations(range(1, C + 1), 3)]
    if mode == "random":
        if rng is None:
            raise ValueError("random triplet mode needs an rng")
        picked = np.sort(rng.choice(np.arange(1, C + 1), size=3, replace=False))
        return [Triplet(*(int(v) for v in picked))]
    raise ValueError(f"unknown triplet mode {mode!r}")


def lambda_weight(mode: LambdaMode, t: int, T: int) -> float:
    if mode == "time_variant":
        return t / T
    if mode == "off":
        return 0.0
    if isinstance(mode, (int, float)) and not isinstance(mode, bool):
        if not 0 <= mode:
            raise ValueError("constant lambda must be nonnegative")
        return float(mode)
    raise ValueError(f"unknown lambda mode {mode!r}")


def total_loss(model: Model, batch: TrainBatch, sched: NoiseSchedule,
               metric: str = "squared", lambda_mode: LambdaMode = "time_variant",
               triplets: Sequence[Triplet] | None = None) -> LossBreakdown:
    """DM loss plus the time-weighted ordinal loss over class triplets.

    A single forward pass produces every prediction. The ordinal term pairs
    rows by index within the per-class blocks and skips rows where any of the
    three classes was dropped to the null label. With weight 0 the ordinal
    term is not built at all.
    """
    lam = lambda_weight(lambda_mode, batch.t, sched.T)
    x_t, eps, cond = batch.stacked(sched)
    pred = model(x_t, batch.t, cond)
    dm = _mse(pred, eps)
    if lam == 0.0:
        return LossBreakdown(float(dm.value), 0.0, lam, float(dm.value), dm)

    if triplets is None:
        triplets = sample_triplets(max(batch.labels), "all")
    slices = batch.block_slices()
    missing = {c for tr in triplets for c in (tr.p, tr.q, tr.r)} - set(slices)
    if missing:
        raise ValueError(f"batch lacks class blocks {sorted(missing)} needed by the ordinal term")
    if not triplets:
        warnings.warn("fewer than three classes: ordinal term contributes 0", stacklevel=2)
        return LossBreakdown(float(dm.value), 0.0, lam, float(dm.value), dm)

    sizes = {s.stop - s.start for s in slices.values()}
    if len(sizes) != 1:
        raise ValueError("ordinal term needs equal-size class blocks")
    kept = {c: (cond[s] != 0) for c, s in slices.items()}
    terms = []
    for tr in triplets:
        sp, sq, sr = slices[tr.p], slices[tr.q], slices[tr.r]
        mask = kept[tr.p] & kept[tr.q] & kept[tr.r]
        terms.append(ordinal_loss(nc.slice_rows(pred, sp.start, sp.stop),
                                  nc.slice_rows(pred, sq.start, sq.stop),
                                  nc.slice_rows(pred, sr.start, sr.stop),
                                  metric, mask=None if mask.all() else mask))
    ordl = terms[0]
    for term in terms[1:]:
        ordl = nc.add(ordl, term)
    ordl = nc.div(ordl, float(len(terms)))
    total = nc.add(dm, nc.mul(ordl, lam))
    return LossBreakdown(float(dm.value), float(ordl.value), lam, float(total.value), total)
