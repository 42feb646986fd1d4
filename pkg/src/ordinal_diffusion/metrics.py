"""Distribution metrics and the noise-geometry probe.

``frechet_gaussian`` is the Frechet distance between Gaussian fits, computed
directly on the data rather than on Inception features. Precision and
recall follow the k-NN ball coverage rule: a point is covered by a set when
it lies inside the ball around some member whose radius is that member's
distance to its k-th nearest neighbour in its own set.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .denoiser import DenoiserParams, predict_noise
from .diffusion import METRICS, forward_jump, sample_triplets
from .schedule import NoiseSchedule

REG_EPS = 1e-6


def _moments(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("need at least two samples to fit a Gaussian")
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    if x.shape[0] <= x.shape[1]:
        cov = cov + REG_EPS * np.eye(x.shape[1])
    return x.mean(axis=0), cov


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((a + a.T) / 2)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_from_moments(mu1, cov1, mu2, cov2) -> float:
    # Tr (S1 S2)^(1/2) = Tr (R S2 R)^(1/2) with R = S1^(1/2); the inner matrix is symmetric PSD
    root = _psd_sqrt(cov1)
    inner = root @ cov2 @ root
    w = np.linalg.eigvalsh((inner + inner.T) / 2)
    tr_covmean = np.sqrt(np.clip(w, 0.0, None)).sum()
    diff = mu1 - mu2
    d2 = diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * tr_covmean
    return float(max(d2, 0.0))


def frechet_gaussian(real, gen) -> float:
    mu_r, cov_r = _moments(real)
    mu_g, cov_g = _moments(gen)
    if mu_r.shape != mu_g.shape:
        raise ValueError("real and generated samples differ in dimension")
    return frechet_from_moments(mu_r, cov_r, mu_g, cov_g)


def _sq_dists(a: np.ndarray, b: np.ndarray, chunk: int = 1024) -> np.ndarray:
    # explicit difference-then-square keeps results reproducible against a naive loop
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(0, a.shape[0], chunk):
        diff = a[i:i + chunk, None, :] - b[None, :, :]
        out[i:i + chunk] = (diff * diff).sum(axis=2)
    return out


def knn_radii_sq(x: np.ndarray, k: int) -> np.ndarray:
    """Squared distance from each point to its k-th nearest other point."""
    d = _sq_dists(x, x)
    return np.partition(d, k, axis=1)[:, k]


def coverage(query: np.ndarray, ref: np.ndarray, k: int) -> float:
    radii = knn_radii_sq(ref, k)
    d = _sq_dists(query, ref)
    return float(np.mean((d <= radii[None, :]).any(axis=1)))


def knn_precision_recall(real, gen, k: int = 3) -> tuple[float, float]:
    real = np.asarray(real, dtype=np.float64)
    gen = np.asarray(gen, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be at least 1")
    if real.shape[0] <= k or gen.shape[0] <= k:
        raise ValueError(f"both sets need more than k={k} points")
    return coverage(gen, real, k), coverage(real, gen, k)


@dataclass
class CollinearityRecord:
    t: int
    p: int
    q: int
    r: int
    residual: float
    alpha_hat: float
    interp_residual: float


def fit_alpha(eps_p, eps_q, eps_r) -> tuple[float, float]:
    """Least-squares alpha for eps_q ~ alpha eps_p + (1 - alpha) eps_r.

    Returns ``(alpha, residual_norm)``; alpha is unclamped and NaN when
    ``eps_p == eps_r``.
    """
    u = np.ravel(eps_p) - np.ravel(eps_r)
    v = np.ravel(eps_q) - np.ravel(eps_r)
    uu = u @ u
    if uu == 0:
        return float("nan"), float(np.linalg.norm(v))
    alpha = (u @ v) / uu
    return float(alpha), float(np.linalg.norm(v - alpha * u))


def _distance(a: np.ndarray, b: np.ndarray, metric: str) -> float:
    d = float(np.mean((a - b) ** 2))
    return math.sqrt(d) if metric == "euclidean" else d


def ordinal_residual(m_p, m_q, m_r, metric: str) -> float:
    return (_distance(m_p, m_r, metric) - _distance(m_p, m_q, metric) - _distance(m_q, m_r, metric)) ** 2


Predictor = Callable[[np.ndarray, int, int], np.ndarray]


def collinearity_probe(params: DenoiserParams | Predictor, data_by_class: dict[int, np.ndarray],
                       t_list, sched: NoiseSchedule, metric: str = "euclidean",
                       seed: int = 0, n_eval: int = 256) -> list[CollinearityRecord]:
    """Geometry of class-mean noise predictions at each timestep in ``t_list``.

    Every class is evaluated on ``n_eval`` of its own samples (drawn with
    replacement) under one shared noise draw, so mean predictions differ only
    through the class data and the class label.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if callable(params):
        predict = params
    else:
        predict = lambda x, t, c: predict_noise(params, x, t, c)  # noqa: E731
    classes = sorted(data_by_class)
    rng = np.random.default_rng(seed)
    D = np.asarray(data_by_class[classes[0]]).shape[1]
    x0 = {c: np.asarray(data_by_class[c])[rng.integers(0, len(data_by_class[c]), n_eval)]
          for c in classes}
    eps = rng.standard_normal((n_eval, D))
    triplets = sample_triplets(len(classes), "all")
    records = []
    for t in t_list:
        t = sched.check_t(int(t))
        means = {c: predict(forward_jump(x0[c], eps, t, sched), t, c).mean(axis=0) for c in classes}
        for tr in triplets:
            p, q, r = classes[tr.p - 1], classes[tr.q - 1], classes[tr.r - 1]
            alpha, interp = fit_alpha(means[p], means[q], means[r])
            records.append(CollinearityRecord(t, p, q, r,
                                              ordinal_residual(means[p], means[q], means[r], metric),
                                              alpha, interp))
    return records


def write_collinearity_csv(records: list[CollinearityRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "p", "q", "r", "residual", "alpha_hat"])
        for rec in records:
            w.writerow([rec.t, rec.p, rec.q, rec.r, repr(rec.residual), repr(rec.alpha_hat)])


@dataclass
class MetricsReport:
    frechet_overall: float
    frechet_per_class: list[float]
    precision: float
    recall: float
    precision_per_class: list[float] = field(default_factory=list)
    recall_per_class: list[float] = field(default_factory=list)
    collinearity: list[CollinearityRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d["collinearity"] = [CollinearityRecord(**r) for r in d.get("collinearity", [])]
        return cls(**d)


def evaluate(real_by_class: dict[int, np.ndarray], gen_by_class: dict[int, np.ndarray],
             k: int = 3) -> MetricsReport:
    classes = sorted(real_by_class)
    real_all = np.concatenate([real_by_class[c] for c in classes])
    gen_all = np.concatenate([gen_by_class[c] for c in classes])
    prec, rec = knn_precision_recall(real_all, gen_all, k)
    per_fd, per_p, per_r = [], [], []
    for c in classes:
        per_fd.append(frechet_gaussian(real_by_class[c], gen_by_class[c]))
        if len(real_by_class[c]) > k and len(gen_by_class[c]) > k:
            pc, rc = knn_precision_recall(real_by_class[c], gen_by_class[c], k)
        else:
            pc = rc = float("nan")
        per_p.append(pc)
        per_r.append(rc)
    return MetricsReport(frechet_gaussian(real_all, gen_all), per_fd, prec, rec, per_p, per_r)
