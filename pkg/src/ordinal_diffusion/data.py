"""Synthetic ordinal datasets and the binary dataset container.

Container layout: an ASCII magic line, one JSON header line, then the N x D
sample block as little-endian float64 followed by N little-endian uint16
labels.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"ODMDATA1\n"
FORMAT_VERSION = 1

# LIMUC Mayo 0-3 counts (6105, 3052, 1254, 865) scaled down roughly tenfold
DEFAULT_COUNTS = (600, 300, 120, 80)


class DatasetFormatError(ValueError):
    pass


@dataclass
class LabeledDataset:
    samples: np.ndarray
    labels: np.ndarray
    C: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be an N x D matrix")
        if self.labels.shape != (self.samples.shape[0],):
            raise ValueError("need exactly one label per sample")
        if self.C < 1:
            raise ValueError("C must be positive")
        bad = np.flatnonzero((self.labels < 1) | (self.labels > self.C))
        if bad.size:
            i = int(bad[0])
            raise ValueError(f"record {i}: label {int(self.labels[i])} outside 1..{self.C}")

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def D(self) -> int:
        return self.samples.shape[1]

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.C + 1)[1:]

    def by_class(self) -> dict[int, np.ndarray]:
        return {c: self.samples[self.labels == c] for c in range(1, self.C + 1)}

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (self.C == other.C and self.samples.shape == other.samples.shape
                and self.samples.tobytes() == other.samples.tobytes()
                and np.array_equal(self.labels, other.labels))


@dataclass
class OrdinalGaussianSpec:
    """Gaussian classes whose means are spaced ``spacing`` apart along a path.

    ``layout="line"`` puts the means on a straight line along the first axis.
    ``layout="curve"`` bends the path into a quadratic arc in the first two
    axes: mu_c = (s_c, curvature * s_c^2) with s_c = spacing * (c - 1).
    """

    C: int = 4
    D: int = 2
    spacing: float = 2.0
    sigma: float | list[float] = 1.0
    counts: tuple[int, ...] = DEFAULT_COUNTS
    layout: str = "line"
    curvature: float = 0.25
    origin: list[float] | None = field(default=None)

    def __post_init__(self):
        self.counts = tuple(int(n) for n in self.counts)
        if self.C < 2:
            raise ValueError("need C >= 2")
        if self.D < 1:
            raise ValueError("need D >= 1")
        if len(self.counts) != self.C or min(self.counts) < 1:
            raise ValueError("counts must list C positive class sizes")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        if self.layout not in ("line", "curve"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.layout == "curve" and self.D < 2:
            raise ValueError("curve layout needs D >= 2")
        if np.any(np.asarray(self.sigma) < 0):
            raise ValueError("sigma must be nonnegative")

    def means(self) -> np.ndarray:
        mu = np.zeros((self.C, self.D)) if self.origin is None \
            else np.tile(np.asarray(self.origin, float), (self.C, 1))
        s = self.spacing * np.arange(self.C)
        mu[:, 0] += s
        if self.layout == "curve":
            mu[:, 1] += self.curvature * s ** 2
        return mu

    def sigmas(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.sigma, float), (self.C,)).copy()


def gen_ordinal_gaussians(spec: OrdinalGaussianSpec, seed: int | np.random.Generator) -> LabeledDataset:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mu, sig = spec.means(), spec.sigmas()
    blocks, labels = [], []
    for c in range(spec.C):
        n = spec.counts[c]
        blocks.append(mu[c] + sig[c] * rng.standard_normal((n, spec.D)))
        labels.append(np.full(n, c + 1))
    return LabeledDataset(np.concatenate(blocks), np.concatenate(labels), spec.C)


def save_dataset(ds: LabeledDataset, path) -> None:
    header = {"version": FORMAT_VERSION, "N": ds.N, "D": ds.D, "C": ds.C,
              "dtype": "float64", "label_dtype": "uint16", "endianness": "little"}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(ds.samples.astype("<f8").tobytes())
        fh.write(ds.labels.astype("<u2").tobytes())


def _read_header(fh, magic: bytes) -> dict:
    if fh.readline() != magic:
        raise DatasetFormatError("bad magic line; not a dataset container")
    line = fh.readline()
    try:
        header = json.loads(line)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"malformed header: {e}") from None
    if not isinstance(header, dict):
        raise DatasetFormatError("malformed header: not a JSON object")
    return header


def load_dataset(path) -> LabeledDataset:
    with open(path, "rb") as fh:
        header = _read_header(fh, MAGIC)
        try:
            N, D, C = int(header["N"]), int(header["D"]), int(header["C"])
            version = header["version"]
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetFormatError(f"malformed header: missing or bad field {e}") from None
        if version != FORMAT_VERSION:
            raise DatasetFormatError(f"unsupported dataset version {version}")
        if header.get("dtype") != "float64" or header.get("endianness") != "little":
            raise DatasetFormatError("only little-endian float64 samples are supported")
        body = fh.read()
    expected = N * D * 8 + N * 2
    if len(body) != expected:
        raise DatasetFormatError(f"count mismatch: header promises {expected} data bytes, file has {len(body)}")
    samples = np.frombuffer(body[: N * D * 8], dtype="<f8").reshape(N, D).astype(np.float64)
    labels = np.frombuffer(body[N * D * 8:], dtype="<u2").astype(np.int64)
    bad = np.flatnonzero((labels < 1) | (labels > C))
    if bad.size:
        i = int(bad[0])
        raise DatasetFormatError(f"record {i}: label {int(labels[i])} outside 1..{C}")
    return LabeledDataset(samples, labels, C)


def export_csv(ds: LabeledDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "label", *[f"f{j + 1}" for j in range(ds.D)]])
        for i in range(ds.N):
            w.writerow([i, int(ds.labels[i]), *[repr(float(v)) for v in ds.samples[i]]])


def load_samples(path) -> np.ndarray:
    """Load an N x D sample matrix from a dataset container, ``.npy`` or CSV file."""
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    if path.suffix == ".csv":
        with open(path) as fh:
            rows = list(csv.reader(fh))
        head, body = rows[0], rows[1:]
        cols = [j for j, h in enumerate(head) if h not in ("index", "label", "t")]
        return np.array([[float(r[j]) for j in cols] for r in body])
    return load_dataset(path).samples
