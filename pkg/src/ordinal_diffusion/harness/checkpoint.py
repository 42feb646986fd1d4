"""Checkpoint container: magic line, JSON manifest line, raw float64 blocks."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..data import DatasetFormatError, _read_header
from ..denoiser import ArchConfig, DenoiserParams
from ..schedule import NoiseSchedule, build_schedule
from .config import TrainConfig
from .optim import AdamState

MAGIC = b"ODMCKPT1\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    iteration: int
    config: TrainConfig
    params: DenoiserParams
    opt_state: AdamState
    rng_state: dict = field(default_factory=dict)
    data_source: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @property
    def arch_hash(self) -> str:
        return self.params.arch.hash()

    def schedule(self) -> NoiseSchedule:
        return build_schedule(self.config.beta1, self.config.betaT, self.config.T)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Checkpoint):
            return NotImplemented

        def same(a: dict, b: dict) -> bool:
            return a.keys() == b.keys() and all(
                a[k].shape == b[k].shape and a[k].tobytes() == b[k].tobytes() for k in a)

        return (self.iteration == other.iteration
                and self.config.to_dict() == other.config.to_dict()
                and self.params.arch == other.params.arch
                and same(self.params.tensors, other.params.tensors)
                and self.opt_state.step == other.opt_state.step
                and same(self.opt_state.m, other.opt_state.m)
                and same(self.opt_state.v, other.opt_state.v)
                and self.rng_state == other.rng_state
                and self.data_source == other.data_source)


def _blocks(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    out = [(f"param/{k}", v) for k, v in ckpt.params.tensors.items()]
    out += [(f"adam_m/{k}", v) for k, v in ckpt.opt_state.m.items()]
    out += [(f"adam_v/{k}", v) for k, v in ckpt.opt_state.v.items()]
    return out


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    blocks = _blocks(ckpt)
    table, offset = [], 0
    for name, arr in blocks:
        table.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    manifest = {
        "version": ckpt.version,
        "iteration": ckpt.iteration,
        "config": ckpt.config.to_dict(),
        "arch": ckpt.params.arch.to_dict(),
        "arch_hash": ckpt.arch_hash,
        "schedule": {"beta1": ckpt.config.beta1, "betaT": ckpt.config.betaT, "T": ckpt.config.T},
        "adam_step": ckpt.opt_state.step,
        "rng_state": ckpt.rng_state,
        "data_source": ckpt.data_source,
        "dtype": "float64",
        "endianness": "little",
        "tensors": table,
        "nbytes": offset,
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(manifest, sort_keys=True).encode() + b"\n")
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        try:
            man = _read_header(fh, MAGIC)
        except DatasetFormatError as e:
            raise CheckpointError(f"{path}: {e}") from None
        body = fh.read()
    if man.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {man.get('version')}")
    if len(body) != man["nbytes"]:
        raise CheckpointError(f"{path}: expected {man['nbytes']} tensor bytes, found {len(body)}")
    arch = ArchConfig.from_dict(man["arch"])
    if arch.hash() != man["arch_hash"]:
        raise CheckpointError("architecture hash does not match the stored architecture")
    groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam_m": {}, "adam_v": {}}
    for entry in man["tensors"]:
        kind, name = entry["name"].split("/", 1)
        n = int(np.prod(entry["shape"], dtype=np.int64))
        raw = body[entry["offset"]: entry["offset"] + 8 * n]
        groups[kind][name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(entry["shape"])
    config = TrainConfig.from_dict(man["config"])
    return Checkpoint(
        iteration=man["iteration"],
        config=config,
        params=DenoiserParams(arch, groups["param"]),
        opt_state=AdamState(man["adam_step"], groups["adam_m"], groups["adam_v"]),
        rng_state=man["rng_state"],
        data_source=man["data_source"],
        version=man["version"],
    )
