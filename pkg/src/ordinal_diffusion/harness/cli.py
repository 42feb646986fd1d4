"""Command-line entry point: ``odm {gen-data,train,sample,eval,geometry,compare}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..data import (
    LabeledDataset, OrdinalGaussianSpec, export_csv, gen_ordinal_gaussians, load_dataset, save_dataset,
)
from ..metrics import collinearity_probe, evaluate, write_collinearity_csv
from ..sampler import SampleRun, sample, write_trajectory_csv
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig
from .experiment import DEFAULT_GENERATOR, compare
from .train import load_training_data, train, write_loss_log

log = logging.getLogger("ordinal_diffusion")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def _write_samples(x: np.ndarray, c: int, C: int, path: Path) -> None:
    if path.suffix == ".npy":
        np.save(path, x)
        return
    ds = LabeledDataset(x, np.full(len(x), c), C)
    if path.suffix == ".csv":
        export_csv(ds, path)
    else:
        save_dataset(ds, path)


def cmd_gen_data(a) -> None:
    gen = dict(DEFAULT_GENERATOR)
    if a.spec:
        gen = json.loads(Path(a.spec).read_text())
    ds = gen_ordinal_gaussians(OrdinalGaussianSpec(**gen), a.seed)
    out = Path(a.out)
    export_csv(ds, out) if out.suffix == ".csv" else save_dataset(ds, out)
    print(f"wrote {ds.N} samples ({', '.join(map(str, ds.counts))}) to {out}")


def cmd_train(a) -> None:
    config = TrainConfig.load(a.config)
    if a.iterations is not None:
        config = replace(config, iterations=a.iterations)
    resume = load_checkpoint(a.resume) if a.resume else None
    res = train(config, resume=resume)
    save_checkpoint(res.checkpoint, a.out)
    if a.log:
        write_loss_log(res.log, a.log)
        if res.log:
            from ..plotting import plot_loss_log
            plot_loss_log(res.log, _sibling(Path(a.log), ".png"))
    last = res.log[-1] if res.log else None
    print(f"trained to iteration {res.checkpoint.iteration}; checkpoint {a.out}"
          + (f"; last total loss {last[5]:.6g}" if last else ""))


def cmd_sample(a) -> None:
    ckpt = load_checkpoint(a.ckpt)
    run = SampleRun(c=a.cls, n=a.n, method=a.method, ddim_steps=a.steps, guidance=a.guidance,
                    seed=a.seed, keep_trajectory=bool(a.trajectory), clip=a.clip)
    out = sample(ckpt.params, ckpt.schedule(), run)
    if a.trajectory:
        out, traj = out
        write_trajectory_csv(traj, a.trajectory)
    _write_samples(out, a.cls, ckpt.params.arch.C, Path(a.out))
    print(f"wrote {len(out)} class-{a.cls} samples to {a.out}")


def cmd_eval(a) -> None:
    from ..plotting import plot_frechet_by_class, plot_samples
    ckpt = load_checkpoint(a.ckpt)
    real = load_dataset(a.real)
    real_by = real.by_class()
    if a.gen:
        gen_by = load_dataset(a.gen).by_class()
    else:
        cfg = ckpt.config
        gen_by = {}
        for c, xs in real_by.items():
            run = SampleRun(c=c, n=a.n_gen or len(xs), method=a.method, ddim_steps=cfg.ddim_steps,
                            guidance=cfg.guidance, seed=a.seed * 1000 + c)
            gen_by[c] = sample(ckpt.params, ckpt.schedule(), run)
    report = evaluate(real_by, gen_by, a.k)
    if a.t_list:
        report.collinearity = collinearity_probe(ckpt.params, real_by, a.t_list, ckpt.schedule(),
                                                 a.metric, seed=a.seed)
    out = Path(a.out)
    report.to_json(out)
    table = _sibling(out, ".csv")
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "frechet", "precision", "recall"])
        for c, fd, p, r in zip(sorted(real_by), report.frechet_per_class,
                               report.precision_per_class, report.recall_per_class):
            w.writerow([c, repr(fd), repr(p), repr(r)])
        w.writerow(["all", repr(report.frechet_overall), repr(report.precision), repr(report.recall)])
    plot_samples(real_by, gen_by, _sibling(out, "_samples.png"))
    plot_frechet_by_class({"generated": report.frechet_per_class}, _sibling(out, "_frechet.png"))
    print(f"frechet {report.frechet_overall:.6g}  precision {report.precision:.4f}  "
          f"recall {report.recall:.4f}; report {out}")


def cmd_geometry(a) -> None:
    from ..plotting import plot_geometry
    ckpt = load_checkpoint(a.ckpt)
    data = load_dataset(a.real) if a.real else load_training_data(ckpt.config)
    recs = collinearity_probe(ckpt.params, data.by_class(), a.t_list, ckpt.schedule(), a.metric,
                              seed=a.seed, n_eval=a.n_eval)
    write_collinearity_csv(recs, a.out)
    plot_geometry(recs, _sibling(Path(a.out), ".png"))
    print(f"wrote {len(recs)} records to {a.out}")


def cmd_compare(a) -> None:
    from ..plotting import plot_frechet_by_class
    base = TrainConfig.load(a.config) if a.config else TrainConfig(generator=dict(DEFAULT_GENERATOR))
    if a.iterations is not None:
        base = replace(base, iterations=a.iterations)
    result = compare(base, seeds=a.seeds, n_gen=a.n_gen)
    out = Path(a.out)
    result.write_csv(out)
    C = len(result.outcomes[0].frechet_per_class)
    medians = {v: [result.median_frechet(v, c) for c in range(1, C + 1)] for v in ("dm", "odm")}
    plot_frechet_by_class(medians, _sibling(out, "_frechet.png"))
    for v, m in medians.items():
        print(f"{v} median frechet per class: {', '.join(f'{x:.4g}' for x in m)}")
    print(f"odm probe residual lower in {result.probe_wins()} of {len(a.seeds)} seeds")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="odm", description="Ordinal diffusion models on vector data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic ordinal Gaussian dataset")
    g.add_argument("--spec", help="JSON file with generator fields")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--log", help="loss log CSV; a plot is written next to it")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--iterations", type=int, help="override the configured iteration count")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="draw class-conditional samples")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--class", dest="cls", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--method", choices=("ddpm", "ddim"), default="ddim")
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--guidance", type=float, default=2.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--clip", action="store_true")
    s.add_argument("--trajectory", help="CSV path for the per-step trajectory")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("eval", help="Frechet and precision/recall against real data")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--real", required=True)
    e.add_argument("--gen", help="labelled generated dataset; sampled from the checkpoint if omitted")
    e.add_argument("--n-gen", type=int, help="generated samples per class (default: real count)")
    e.add_argument("--method", choices=("ddpm", "ddim"), default="ddim")
    e.add_argument("--k", type=int, default=3)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--t-list", type=_int_list, help="also record collinearity at these timesteps")
    e.add_argument("--metric", choices=("squared", "euclidean"), default="euclidean")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("geometry", help="collinearity of class-wise noise predictions")
    m.add_argument("--ckpt", required=True)
    m.add_argument("--t-list", type=_int_list, required=True)
    m.add_argument("--real", help="dataset to probe (default: the training data)")
    m.add_argument("--metric", choices=("squared", "euclidean"), default="euclidean")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--n-eval", type=int, default=256)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_geometry)

    c = sub.add_parser("compare", help="ODM against lambda-off DM over several seeds")
    c.add_argument("--config", help="base config (default: desk-scale synthetic setup)")
    c.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
    c.add_argument("--iterations", type=int)
    c.add_argument("--n-gen", type=int, default=2000)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (OSError, ValueError, ArithmeticError, json.JSONDecodeError) as e:
        print(f"odm {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
