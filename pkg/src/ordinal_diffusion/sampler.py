"""Ancestral (DDPM) and deterministic DDIM sampling with classifier-free guidance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoiser import NULL_CLASS, DenoiserParams, predict_noise
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class SampleRun:
    c: int
    n: int
    method: str = "ddim"
    ddim_steps: int = 100
    guidance: float = 2.0
    seed: int = 0
    keep_trajectory: bool = False
    clip: bool = False

    def validate(self, T: int, C: int) -> None:
        if self.method not in ("ddpm", "ddim"):
            raise ValueError(f"unknown sampling method {self.method!r}")
        if self.method == "ddim" and not 1 <= self.ddim_steps <= T:
            raise ValueError(f"ddim steps must lie in [1, {T}]")
        if not 1 <= self.c <= C:
            raise ValueError(f"class {self.c} outside 1..{C}")
        if self.n < 1:
            raise ValueError("need at least one sample")
        if self.guidance < 0:
            raise ValueError("guidance scale must be nonnegative")


def guided_noise(eps_cond, eps_uncond, s: float) -> np.ndarray:
    if s < 0:
        raise ValueError("guidance scale must be nonnegative")
    eps_cond, eps_uncond = np.asarray(eps_cond, float), np.asarray(eps_uncond, float)
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError("conditional and unconditional predictions differ in shape")
    if s == 1:
        return eps_cond.copy()
    if s == 0:
        return eps_uncond.copy()
    return eps_uncond + s * (eps_cond - eps_uncond)


def ddpm_step(x_t, eps_hat, z, t: int, sched: NoiseSchedule) -> np.ndarray:
    t = sched.check_t(t)
    a, ab = sched.alpha[t], sched.alpha_bar[t]
    mean = (np.asarray(x_t) - (1.0 - a) / np.sqrt(1.0 - ab) * np.asarray(eps_hat)) / np.sqrt(a)
    if t == 1:
        return mean
    return mean + sched.sigma[t] * np.asarray(z)


def ddim_step(x_t, eps_hat, t: int, t_prev: int, sched: NoiseSchedule,
              clip: bool = False) -> np.ndarray:
    """Deterministic (eta = 0) update from ``t`` to ``t_prev``; ``t_prev = 0`` means abar = 1."""
    t = sched.check_t(t)
    t_prev = sched.check_t(t_prev, allow_zero=True)
    if t_prev >= t:
        raise ValueError(f"ddim step must go backwards, got t={t}, t_prev={t_prev}")
    ab, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t_prev]
    eps_hat = np.asarray(eps_hat)
    x0_hat = (np.asarray(x_t) - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)
    if clip:
        x0_hat = np.clip(x0_hat, -1.0, 1.0)
    return np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_hat


def ddim_timesteps(T: int, S: int) -> list[int]:
    """Uniform-stride descending subsequence of 1..T that starts at T."""
    if not 1 <= S <= T:
        raise ValueError(f"need 1 <= S <= T, got S={S}, T={T}")
    stride = T // S
    return list(range(T, 0, -stride))[:S]


def _guided(params: DenoiserParams, x, t: int, c: int, s: float) -> np.ndarray:
    cond = predict_noise(params, x, t, c)
    if s == 1:
        return cond
    uncond = predict_noise(params, x, t, NULL_CLASS)
    return guided_noise(cond, uncond, s)


def sample(params: DenoiserParams, sched: NoiseSchedule, run: SampleRun):
    """Draw ``run.n`` samples of class ``run.c``.

    Returns the N x D sample matrix, or ``(samples, trajectory)`` when
    ``run.keep_trajectory`` is set, where ``trajectory`` is a list of
    ``(t, x_t)`` pairs starting at ``t = T``.
    """
    run.validate(sched.T, params.arch.C)
    rng = np.random.default_rng(run.seed)
    x = rng.standard_normal((run.n, params.arch.D))
    traj = [(sched.T, x.copy())] if run.keep_trajectory else None
    if run.method == "ddpm":
        for t in range(sched.T, 0, -1):
            eps = _guided(params, x, t, run.c, run.guidance)
            z = rng.standard_normal(x.shape) if t > 1 else np.zeros_like(x)
            x = ddpm_step(x, eps, z, t, sched)
            if traj is not None:
                traj.append((t - 1, x.copy()))
    else:
        steps = ddim_timesteps(sched.T, run.ddim_steps)
        for t, t_prev in zip(steps, steps[1:] + [0]):
            eps = _guided(params, x, t, run.c, run.guidance)
            x = ddim_step(x, eps, t, t_prev, sched, clip=run.clip)
            if traj is not None:
                traj.append((t_prev, x.copy()))
    return (x, traj) if run.keep_trajectory else x


def write_trajectory_csv(traj, path) -> None:
    """One row per (timestep, sample): ``t,index,x1..xD``."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        D = traj[0][1].shape[1]
        w.writerow(["t", "index", *[f"x{j + 1}" for j in range(D)]])
        for t, x in traj:
            for i, row in enumerate(x):
                w.writerow([t, i, *[repr(float(v)) for v in row]])
