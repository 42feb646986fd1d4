"""Linear beta noise schedule with 1-based timestep indexing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep constants for t = 1..T.

    Arrays are stored with a padding entry at index 0 so that ``beta[t]`` is
    the value at timestep ``t``. The padding holds the t = 0 convention
    (beta = 0, alpha = alpha_bar = 1, sigma = 0).
    """

    beta1: float
    betaT: float
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray

    def check_t(self, t: int, allow_zero: bool = False) -> int:
        lo = 0 if allow_zero else 1
        if not isinstance(t, (int, np.integer)) or not lo <= t <= self.T:
            raise ValueError(f"timestep {t!r} outside [{lo}, {self.T}]")
        return int(t)

    def to_dict(self) -> dict:
        return {"beta1": self.beta1, "betaT": self.betaT, "T": self.T}


def build_schedule(beta1: float = 1e-4, betaT: float = 0.02, T: int = 1000) -> NoiseSchedule:
    if not (0 < beta1 <= betaT < 1):
        raise ValueError(f"need 0 < beta1 <= betaT < 1, got beta1={beta1}, betaT={betaT}")
    if int(T) != T or T < 2:
        raise ValueError(f"T must be an integer >= 2, got {T}")
    T = int(T)
    t = np.arange(1, T + 1, dtype=np.float64)
    beta = (betaT - beta1) * (t - 1) / (T - 1) + beta1
    # pin the endpoints; the formula is exact at t=1 but may round at t=T
    beta[0] = beta1
    beta[-1] = betaT
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)

    def pad(arr, v):
        out = np.concatenate([[v], arr])
        out.setflags(write=False)
        return out

    return NoiseSchedule(
        beta1=float(beta1),
        betaT=float(betaT),
        T=T,
        beta=pad(beta, 0.0),
        alpha=pad(alpha, 1.0),
        alpha_bar=pad(alpha_bar, 1.0),
        sigma=pad(np.sqrt(beta), 0.0),
    )
