"""Batched Euler-Maruyama simulation of the factor processes.

Random numbers come from counter-based Philox substreams keyed by
(seed, stream index), one stream per path, so a batch is bit-identical no
matter how it is chunked or scheduled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.random import Generator, Philox

from .cheyette import CheyetteParams

__all__ = ["OffGridError", "TimeGrid", "RngSpec", "PathBatch", "gaussian_increments", "simulate_paths"]

_MASK63 = (1 << 63) - 1

# Substream namespaces: path noise and parameter initialization draw from
# disjoint key ranges of the same seed.
DOMAIN_PATHS = 0
DOMAIN_INIT = 1


class OffGridError(ValueError):
    """Raised when a required date does not lie on the time grid."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < ... < t_N = t_end with step dt = t_end / n_steps."""

    t_end: float
    n_steps: int

    def __post_init__(self) -> None:
        if self.t_end <= 0.0:
            raise ValueError("t_end must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_steps + 1)

    def index_of(self, t: float) -> int:
        """Grid index of date t; raises OffGridError rather than snapping."""
        k = int(round(t / self.dt))
        if k < 0 or k > self.n_steps or abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise OffGridError(f"date {t} is not a grid point of [0, {self.t_end}] with dt={self.dt}")
        return k

    def subgrid(self, t_end: float) -> "TimeGrid":
        """Prefix grid [0, t_end] with the same dt; t_end must be a grid point."""
        k = self.index_of(t_end)
        if k == 0:
            raise ValueError("subgrid needs a positive end date")
        return TimeGrid(t_end=t_end, n_steps=k)


@dataclass(frozen=True)
class RngSpec:
    """Seeded random source with per-path Philox substreams.

    Path j of a batch draws from the stream keyed by
    (seed, domain << 56 | (stream_offset + j)), so chunked or parallel
    generation reproduces the sequential result bit for bit.
    """

    seed: int
    stream_offset: int = 0

    def substream(self, index: int, domain: int = DOMAIN_PATHS) -> Generator:
        key = np.array(
            [self.seed & np.iinfo(np.uint64).max, (domain << 56) | (self.stream_offset + index)],
            dtype=np.uint64,
        )
        return Generator(Philox(key=key))

    def shifted(self, n_streams: int) -> "RngSpec":
        """Spec whose streams start n_streams later; used for fresh batches."""
        return RngSpec(seed=self.seed, stream_offset=self.stream_offset + n_streams)


def derive_run_seed(master_seed: int, run_index: int) -> int:
    """Stable per-run seed from (master seed, run index); splitmix-style mix."""
    z = (master_seed + 0x9E3779B97F4A7C15 * (run_index + 1)) & ((1 << 64) - 1)
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & ((1 << 64) - 1)
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & ((1 << 64) - 1)
    return (z ^ (z >> 31)) & _MASK63


@dataclass(frozen=True)
class PathBatch:
    """Simulated factor paths on a grid.

    x, y have shape [m_paths, n_steps + 1, d]; dw has shape
    [m_paths, n_steps, d] and holds the exact Brownian increments that
    drove the paths (the BSDE losses reuse them).
    """

    grid: TimeGrid
    x: np.ndarray
    y: np.ndarray
    dw: np.ndarray

    @property
    def m_paths(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[2]

    def to_csv(self, path: str | Path) -> None:
        """Dump paths as rows ``path_id, k, t, x_1..x_d, y_1..y_d``."""
        d = self.d
        times = self.grid.times
        header = ["path_id", "k", "t"] + [f"x_{i+1}" for i in range(d)] + [f"y_{i+1}" for i in range(d)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for j in range(self.m_paths):
                for k in range(self.grid.n_steps + 1):
                    row = [j, k, str(float(times[k]))]
                    row += [str(float(v)) for v in self.x[j, k]]
                    row += [str(float(v)) for v in self.y[j, k]]
                    writer.writerow(row)


def gaussian_increments(rng: RngSpec, m_paths: int, n_steps: int, dim: int) -> np.ndarray:
    """Standard normal draws [m_paths, n_steps, dim], one substream per path."""
    out = np.empty((m_paths, n_steps, dim))
    for j in range(m_paths):
        out[j] = rng.substream(j).standard_normal((n_steps, dim))
    return out


def simulate_paths(params: CheyetteParams, grid: TimeGrid, m_paths: int, rng: RngSpec) -> PathBatch:
    """Euler scheme for the factor SDE system from X = Y = 0.

    X_{k+1} = X_k + (Y_k - kappa * X_k) dt + eta * dW_k
    Y_{k+1} = Y_k + (eta^2 - 2 kappa * Y_k) dt,   dW_k = sqrt(dt) Z_k.
    """
    if m_paths < 1:
        raise ValueError("m_paths must be at least 1")
    d = params.d
    n = grid.n_steps
    dt = grid.dt
    z = gaussian_increments(rng, m_paths, n, d)
    dw = np.sqrt(dt) * z
    x = np.zeros((m_paths, n + 1, d))
    y = np.zeros((m_paths, n + 1, d))
    kappa = params.kappa
    eta = params.eta
    eta2_dt = eta**2 * dt
    for k in range(n):
        xk = x[:, k]
        yk = y[:, k]
        x[:, k + 1] = xk + (yk - kappa * xk) * dt + eta * dw[:, k]
        y[:, k + 1] = yk + (eta2_dt - 2.0 * kappa * yk * dt)
    for arr in (x, y, dw):
        arr.setflags(write=False)
    return PathBatch(grid=grid, x=x, y=y, dw=dw)
