"""Benchmark pricers that do not involve neural networks.

Monte-Carlo European pricing discounts the terminal payoff along each
path with a left-Riemann sum of the simulated short rate.  Bermudan
pricing uses Longstaff-Schwartz backward induction with polynomial
regressors in the X factors.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .bsde import SwaptionSpec, bermudan_payoffs, european_terminal
from .cheyette import CheyetteParams
from .curve import DiscountCurve
from .simulate import RngSpec, TimeGrid, simulate_paths

__all__ = ["LsConfig", "mc_price_european", "ls_price_bermudan", "analytic_k0_price"]

_CHUNK_EUROPEAN = 8192
_CHUNK_BERMUDAN = 4096


@dataclass(frozen=True)
class LsConfig:
    """Longstaff-Schwartz settings: monomial basis degree and regression sample.

    The basis is all monomials in the d X-factors up to the given degree,
    including the intercept.  Y is excluded: with constant volatility it
    is deterministic and identical across paths, so its columns would be
    collinear with the intercept.
    """

    degree: int
    n_paths: int
    itm_only: bool = True

    def __post_init__(self) -> None:
        if self.degree < 1:
            raise ValueError("regression degree must be at least 1")
        if self.n_paths < 2:
            raise ValueError("need at least two paths")


def _monomial_basis(x: np.ndarray, degree: int) -> np.ndarray:
    """Design matrix of monomials in the columns of x up to total degree."""
    n, d = x.shape
    columns = [np.ones(n)]
    for k in range(1, degree + 1):
        for combo in combinations_with_replacement(range(d), k):
            col = np.ones(n)
            for i in combo:
                col = col * x[:, i]
            columns.append(col)
    return np.column_stack(columns)


def _fit_continuation(basis: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Least-squares coefficients; warns and keeps the minimum-norm solution
    when the design matrix is rank deficient."""
    coef, _, rank, _ = np.linalg.lstsq(basis, target, rcond=None)
    if rank < basis.shape[1]:
        warnings.warn(
            f"rank-deficient regression (rank {rank} < {basis.shape[1]}); "
            "using pseudo-inverse solution",
            RuntimeWarning,
        )
    return coef


def _pathwise_discounts(params: CheyetteParams, paths, upto: np.ndarray) -> np.ndarray:
    """exp(-sum_{k < upto[i]} r_k dt) per path for each requested index, [M, len(upto)].

    Left-Riemann discounting on the simulation grid with the pathwise
    short-rate approximation r_k = f(0, t_k) + sum_i X_i.
    """
    dt = paths.grid.dt
    k_max = int(upto.max())
    f0 = params.curve.forward_rates_on_grid(paths.grid.times[:k_max])
    r = f0[None, :] + paths.x[:, :k_max, :].sum(axis=2)
    cum = np.concatenate([np.zeros((paths.m_paths, 1)), np.cumsum(r * dt, axis=1)], axis=1)
    return np.exp(-cum[:, upto])


def mc_price_european(
    params: CheyetteParams,
    spec: SwaptionSpec,
    grid: TimeGrid,
    n_paths: int,
    rng: RngSpec,
) -> tuple[float, float]:
    """Monte-Carlo price of a European swaption and its standard error."""
    if spec.style != "european":
        raise ValueError("mc_price_european needs a european spec")
    spec.exercise_indices(grid)
    sim_grid = grid.subgrid(spec.tenor[0])
    k0 = sim_grid.n_steps
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_paths:
        chunk = min(_CHUNK_EUROPEAN, n_paths - done)
        paths = simulate_paths(params, sim_grid, chunk, rng.shifted(done))
        phi = european_terminal(params, spec, paths)
        disc = _pathwise_discounts(params, paths, np.array([k0]))[:, 0]
        value = disc * phi
        total += value.sum()
        total_sq += (value * value).sum()
        done += chunk
    mean = total / n_paths
    var = (total_sq - n_paths * mean * mean) / (n_paths - 1)
    return float(mean), float(math.sqrt(max(var, 0.0) / n_paths))


def ls_price_bermudan(
    params: CheyetteParams,
    spec: SwaptionSpec,
    grid: TimeGrid,
    cfg: LsConfig,
    rng: RngSpec,
) -> tuple[float, float]:
    """Longstaff-Schwartz price of a Bermudan swaption and its standard error.

    Backward induction over the exercise dates: at each date the
    continuation value is regressed from the pathwise discounted future
    cash flow on the monomial basis in X (in-the-money paths only when
    itm_only), and exercise is taken where the immediate value is at
    least the fitted continuation.
    """
    if spec.style != "bermudan":
        raise ValueError("ls_price_bermudan needs a bermudan spec")
    exercise_idx = np.asarray(spec.exercise_indices(grid))
    n = spec.n
    n_paths = cfg.n_paths
    d = params.d

    # Forward sweep (chunked): factor snapshots, discounts and exercise
    # values at the tenor dates are all the induction needs.
    x_at = np.empty((n_paths, n + 1, d))
    disc_at = np.empty((n_paths, n + 1))
    payoff_at = np.empty((n_paths, n + 1))
    sim_grid = grid.subgrid(spec.tenor[-1])
    done = 0
    while done < n_paths:
        chunk = min(_CHUNK_BERMUDAN, n_paths - done)
        paths = simulate_paths(params, sim_grid, chunk, rng.shifted(done))
        sl = slice(done, done + chunk)
        x_at[sl] = paths.x[:, exercise_idx, :]
        disc_at[sl] = _pathwise_discounts(params, paths, exercise_idx)
        payoff_at[sl] = bermudan_payoffs(params, spec, paths)
        done += chunk

    # Backward induction on the cash-flow representation: cf is the value
    # of the single future cash flow per path, cf_m its exercise date.
    cf = payoff_at[:, n].copy()
    cf_m = np.full(n_paths, n)
    for m in range(n - 1, -1, -1):
        to_now = disc_at[np.arange(n_paths), cf_m] / disc_at[:, m]
        discounted_future = cf * to_now
        exercise_value = payoff_at[:, m]
        itm = exercise_value > 0.0
        sample = itm if (cfg.itm_only and itm.any()) else np.ones(n_paths, dtype=bool)
        basis = _monomial_basis(x_at[sample, m, :], cfg.degree)
        coef = _fit_continuation(basis, discounted_future[sample])
        continuation = _monomial_basis(x_at[:, m, :], cfg.degree) @ coef
        exercise = itm & (exercise_value >= continuation)
        cf = np.where(exercise, exercise_value, cf)
        cf_m = np.where(exercise, m, cf_m)

    value = cf * disc_at[np.arange(n_paths), cf_m]
    mean = value.mean()
    stderr = value.std(ddof=1) / math.sqrt(n_paths)
    return float(mean), float(stderr)


def forward_spread(curve: DiscountCurve, t_first: float, t_last: float) -> float:
    """P(0, t_first) - P(0, t_last); the zero-strike payer value."""
    return curve.discount(t_first) - curve.discount(t_last)


def analytic_k0_price(curve: DiscountCurve, spec: SwaptionSpec) -> float:
    """Model-free European price at K = 0: P(0, T0) - P(0, Tn).

    Follows from the martingale property of discounted bonds, so any
    correct pricer must agree with it within its own error budget.
    """
    if spec.style != "european":
        raise ValueError("analytic_k0_price needs a european spec")
    if spec.fixed_rate != 0.0:
        raise ValueError("analytic_k0_price is only valid at K = 0")
    return forward_spread(curve, spec.tenor[0], spec.tenor[-1])
