"""Deep-BSDE swaption pricers.

The European pricer trains one network to satisfy the discretized value
dynamics on [0, T0] with the swaption payoff as terminal condition.  The
Bermudan pricer trains a backward stack of n+1 networks, one per exercise
date, each learning the continuation value on its inter-exercise interval
with a terminal condition that compares exercising against the frozen
next network.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cheyette import CheyetteParams, zcb_price_from_factors
from .nn.layers import ArchSpec, Network, init_network
from .nn.optim import AdamState, LrSchedule
from .simulate import PathBatch, RngSpec, TimeGrid, simulate_paths

__all__ = [
    "SwaptionSpec",
    "TrainConfig",
    "TrainTrace",
    "RunSetSummary",
    "european_terminal",
    "bermudan_payoffs",
    "train_european",
    "train_bermudan",
    "price_from_traces",
]


@dataclass(frozen=True)
class SwaptionSpec:
    """Payer swaption on a tenor structure T0 < ... < Tn with fixed rate K."""

    tenor: tuple[float, ...]
    fixed_rate: float
    style: str

    def __post_init__(self) -> None:
        tenor = tuple(float(t) for t in self.tenor)
        if len(tenor) < 2:
            raise ValueError("tenor needs at least two dates (n >= 1)")
        if tenor[0] <= 0.0:
            raise ValueError("first tenor date must be positive")
        if any(b <= a for a, b in zip(tenor, tenor[1:])):
            raise ValueError("tenor dates must be strictly increasing")
        if self.fixed_rate < 0.0:
            raise ValueError("fixed rate must be non-negative")
        if self.style not in ("european", "bermudan"):
            raise ValueError(f"style must be 'european' or 'bermudan', got {self.style!r}")
        object.__setattr__(self, "tenor", tenor)

    @property
    def n(self) -> int:
        return len(self.tenor) - 1

    @property
    def accruals(self) -> np.ndarray:
        """Delta T_m = T_m - T_{m-1} for m = 1..n."""
        return np.diff(np.asarray(self.tenor))

    def exercise_indices(self, grid: TimeGrid) -> list[int]:
        """Grid indices of every tenor date; raises OffGridError if off-grid."""
        return [grid.index_of(t) for t in self.tenor]


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters shared by both pricers.

    epochs is the schedule length for the European network; for the
    Bermudan stack it is split evenly across the n+1 networks unless
    epochs_per_net is given.  One Adam step is taken per epoch on a
    freshly simulated batch (set fresh_paths False to reuse one batch).
    """

    epochs: int
    batch_size: int = 100
    seed: int = 0
    fresh_paths: bool = True
    epochs_per_net: int | None = None
    lr_rates: tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-5)

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.epochs % 4 != 0:
            raise ValueError("epochs must be divisible by 4 (quartered schedule)")
        if self.epochs_per_net is not None and self.epochs_per_net % 4 != 0:
            raise ValueError("epochs_per_net must be divisible by 4 (quartered schedule)")


@dataclass
class TrainTrace:
    """Per-epoch training record plus the terminal price estimate."""

    epoch: np.ndarray
    price: np.ndarray
    loss: np.ndarray
    lr: np.ndarray
    final_price: float
    final_price_stderr: float

    def __post_init__(self) -> None:
        lengths = {len(self.epoch), len(self.price), len(self.loss), len(self.lr)}
        if len(lengths) != 1:
            raise ValueError("trace columns must have equal length")

    def to_csv(self, path: str | Path) -> None:
        """Write the frozen trace schema ``epoch,price,loss,lr``."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "price", "loss", "lr"])
            for e, p, l, r in zip(self.epoch, self.price, self.loss, self.lr):
                writer.writerow([int(e), str(float(p)), str(float(l)), str(float(r))])


@dataclass(frozen=True)
class RunSetSummary:
    """Mean terminal price over independent runs with its standard error."""

    price: float
    stderr: float
    n_runs: int

    @property
    def band_defined(self) -> bool:
        return self.n_runs > 1

    @property
    def ci95_halfwidth(self) -> float:
        return 1.96 * self.stderr


def _exercise_value(
    params: CheyetteParams,
    spec: SwaptionSpec,
    m: int,
    x_m: np.ndarray,
    y_m: np.ndarray,
) -> np.ndarray:
    """Exercise value at tenor date T_m from factor snapshots [M, d].

    (1 - P(T_m, T_n) - K * sum_{l>m} P(T_m, T_l) dT_l)_+, zero at m = n.
    """
    n = spec.n
    if m == n:
        return np.zeros(x_m.shape[0])
    t_m = spec.tenor[m]
    accruals = spec.accruals
    annuity = np.zeros(x_m.shape[0])
    p_n = None
    for ell in range(m + 1, n + 1):
        p = zcb_price_from_factors(params, t_m, x_m, y_m, spec.tenor[ell])
        annuity += p * accruals[ell - 1]
        if ell == n:
            p_n = p
    return np.maximum(1.0 - p_n - spec.fixed_rate * annuity, 0.0)


def european_terminal(params: CheyetteParams, spec: SwaptionSpec, paths: PathBatch) -> np.ndarray:
    """Terminal payoffs at T0 for every path, shape [M]."""
    if spec.style != "european":
        raise ValueError("european_terminal needs a european spec")
    k0 = paths.grid.index_of(spec.tenor[0])
    return _exercise_value(params, spec, 0, paths.x[:, k0, :], paths.y[:, k0, :])


def bermudan_payoffs(params: CheyetteParams, spec: SwaptionSpec, paths: PathBatch) -> np.ndarray:
    """Exercise values at every tenor date, shape [M, n + 1]; column n is zero."""
    if spec.style != "bermudan":
        raise ValueError("bermudan_payoffs needs a bermudan spec")
    indices = spec.exercise_indices(paths.grid)
    out = np.empty((paths.m_paths, spec.n + 1))
    for m, k_m in enumerate(indices):
        out[:, m] = _exercise_value(params, spec, m, paths.x[:, k_m, :], paths.y[:, k_m, :])
    return out


def _interval_inputs(paths: PathBatch, k_lo: int, k_hi: int) -> np.ndarray:
    """Network inputs (x_1..x_d, y_1..y_d, t) for grid points k_lo..k_hi, flattened."""
    times = paths.grid.times
    xs = paths.x[:, k_lo : k_hi + 1, :]
    ys = paths.y[:, k_lo : k_hi + 1, :]
    m, span, d = xs.shape
    ts = np.broadcast_to(times[k_lo : k_hi + 1][None, :, None], (m, span, 1))
    return np.concatenate([xs, ys, ts], axis=2).reshape(m * span, 2 * d + 1)


def _bsde_interval_loss(
    net: Network,
    params: CheyetteParams,
    paths: PathBatch,
    k_lo: int,
    k_hi: int,
    terminal: np.ndarray,
):
    """Taped BSDE loss of one network over grid points k_lo..k_hi.

    Residuals pair the network value V_hat at k+1 with its one-step Euler
    propagation V_tilde from k, plus the terminal mismatch at k_hi:

        V_tilde_{k+1} = V_hat_k (1 + r_k dt) + grad_X V_hat_k . (eta dW_k)
        loss = sum (V_hat - V_tilde)^2 + sum (V_hat_{k_hi} - terminal)^2

    Returns the loss tensor and the batch of values at k_lo.
    """
    d = params.d
    dt = paths.grid.dt
    span = k_hi - k_lo + 1
    m = paths.m_paths
    inputs = _interval_inputs(paths, k_lo, k_hi)
    out, gx = net.forward_with_input_grad(inputs)
    v_hat = out.reshape(m, span)
    grad_x = gx[:, :d].reshape(m, span, d)

    f0 = params.curve.forward_rates_on_grid(paths.grid.times[k_lo:k_hi])
    r = f0[None, :] + paths.x[:, k_lo:k_hi, :].sum(axis=2)
    growth = 1.0 + r * dt
    noise = params.eta * paths.dw[:, k_lo:k_hi, :]

    v_tilde = v_hat[:, :-1] * growth + (grad_x[:, :-1, :] * noise).sum(axis=2)
    residual = v_hat[:, 1:] - v_tilde
    terminal_residual = v_hat[:, -1] - terminal
    loss = (residual * residual).sum() + (terminal_residual * terminal_residual).sum()
    return loss, v_hat.data[:, 0]


def train_european(
    params: CheyetteParams,
    spec: SwaptionSpec,
    arch: ArchSpec,
    cfg: TrainConfig,
    grid: TimeGrid,
) -> tuple[TrainTrace, Network]:
    """Train the single European network and return its trace and the network."""
    if spec.style != "european":
        raise ValueError("train_european needs a european spec")
    if arch.input_width != 2 * params.d + 1:
        raise ValueError(f"network input width must be 2d+1 = {2 * params.d + 1}")
    spec.exercise_indices(grid)
    sim_grid = grid.subgrid(spec.tenor[0])
    k0 = sim_grid.n_steps

    net = init_network(arch, RngSpec(cfg.seed))
    adam = AdamState(net.params())
    schedule = LrSchedule(cfg.epochs, cfg.lr_rates)
    m = cfg.batch_size

    epochs = np.arange(cfg.epochs)
    prices = np.empty(cfg.epochs)
    losses = np.empty(cfg.epochs)
    lrs = np.empty(cfg.epochs)
    last_v0 = None
    for e in range(cfg.epochs):
        offset = e * m if cfg.fresh_paths else 0
        paths = simulate_paths(params, sim_grid, m, RngSpec(cfg.seed, stream_offset=offset))
        phi = european_terminal(params, spec, paths)
        loss, v0 = _bsde_interval_loss(net, params, paths, 0, k0, phi)
        net.zero_grad()
        loss.backward()
        lr = schedule.rate_for(e)
        adam.step(lr)
        prices[e] = v0.mean()
        losses[e] = float(loss.data)
        lrs[e] = lr
        last_v0 = v0
    stderr = float(last_v0.std(ddof=1) / math.sqrt(m)) if m > 1 else float("nan")
    trace = TrainTrace(
        epoch=epochs, price=prices, loss=losses, lr=lrs,
        final_price=float(prices[-1]), final_price_stderr=stderr,
    )
    return trace, net


def train_bermudan(
    params: CheyetteParams,
    spec: SwaptionSpec,
    arch: ArchSpec,
    cfg: TrainConfig,
    grid: TimeGrid,
) -> tuple[TrainTrace, list[Network]]:
    """Train the backward stack of n+1 continuation networks.

    Network m learns the continuation value on [T_{m-1}, T_m] (with
    T_{-1} = 0) against the terminal condition
    max(exercise value at T_m, frozen network m+1 at T_m); for m = n the
    terminal condition is the (zero) exercise value at T_n.  The option
    price is the batch mean of network 0 at t = 0.
    """
    if spec.style != "bermudan":
        raise ValueError("train_bermudan needs a bermudan spec")
    if arch.input_width != 2 * params.d + 1:
        raise ValueError(f"network input width must be 2d+1 = {2 * params.d + 1}")
    exercise_idx = spec.exercise_indices(grid)
    n = spec.n
    per_net = cfg.epochs_per_net
    if per_net is None:
        per_net, rem = divmod(cfg.epochs, n + 1)
        if rem or per_net % 4:
            raise ValueError(
                f"epochs={cfg.epochs} does not split into {n + 1} per-network schedules "
                "divisible by 4; set epochs_per_net explicitly"
            )
    m = cfg.batch_size

    nets: list[Network | None] = [None] * (n + 1)
    rows_epoch, rows_price, rows_loss, rows_lr = [], [], [], []
    stream_cursor = 0
    global_epoch = 0
    last_v0 = None
    for net_idx in range(n, -1, -1):
        net = init_network(arch, RngSpec(cfg.seed), stream=net_idx)
        adam = AdamState(net.params())
        schedule = LrSchedule(per_net, cfg.lr_rates)
        k_hi = exercise_idx[net_idx]
        k_lo = exercise_idx[net_idx - 1] if net_idx > 0 else 0
        sim_grid = grid.subgrid(spec.tenor[net_idx])
        for e in range(per_net):
            offset = stream_cursor if cfg.fresh_paths else 0
            paths = simulate_paths(params, sim_grid, m, RngSpec(cfg.seed, stream_offset=offset))
            stream_cursor += m
            x_m, y_m = paths.x[:, k_hi, :], paths.y[:, k_hi, :]
            target = _exercise_value(params, spec, net_idx, x_m, y_m)
            if net_idx < n:
                t_m = np.full((m, 1), spec.tenor[net_idx])
                cont_inputs = np.concatenate([x_m, y_m, t_m], axis=1)
                cont = nets[net_idx + 1].predict(cont_inputs)[:, 0]
                target = np.maximum(target, cont)
            loss, v0 = _bsde_interval_loss(net, params, paths, k_lo, k_hi, target)
            net.zero_grad()
            loss.backward()
            lr = schedule.rate_for(e)
            adam.step(lr)
            rows_epoch.append(global_epoch)
            rows_price.append(v0.mean())
            rows_loss.append(float(loss.data))
            rows_lr.append(lr)
            global_epoch += 1
            last_v0 = v0
        nets[net_idx] = net
    stderr = float(last_v0.std(ddof=1) / math.sqrt(m)) if m > 1 else float("nan")
    trace = TrainTrace(
        epoch=np.asarray(rows_epoch),
        price=np.asarray(rows_price),
        loss=np.asarray(rows_loss),
        lr=np.asarray(rows_lr),
        final_price=float(rows_price[-1]),
        final_price_stderr=stderr,
    )
    return trace, nets


def price_from_traces(traces: list[TrainTrace]) -> RunSetSummary:
    """Aggregate terminal prices of independent runs into mean and stderr.

    With a single run the band is undefined and stderr is NaN; check
    band_defined before quoting a confidence interval.
    """
    if not traces:
        raise ValueError("need at least one trace")
    finals = np.array([t.final_price for t in traces])
    r = len(finals)
    stderr = float(finals.std(ddof=1) / math.sqrt(r)) if r > 1 else float("nan")
    return RunSetSummary(price=float(finals.mean()), stderr=stderr, n_runs=r)
