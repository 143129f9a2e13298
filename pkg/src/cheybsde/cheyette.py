"""Multi-factor Cheyette model with constant mean reversion and volatility.

State is the factor pair (X, Y).  Every zero-coupon bond price is a closed
form of the state, so simulating (X, Y) is enough to price anything built
from bonds.  The factor correlation is fixed to the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curve import DiscountCurve

__all__ = [
    "CheyetteParams",
    "FactorState",
    "g_function",
    "zcb_price",
    "zcb_price_from_factors",
    "short_rate",
    "y_closed_form",
]


@dataclass(frozen=True)
class CheyetteParams:
    """Constant model parameters: d factors with mean reversion kappa and volatility eta.

    kappa entries must be nonzero (the closed forms divide by kappa); a
    kappa of exactly zero is rejected rather than special-cased.
    """

    kappa: np.ndarray
    eta: np.ndarray
    curve: DiscountCurve

    def __post_init__(self) -> None:
        kappa = np.atleast_1d(np.asarray(self.kappa, dtype=np.float64))
        eta = np.atleast_1d(np.asarray(self.eta, dtype=np.float64))
        if kappa.ndim != 1 or eta.ndim != 1 or len(kappa) != len(eta):
            raise ValueError("kappa and eta must be 1-d arrays of equal length")
        if len(kappa) < 1:
            raise ValueError("need at least one factor")
        if np.any(kappa == 0.0):
            raise ValueError("kappa entries must be nonzero")
        if np.any(eta < 0.0):
            raise ValueError("eta entries must be non-negative")
        kappa.setflags(write=False)
        eta.setflags(write=False)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def constant(cls, d: int, kappa: float, eta: float, curve: DiscountCurve) -> "CheyetteParams":
        """d identical factors with scalar kappa and eta."""
        if d < 1:
            raise ValueError("need at least one factor")
        return cls(np.full(d, kappa), np.full(d, eta), curve)

    @property
    def d(self) -> int:
        return len(self.kappa)


@dataclass(frozen=True)
class FactorState:
    """Factor values (x, y) observed at time t; y is non-negative."""

    t: float
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.atleast_1d(np.asarray(self.x, dtype=np.float64))
        y = np.atleast_1d(np.asarray(self.y, dtype=np.float64))
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if np.any(y < 0.0):
            raise ValueError("y entries must be non-negative (Y is an integral of a square)")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


def g_function(params: CheyetteParams, t: float, T: float) -> np.ndarray:
    """Bond-reconstruction coefficients G_i(t,T) = (1 - exp(-kappa_i (T-t))) / kappa_i."""
    if t > T:
        raise ValueError(f"g_function needs t <= T, got t={t}, T={T}")
    tau = T - t
    return (1.0 - np.exp(-params.kappa * tau)) / params.kappa


def zcb_price_from_factors(
    params: CheyetteParams, t: float, x: np.ndarray, y: np.ndarray, T: float
) -> np.ndarray:
    """P(t,T) from factor arrays with trailing axis d; broadcasts over leading axes."""
    if T > params.curve.last_maturity:
        raise ValueError(
            f"bond maturity {T} beyond last curve pillar {params.curve.last_maturity}"
        )
    g = g_function(params, t, T)
    ratio = params.curve.discount(T) / params.curve.discount(t)
    expo = -np.asarray(x) @ g - 0.5 * np.asarray(y) @ (g * g)
    return ratio * np.exp(expo)


def zcb_price(params: CheyetteParams, state: FactorState, T: float) -> float:
    """Zero-coupon bond price P(t,T) reconstructed from the factor state."""
    if state.t > T:
        raise ValueError(f"bond maturity {T} before observation time {state.t}")
    return float(zcb_price_from_factors(params, state.t, state.x, state.y, T))


def short_rate(params: CheyetteParams, state: FactorState) -> float:
    """Short rate r(t) = f(0,t) + sum_i x_i."""
    return params.curve.forward_rate(state.t) + float(np.sum(state.x))


def y_closed_form(params: CheyetteParams, t: float) -> np.ndarray:
    """Deterministic Y_i(t) = eta_i^2 (1 - exp(-2 kappa_i t)) / (2 kappa_i).

    Exact under constant parameters; used as the oracle for the Euler scheme.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    return params.eta**2 * (1.0 - np.exp(-2.0 * params.kappa * t)) / (2.0 * params.kappa)
