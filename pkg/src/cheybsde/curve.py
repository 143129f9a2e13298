"""Initial discount curve P(0,T) and the implied instantaneous forward curve.

Interpolation is log-linear in the bond price, which is equivalent to
piecewise-constant instantaneous forward rates between pillars.  There is
no extrapolation: querying beyond the last pillar raises
:class:`CurveRangeError`.
"""

from __future__ import annotations

import csv
import importlib.resources
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = ["CurveRangeError", "DiscountCurve", "bundled_curve"]


class CurveRangeError(ValueError):
    """Raised when a maturity falls outside the curve's pillar range."""


@dataclass(frozen=True)
class DiscountCurve:
    """Zero-coupon bond prices on a pillar grid, log-linearly interpolated.

    Attributes
    ----------
    maturities : ndarray
        Pillar maturities in years; strictly increasing, first entry 0.
    prices : ndarray
        Bond prices P(0,T) at the pillars; strictly positive, first entry 1.
    """

    maturities: np.ndarray
    prices: np.ndarray
    _log_prices: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        mat = np.asarray(self.maturities, dtype=np.float64)
        prc = np.asarray(self.prices, dtype=np.float64)
        if mat.ndim != 1 or prc.ndim != 1 or len(mat) != len(prc):
            raise ValueError("maturities and prices must be 1-d arrays of equal length")
        if len(mat) < 2:
            raise ValueError("curve needs at least two pillars")
        if mat[0] != 0.0 or prc[0] != 1.0:
            raise ValueError("first pillar must be (0, 1.0) exactly")
        if np.any(np.diff(mat) <= 0):
            raise ValueError("pillar maturities must be strictly increasing")
        if np.any(prc <= 0):
            raise ValueError("pillar prices must be strictly positive")
        mat.setflags(write=False)
        prc.setflags(write=False)
        object.__setattr__(self, "maturities", mat)
        object.__setattr__(self, "prices", prc)
        log_p = np.log(prc)
        log_p.setflags(write=False)
        object.__setattr__(self, "_log_prices", log_p)

    @classmethod
    def from_pillars(cls, pillars: Iterable[tuple[float, float]]) -> "DiscountCurve":
        """Build a curve from (maturity, price) pairs, sorted by maturity."""
        pairs = sorted(pillars)
        mat = np.array([t for t, _ in pairs], dtype=np.float64)
        prc = np.array([p for _, p in pairs], dtype=np.float64)
        return cls(mat, prc)

    @classmethod
    def from_csv(cls, path: str | Path) -> "DiscountCurve":
        """Read a two-column ``maturity,price`` CSV with a header row."""
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["maturity", "price"]:
                raise ValueError(f"curve CSV must have header 'maturity,price', got {reader.fieldnames}")
            pillars = [(float(row["maturity"]), float(row["price"])) for row in reader]
        return cls.from_pillars(pillars)

    @property
    def last_maturity(self) -> float:
        return float(self.maturities[-1])

    def _check_range(self, t: float, inclusive_end: bool) -> None:
        if t < 0.0 or t > self.last_maturity or (t == self.last_maturity and not inclusive_end):
            end = "]" if inclusive_end else ")"
            raise CurveRangeError(
                f"maturity {t} outside curve range [0, {self.last_maturity}{end}; no extrapolation"
            )

    def discount(self, t: float) -> float:
        """P(0,t) with log-linear interpolation between pillars."""
        t = float(t)
        self._check_range(t, inclusive_end=True)
        mat = self.maturities
        i = bisect_right(mat, t)
        if i == len(mat) or mat[i - 1] == t:
            return float(self.prices[i - 1])
        w = (t - mat[i - 1]) / (mat[i] - mat[i - 1])
        return float(np.exp((1.0 - w) * self._log_prices[i - 1] + w * self._log_prices[i]))

    def forward_rate(self, t: float) -> float:
        """Instantaneous forward f(0,t); piecewise constant, right-continuous."""
        t = float(t)
        self._check_range(t, inclusive_end=False)
        mat = self.maturities
        i = bisect_right(mat, t)
        # t lies in [mat[i-1], mat[i]); right-continuity puts pillar points
        # themselves in the interval to their right.
        return float(
            (self._log_prices[i - 1] - self._log_prices[i]) / (mat[i] - mat[i - 1])
        )

    def forward_rates_on_grid(self, times: np.ndarray) -> np.ndarray:
        """Vectorized f(0,t) for an array of times (same convention as forward_rate)."""
        times = np.asarray(times, dtype=np.float64)
        if times.size and (times.min() < 0.0 or times.max() >= self.last_maturity):
            raise CurveRangeError(
                f"times outside curve range [0, {self.last_maturity}) for forward rates"
            )
        idx = np.searchsorted(self.maturities, times, side="right")
        dlog = -np.diff(self._log_prices) / np.diff(self.maturities)
        return dlog[idx - 1]


def bundled_curve() -> DiscountCurve:
    """The discount curve shipped with the package (benchmark dataset)."""
    resource = importlib.resources.files("cheybsde.data").joinpath("discount_curve.csv")
    with importlib.resources.as_file(resource) as path:
        return DiscountCurve.from_csv(path)
