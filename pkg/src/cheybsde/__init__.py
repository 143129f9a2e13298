"""Swaption pricing under the multi-factor Cheyette model.

Deep-BSDE pricers on dense and MPO-tensorized networks, with Monte-Carlo
and Longstaff-Schwartz benchmark pricers and a reproducible experiment CLI.
"""

__version__ = "0.1.0"

from .bsde import SwaptionSpec, TrainConfig, TrainTrace, train_bermudan, train_european
from .cheyette import CheyetteParams, FactorState
from .curve import DiscountCurve, bundled_curve
from .nn.layers import ArchSpec, Network, init_network
from .oracles import LsConfig, analytic_k0_price, ls_price_bermudan, mc_price_european
from .simulate import PathBatch, RngSpec, TimeGrid, simulate_paths

__all__ = [
    "__version__",
    "SwaptionSpec",
    "TrainConfig",
    "TrainTrace",
    "train_bermudan",
    "train_european",
    "CheyetteParams",
    "FactorState",
    "DiscountCurve",
    "bundled_curve",
    "ArchSpec",
    "Network",
    "init_network",
    "LsConfig",
    "analytic_k0_price",
    "ls_price_bermudan",
    "mc_price_european",
    "PathBatch",
    "RngSpec",
    "TimeGrid",
    "simulate_paths",
]
