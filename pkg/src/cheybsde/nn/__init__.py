"""Reverse-mode autodiff engine, dense/MPO layers and Adam optimization."""

from .autodiff import Tensor, as_tensor, contract_mpo_cores
from .layers import (
    ArchSpec,
    DenseLayer,
    MpoLayer,
    Network,
    grad_input,
    grad_params,
    init_network,
    load_network,
    mpo_contract,
    mpo_from_dense,
    param_count,
    save_network,
)
from .optim import AdamState, LrSchedule

__all__ = [
    "Tensor",
    "as_tensor",
    "contract_mpo_cores",
    "ArchSpec",
    "DenseLayer",
    "MpoLayer",
    "Network",
    "grad_input",
    "grad_params",
    "init_network",
    "load_network",
    "mpo_contract",
    "mpo_from_dense",
    "param_count",
    "save_network",
    "AdamState",
    "LrSchedule",
]
