"""Adam optimizer and the quartered learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

__all__ = ["AdamState", "LrSchedule"]


@dataclass
class LrSchedule:
    """Piecewise-constant rate: quarter i of the epochs runs at rates[i].

    With the default rates this is 1e-2, 1e-3, 1e-4, 1e-5 over the four
    quarters of training.
    """

    total_epochs: int
    rates: tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-5)

    def __post_init__(self) -> None:
        if self.total_epochs < len(self.rates):
            raise ValueError("need at least one epoch per schedule segment")
        if self.total_epochs % len(self.rates) != 0:
            raise ValueError(
                f"total_epochs must be divisible by {len(self.rates)} for the quartered schedule"
            )

    def rate_for(self, epoch: int) -> float:
        if not 0 <= epoch < self.total_epochs:
            raise ValueError(f"epoch {epoch} outside [0, {self.total_epochs})")
        quarter = epoch * len(self.rates) // self.total_epochs
        return self.rates[quarter]


class AdamState:
    """Adam with bias correction over a fixed list of parameter tensors."""

    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, params: list[Tensor]):
        self.params = params
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self, lr: float) -> None:
        """One update from the gradients currently stored on the parameters.

        Raises on non-finite gradients: that is the training-divergence
        signal, not something to average away.
        """
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient encountered in Adam step")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)
