"""Dense and MPO-tensorized layers, network assembly and initialization.

An MPO layer stores two rank-3 cores joined by a bond index of dimension
chi; each forward pass contracts the cores into a full weight matrix and
proceeds like a dense layer.  The trainable parameters are the core
entries, so gradients flow through the contraction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ..simulate import DOMAIN_INIT, RngSpec
from .autodiff import Tensor, contract_mpo_cores

__all__ = [
    "DenseLayer",
    "MpoLayer",
    "Network",
    "ArchSpec",
    "init_network",
    "param_count",
    "mpo_contract",
    "mpo_from_dense",
    "grad_params",
    "grad_input",
    "save_network",
    "load_network",
]

_ACTIVATIONS = ("tanh", "identity")


def _glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


class DenseLayer:
    """Affine map plus activation; weight is [out, in], bias [out]."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray, activation: str = "tanh"):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        weight = np.asarray(weight, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weight.ndim != 2 or bias.shape != (weight.shape[0],):
            raise ValueError("weight must be [out, in] with bias [out]")
        if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
            raise ValueError("parameters must be finite")
        self.weight = Tensor(weight, requires_grad=True)
        self.bias = Tensor(bias, requires_grad=True)
        self.activation = activation

    @property
    def in_width(self) -> int:
        return self.weight.data.shape[1]

    @property
    def out_width(self) -> int:
        return self.weight.data.shape[0]

    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def param_count(self) -> int:
        return self.weight.data.size + self.bias.data.size

    def weight_matrix(self) -> Tensor:
        return self.weight


class MpoLayer:
    """2-node MPO layer of width d_phys^2 -> d_phys^2 with bond dimension chi.

    Cores w1 (A) and w2 (B) have shape [d_phys, chi, d_phys]; the
    contracted weight matrix is sum_alpha A_alpha (kron) B_alpha.  The bias
    is an ordinary dense bias of width d_phys^2, so the trainable parameter
    count is 2 * chi * d_phys^2 + d_phys^2.
    """

    def __init__(self, w1: np.ndarray, w2: np.ndarray, bias: np.ndarray, activation: str = "tanh"):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        w1 = np.asarray(w1, dtype=np.float64)
        w2 = np.asarray(w2, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if w1.ndim != 3 or w1.shape[0] != w1.shape[2]:
            raise ValueError("w1 must have shape [d_phys, chi, d_phys]")
        if w2.shape != w1.shape:
            raise ValueError("w1 and w2 must have identical shapes")
        d = w1.shape[0]
        if bias.shape != (d * d,):
            raise ValueError(f"bias must have width d_phys^2 = {d * d}")
        self.w1 = Tensor(w1, requires_grad=True)
        self.w2 = Tensor(w2, requires_grad=True)
        self.bias = Tensor(bias, requires_grad=True)
        self.activation = activation

    @property
    def d_phys(self) -> int:
        return self.w1.data.shape[0]

    @property
    def chi(self) -> int:
        return self.w1.data.shape[1]

    @property
    def in_width(self) -> int:
        return self.d_phys**2

    @property
    def out_width(self) -> int:
        return self.d_phys**2

    def params(self) -> list[Tensor]:
        return [self.w1, self.w2, self.bias]

    def param_count(self) -> int:
        return self.w1.data.size + self.w2.data.size + self.bias.data.size

    def weight_matrix(self) -> Tensor:
        return contract_mpo_cores(self.w1, self.w2)


def mpo_contract(layer: MpoLayer) -> np.ndarray:
    """Contracted weight matrix values of an MPO layer (shape [d^2, d^2])."""
    return layer.weight_matrix().data


def mpo_from_dense(weight: np.ndarray, chi: int) -> tuple[np.ndarray, np.ndarray]:
    """Best rank-chi MPO cores for a [d^2, d^2] matrix, in the Frobenius norm.

    Solved by SVD of the Kronecker rearrangement; with chi = d^2 the
    reconstruction is exact up to floating point.
    """
    weight = np.asarray(weight, dtype=np.float64)
    n = weight.shape[0]
    d = math.isqrt(n)
    if weight.shape != (n, n) or d * d != n:
        raise ValueError("weight must be square with perfect-square width")
    # rearrange W[(i1 d + i2), (j1 d + j2)] -> R[(i1 d + j1), (i2 d + j2)]
    r = weight.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    u, s, vt = np.linalg.svd(r, full_matrices=False)
    chi = min(chi, len(s))
    a = np.empty((d, chi, d))
    b = np.empty((d, chi, d))
    for alpha in range(chi):
        scale = math.sqrt(s[alpha])
        a[:, alpha, :] = scale * u[:, alpha].reshape(d, d)
        b[:, alpha, :] = scale * vt[alpha, :].reshape(d, d)
    return a, b


@dataclass(frozen=True)
class ArchSpec:
    """Network architecture: hidden layers of equal width plus a dense scalar head.

    kind 'dense' uses dense hidden layers throughout; kind 'tnn' uses a
    dense first hidden layer followed by MPO layers, so the width must be
    a perfect square.
    """

    kind: str
    hidden_layers: int
    width: int
    chi: int = 2
    input_width: int = 7

    def __post_init__(self) -> None:
        if self.kind not in ("dense", "tnn"):
            raise ValueError(f"kind must be 'dense' or 'tnn', got {self.kind!r}")
        if self.hidden_layers < 1:
            raise ValueError("need at least one hidden layer")
        if self.width < 1 or self.input_width < 1:
            raise ValueError("widths must be positive")
        if self.kind == "tnn":
            d = math.isqrt(self.width)
            if d * d != self.width:
                raise ValueError(f"tnn width {self.width} is not a perfect square")
            if self.hidden_layers < 2:
                raise ValueError("a tnn needs at least two hidden layers (the first is dense)")
            if self.chi < 1:
                raise ValueError("chi must be positive")

    @classmethod
    def parse(cls, text: str, chi: int = 2, input_width: int = 7) -> "ArchSpec":
        """Parse strings like 'dnn:2x64' or 'tnn:4x64'."""
        try:
            kind_text, shape = text.split(":")
            layers_text, width_text = shape.lower().split("x")
            kind = {"dnn": "dense", "dense": "dense", "tnn": "tnn"}[kind_text.lower()]
            return cls(kind=kind, hidden_layers=int(layers_text), width=int(width_text),
                       chi=chi, input_width=input_width)
        except (ValueError, KeyError) as exc:
            raise ValueError(f"cannot parse architecture {text!r}; expected e.g. 'tnn:2x64'") from exc

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hidden_layers": self.hidden_layers, "width": self.width,
                "chi": self.chi, "input_width": self.input_width}


class Network:
    """Layer stack mapping [batch, input_width] -> [batch, 1].

    Hidden activations are tanh, the output activation is the identity.
    """

    def __init__(self, layers: list):
        if not layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_width != nxt.in_width:
                raise ValueError(
                    f"adjacent layer widths {prev.out_width} -> {nxt.in_width} are incompatible"
                )
        self.layers = layers

    @property
    def input_width(self) -> int:
        return self.layers[0].in_width

    @property
    def output_width(self) -> int:
        return self.layers[-1].out_width

    def params(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params()]

    def zero_grad(self) -> None:
        for p in self.params():
            p.grad = None

    def forward(self, x) -> Tensor:
        """Taped forward pass; x may be an ndarray or a Tensor."""
        h = x if isinstance(x, Tensor) else Tensor(x)
        if h.data.ndim != 2 or h.data.shape[1] != self.input_width:
            raise ValueError(f"input must be [batch, {self.input_width}]")
        for layer in self.layers:
            w = layer.weight_matrix()
            h = h @ w.T + layer.bias
            if layer.activation == "tanh":
                h = h.tanh()
        return h

    def forward_with_input_grad(self, x: np.ndarray) -> tuple[Tensor, Tensor]:
        """Taped output and taped per-sample input gradient.

        The gradient is assembled from the same weight tensors as the
        forward pass, so losses built from it differentiate correctly with
        respect to every parameter (including MPO cores).
        """
        x = np.asarray(x, dtype=np.float64)
        h = Tensor(x)
        weights: list[Tensor] = []
        taped: list[tuple[Tensor, str]] = []
        for layer in self.layers:
            w = layer.weight_matrix()
            weights.append(w)
            h = h @ w.T + layer.bias
            if layer.activation == "tanh":
                h = h.tanh()
            taped.append((h, layer.activation))
        out = h
        if out.data.shape[1] != 1:
            raise ValueError("input gradients require a scalar-output network")
        # Backward sweep written in taped ops: s_l = (s_{l+1} . act') @ W_{l+1}
        s = Tensor(np.ones((x.shape[0], 1)))
        for (act_out, activation), w in zip(reversed(taped), reversed(weights)):
            if activation == "tanh":
                s = s * (1.0 - act_out * act_out)
            s = s @ w
        return out, s

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Plain-numpy forward pass for frozen evaluation; matches forward()."""
        h = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            if isinstance(layer, MpoLayer):
                w = np.einsum("iaj,kal->ikjl", layer.w1.data, layer.w2.data)
                w = w.reshape(layer.in_width, layer.in_width)
            else:
                w = layer.weight.data
            h = h @ w.T + layer.bias.data
            if layer.activation == "tanh":
                h = np.tanh(h)
        return h

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)


def param_count(net: Network) -> int:
    """Number of trainable scalars in the network."""
    return net.param_count()


def init_network(arch: ArchSpec, rng: RngSpec | np.random.Generator, stream: int = 0) -> Network:
    """Glorot-style initialization, deterministic under the seed.

    Dense weights are uniform on +/- sqrt(6 / (fan_in + fan_out)) with zero
    biases.  MPO cores are i.i.d. normal scaled so the contracted weight
    matrix matches the Glorot variance of the equivalent dense layer:
    chi * s^4 = 2 / (fan_in + fan_out) per entry.
    """
    gen = rng.substream(stream, domain=DOMAIN_INIT) if isinstance(rng, RngSpec) else rng
    layers: list = []
    widths = [arch.input_width] + [arch.width] * arch.hidden_layers

    def dense(fan_in: int, fan_out: int, activation: str) -> DenseLayer:
        bound = _glorot_bound(fan_in, fan_out)
        w = gen.uniform(-bound, bound, size=(fan_out, fan_in))
        return DenseLayer(w, np.zeros(fan_out), activation)

    for i in range(arch.hidden_layers):
        fan_in, fan_out = widths[i], widths[i + 1]
        if arch.kind == "tnn" and i > 0:
            d = math.isqrt(arch.width)
            glorot_var = 2.0 / (fan_in + fan_out)
            core_std = (glorot_var / arch.chi) ** 0.25
            w1 = gen.normal(0.0, core_std, size=(d, arch.chi, d))
            w2 = gen.normal(0.0, core_std, size=(d, arch.chi, d))
            layers.append(MpoLayer(w1, w2, np.zeros(d * d), "tanh"))
        else:
            layers.append(dense(fan_in, fan_out, "tanh"))
    layers.append(dense(arch.width, 1, "identity"))
    return Network(layers)


def grad_params(net: Network, loss: Tensor) -> list[np.ndarray]:
    """Reverse-mode gradients of a taped scalar loss for every parameter."""
    net.zero_grad()
    loss.backward()
    grads = []
    for p in net.params():
        grads.append(np.zeros_like(p.data) if p.grad is None else p.grad)
    return grads

def grad_input(net: Network, x: np.ndarray) -> np.ndarray:
    """Per-sample gradient of the scalar output with respect to the input."""
    _, gx = net.forward_with_input_grad(x)
    return gx.data


# -- checkpointing -----------------------------------------------------------

_CHECKPOINT_VERSION = 1


def save_network(net: Network, path, arch: ArchSpec, seed: int | None = None) -> None:
    """Write a self-describing checkpoint: arch spec, seed and flat parameters."""
    meta = {"version": _CHECKPOINT_VERSION, "arch": arch.to_dict(), "seed": seed}
    flat = np.concatenate([p.data.reshape(-1) for p in net.params()]).astype("<f8")
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), params=flat)


def load_network(path) -> tuple[Network, ArchSpec, int | None]:
    """Rebuild a network from a checkpoint written by save_network."""
    with np.load(path) as blob:
        meta = json.loads(bytes(blob["meta"].tobytes()).decode())
        flat = np.asarray(blob["params"], dtype=np.float64)
    if meta["version"] != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta['version']}")
    arch = ArchSpec(**meta["arch"])
    net = init_network(arch, RngSpec(seed=0))
    offset = 0
    for p in net.params():
        n = p.data.size
        p.data = flat[offset : offset + n].reshape(p.data.shape).copy()
        offset += n
    if offset != flat.size:
        raise ValueError("checkpoint parameter count does not match architecture")
    return net, arch, meta["seed"]
