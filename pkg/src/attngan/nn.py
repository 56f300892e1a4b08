"""Parameterized layers and initialization for the translation networks."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


class ParameterRegistry:
    """Ordered, uniquely named map of parameter tensors.

    Names are hierarchical ("gen_xy.enc1.weight"); iteration order is the
    registration order, which fixes the checkpoint payload layout.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}

    def register(self, name: str, shape) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor.zeros(tuple(shape), dtype=self.dtype, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())


def init_parameters(registry: ParameterRegistry, seed: int) -> None:
    """Fill registered tensors: weights ~ N(0, 0.02), gains 1, biases 0.

    The role is read off the name suffix. Deterministic given seed.
    """
    rng = np.random.default_rng(seed)
    for name, t in registry.items():
        if name.endswith(".gain"):
            t.data[...] = 1
        elif name.endswith(".bias"):
            t.data[...] = 0
        else:
            t.data[...] = 0.02 * rng.standard_normal(t.shape, dtype=registry.dtype)


def parameter_count(registry: ParameterRegistry) -> int:
    return sum(t.size for t in registry.tensors())


class Conv2d:
    def __init__(self, reg: ParameterRegistry, name: str, in_ch: int, out_ch: int,
                 kernel: int, stride=1, padding=0, bias: bool = True):
        self.stride = stride
        self.padding = padding
        self.weight = reg.register(f"{name}.weight", (out_ch, in_ch, kernel, kernel))
        self.bias = reg.register(f"{name}.bias", (out_ch,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose2d:
    def __init__(self, reg: ParameterRegistry, name: str, in_ch: int, out_ch: int,
                 kernel: int, stride=1, padding=0, bias: bool = True):
        self.stride = stride
        self.padding = padding
        # kernel stored conv-style: (in_ch, out_ch, k, k); forward is the conv adjoint
        self.weight = reg.register(f"{name}.weight", (in_ch, out_ch, kernel, kernel))
        self.bias = reg.register(f"{name}.bias", (out_ch,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv_transpose2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class InstanceNorm2d:
    def __init__(self, reg: ParameterRegistry, name: str, channels: int,
                 affine: bool = True, eps: float = 1e-5):
        self.eps = eps
        self.gain = reg.register(f"{name}.gain", (channels,)) if affine else None
        self.bias = reg.register(f"{name}.bias", (channels,)) if affine else None

    def __call__(self, x: Tensor) -> Tensor:
        y = T.instance_norm(x, eps=self.eps)
        if self.gain is None:
            return y
        return T.channel_affine(y, self.gain, self.bias)


class ResidualBlock:
    """Shape-preserving block: x + conv(norm(relu(conv(norm(x)))))."""

    def __init__(self, reg: ParameterRegistry, name: str, channels: int):
        self.channels = channels
        self.norm1 = InstanceNorm2d(reg, f"{name}.norm1", channels)
        self.conv1 = Conv2d(reg, f"{name}.conv1", channels, channels, 3, stride=1, padding=1)
        self.norm2 = InstanceNorm2d(reg, f"{name}.norm2", channels)
        self.conv2 = Conv2d(reg, f"{name}.conv2", channels, channels, 3, stride=1, padding=1)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(
                f"residual_block: input shape {x.shape} vs block width {self.channels}"
            )
        h = self.conv2(self.norm2(T.relu(self.conv1(self.norm1(x)))))
        return T.add(x, h)
