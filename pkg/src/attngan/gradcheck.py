"""Finite-difference gradient checking for every registered op.

Checks run in float64: analytic gradients from the tape are compared
against central differences (f(x+eps) - f(x-eps)) / 2eps of a scalar
readout loss = mean(out * R) with a fixed random projection R.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor, Tape

EPS = 1e-5
KINK_MARGIN = 1e-3
DEFAULT_TOLERANCE = 1e-4


def _away_from_zero(arr: np.ndarray, margin: float = KINK_MARGIN) -> np.ndarray:
    """Nudge entries off the kink at 0 so subgradients are well defined."""
    near = np.abs(arr) < margin
    sign = np.where(arr >= 0, 1.0, -1.0)
    return np.where(near, arr + sign * margin, arr)


def _rel_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1.0)


class _OpCase:
    """One checkable op: input builder plus forward closure."""

    def __init__(self, name, build, differentiable=True):
        self.name = name
        self.build = build  # rng -> (list[np.ndarray], forward(*Tensor) -> Tensor)
        self.differentiable = differentiable


def _u(rng, shape, lo=-2.0, hi=2.0):
    return rng.uniform(lo, hi, size=shape)


def _case_binary(op):
    def build(rng):
        a = _u(rng, (2, 2, 4, 4))
        b = _u(rng, (2, 2, 4, 4))
        return [a, b], op
    return build


def _case_elementwise(op, kink=False):
    def build(rng):
        a = _u(rng, (2, 3, 4, 4))
        if kink:
            a = _away_from_zero(a)
        return [a], op
    return build


def _case_matmul(rng):
    return [_u(rng, (4, 5)), _u(rng, (5, 3))], T.matmul


def _case_conv2d(rng):
    x = _u(rng, (2, 3, 6, 6))
    w = _u(rng, (4, 3, 3, 3), -1.0, 1.0)
    b = _u(rng, (4,))
    return [x, w, b], lambda x, w, b: T.conv2d(x, w, b, stride=2, padding=1)


def _case_conv_transpose2d(rng):
    y = _u(rng, (2, 4, 3, 3))
    w = _u(rng, (4, 3, 3, 3), -1.0, 1.0)
    b = _u(rng, (3,))
    return [y, w, b], lambda y, w, b: T.conv_transpose2d(y, w, b, stride=2, padding=1)


def _case_softmax(rng):
    return [_u(rng, (2, 5, 3, 3), -4.0, 4.0)], T.softmax_over_channel


def _case_instance_norm(rng):
    return [_u(rng, (2, 3, 5, 5))], T.instance_norm


def _case_channel_affine(rng):
    x = _u(rng, (2, 3, 4, 4))
    g = _u(rng, (3,), 0.5, 1.5)
    b = _u(rng, (3,))
    return [x, g, b], T.channel_affine


def _case_pad(rng):
    return [_u(rng, (2, 2, 3, 3))], lambda x: T.pad(x, ((1, 2), (0, 1)))


def _case_crop(rng):
    return [_u(rng, (2, 2, 5, 5))], lambda x: T.crop(x, 1, 2, 3, 2)


def _case_upsample(rng):
    return [_u(rng, (2, 2, 3, 3))], lambda x: T.upsample_nearest(x, 2)


def _case_concat(rng):
    a = _u(rng, (2, 2, 3, 3))
    b = _u(rng, (2, 3, 3, 3))
    return [a, b], lambda a, b: T.concat_channels([a, b])


def _case_slice(rng):
    return [_u(rng, (2, 5, 3, 3))], lambda x: T.slice_channels(x, 1, 4)


def _case_expand(rng):
    return [_u(rng, (2, 1, 3, 3))], lambda x: T.expand_channels(x, 3)


OP_CASES: dict[str, _OpCase] = {
    "add": _OpCase("add", _case_binary(T.add)),
    "sub": _OpCase("sub", _case_binary(T.sub)),
    "mul": _OpCase("mul", _case_binary(T.mul)),
    "matmul": _OpCase("matmul", _case_matmul),
    "conv2d": _OpCase("conv2d", _case_conv2d),
    "conv_transpose2d": _OpCase("conv_transpose2d", _case_conv_transpose2d),
    "relu": _OpCase("relu", _case_elementwise(T.relu, kink=True)),
    "leaky_relu": _OpCase("leaky_relu", _case_elementwise(T.leaky_relu, kink=True)),
    "tanh": _OpCase("tanh", _case_elementwise(T.tanh)),
    "sigmoid": _OpCase("sigmoid", _case_elementwise(T.sigmoid)),
    "softmax_over_channel": _OpCase("softmax_over_channel", _case_softmax),
    "instance_norm": _OpCase("instance_norm", _case_instance_norm),
    "channel_affine": _OpCase("channel_affine", _case_channel_affine),
    "mean": _OpCase("mean", _case_elementwise(T.mean)),
    "abs": _OpCase("abs", _case_elementwise(T.absolute, kink=True)),
    "square": _OpCase("square", _case_elementwise(T.square)),
    "pad": _OpCase("pad", _case_pad),
    "crop": _OpCase("crop", _case_crop),
    "upsample_nearest": _OpCase("upsample_nearest", _case_upsample),
    "concat_channels": _OpCase("concat_channels", _case_concat),
    "slice_channels": _OpCase("slice_channels", _case_slice),
    "expand_channels": _OpCase("expand_channels", _case_expand),
}


def registered_ops() -> list[str]:
    return list(OP_CASES)


@dataclass
class GradcheckReport:
    op: str
    trials: int
    points: int
    max_rel_error: float
    per_trial: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= DEFAULT_TOLERANCE


def gradcheck(op_name: str, trials: int = 10, seed: int = 42) -> GradcheckReport:
    """Compare analytic and finite-difference gradients for one op.

    Deterministic given seed. Every coordinate of every differentiable
    input is perturbed, so the point count per trial is the total input
    size.
    """
    case = OP_CASES.get(op_name)
    if case is None:
        raise KeyError(f"unknown op {op_name!r}; registered: {', '.join(OP_CASES)}")

    per_trial: list[float] = []
    points = 0
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        arrays, fwd = case.build(rng)
        probe = fwd(*[Tensor(a, dtype=np.float64) for a in arrays])
        proj = Tensor(rng.standard_normal(probe.shape), dtype=np.float64)

        def loss_value(arrs) -> float:
            out = fwd(*[Tensor(a, dtype=np.float64) for a in arrs])
            return float((out.data * proj.data).mean())

        leaves = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
        with Tape() as tape:
            out = fwd(*leaves)
            loss = T.mean(T.mul(out, proj))
            grads = tape.backward(loss)

        worst = 0.0
        for idx, leaf in enumerate(leaves):
            analytic = grads[leaf].data if leaf in grads else np.zeros_like(leaf.data)
            flat = arrays[idx].reshape(-1)
            for coord in range(flat.size):
                orig = flat[coord]
                flat[coord] = orig + EPS
                up = loss_value(arrays)
                flat[coord] = orig - EPS
                down = loss_value(arrays)
                flat[coord] = orig
                numeric = (up - down) / (2 * EPS)
                worst = max(worst, _rel_error(float(analytic.reshape(-1)[coord]), numeric))
                points += 1
        per_trial.append(worst)

    return GradcheckReport(op_name, trials, points, max(per_trial, default=0.0), per_trial)


def gradcheck_all(trials: int = 3, seed: int = 42) -> dict[str, GradcheckReport]:
    return {name: gradcheck(name, trials=trials, seed=seed) for name in OP_CASES}


def gradcheck_scalar(loss_builder, leaves: list[Tensor], n_points: int = 100,
                     seed: int = 42, eps: float = EPS) -> GradcheckReport:
    """Finite-difference check of a scalar-valued computation over leaves.

    `loss_builder` must recompute the loss from the leaves' current data
    buffers; coordinates to perturb are sampled uniformly across all
    leaves. Intended for whole-network checks where perturbing every
    parameter would be too slow.
    """
    rng = np.random.default_rng(seed)
    with Tape() as tape:
        loss = loss_builder()
        grads = tape.backward(loss)

    sizes = np.array([leaf.size for leaf in leaves])
    total = int(sizes.sum())
    picks = rng.integers(0, total, size=n_points)
    offsets = np.cumsum(sizes)

    worst = 0.0
    for pick in picks:
        li = int(np.searchsorted(offsets, pick, side="right"))
        coord = int(pick - (offsets[li - 1] if li > 0 else 0))
        leaf = leaves[li]
        flat = leaf.data.reshape(-1)
        orig = flat[coord]
        flat[coord] = orig + eps
        up = loss_builder().item()
        flat[coord] = orig - eps
        down = loss_builder().item()
        flat[coord] = orig
        numeric = (up - down) / (2 * eps)
        g = grads[leaf].data.reshape(-1)[coord] if leaf in grads else 0.0
        worst = max(worst, _rel_error(float(g), numeric))

    return GradcheckReport("scalar", 1, n_points, worst, [worst])
