"""Dense float tensors with tape-based reverse-mode autodiff.

Everything numeric in this package flows through the ops defined here.
Image data is laid out N x C x H x W, row-major. Training runs in float32;
float64 is supported purely so the finite-difference gradient checks can
run at full precision.

Gradients are recorded on an explicit :class:`Tape`: an op records a node
onto the innermost live tape whenever any of its inputs requires a
gradient. With no live tape, ops are plain numpy computations (inference
mode).
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when operand shapes do not match an op's contract."""


class NumericError(ArithmeticError):
    """Raised on non-finite values where finiteness is required."""


class TapeError(RuntimeError):
    """Raised on misuse of the autodiff tape (non-scalar loss, reuse)."""


class Tensor:
    """A dense n-dimensional array of floats plus autodiff metadata.

    The shape is fixed at creation. `data` is always a contiguous numpy
    array owned by the tensor; `grad` is populated by `Tape.backward`.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            # numpy float arrays/scalars keep their precision; all else is float32
            if isinstance(data, (np.ndarray, np.generic)) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = np.float32
        arr = np.asarray(data, dtype=dtype, order="C")
        if not arr.flags.c_contiguous:  # asarray(order="C") keeps 0-d shape intact
            arr = np.ascontiguousarray(arr).reshape(arr.shape)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Tensor | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Same buffer, no gradient tracking."""
        return Tensor(self.data, requires_grad=False)

    def to_dtype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def reshape(self, *shape) -> "Tensor":
        """New view with identical element count; not recorded on the tape."""
        out = self.data.reshape(*shape)
        return Tensor(out, requires_grad=False)

    @staticmethod
    def zeros(shape, dtype=np.float32, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of ops; replaying it in reverse drives backprop.

    Use as a context manager. Nested tapes are allowed; ops record onto
    the innermost one. A tape is consumed by its first `backward` call.
    """

    _local = threading.local()

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    @classmethod
    def current(cls) -> "Tape | None":
        stack = getattr(cls._local, "stack", None)
        return stack[-1] if stack else None

    def __enter__(self) -> "Tape":
        stack = getattr(Tape._local, "stack", None)
        if stack is None:
            stack = []
            Tape._local.stack = stack
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        Tape._local.stack.pop()
        return False

    def backward(self, loss: Tensor) -> dict[Tensor, Tensor]:
        """Backpropagate from a scalar loss through every recorded node.

        Returns a map {leaf tensor -> gradient tensor} covering every
        requires_grad tensor that was not produced on this tape. Also
        stores the gradient on each leaf's `.grad`. The tape is consumed.
        """
        if self.consumed:
            raise TapeError("backward called twice on the same tape")
        if loss.shape != ():
            raise TapeError(f"backward expects a scalar loss, got shape {loss.shape}")
        self.consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
        produced = {id(n.out) for n in self.nodes}
        by_id: dict[int, Tensor] = {id(loss): loss}

        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            input_grads = node.backward_fn(g)
            for tensor, gi in zip(node.inputs, input_grads):
                if gi is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                by_id[key] = tensor
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi

        result: dict[Tensor, Tensor] = {}
        for key, g in grads.items():
            tensor = by_id[key]
            if key in produced or not tensor.requires_grad:
                continue
            if g.shape != tensor.shape:
                raise TapeError(
                    f"internal: gradient shape {g.shape} != leaf shape {tensor.shape}"
                )
            gt = Tensor(g)
            tensor.grad = gt
            result[tensor] = gt
        self.nodes.clear()
        return result


def backward(loss: Tensor) -> dict[Tensor, Tensor]:
    """Backward through the innermost live tape (see `Tape.backward`)."""
    tape = Tape.current()
    if tape is None:
        raise TapeError("backward called with no live tape")
    return tape.backward(loss)


# ---------------------------------------------------------------------------
# op plumbing

_finite_checks = False


class finite_checks:
    """Context manager: validate op inputs are finite while active."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._prev = None

    def __enter__(self):
        global _finite_checks
        self._prev = _finite_checks
        _finite_checks = self.enabled
        return self

    def __exit__(self, exc_type, exc, tb):
        global _finite_checks
        _finite_checks = self._prev
        return False


def _check_finite(op: str, *arrays: np.ndarray) -> None:
    if not _finite_checks:
        return
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"{op}: non-finite input")


def _record(out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    tape = Tape.current()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append(_Node(out, list(inputs), backward_fn))
    return out


def _as_pair(v, name: str) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    v = tuple(v)
    if len(v) != 2:
        raise ShapeError(f"{name} must be an int or a pair, got {v!r}")
    return (int(v[0]), int(v[1]))


def _norm_padding(padding) -> tuple[tuple[int, int], tuple[int, int]]:
    """Accepts int, (ph, pw), or ((pt, pb), (pl, pr))."""
    if isinstance(padding, int):
        return ((padding, padding), (padding, padding))
    padding = tuple(padding)
    if len(padding) != 2:
        raise ShapeError(f"padding must have two entries, got {padding!r}")
    if all(isinstance(p, int) for p in padding):
        ph, pw = padding
        return ((ph, ph), (pw, pw))
    return (_as_pair(padding[0], "padding[0]"), _as_pair(padding[1], "padding[1]"))


def _binary_operands(op: str, a, b):
    """Resolve elementwise operands: two same-shape tensors, or tensor+scalar."""
    a_t = isinstance(a, Tensor)
    b_t = isinstance(b, Tensor)
    if not a_t and not b_t:
        raise ShapeError(f"{op}: at least one operand must be a Tensor")
    if a_t and b_t:
        if a.shape != b.shape:
            raise ShapeError(f"{op}: shape {a.shape} vs {b.shape}")
        if a.dtype != b.dtype:
            raise ShapeError(f"{op}: dtype {a.dtype} vs {b.dtype}")
        return a, b, a.data, b.data
    if a_t:
        return a, None, a.data, a.dtype.type(b)
    return None, b, b.dtype.type(a), b.data


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b) -> Tensor:
    at, bt, ad, bd = _binary_operands("add", a, b)
    _check_finite("add", ad, bd)
    out = Tensor(ad + bd)

    def bwd(g):
        return (g if at is not None else None, g if bt is not None else None)

    return _record(out, [t for t in (at, bt) if t is not None], lambda g: _route2(at, bt, bwd(g)))


def sub(a, b) -> Tensor:
    at, bt, ad, bd = _binary_operands("sub", a, b)
    _check_finite("sub", ad, bd)
    out = Tensor(ad - bd)

    def bwd(g):
        return (g if at is not None else None, -g if bt is not None else None)

    return _record(out, [t for t in (at, bt) if t is not None], lambda g: _route2(at, bt, bwd(g)))


def mul(a, b) -> Tensor:
    at, bt, ad, bd = _binary_operands("mul", a, b)
    _check_finite("mul", ad, bd)
    out = Tensor(ad * bd)

    def bwd(g):
        return (g * bd if at is not None else None, g * ad if bt is not None else None)

    return _record(out, [t for t in (at, bt) if t is not None], lambda g: _route2(at, bt, bwd(g)))


def _route2(at, bt, grads):
    """Align a (ga, gb) pair with the compacted input list."""
    ga, gb = grads
    out = []
    if at is not None:
        out.append(ga)
    if bt is not None:
        out.append(gb)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if not isinstance(a, Tensor) or not isinstance(b, Tensor):
        raise ShapeError("matmul: both operands must be Tensors")
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shape {a.shape} vs {b.shape}")
    _check_finite("matmul", a.data, b.data)
    ad, bd = a.data, b.data
    out = Tensor(ad @ bd)

    def bwd(g):
        return [g @ bd.T, ad.T @ g]

    return _record(out, [a, b], bwd)


def relu(x: Tensor) -> Tensor:
    _check_finite("relu", x.data)
    xd = x.data
    out = Tensor(np.maximum(xd, 0))

    def bwd(g):
        return [g * (xd > 0)]

    return _record(out, [x], bwd)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    _check_finite("leaky_relu", x.data)
    xd = x.data
    out = Tensor(np.where(xd > 0, xd, xd.dtype.type(slope) * xd))

    def bwd(g):
        return [g * np.where(xd > 0, xd.dtype.type(1), xd.dtype.type(slope))]

    return _record(out, [x], bwd)


def tanh(x: Tensor) -> Tensor:
    _check_finite("tanh", x.data)
    y = np.tanh(x.data)
    out = Tensor(y)

    def bwd(g):
        return [g * (1 - y * y)]

    return _record(out, [x], bwd)


def sigmoid(x: Tensor) -> Tensor:
    _check_finite("sigmoid", x.data)
    xd = x.data
    # split by sign for overflow-free exp
    y = np.where(xd >= 0, 1 / (1 + np.exp(-np.abs(xd))), np.exp(-np.abs(xd)) / (1 + np.exp(-np.abs(xd))))
    y = y.astype(xd.dtype, copy=False)
    out = Tensor(y)

    def bwd(g):
        return [g * y * (1 - y)]

    return _record(out, [x], bwd)


def square(x: Tensor) -> Tensor:
    _check_finite("square", x.data)
    xd = x.data
    out = Tensor(xd * xd)

    def bwd(g):
        return [g * 2 * xd]

    return _record(out, [x], bwd)


def absolute(x: Tensor) -> Tensor:
    _check_finite("abs", x.data)
    xd = x.data
    out = Tensor(np.abs(xd))

    def bwd(g):
        return [g * np.sign(xd)]

    return _record(out, [x], bwd)


def mean(x: Tensor) -> Tensor:
    _check_finite("mean", x.data)
    out = Tensor(np.asarray(x.data.mean(), dtype=x.dtype))
    n = x.size
    shape = x.shape

    def bwd(g):
        return [np.full(shape, g / n, dtype=g.dtype)]

    return _record(out, [x], bwd)


def softmax_over_channel(x: Tensor) -> Tensor:
    """Softmax along axis 1 of an N x C x H x W tensor."""
    if x.ndim != 4:
        raise ShapeError(f"softmax_over_channel: expects N x C x H x W, got {x.shape}")
    _check_finite("softmax_over_channel", x.data)
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor(y)

    def bwd(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return [y * (g - dot)]

    return _record(out, [x], bwd)


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-(sample, channel) standardization over the spatial axes (no affine)."""
    if x.ndim != 4:
        raise ShapeError(f"instance_norm: expects N x C x H x W, got {x.shape}")
    _check_finite("instance_norm", x.data)
    xd = x.data
    mu = xd.mean(axis=(2, 3), keepdims=True)
    var = xd.var(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + xd.dtype.type(eps))
    y = (xd - mu) * inv_std
    out = Tensor(y.astype(xd.dtype, copy=False))

    def bwd(g):
        # dL/dx = inv_std * (g - mean(g) - y * mean(g*y)), means over H,W
        gm = g.mean(axis=(2, 3), keepdims=True)
        gym = (g * y).mean(axis=(2, 3), keepdims=True)
        return [inv_std * (g - gm - y * gym)]

    return _record(out, [x], bwd)


def channel_affine(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """y[n,c] = x[n,c] * gain[c] + bias[c] for N x C x H x W input."""
    if x.ndim != 4:
        raise ShapeError(f"channel_affine: expects N x C x H x W, got {x.shape}")
    c = x.shape[1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeError(
            f"channel_affine: gain {gain.shape} / bias {bias.shape} vs {c} channels"
        )
    _check_finite("channel_affine", x.data, gain.data, bias.data)
    xd = x.data
    gd = gain.data.reshape(1, c, 1, 1)
    out = Tensor(xd * gd + bias.data.reshape(1, c, 1, 1))

    def bwd(g):
        return [g * gd, (g * xd).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))]

    return _record(out, [x, gain, bias], bwd)


# ---------------------------------------------------------------------------
# shape ops


def pad(x: Tensor, padding) -> Tensor:
    """Zero-pad the spatial axes of an N x C x H x W tensor."""
    if x.ndim != 4:
        raise ShapeError(f"pad: expects N x C x H x W, got {x.shape}")
    (pt, pb), (pl, pr) = _norm_padding(padding)
    _check_finite("pad", x.data)
    out = Tensor(np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr))))
    h, w = x.shape[2], x.shape[3]

    def bwd(g):
        return [g[:, :, pt:pt + h, pl:pl + w]]

    return _record(out, [x], bwd)


def crop(x: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"crop: expects N x C x H x W, got {x.shape}")
    if top < 0 or left < 0 or top + height > x.shape[2] or left + width > x.shape[3]:
        raise ShapeError(
            f"crop: window {top},{left},{height},{width} outside input {x.shape}"
        )
    _check_finite("crop", x.data)
    out = Tensor(x.data[:, :, top:top + height, left:left + width].copy())
    shape = x.shape

    def bwd(g):
        gx = np.zeros(shape, dtype=g.dtype)
        gx[:, :, top:top + height, left:left + width] = g
        return [gx]

    return _record(out, [x], bwd)


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"upsample_nearest: expects N x C x H x W, got {x.shape}")
    if factor < 1:
        raise ShapeError(f"upsample_nearest: factor must be >= 1, got {factor}")
    _check_finite("upsample_nearest", x.data)
    out = Tensor(np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3))
    n, c, h, w = x.shape

    def bwd(g):
        return [g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5))]

    return _record(out, [x], bwd)


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    if len(xs) == 0:
        raise ShapeError("concat_channels: no inputs")
    base = xs[0]
    for x in xs[1:]:
        if x.ndim != 4 or base.ndim != 4:
            raise ShapeError("concat_channels: expects N x C x H x W inputs")
        if (x.shape[0], x.shape[2], x.shape[3]) != (base.shape[0], base.shape[2], base.shape[3]):
            raise ShapeError(f"concat_channels: shape {base.shape} vs {x.shape}")
    _check_finite("concat_channels", *[x.data for x in xs])
    out = Tensor(np.concatenate([x.data for x in xs], axis=1))
    sizes = [x.shape[1] for x in xs]

    def bwd(g):
        grads = []
        start = 0
        for c in sizes:
            grads.append(g[:, start:start + c])
            start += c
        return grads

    return _record(out, list(xs), bwd)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"slice_channels: expects N x C x H x W, got {x.shape}")
    if not (0 <= start < stop <= x.shape[1]):
        raise ShapeError(f"slice_channels: [{start}:{stop}] outside {x.shape[1]} channels")
    _check_finite("slice_channels", x.data)
    out = Tensor(x.data[:, start:stop].copy())
    shape = x.shape

    def bwd(g):
        gx = np.zeros(shape, dtype=g.dtype)
        gx[:, start:stop] = g
        return [gx]

    return _record(out, [x], bwd)


def expand_channels(x: Tensor, channels: int) -> Tensor:
    """Tile a single-channel N x 1 x H x W map to `channels` channels."""
    if x.ndim != 4 or x.shape[1] != 1:
        raise ShapeError(f"expand_channels: expects N x 1 x H x W, got {x.shape}")
    _check_finite("expand_channels", x.data)
    out = Tensor(np.repeat(x.data, channels, axis=1))

    def bwd(g):
        return [g.sum(axis=1, keepdims=True)]

    return _record(out, [x], bwd)


# ---------------------------------------------------------------------------
# convolutions (im2col + BLAS matmul)


def _im2col(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int):
    """Lower padded N x C x H x W input to (N, C*kh*kw, Ho*Wo) columns."""
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    n, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(cols: np.ndarray, n: int, c: int, kh: int, kw: int,
            hp: int, wp: int, ho: int, wo: int, sh: int, sw: int) -> np.ndarray:
    """Adjoint of `_im2col`: scatter-add columns back onto the padded canvas."""
    blocks = cols.reshape(n, c, kh, kw, ho, wo)
    canvas = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            canvas[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += blocks[:, :, i, j]
    return canvas


def _conv_geometry(op, x_shape, w_shape, stride, padding):
    if len(x_shape) != 4:
        raise ShapeError(f"{op}: input must be N x C x H x W, got {x_shape}")
    if len(w_shape) != 4:
        raise ShapeError(f"{op}: kernel must be O x C x kH x kW, got {w_shape}")
    sh, sw = _as_pair(stride, "stride")
    (pt, pb), (pl, pr) = _norm_padding(padding)
    if sh < 1 or sw < 1:
        raise ShapeError(f"{op}: stride must be >= 1, got {(sh, sw)}")
    return sh, sw, pt, pb, pl, pr


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None,
           stride=1, padding=0) -> Tensor:
    """2-D cross-correlation: x (N,C,H,W) with kernels w (O,C,kH,kW)."""
    sh, sw, pt, pb, pl, pr = _conv_geometry("conv2d", x.shape, w.shape, stride, padding)
    n, c, h, wi = x.shape
    o, cw, kh, kw = w.shape
    if cw != c:
        raise ShapeError(f"conv2d: input shape {x.shape} vs kernel shape {w.shape}")
    hp, wp = h + pt + pb, wi + pl + pr
    if hp < kh or wp < kw:
        raise ShapeError(f"conv2d: kernel {w.shape} larger than padded input {(n, c, hp, wp)}")
    if bias is not None and bias.shape != (o,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} vs {o} output channels")
    _check_finite("conv2d", x.data, w.data, *([bias.data] if bias is not None else []))

    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if (pt or pb or pl or pr) else x.data
    cols, ho, wo = _im2col(xp, kh, kw, sh, sw)
    wmat = w.data.reshape(o, c * kh * kw)
    out_mat = np.matmul(wmat, cols)  # (N, O, Ho*Wo)
    out_arr = out_mat.reshape(n, o, ho, wo)
    if bias is not None:
        out_arr = out_arr + bias.data.reshape(1, o, 1, 1)
    out = Tensor(out_arr)

    def bwd(g):
        gmat = g.reshape(n, o, ho * wo)
        grad_w = None
        if w.requires_grad:
            grad_w = np.matmul(gmat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(o, c, kh, kw)
        gx = None
        if x.requires_grad:
            cols_g = np.matmul(wmat.T, gmat)
            gxp = _col2im(cols_g, n, c, kh, kw, hp, wp, ho, wo, sh, sw)
            gx = np.ascontiguousarray(gxp[:, :, pt:pt + h, pl:pl + wi])
        grads = [gx, grad_w]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)) if bias.requires_grad else None)
        return grads

    inputs = [x, w] + ([bias] if bias is not None else [])
    return _record(out, inputs, bwd)


def conv_transpose2d(y: Tensor, w: Tensor, bias: Tensor | None = None,
                     stride=1, padding=0, output_padding=0) -> Tensor:
    """Exact adjoint of `conv2d` with the same kernel, stride, and padding.

    y has O channels (the conv's output side); the result has C channels
    with spatial size (h-1)*stride + k - pad_total + output_padding per
    axis. output_padding (< stride) disambiguates sizes the forward
    conv's floor division collapsed.
    """
    sh, sw, pt, pb, pl, pr = _conv_geometry("conv_transpose2d", y.shape, w.shape, stride, padding)
    oph, opw = _as_pair(output_padding, "output_padding")
    if not (0 <= oph < max(sh, 1) and 0 <= opw < max(sw, 1)):
        raise ShapeError(
            f"conv_transpose2d: output_padding {(oph, opw)} must be < stride {(sh, sw)}"
        )
    n, oy, h, wi = y.shape
    o, c, kh, kw = w.shape
    if oy != o:
        raise ShapeError(f"conv_transpose2d: input shape {y.shape} vs kernel shape {w.shape}")
    hp = (h - 1) * sh + kh + oph
    wp = (wi - 1) * sw + kw + opw
    oh, ow = hp - pt - pb, wp - pl - pr
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"conv_transpose2d: padding {((pt, pb), (pl, pr))} leaves no output for input {y.shape}"
        )
    if bias is not None and bias.shape != (c,):
        raise ShapeError(f"conv_transpose2d: bias shape {bias.shape} vs {c} output channels")
    _check_finite("conv_transpose2d", y.data, w.data, *([bias.data] if bias is not None else []))

    wmat = w.data.reshape(o, c * kh * kw)
    ymat = y.data.reshape(n, o, h * wi)
    cols = np.matmul(wmat.T, ymat)  # (N, C*kh*kw, h*wi)
    canvas = _col2im(cols, n, c, kh, kw, hp, wp, h, wi, sh, sw)
    out_arr = canvas[:, :, pt:pt + oh, pl:pl + ow]
    if bias is not None:
        out_arr = out_arr + bias.data.reshape(1, c, 1, 1)
    out = Tensor(np.ascontiguousarray(out_arr))

    def bwd(g):
        # grad wrt y is a forward conv of g with the same kernel
        gp = np.pad(g, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if (pt or pb or pl or pr) else g
        gcols, _, _ = _im2col(gp, kh, kw, sh, sw)
        grad_y = np.matmul(wmat, gcols).reshape(n, o, h, wi) if y.requires_grad else None
        grad_w = None
        if w.requires_grad:
            grad_w = np.matmul(ymat, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(o, c, kh, kw)
        grads = [grad_y, grad_w]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)) if bias.requires_grad else None)
        return grads

    inputs = [y, w] + ([bias] if bias is not None else [])
    return _record(out, inputs, bwd)
