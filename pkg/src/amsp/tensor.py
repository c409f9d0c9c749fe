"""Dense rank-4 (NCHW) tensors with reverse-mode gradients.

Everything here is a pure function over immutable values: a :class:`Tensor`
locks its buffer at construction, every op returns a fresh tensor, and each
result records the parents and a vector-Jacobian closure so a
:class:`GradTape` can replay the graph backwards. All math runs in float64;
every op verifies its output is finite and raises :class:`NonFiniteError`
naming itself otherwise.

Convolution routes through :mod:`amsp.backend` (compiled kernels when built,
numpy fallback otherwise); all remaining ops are plain numpy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import backend
from .errors import ContractViolation, NonFiniteError

DTYPE = np.float64


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


class Tensor:
    """Immutable dense array of shape (batch, channels, height, width)."""

    __slots__ = ("data", "_parents", "_vjp", "_op")

    def __init__(self, data):
        arr = np.array(data, dtype=DTYPE, order="C")
        if arr.ndim != 4:
            raise ContractViolation(f"rank: tensors are rank 4, got rank {arr.ndim}")
        if not np.isfinite(arr).all():
            raise ContractViolation("values: tensor data must be finite")
        self.data = _freeze(arr)
        self._parents: tuple = ()
        self._vjp = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.size != 1:
            raise ContractViolation(f"size: item() needs a one-element tensor, got {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r})"


def _result(op: str, data: np.ndarray, parents: tuple, vjp: Callable) -> Tensor:
    """Wrap an op output without copying, after the finiteness check."""
    if not np.isfinite(data).all():
        raise NonFiniteError(op)
    t = Tensor.__new__(Tensor)
    t.data = _freeze(np.ascontiguousarray(data, dtype=DTYPE))
    t._parents = parents
    t._vjp = vjp
    t._op = op
    return t


def _as_param_array(name: str, value, rank: int) -> np.ndarray:
    arr = np.array(value, dtype=DTYPE, order="C")
    if arr.ndim != rank:
        raise ContractViolation(f"{name}: expected rank {rank}, got rank {arr.ndim}")
    if not np.isfinite(arr).all():
        raise ContractViolation(f"{name}: values must be finite")
    return _freeze(arr)


@dataclass(frozen=True)
class ConvParams:
    """Cross-correlation weights plus stride/padding/groups."""

    weights: np.ndarray
    bias: np.ndarray | None = None
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        object.__setattr__(self, "weights", _as_param_array("weights", self.weights, 4))
        if self.bias is not None:
            object.__setattr__(self, "bias", _as_param_array("bias", np.atleast_1d(self.bias), 1))
            if self.bias.shape[0] != self.out_channels:
                raise ContractViolation(
                    f"bias: expected {self.out_channels} entries, got {self.bias.shape[0]}"
                )
        if self.stride < 1:
            raise ContractViolation(f"stride: must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ContractViolation(f"padding: must be >= 0, got {self.padding}")
        if self.groups < 1:
            raise ContractViolation(f"groups: must be >= 1, got {self.groups}")
        if self.out_channels % self.groups:
            raise ContractViolation(
                f"out_channels: {self.out_channels} not divisible by groups={self.groups}"
            )

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels_per_group(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> tuple:
        return self.weights.shape[2], self.weights.shape[3]


@dataclass(frozen=True)
class BNParams:
    """Inference-form batch normalization statistics (per channel)."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        for name in ("gamma", "beta", "running_mean", "running_var"):
            object.__setattr__(self, name, _as_param_array(name, np.atleast_1d(getattr(self, name)), 1))
        c = self.gamma.shape[0]
        for name in ("beta", "running_mean", "running_var"):
            if getattr(self, name).shape[0] != c:
                raise ContractViolation(f"{name}: expected {c} entries to match gamma")
        if np.any(self.running_var < 0):
            raise ContractViolation("running_var: entries must be >= 0")
        if self.eps < 0:
            raise ContractViolation(f"eps: must be >= 0, got {self.eps}")
        if np.any(self.running_var + self.eps <= 0):
            raise ContractViolation("running_var: var + eps must be > 0")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    @staticmethod
    def identity(channels: int, eps: float = 0.0) -> "BNParams":
        """Statistics that make batch_norm a no-op."""
        one = np.ones(channels)
        zero = np.zeros(channels)
        return BNParams(gamma=one, beta=zero, running_mean=zero, running_var=one, eps=eps)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# forward operations
# ---------------------------------------------------------------------------


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """Grouped 2D cross-correlation with zero padding."""
    b, c, h, w = x.shape
    if p.in_channels_per_group * p.groups != c:
        raise ContractViolation(
            f"channels: conv expects {p.in_channels_per_group}x{p.groups}="
            f"{p.in_channels_per_group * p.groups} input channels, got {c}"
        )
    kh, kw = p.kernel_size
    ho = (h + 2 * p.padding - kh) // p.stride + 1
    wo = (w + 2 * p.padding - kw) // p.stride + 1
    if ho < 1:
        raise ContractViolation(f"height: output height {ho} < 1 (h={h}, kernel={kh}, pad={p.padding})")
    if wo < 1:
        raise ContractViolation(f"width: output width {wo} < 1 (w={w}, kernel={kw}, pad={p.padding})")

    if p.padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (p.padding, p.padding), (p.padding, p.padding)))
    else:
        xp = x.data
    hp, wp = xp.shape[2], xp.shape[3]
    out = backend.active().conv_forward(xp, p.weights, p.bias, p.stride, p.groups)

    def vjp(g):
        gxp = backend.active().conv_grad_input(
            np.ascontiguousarray(g), p.weights, p.stride, p.groups, hp, wp
        )
        if p.padding:
            gxp = gxp[:, :, p.padding : p.padding + h, p.padding : p.padding + w]
        return (gxp,)

    return _result("conv2d", out, (x,), vjp)


def batch_norm(x: Tensor, p: BNParams) -> Tensor:
    """Per-channel affine normalization with fixed statistics."""
    c = x.shape[1]
    if p.channels != c:
        raise ContractViolation(f"channels: batch_norm has {p.channels} channels, input has {c}")
    scale = (p.gamma / np.sqrt(p.running_var + p.eps))[None, :, None, None]
    out = (x.data - p.running_mean[None, :, None, None]) * scale + p.beta[None, :, None, None]

    def vjp(g):
        return (g * scale,)

    return _result("batch_norm", out, (x,), vjp)


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise silu or sigmoid."""
    s = _stable_sigmoid(x.data)
    if kind == "silu":
        out = x.data * s
        xd = x.data

        def vjp(g):
            return (g * (s + xd * s * (1.0 - s)),)

    elif kind == "sigmoid":
        out = s

        def vjp(g):
            return (g * s * (1.0 - s),)

    else:
        raise ContractViolation(f"kind: unknown activation {kind!r}")
    return _result(kind, out, (x,), vjp)


def cbs(x: Tensor, conv: ConvParams, bn: BNParams) -> Tensor:
    """conv2d -> batch_norm -> silu, in exactly that order."""
    return activation(batch_norm(conv2d(x, conv), bn), "silu")


def _concat(parts: Sequence[Tensor], axis: int, op: str) -> Tensor:
    if not parts:
        raise ContractViolation(f"parts: {op} needs at least one tensor")
    ref = parts[0].shape
    other = [d for d in range(4) if d != axis]
    for i, t in enumerate(parts[1:], start=1):
        for d in other:
            if t.shape[d] != ref[d]:
                raise ContractViolation(
                    f"dim {d}: part 0 has {ref[d]}, part {i} has {t.shape[d]}"
                )
    sizes = [t.shape[axis] for t in parts]
    out = np.concatenate([t.data for t in parts], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        sl = [slice(None)] * 4
        grads = []
        for k in range(len(sizes)):
            sl[axis] = slice(offsets[k], offsets[k + 1])
            grads.append(g[tuple(sl)])
        return tuple(grads)

    return _result(op, out, tuple(parts), vjp)


def _split(x: Tensor, sizes: Sequence[int], axis: int, op: str) -> list:
    total = x.shape[axis]
    if any(s <= 0 for s in sizes):
        raise ContractViolation(f"sizes: all split sizes must be positive, got {list(sizes)}")
    if sum(sizes) != total:
        raise ContractViolation(f"sizes: sum {sum(sizes)} != dim {axis} extent {total}")
    offsets = np.cumsum([0] + list(sizes))
    pieces = []
    for k in range(len(sizes)):
        sl = [slice(None)] * 4
        sl[axis] = slice(offsets[k], offsets[k + 1])
        piece = x.data[tuple(sl)]

        def vjp(g, _sl=tuple(sl)):
            gx = np.zeros(x.shape, dtype=DTYPE)
            gx[_sl] = g
            return (gx,)

        pieces.append(_result(op, piece, (x,), vjp))
    return pieces


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the channel axis; inverse of split_channels."""
    return _concat(parts, axis=1, op="concat_channels")


def split_channels(x: Tensor, sizes: Sequence[int]) -> list:
    """Split along the channel axis into pieces of the given widths."""
    return _split(x, sizes, axis=1, op="split_channels")


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the height axis (strip-attention fuse step)."""
    return _concat(parts, axis=2, op="concat_rows")


def split_rows(x: Tensor, sizes: Sequence[int]) -> list:
    return _split(x, sizes, axis=2, op="split_rows")


def transpose_hw(x: Tensor) -> Tensor:
    """Swap the two spatial axes."""
    out = np.ascontiguousarray(x.data.transpose(0, 1, 3, 2))

    def vjp(g):
        return (np.ascontiguousarray(g.transpose(0, 1, 3, 2)),)

    return _result("transpose_hw", out, (x,), vjp)


def strip_pools(x: Tensor) -> tuple:
    """Strip summaries: (avg + max) over width and over height.

    Returns ``(v_h, v_w)`` with shapes (b, c, h, 1) and (b, c, 1, w). Max
    gradient routes to the first maximum along the pooled axis.
    """
    b, c, h, w = x.shape
    if h < 1:
        raise ContractViolation(f"height: strip pooling needs h >= 1, got {h}")
    if w < 1:
        raise ContractViolation(f"width: strip pooling needs w >= 1, got {w}")
    xd = x.data

    mean_w = xd.mean(axis=3, keepdims=True)
    arg_w = np.expand_dims(xd.argmax(axis=3), axis=3)
    max_w = np.take_along_axis(xd, arg_w, axis=3)

    def vjp_h(g):
        gx = np.repeat(g / w, w, axis=3)
        bump = np.zeros_like(gx)
        np.put_along_axis(bump, arg_w, g, axis=3)
        return (gx + bump,)

    v_h = _result("strip_pool_h", mean_w + max_w, (x,), vjp_h)

    mean_h = xd.mean(axis=2, keepdims=True)
    arg_h = np.expand_dims(xd.argmax(axis=2), axis=2)
    max_h = np.take_along_axis(xd, arg_h, axis=2)

    def vjp_w(g):
        gx = np.repeat(g / h, h, axis=2)
        bump = np.zeros_like(gx)
        np.put_along_axis(bump, arg_h, g, axis=2)
        return (gx + bump,)

    v_w = _result("strip_pool_w", mean_h + max_h, (x,), vjp_w)
    return v_h, v_w


def outer_hw(col: Tensor, row: Tensor) -> Tensor:
    """Per-channel spatial outer product.

    ``col`` is (b, c, h, 1) and ``row`` is (b, c, w, 1); the result at
    [b, c, i, j] is ``col[b, c, i, 0] * row[b, c, j, 0]``.
    """
    if col.shape[3] != 1 or row.shape[3] != 1:
        raise ContractViolation("width: outer_hw operands must have width 1")
    if col.shape[:2] != row.shape[:2]:
        raise ContractViolation(
            f"batch/channels: {col.shape[:2]} vs {row.shape[:2]} must match"
        )
    a = col.data[:, :, :, 0]
    bvec = row.data[:, :, :, 0]
    out = a[:, :, :, None] * bvec[:, :, None, :]

    def vjp(g):
        gc = np.einsum("bchw,bcw->bch", g, bvec)[:, :, :, None]
        gr = np.einsum("bchw,bch->bcw", g, a)[:, :, :, None]
        return (gc, gr)

    return _result("outer_hw", out, (col, row), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ContractViolation(f"shape: add operands {a.shape} vs {b.shape}")
    return _result("add", a.data + b.data, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    if a.shape != b.shape:
        raise ContractViolation(f"shape: mul operands {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    return _result("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def tsum(x: Tensor) -> Tensor:
    """Sum of all elements as a (1, 1, 1, 1) tensor."""
    out = np.array(x.data.sum(), dtype=DTYPE).reshape(1, 1, 1, 1)

    def vjp(g):
        return (np.full(x.shape, g.reshape(-1)[0], dtype=DTYPE),)

    return _result("tsum", out, (x,), vjp)


# ---------------------------------------------------------------------------
# reverse-mode tape
# ---------------------------------------------------------------------------


class GradTape:
    """The recorded op graph behind a one-element output tensor.

    Replays deterministically; inputs the output does not depend on get a
    zero gradient.
    """

    def __init__(self, output: Tensor):
        if output.size != 1:
            raise ContractViolation(f"size: gradients need a scalar output, got {output.shape}")
        self.output = output
        self._order = self._toposort(output)

    @staticmethod
    def _toposort(root: Tensor) -> list:
        order, seen, stack = [], set(), [(root, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        return order

    def gradient(self, wrt: Tensor) -> np.ndarray:
        """d(output) / d(wrt), same shape as ``wrt``."""
        grads = {id(self.output): np.ones(self.output.shape, dtype=DTYPE)}
        for node in reversed(self._order):
            g = grads.get(id(node))
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
        out = grads.get(id(wrt))
        return np.zeros(wrt.shape, dtype=DTYPE) if out is None else out


def gradients(output: Tensor, wrt: Sequence[Tensor]) -> list:
    tape = GradTape(output)
    return [tape.gradient(x) for x in wrt]


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between tape and central-difference gradients.

    Per element: ``|analytic - numeric| / max(1, |numeric|)``; returns the
    maximum over all elements of ``x``.
    """
    if not (1e-7 <= eps <= 1e-4):
        raise ContractViolation(f"eps: must be in [1e-7, 1e-4], got {eps}")
    analytic = GradTape(f(x)).gradient(x)

    base = x.data
    numeric = np.empty_like(base)
    flat = numeric.reshape(-1)
    for i in range(base.size):
        probe = base.copy().reshape(-1)
        probe[i] = base.reshape(-1)[i] + eps
        up = f(Tensor(probe.reshape(base.shape))).item()
        probe[i] = base.reshape(-1)[i] - eps
        down = f(Tensor(probe.reshape(base.shape))).item()
        flat[i] = (up - down) / (2.0 * eps)

    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(err.max())
