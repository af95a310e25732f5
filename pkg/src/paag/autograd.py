"""Define-by-run reverse-mode autodiff over float64 numpy arrays.

Every operation records its inputs and a backward rule. Backward rules
are written in terms of tensor operations themselves, so a gradient can
be kept in the graph (``create_graph=True``) and differentiated again.
That second level is what the critic's gradient penalty needs: the
penalty is a function of a gradient norm, and its own gradient must
reach the critic parameters.

Broadcasting is deliberately narrow: two operands must have equal
shapes, or one must be a scalar, or the shape of one must be a trailing
suffix of the other's (the bias-add pattern). Anything else raises
``DimensionError`` instead of silently broadcasting.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from paag.errors import ContractError, DimensionError, DomainError, MaskError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (decoding, evaluation)."""
    global _grad_enabled
    saved = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = saved


def grad_recording_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A float64 array plus the bookkeeping for reverse-mode autodiff.

    ``grad`` is a plain numpy accumulator, populated by ``backward``.
    ``_parents`` and ``_vjp`` describe how this value was computed; leaf
    tensors have neither.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._vjp: Optional[Callable] = None
        self._op: Optional[str] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, key):
        if isinstance(key, int):
            if key < 0:
                key += self.shape[0]
            picked = narrow(self, 0, key, 1)
            return reshape(picked, self.shape[1:])
        if isinstance(key, slice):
            start, stop, step = key.indices(self.shape[0])
            if step != 1:
                raise ContractError("only contiguous slices are supported")
            return narrow(self, 0, start, stop - start)
        raise ContractError(f"unsupported index {key!r}")

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return sum_(self, axis)

    def mean(self, axis: Optional[int] = None) -> "Tensor":
        return mean_(self, axis)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self._op!r})"


def _wrap(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def _node(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable, op: str) -> Tensor:
    """Build an op output, recording the edge only while grads are on."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
        out._op = op
    return out


# -- broadcasting helpers ----------------------------------------------


def _check_broadcast(sa: tuple, sb: tuple, op: str) -> None:
    if sa == sb or sa == () or sb == ():
        return
    small, big = (sa, sb) if len(sa) < len(sb) else (sb, sa)
    if len(small) < len(big) and big[len(big) - len(small):] == small:
        return
    raise DimensionError(f"{op}: shapes {sa} and {sb} do not align")


def _reduce_to(g: Tensor, shape: tuple) -> Tensor:
    """Sum a broadcast gradient back down to the original operand shape."""
    while g.ndim > len(shape):
        g = sum_(g, axis=0)
    if g.shape != shape:
        raise DimensionError(f"gradient shape {g.shape} cannot reduce to {shape}")
    return g


# -- arithmetic ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape, "add")

    def vjp(g: Tensor):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _node(a.data + b.data, (a, b), vjp, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape, "sub")

    def vjp(g: Tensor):
        return _reduce_to(g, a.shape), _reduce_to(neg(g), b.shape)

    return _node(a.data - b.data, (a, b), vjp, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape, "mul")

    def vjp(g: Tensor):
        return _reduce_to(mul(g, b), a.shape), _reduce_to(mul(g, a), b.shape)

    return _node(a.data * b.data, (a, b), vjp, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape, "div")

    def vjp(g: Tensor):
        ga = _reduce_to(div(g, b), a.shape)
        gb = _reduce_to(neg(div(mul(g, a), mul(b, b))), b.shape)
        return ga, gb

    return _node(a.data / b.data, (a, b), vjp, "div")


def neg(a: Tensor) -> Tensor:
    def vjp(g: Tensor):
        return (neg(g),)

    return _node(-a.data, (a,), vjp, "neg")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} must be 1d or 2d")
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    an, bn = a.ndim, b.ndim

    def vjp(g: Tensor):
        if an == 2 and bn == 2:
            return matmul(g, transpose(b)), matmul(transpose(a), g)
        if an == 1 and bn == 2:
            ga = matmul(b, g)
            gb = matmul(reshape(a, (a.shape[0], 1)), reshape(g, (1, g.shape[0])))
            return ga, gb
        if an == 2 and bn == 1:
            ga = matmul(reshape(g, (g.shape[0], 1)), reshape(b, (1, b.shape[0])))
            gb = matmul(transpose(a), g)
            return ga, gb
        return mul(g, b), mul(g, a)

    return _node(a.data @ b.data, (a, b), vjp, "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise DimensionError(f"transpose: expected 2d, got shape {a.shape}")

    def vjp(g: Tensor):
        return (transpose(g),)

    return _node(a.data.T.copy(), (a,), vjp, "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    orig = a.shape

    def vjp(g: Tensor):
        return (reshape(g, orig),)

    return _node(a.data.reshape(shape), (a,), vjp, "reshape")


# -- pointwise nonlinearities ------------------------------------------


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def vjp(g: Tensor):
        return (mul(g, sub(Tensor(1.0), mul(out, out))),)

    out = _node(out_data, (a,), vjp, "tanh")
    return out


def sigmoid(a: Tensor) -> Tensor:
    # Split on sign so neither exp overflows.
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def vjp(g: Tensor):
        return (mul(g, mul(out, sub(Tensor(1.0), out))),)

    out = _node(out_data, (a,), vjp, "sigmoid")
    return out


def relu(a: Tensor) -> Tensor:
    keep = Tensor((a.data > 0).astype(np.float64))

    def vjp(g: Tensor):
        return (mul(g, keep),)

    return _node(np.maximum(a.data, 0.0), (a,), vjp, "relu")


def exp(a: Tensor) -> Tensor:
    def vjp(g: Tensor):
        return (mul(g, out),)

    out = _node(np.exp(a.data), (a,), vjp, "exp")
    return out


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise DomainError("log: input must be strictly positive")

    def vjp(g: Tensor):
        return (div(g, a),)

    return _node(np.log(a.data), (a,), vjp, "log")


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0.0):
        raise DomainError("sqrt: input must be non-negative")

    def vjp(g: Tensor):
        return (div(mul(g, Tensor(0.5)), out),)

    out = _node(np.sqrt(a.data), (a,), vjp, "sqrt")
    return out


# -- reductions ---------------------------------------------------------


def sum_(a: Tensor, axis: Optional[int] = None) -> Tensor:
    if axis is None:
        shape = a.shape

        def vjp(g: Tensor):
            return (mul(g, Tensor(np.ones(shape))),)

        return _node(np.sum(a.data), (a,), vjp, "sum")
    if axis < 0:
        axis += a.ndim
    n = a.shape[axis]

    def vjp_axis(g: Tensor):
        return (expand_along(g, axis, n),)

    return _node(np.sum(a.data, axis=axis), (a,), vjp_axis, "sum")


def mean_(a: Tensor, axis: Optional[int] = None) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    if n == 0:
        raise ContractError("mean over an empty axis")
    return mul(sum_(a, axis), Tensor(1.0 / n))


def expand_along(a: Tensor, axis: int, n: int) -> Tensor:
    """Insert an axis of length n by repetition; adjoint of sum over it."""

    def vjp(g: Tensor):
        return (sum_(g, axis=axis),)

    data = np.repeat(np.expand_dims(a.data, axis), n, axis=axis)
    return _node(data, (a,), vjp, "expand")


def max_(a: Tensor, axis: Optional[int] = None, mask: Optional[np.ndarray] = None) -> Tensor:
    """Max reduction with subgradient routed to the first maximiser.

    ``mask`` (same shape, True = participates) drops positions from the
    reduction entirely. numpy's argmax takes the first maximum, which
    gives the documented tie rule: the lower index wins.
    """
    data = a.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != data.shape:
            raise MaskError(f"mask shape {mask.shape} does not match data {data.shape}")
        if axis is None and not mask.any():
            raise MaskError("max: mask excludes every position")
        data = np.where(mask, data, -np.inf)
    if axis is None:
        pick = np.zeros_like(data)
        pick.flat[np.argmax(data)] = 1.0
        picked = Tensor(pick)

        def vjp(g: Tensor):
            return (mul(g, picked),)

        return _node(np.max(data), (a,), vjp, "max")
    if axis < 0:
        axis += a.ndim
    if mask is not None and not np.all(np.any(np.where(mask, True, False), axis=axis)):
        raise MaskError("max: mask excludes every position along the axis")
    idx = np.argmax(data, axis=axis)
    pick = np.zeros_like(data)
    np.put_along_axis(pick, np.expand_dims(idx, axis), 1.0, axis=axis)
    picked = Tensor(pick)
    n = a.shape[axis]

    def vjp_axis(g: Tensor):
        return (mul(expand_along(g, axis, n), picked),)

    return _node(np.max(data, axis=axis), (a,), vjp_axis, "max")


# -- softmax ------------------------------------------------------------


def softmax(a: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Numerically stable softmax over a vector, with optional mask.

    Masked-out positions get probability exactly zero and pass no
    gradient. A mask that excludes everything is an error rather than a
    silent NaN.
    """
    if a.ndim != 1:
        raise DimensionError(f"softmax: expected a vector, got shape {a.shape}")
    x = a.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise MaskError(f"mask shape {mask.shape} does not match data {x.shape}")
        if not mask.any():
            raise MaskError("softmax: mask excludes every position")
    else:
        mask = np.ones(x.shape, dtype=bool)
        if x.size == 0:
            raise MaskError("softmax: empty input")
    shifted = np.where(mask, x - np.max(x[mask]), -np.inf)
    e = np.where(mask, np.exp(shifted), 0.0)
    out_data = e / np.sum(e)

    def vjp(g: Tensor):
        inner = sum_(mul(g, out))
        return (mul(out, sub(g, inner)),)

    out = _node(out_data, (a,), vjp, "softmax")
    return out


# -- structural ops -----------------------------------------------------


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    if axis < 0:
        axis += a.ndim
    if not (0 <= start and start + length <= a.shape[axis]):
        raise DimensionError(
            f"narrow: window [{start}, {start + length}) outside axis of size {a.shape[axis]}")
    key = (slice(None),) * axis + (slice(start, start + length),)
    total = a.shape[axis]

    def vjp(g: Tensor):
        return (_widen(g, axis, start, total),)

    return _node(a.data[key].copy(), (a,), vjp, "narrow")


def _widen(a: Tensor, axis: int, start: int, total: int) -> Tensor:
    """Embed a block back into zeros along one axis; adjoint of narrow."""
    length = a.shape[axis]

    def vjp(g: Tensor):
        return (narrow(g, axis, start, length),)

    shape = list(a.shape)
    shape[axis] = total
    data = np.zeros(shape)
    key = (slice(None),) * axis + (slice(start, start + length),)
    data[key] = a.data
    return _node(data, (a,), vjp, "widen")


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_wrap(p) for p in parts]
    if not parts:
        raise ContractError("concat of an empty list")
    if axis < 0:
        axis += parts[0].ndim
    sizes = [p.shape[axis] for p in parts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def vjp(g: Tensor):
        return tuple(narrow(g, axis, int(offsets[i]), sizes[i]) for i in range(len(parts)))

    data = np.concatenate([p.data for p in parts], axis=axis)
    return _node(data, tuple(parts), vjp, "concat")


def stack(parts: Sequence[Tensor]) -> Tensor:
    """Stack equal-shape tensors along a new leading axis."""
    parts = [_wrap(p) for p in parts]
    return concat([reshape(p, (1,) + p.shape) for p in parts], axis=0)


def take(a: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows (or elements of a vector) by integer index."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= a.shape[0]):
        raise ContractError(
            f"take: index outside [0, {a.shape[0]}) in {ids.tolist()!r}")
    rows = a.shape[0]

    def vjp(g: Tensor):
        return (scatter_add(g, ids, rows),)

    return _node(a.data[ids], (a,), vjp, "take")


def scatter_add(values: Tensor, ids: np.ndarray, size: int) -> Tensor:
    """Sum values into a zero tensor of leading size ``size``; adjoint of take.

    Repeated indices accumulate.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= size):
        raise ContractError(f"scatter_add: index outside [0, {size})")
    tail = values.shape[ids.ndim:]

    def vjp(g: Tensor):
        return (take(g, ids),)

    data = np.zeros((size,) + tail)
    np.add.at(data, ids, values.data)
    return _node(data, (values,), vjp, "scatter_add")


def outer_add(a: Tensor, b: Tensor) -> Tensor:
    """All-pairs sum of two stacks of vectors: out[i, j] = a[i] + b[j]."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"outer_add: shapes {a.shape} and {b.shape} do not align")

    def vjp(g: Tensor):
        return sum_(g, axis=1), sum_(g, axis=0)

    data = a.data[:, None, :] + b.data[None, :, :]
    return _node(data, (a, b), vjp, "outer_add")


# -- reverse-mode driver ------------------------------------------------


def _topo(root: Tensor) -> list:
    """Ancestors of root in post-order (every node after its inputs)."""
    order: list = []
    seen: set = set()
    stack: list = [(root, False)]
    while stack:
        node, ready = stack.pop()
        if ready:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def _pullback(output: Tensor, create_graph: bool) -> tuple:
    """Map id(node) -> gradient Tensor for every ancestor that gets one."""
    if output.ndim != 0:
        raise ContractError(f"expected a scalar output, got shape {output.shape}")
    order = _topo(output)
    grads: dict = {id(output): Tensor(1.0)}
    ctx = contextlib.nullcontext() if create_graph else no_grad()
    with ctx:
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None or node._vjp is None:
                continue
            parent_grads = node._vjp(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else add(prev, pg)
    return grads, order


def grad(output: Tensor, wrt: Sequence[Tensor], create_graph: bool = False) -> list:
    """Gradients of a scalar output with respect to ``wrt`` tensors.

    With ``create_graph=True`` the returned tensors stay in the graph
    and can be differentiated again. A ``wrt`` entry the output does not
    depend on is a contract violation, not a silent zero.
    """
    grads, _ = _pullback(output, create_graph)
    result = []
    for w in wrt:
        g = grads.get(id(w))
        if g is None:
            raise ContractError("grad: output does not depend on a requested tensor")
        result.append(g)
    return result


def backward(output: Tensor, params: Optional[Iterable[Tensor]] = None) -> None:
    """Accumulate gradients of a scalar into ``.grad`` accumulators.

    Every requires-grad ancestor receives a finite ``.grad``. Calling
    twice without zeroing accumulates. Params listed explicitly but not
    reachable from the output get zeros, so optimizers can step a fixed
    parameter list regardless of which losses were active.
    """
    grads, order = _pullback(output, create_graph=False)
    for node in order:
        if not node.requires_grad:
            continue
        g = grads.get(id(node))
        g_data = g.data if g is not None else np.zeros(node.shape)
        node.grad = g_data.copy() if node.grad is None else node.grad + g_data
    if params is not None:
        for p in params:
            if p.requires_grad and p.grad is None:
                p.grad = np.zeros(p.shape)


def grad_norm_of(output: Tensor, wrt: Tensor) -> Tensor:
    """L2 norm of d(output)/d(wrt), kept differentiable.

    The result participates in the graph, so a loss built from it (the
    gradient penalty) trains whatever produced ``output``.
    """
    (g,) = grad(output, [wrt], create_graph=True)
    return sqrt(sum_(mul(g, g)))
