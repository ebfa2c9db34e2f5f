"""Dense/sparse tensor arithmetic with reverse-mode differentiation and AdamW.

Everything is 64-bit floats. The autodiff graph is built implicitly: each
:class:`Tensor` records its parents and a backward closure, and
``Tensor.backward`` walks the graph once in reverse topological order, so
identical graphs produce bit-identical gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

LOG_CLAMP = 1e-12


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """An operation precondition was violated."""


# ---------------------------------------------------------------------------
# sparse matrices


class Sparse:
    """Immutable COO sparse matrix with entries in canonical (row, col) order."""

    __slots__ = ("n_rows", "n_cols", "rows", "cols", "vals", "_csr", "_normalized")

    def __init__(self, n_rows, n_cols, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise ShapeError("rows/cols/vals must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows:
                raise ContractError("row index out of range")
            if cols.min() < 0 or cols.max() >= n_cols:
                raise ContractError("col index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size > 1:
            same = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if same.any():
                raise ContractError("duplicate sparse entries")
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.rows = rows
        self.cols = cols
        self.vals = vals
        self._csr = None
        self._normalized = None

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return self.rows.size

    def csr(self):
        if self._csr is None:
            self._csr = sp.csr_matrix(
                (self.vals, (self.rows, self.cols)), shape=self.shape
            )
        return self._csr

    def densify(self):
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.vals
        return out

    def row_sums(self):
        out = np.zeros(self.n_rows)
        np.add.at(out, self.rows, self.vals)
        return out

    def transpose(self):
        return Sparse(self.n_cols, self.n_rows, self.cols, self.rows, self.vals)

    def __eq__(self, other):
        if not isinstance(other, Sparse):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols)
                and np.array_equal(self.vals, other.vals))

    def is_symmetric(self):
        if self.shape[0] != self.shape[1]:
            return False
        t = self.transpose()
        return (
            np.array_equal(self.rows, t.rows)
            and np.array_equal(self.cols, t.cols)
            and np.array_equal(self.vals, t.vals)
        )


def sparse_from_edges(n, src, dst, vals=None):
    """Build a Sparse matrix from possibly unsorted index arrays."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if vals is None:
        vals = np.ones(src.size)
    return Sparse(n, n, src, dst, vals)


# ---------------------------------------------------------------------------
# autodiff tensors


class Tensor:
    """Node in the implicit tape: a float64 array plus backward bookkeeping."""

    __slots__ = ("data", "grad", "parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g):
        self.grad = g if self.grad is None else self.grad + g

    def backward(self):
        if self.data.shape != ():
            raise ContractError("backward requires a scalar loss")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones(())
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def item(self):
        return float(self.data)

    # operator sugar; `other` may be a Tensor, ndarray constant, or scalar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(constant(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def constant(value):
    return Tensor(np.asarray(value, dtype=np.float64))


def _as_const_array(x):
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(g, shape):
    """Sum gradient g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, fwd, bwd_a, bwd_b):
    try:
        return _binary_unchecked(a, b, fwd, bwd_a, bwd_b)
    except ValueError as exc:
        sa = a.data.shape if isinstance(a, Tensor) else np.shape(a)
        sb = b.data.shape if isinstance(b, Tensor) else np.shape(b)
        raise ShapeError(f"{fwd.__name__}: incompatible shapes "
                         f"{sa} and {sb}") from exc


def _binary_unchecked(a, b, fwd, bwd_a, bwd_b):
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        out_data = fwd(a.data, b.data)

        def backward(g, a=a, b=b):
            a._accumulate(_unbroadcast(bwd_a(g, a.data, b.data), a.data.shape))
            b._accumulate(_unbroadcast(bwd_b(g, a.data, b.data), b.data.shape))

        return Tensor(out_data, (a, b), backward)
    if isinstance(a, Tensor):
        bc = _as_const_array(b)
        out_data = fwd(a.data, bc)

        def backward(g, a=a, bc=bc):
            a._accumulate(_unbroadcast(bwd_a(g, a.data, bc), a.data.shape))

        return Tensor(out_data, (a,), backward)
    ac = _as_const_array(a)
    out_data = fwd(ac, b.data)

    def backward(g, b=b, ac=ac):
        b._accumulate(_unbroadcast(bwd_b(g, ac, b.data), b.data.shape))

    return Tensor(out_data, (b,), backward)


def add(a, b):
    return _binary(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b):
    return _binary(
        a,
        b,
        np.divide,
        lambda g, x, y: g / y,
        lambda g, x, y: -g * x / (y * y),
    )


def matmul(a, b):
    return _binary(
        a,
        b,
        np.matmul,
        lambda g, x, y: g @ y.T,
        lambda g, x, y: x.T @ g,
    )


def spmm(a: Sparse, x) -> Tensor:
    """Sparse-dense product a @ x; differentiable w.r.t. x only."""
    if not isinstance(x, Tensor):
        x = constant(x)
    if a.n_cols != x.data.shape[0]:
        raise ShapeError(
            f"spmm: {a.shape} @ {x.data.shape} dimension mismatch"
        )
    out_data = a.csr() @ x.data

    def backward(g, a=a, x=x):
        x._accumulate(a.csr().T @ g)

    return Tensor(out_data, (x,), backward)


def relu(t: Tensor) -> Tensor:
    out_data = np.maximum(t.data, 0.0)

    def backward(g, t=t, mask=t.data > 0.0):
        t._accumulate(g * mask)

    return Tensor(out_data, (t,), backward)


def clamp_min(t: Tensor, floor: float) -> Tensor:
    """max(t, floor) elementwise; gradient flows where t > floor."""
    out_data = np.maximum(t.data, floor)

    def backward(g, t=t, mask=t.data > floor):
        t._accumulate(g * mask)

    return Tensor(out_data, (t,), backward)


def log(t: Tensor) -> Tensor:
    """Natural log with inputs clamped at LOG_CLAMP."""
    clamped = np.maximum(t.data, LOG_CLAMP)
    out_data = np.log(clamped)

    def backward(g, t=t, clamped=clamped, mask=t.data > LOG_CLAMP):
        t._accumulate(g * mask / clamped)

    return Tensor(out_data, (t,), backward)


def exp(t: Tensor) -> Tensor:
    out_data = np.exp(t.data)

    def backward(g, t=t, out_data=out_data):
        t._accumulate(g * out_data)

    return Tensor(out_data, (t,), backward)


def sqrt(t: Tensor) -> Tensor:
    clamped = np.maximum(t.data, LOG_CLAMP)
    out_data = np.sqrt(clamped)

    def backward(g, t=t, out_data=out_data, mask=t.data > LOG_CLAMP):
        t._accumulate(g * mask * 0.5 / out_data)

    return Tensor(out_data, (t,), backward)


def tsum(t: Tensor, axis=None, keepdims=False) -> Tensor:
    out_data = t.data.sum(axis=axis, keepdims=keepdims)

    def backward(g, t=t, axis=axis, keepdims=keepdims):
        if axis is None:
            t._accumulate(np.broadcast_to(g, t.data.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            t._accumulate(np.broadcast_to(g, t.data.shape).copy())

    return Tensor(out_data, (t,), backward)


def row_softmax(t: Tensor) -> Tensor:
    """Row-stochastic softmax with max-subtraction for stability."""
    z = t.data - t.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out_data = e / e.sum(axis=1, keepdims=True)

    def backward(g, t=t, s=out_data):
        inner = (g * s).sum(axis=1, keepdims=True)
        t._accumulate(s * (g - inner))

    return Tensor(out_data, (t,), backward)


def take_rows(t: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    out_data = t.data[idx]

    def backward(g, t=t, idx=idx):
        acc = np.zeros_like(t.data)
        np.add.at(acc, idx, g)
        t._accumulate(acc)

    return Tensor(out_data, (t,), backward)


def take_cols(t: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    out_data = t.data[:, idx]

    def backward(g, t=t, idx=idx):
        acc = np.zeros_like(t.data)
        np.add.at(acc.T, idx, g.T)
        t._accumulate(acc)

    return Tensor(out_data, (t,), backward)


def transpose(t: Tensor) -> Tensor:
    def backward(g, t=t):
        t._accumulate(g.T)

    return Tensor(t.data.T, (t,), backward)


def concat_cols(tensors) -> Tensor:
    tensors = list(tensors)
    widths = [t.data.shape[1] for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=1)
    offsets = np.cumsum([0] + widths)

    def backward(g, tensors=tensors, offsets=offsets):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            t._accumulate(g[:, lo:hi])

    return Tensor(out_data, tuple(tensors), backward)


def sumsq(t: Tensor) -> Tensor:
    """Squared L2 norm of all entries."""
    return tsum(mul(t, t))


# ---------------------------------------------------------------------------
# parameters and optimizer


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


class ParamStore:
    """Named parameter leaves plus their AdamW moment buffers."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.state: dict[str, AdamState] = {}

    def add(self, name, array):
        if name in self.params:
            raise ContractError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(array, dtype=np.float64))
        self.params[name] = t
        self.state[name] = AdamState(np.zeros_like(t.data), np.zeros_like(t.data))
        return t

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params)

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def l2_penalty(self) -> Tensor:
        terms = [sumsq(t) for t in self.params.values()]
        total = terms[0]
        for term in terms[1:]:
            total = add(total, term)
        return total

    def arrays(self):
        return {name: t.data.copy() for name, t in self.params.items()}

    def all_finite(self):
        return all(np.isfinite(t.data).all() for t in self.params.values())


def gradients(loss: Tensor, params: ParamStore) -> dict[str, np.ndarray]:
    """d(loss)/d(param) for every named parameter; zeros if unreachable."""
    params.zero_grad()
    loss.backward()
    return {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.params.items()
    }


def adamw_step(params: ParamStore, grads, lr, weight_decay=0.0,
               betas=(0.9, 0.999), eps=1e-8):
    """One decoupled-weight-decay Adam step, updating params in place."""
    b1, b2 = betas
    for name, t in params.params.items():
        if name not in grads:
            raise ContractError(f"missing gradient for {name!r}")
        g = grads[name]
        if g.shape != t.data.shape:
            raise ShapeError(f"gradient shape mismatch for {name!r}")
        st = params.state[name]
        st.step += 1
        st.m = b1 * st.m + (1.0 - b1) * g
        st.v = b2 * st.v + (1.0 - b2) * (g * g)
        m_hat = st.m / (1.0 - b1 ** st.step)
        v_hat = st.v / (1.0 - b2 ** st.step)
        if weight_decay:
            t.data -= lr * weight_decay * t.data
        t.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


def glorot_uniform(rng, fan_in, fan_out):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))
