"""Minimal reverse-mode differentiation over numpy arrays.

The graph is built eagerly during the forward pass: every op returns a
:class:`Var` holding its value, its parents, and a closure that pushes the
incoming gradient to those parents. :func:`backward` walks the recorded
graph once in reverse topological order. Only the shapes this project needs
are supported — scalars, vectors, matrices, and row-batched layer
applications; there is no general broadcasting.

Heavy kernels (dense layers, the recurrent cell) are routed through
``momentrl.backend`` so the compiled extension can take over when built.
"""

from __future__ import annotations

from enum import IntEnum
from typing import Callable, Iterable, Sequence

import numpy as np

from momentrl import backend as K


class Act(IntEnum):
    IDENTITY = K.ACT_IDENTITY
    RELU = K.ACT_RELU
    SIGMOID = K.ACT_SIGMOID
    SOFTPLUS = K.ACT_SOFTPLUS


_grad_enabled = True
_tape: list["Var"] = []


class no_grad:
    """Context manager that skips graph recording inside its block."""

    def __enter__(self) -> None:
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc) -> None:
        global _grad_enabled
        _grad_enabled = self._prev


class Var:
    """A node in the computation graph: an ndarray plus gradient plumbing."""

    __slots__ = ("data", "grad", "_parents", "_bwd")

    def __init__(
        self,
        data: np.ndarray,
        parents: tuple["Var", ...] = (),
        bwd: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = data
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._bwd = bwd

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Var":
        return Var(self.data)

    def __repr__(self) -> str:
        return f"Var(shape={self.data.shape}, data={self.data!r})"

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

    def __neg__(self):
        return scale(self, -1.0)


def as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64, order="C")


def const(x) -> Var:
    """A leaf node carrying data that no gradient flows into."""
    return Var(as_array(x))


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else const(x)


def _node(data: np.ndarray, parents: tuple[Var, ...], bwd: Callable[[np.ndarray], None]) -> Var:
    if not _grad_enabled:
        return Var(data)
    v = Var(data, parents, bwd)
    _tape.append(v)
    return v


def _accum(v: Var, g: np.ndarray) -> None:
    if v.grad is None:
        v.grad = np.zeros_like(v.data)
    v.grad += g


def backward(root: Var) -> None:
    """Accumulate d(root)/d(leaf) into every reachable leaf's grad buffer.

    Walks the recording tape in reverse; eager construction order is a valid
    topological order. The tape is consumed: nodes recorded so far are
    released, so each recorded segment supports one backward pass.
    """
    if root.data.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.data.shape}")
    if root.grad is None:
        root.grad = np.ones_like(root.data)
    else:
        root.grad += 1.0
    for node in reversed(_tape):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)
            node.grad = None
    _tape.clear()


# ---------------------------------------------------------------------------
# elementwise / reduction ops


def add(a: Var, b: Var) -> Var:
    out = a.data + b.data

    def bwd(g: np.ndarray) -> None:
        _accum(a, g if a.data.shape == g.shape else g.sum())
        _accum(b, g if b.data.shape == g.shape else g.sum())

    return _node(out, (a, b), bwd)


def sub(a: Var, b: Var) -> Var:
    out = a.data - b.data

    def bwd(g: np.ndarray) -> None:
        _accum(a, g if a.data.shape == g.shape else g.sum())
        _accum(b, -g if b.data.shape == g.shape else -g.sum())

    return _node(out, (a, b), bwd)


def mul(a: Var, b: Var) -> Var:
    out = a.data * b.data

    def bwd(g: np.ndarray) -> None:
        ga = g * b.data
        gb = g * a.data
        _accum(a, ga if a.data.shape == ga.shape else ga.sum())
        _accum(b, gb if b.data.shape == gb.shape else gb.sum())

    return _node(out, (a, b), bwd)


def scale(a: Var, c: float) -> Var:
    out = a.data * c

    def bwd(g: np.ndarray) -> None:
        _accum(a, g * c)

    return _node(out, (a,), bwd)


def add_const(a: Var, c: float) -> Var:
    out = a.data + c

    def bwd(g: np.ndarray) -> None:
        _accum(a, g)

    return _node(out, (a,), bwd)


def square(a: Var) -> Var:
    out = a.data * a.data

    def bwd(g: np.ndarray) -> None:
        _accum(a, 2.0 * g * a.data)

    return _node(out, (a,), bwd)


def vsum(a: Var) -> Var:
    out = np.asarray(a.data.sum())

    def bwd(g: np.ndarray) -> None:
        _accum(a, np.broadcast_to(g, a.data.shape).copy() if g.shape != a.data.shape else g)

    return _node(out, (a,), bwd)


def vmean(a: Var) -> Var:
    n = a.data.size
    out = np.asarray(a.data.mean())

    def bwd(g: np.ndarray) -> None:
        _accum(a, np.full(a.data.shape, float(g) / n))

    return _node(out, (a,), bwd)


def log(a: Var) -> Var:
    out = np.log(a.data)

    def bwd(g: np.ndarray) -> None:
        _accum(a, g / a.data)

    return _node(out, (a,), bwd)


def sigmoid(a: Var) -> Var:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def bwd(g: np.ndarray) -> None:
        _accum(a, g * out * (1.0 - out))

    return _node(out, (a,), bwd)


def tanh(a: Var) -> Var:
    out = np.tanh(a.data)

    def bwd(g: np.ndarray) -> None:
        _accum(a, g * (1.0 - out * out))

    return _node(out, (a,), bwd)


def relu(a: Var) -> Var:
    out = np.maximum(a.data, 0.0)

    def bwd(g: np.ndarray) -> None:
        _accum(a, g * (out > 0.0))

    return _node(out, (a,), bwd)


def softplus(a: Var) -> Var:
    out = np.logaddexp(0.0, a.data)

    def bwd(g: np.ndarray) -> None:
        _accum(a, g * (1.0 - np.exp(-out)))

    return _node(out, (a,), bwd)


# ---------------------------------------------------------------------------
# shape ops


def concat(parts: Sequence[Var]) -> Var:
    datas = [p.data for p in parts]
    if any(d.ndim != 1 for d in datas):
        raise ValueError("concat supports 1-D vectors only")
    out = np.concatenate(datas)
    sizes = [d.size for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bwd(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[lo:hi])

    return _node(out, tuple(parts), bwd)


def concat_cols(parts: Sequence[Var]) -> Var:
    datas = [p.data for p in parts]
    if any(d.ndim != 2 for d in datas):
        raise ValueError("concat_cols supports 2-D matrices only")
    out = np.concatenate(datas, axis=1)
    widths = [d.shape[1] for d in datas]
    offsets = np.cumsum([0] + widths)

    def bwd(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, np.ascontiguousarray(g[:, lo:hi]))

    return _node(out, tuple(parts), bwd)


def row(mat: Var, t: int) -> Var:
    out = mat.data[t]

    def bwd(g: np.ndarray) -> None:
        if mat.grad is None:
            mat.grad = np.zeros_like(mat.data)
        mat.grad[t] += g

    return _node(out, (mat,), bwd)


def stack_rows(rows_: Sequence[Var]) -> Var:
    out = np.stack([r.data for r in rows_])

    def bwd(g: np.ndarray) -> None:
        for i, r in enumerate(rows_):
            _accum(r, g[i])

    return _node(out, tuple(rows_), bwd)


def stack_scalars(xs: Sequence[Var]) -> Var:
    out = np.array([float(x.data) for x in xs])

    def bwd(g: np.ndarray) -> None:
        for i, x in enumerate(xs):
            _accum(x, np.asarray(g[i]).reshape(x.data.shape))

    return _node(out, tuple(xs), bwd)


def ravel(a: Var) -> Var:
    out = a.data.reshape(-1)

    def bwd(g: np.ndarray) -> None:
        _accum(a, g.reshape(a.data.shape))

    return _node(out, (a,), bwd)


def row_sum(mat: Var) -> Var:
    """Sum each row of a [T, k] matrix into a length-T vector."""
    out = mat.data.sum(axis=1)

    def bwd(g: np.ndarray) -> None:
        _accum(mat, np.repeat(g[:, None], mat.data.shape[1], axis=1))

    return _node(out, (mat,), bwd)


def gather_rows(mat: Var, idx: np.ndarray) -> Var:
    """Pick one entry per row: out[t] = mat[t, idx[t]]."""
    rows_ = np.arange(mat.data.shape[0])
    out = mat.data[rows_, idx]

    def bwd(g: np.ndarray) -> None:
        if mat.grad is None:
            mat.grad = np.zeros_like(mat.data)
        np.add.at(mat.grad, (rows_, idx), g)

    return _node(out, (mat,), bwd)


def pick(vec: Var, i: int) -> Var:
    out = np.asarray(vec.data[i])

    def bwd(g: np.ndarray) -> None:
        if vec.grad is None:
            vec.grad = np.zeros_like(vec.data)
        vec.grad[i] += float(g)

    return _node(out, (vec,), bwd)


# ---------------------------------------------------------------------------
# layers


def dense_forward(x: Var, w: Var, b: Var, activation: Act = Act.IDENTITY) -> Var:
    """activation(w @ x + b); x may be a vector [n] or a row batch [T, n]."""
    xv = x.data
    single = xv.ndim == 1
    x2 = xv.reshape(1, -1) if single else xv
    if w.data.ndim != 2 or x2.shape[1] != w.data.shape[1] or b.data.shape != (w.data.shape[0],):
        raise ValueError(
            f"dense shape mismatch: x {xv.shape}, w {w.data.shape}, b {b.data.shape}"
        )
    y2 = K.dense_fwd(x2, w.data, b.data, int(activation))
    out = y2[0] if single else y2

    def bwd(g: np.ndarray) -> None:
        g2 = g.reshape(1, -1) if single else g
        for v in (x, w, b):
            if v.grad is None:
                v.grad = np.zeros_like(v.data)
        gx2 = x.grad.reshape(1, -1) if single else x.grad
        K.dense_bwd(x2, w.data, y2, g2, int(activation), gx2, w.grad, b.grad)

    return _node(out, (x, w, b), bwd)


def gru_step(state: Var, x: Var, params: Sequence[Var]) -> Var:
    """One step of the gated recurrent cell; returns the next hidden state.

    ``params`` is the triple (w, u, b) with the update-gate, reset-gate, and
    candidate blocks stacked along the rows: w is [3h, n], u is [3h, h],
    b is [3h].
    """
    w, u, b = params
    hidden = state.data.shape[0]
    if w.data.shape != (3 * hidden, x.data.shape[0]) or u.data.shape != (3 * hidden, hidden):
        raise ValueError(
            f"gru shape mismatch: state {state.data.shape}, x {x.data.shape}, w {w.data.shape}"
        )
    z, r, c, h_new = K.gru_fwd(x.data, state.data, w.data, u.data, b.data)

    def bwd(g: np.ndarray) -> None:
        for v in (state, x, w, u, b):
            if v.grad is None:
                v.grad = np.zeros_like(v.data)
        K.gru_bwd(
            x.data, state.data, z, r, c, w.data, u.data,
            g, x.grad, state.grad, w.grad, u.grad, b.grad,
        )

    return _node(h_new, (state, x, w, u, b), bwd)


def softmax(logits: Var) -> Var:
    """Stable softmax over a 1-D logit vector."""
    x = logits.data
    if x.ndim != 1 or x.size < 1:
        raise ValueError(f"softmax expects a nonempty vector, got shape {x.shape}")
    e = np.exp(x - x.max())
    out = e / e.sum()

    def bwd(g: np.ndarray) -> None:
        _accum(logits, out * (g - float(g @ out)))

    return _node(out, (logits,), bwd)


def log_softmax(logits: Var) -> Var:
    x = logits.data
    m = x.max()
    ls = x - m - np.log(np.exp(x - m).sum())

    def bwd(g: np.ndarray) -> None:
        _accum(logits, g - np.exp(ls) * g.sum())

    return _node(ls, (logits,), bwd)


def cross_entropy_rows(logits: Var, labels: np.ndarray) -> Var:
    """Mean negative log-likelihood of one label per row of [T, k] logits."""
    x = logits.data
    m = x.max(axis=1, keepdims=True)
    ls = x - m - np.log(np.exp(x - m).sum(axis=1, keepdims=True))
    rows_ = np.arange(x.shape[0])
    out = np.asarray(-ls[rows_, labels].mean())
    t = x.shape[0]

    def bwd(g: np.ndarray) -> None:
        gm = np.exp(ls)
        gm[rows_, labels] -= 1.0
        _accum(logits, gm * (float(g) / t))

    return _node(out, (logits,), bwd)


def mse_const(pred: Var, target) -> Var:
    """Mean squared error against a constant target of the same shape."""
    tgt = as_array(target)
    if tgt.shape != pred.data.shape:
        raise ValueError(f"mse target shape {tgt.shape} != pred shape {pred.data.shape}")
    diff = pred.data - tgt
    out = np.asarray((diff * diff).mean())
    n = max(diff.size, 1)

    def bwd(g: np.ndarray) -> None:
        _accum(pred, (2.0 * float(g) / n) * diff)

    return _node(out, (pred,), bwd)


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an index from a probability vector; deterministic per rng state."""
    p = np.asarray(probs, dtype=np.float64)
    total = p.sum()
    if abs(total - 1.0) > 1e-6 or (p < 0).any():
        raise ValueError(f"probabilities must be nonnegative and sum to 1, got sum {total}")
    u = rng.random()
    return int(min(np.searchsorted(np.cumsum(p), u, side="right"), p.size - 1))


def argmax_index(probs: np.ndarray) -> int:
    """Greedy pick; ties break to the lowest index."""
    return int(np.argmax(probs))
