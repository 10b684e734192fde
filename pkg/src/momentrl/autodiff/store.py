"""Named parameter storage with paired gradient and optimizer-moment buffers.

All entries live in one flat arena per buffer kind, so the optimizer step
and global-norm clipping are single vectorized passes; named views into the
arena are what the layers see.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from momentrl import backend as K
from momentrl.autodiff.engine import Var


class ParameterStore:
    """Registry of named, shaped learnable arrays.

    Two-phase: register every parameter with :meth:`add` (or through a
    :class:`StoreView`), then :meth:`freeze` to allocate the arenas. After
    freezing, :meth:`leaf` hands out graph leaves whose gradients land in
    this store's buffers. One training loop owns the store; read-only
    snapshots may be shared for parallel evaluation.
    """

    def __init__(self) -> None:
        self._names: list[str] = []
        self._shapes: dict[str, tuple[int, ...]] = {}
        self._slices: dict[str, slice] = {}
        self._leaves: dict[str, Var] = {}
        self._frozen = False
        self.step_count = 0
        self._params: np.ndarray | None = None
        self._grads: np.ndarray | None = None
        self._m: np.ndarray | None = None
        self._v: np.ndarray | None = None

    # -- registration -------------------------------------------------

    def add(self, name: str, shape: tuple[int, ...]) -> None:
        if self._frozen:
            raise RuntimeError("cannot add parameters to a frozen store")
        if name in self._shapes:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._names.append(name)
        self._shapes[name] = tuple(int(s) for s in shape)

    def freeze(self) -> None:
        if self._frozen:
            return
        offset = 0
        for name in self._names:
            size = int(np.prod(self._shapes[name], dtype=np.int64)) if self._shapes[name] else 1
            self._slices[name] = slice(offset, offset + size)
            offset += size
        self._params = np.zeros(offset)
        self._grads = np.zeros(offset)
        self._m = np.zeros(offset)
        self._v = np.zeros(offset)
        self._frozen = True
        for name in self._names:
            v = Var(self.value(name))
            v.grad = self.grad(name)
            self._leaves[name] = v

    def view(self, prefix: str) -> "StoreView":
        return StoreView(self, prefix)

    # -- access -------------------------------------------------------

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._names)

    @property
    def size(self) -> int:
        self._require_frozen()
        return self._params.size

    def shape(self, name: str) -> tuple[int, ...]:
        return self._shapes[name]

    def value(self, name: str) -> np.ndarray:
        self._require_frozen()
        return self._params[self._slices[name]].reshape(self._shapes[name])

    def grad(self, name: str) -> np.ndarray:
        self._require_frozen()
        return self._grads[self._slices[name]].reshape(self._shapes[name])

    def moments(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        self._require_frozen()
        sl, shp = self._slices[name], self._shapes[name]
        return self._m[sl].reshape(shp), self._v[sl].reshape(shp)

    def leaf(self, name: str) -> Var:
        """The graph leaf backed by this store; backward fills its grad buffer.

        Leaves are created once at freeze time and shared by every graph, so
        their data and grad views always alias the arenas.
        """
        self._require_frozen()
        return self._leaves[name]

    def _require_frozen(self) -> None:
        if not self._frozen:
            raise RuntimeError("store must be frozen first")

    # -- mutation -----------------------------------------------------

    def init_uniform(self, rng: np.random.Generator) -> None:
        """Weights uniform in +-1/sqrt(fan_in); vectors (biases) start at zero."""
        self._require_frozen()
        for name in self._names:
            shape = self._shapes[name]
            buf = self.value(name)
            if len(shape) >= 2:
                bound = 1.0 / math.sqrt(shape[-1])
                buf[...] = rng.uniform(-bound, bound, size=shape)
            else:
                buf[...] = 0.0

    def zero_grads(self) -> None:
        self._require_frozen()
        self._grads[:] = 0.0

    def grad_norm(self) -> float:
        self._require_frozen()
        return float(np.sqrt(self._grads @ self._grads))

    def copy_values_from(self, other: "ParameterStore") -> None:
        if self.names != other.names:
            raise ValueError("stores have different parameter sets")
        self._params[:] = other._params
        self._m[:] = other._m
        self._v[:] = other._v
        self.step_count = other.step_count


class StoreView:
    """Prefix-scoped window onto a store, used by network builders."""

    def __init__(self, store: ParameterStore, prefix: str):
        self.store = store
        self.prefix = prefix

    def add(self, name: str, shape: tuple[int, ...]) -> None:
        self.store.add(self.prefix + name, shape)

    def __getitem__(self, name: str) -> Var:
        return self.store.leaf(self.prefix + name)

    def value(self, name: str) -> np.ndarray:
        return self.store.value(self.prefix + name)

    def view(self, prefix: str) -> "StoreView":
        return StoreView(self.store, self.prefix + prefix)


def add_dense(view: StoreView, name: str, out_dim: int, in_dim: int) -> None:
    view.add(f"{name}.w", (out_dim, in_dim))
    view.add(f"{name}.b", (out_dim,))


def add_gru(view: StoreView, name: str, hidden: int, in_dim: int) -> None:
    # update-gate, reset-gate, and candidate blocks stacked along the rows
    view.add(f"{name}.w", (3 * hidden, in_dim))
    view.add(f"{name}.u", (3 * hidden, hidden))
    view.add(f"{name}.b", (3 * hidden,))


def gru_params(view: StoreView, name: str) -> tuple[Var, Var, Var]:
    return (view[f"{name}.w"], view[f"{name}.u"], view[f"{name}.b"])


def adam_update(
    store: ParameterStore,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    clip_norm: float | None = None,
) -> None:
    """Apply one bias-corrected adaptive-moment step and clear the gradients.

    When ``clip_norm`` is set, the raw gradient is rescaled so its global L2
    norm does not exceed it.
    """
    store._require_frozen()
    gscale = 1.0
    if clip_norm is not None:
        norm = store.grad_norm()
        if norm > clip_norm:
            gscale = clip_norm / norm
    store.step_count += 1
    t = store.step_count
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    K.adam_step(store._params, store._grads, store._m, store._v,
                lr, beta1, beta2, eps, bc1, bc2, gscale)
    store._grads[:] = 0.0
