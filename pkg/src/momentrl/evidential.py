"""Locational evidence over the 16 relative-position classes.

An agent's evidence vector parameterizes a Dirichlet distribution over the
joint start/end relative-location classes: alpha_j = e_j + 1, total strength
S = sum(alpha), uncertainty u = C / S. High total evidence means low
uncertainty about where the current region sits relative to the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from momentrl.autodiff import engine as eng
from momentrl.autodiff.engine import Act, Var
from momentrl.autodiff.store import StoreView
from momentrl.timeline import N_JOINT_CLASSES


class OffSimplexError(ValueError):
    """The probability vector is not on the unit simplex."""


@dataclass(frozen=True)
class Evidence:
    """Nonnegative per-class evidence plus its Dirichlet derivations.

    ``var`` carries the graph node when the evidence came out of the head
    during training; plain arrays work everywhere else.
    """

    e: np.ndarray
    var: Var | None = None

    @property
    def alpha(self) -> np.ndarray:
        return self.e + 1.0

    @property
    def strength(self) -> float:
        return float(self.e.sum()) + N_JOINT_CLASSES

    @property
    def uncertainty(self) -> float:
        return N_JOINT_CLASSES / self.strength

    @classmethod
    def from_raw(cls, e, var: Var | None = None) -> "Evidence":
        arr = np.asarray(e, dtype=np.float64)
        if arr.shape != (N_JOINT_CLASSES,):
            raise ValueError(f"evidence must have {N_JOINT_CLASSES} entries, got shape {arr.shape}")
        if (arr < 0).any():
            raise ValueError("evidence must be nonnegative")
        return cls(e=arr, var=var)


def evidence_head(state: Var, view: StoreView) -> Evidence:
    """Evidence from an observation vector: softplus-rectified dense layer."""
    var = eng.dense_forward(state, view["evi.w"], view["evi.b"], Act.SOFTPLUS)
    return Evidence(e=var.data, var=var)


def evidential_loss(ev: Evidence, true_class: int) -> Var:
    """log(S) - log(alpha_true): small when the true class holds the evidence.

    Differentiable w.r.t. the evidence vector when ``ev`` carries a graph
    node.
    """
    if not 0 <= true_class < N_JOINT_CLASSES:
        raise ValueError(f"true_class must be in [0, {N_JOINT_CLASSES}), got {true_class}")
    e_var = ev.var if ev.var is not None else eng.const(ev.e)
    s = eng.add_const(eng.vsum(e_var), float(N_JOINT_CLASSES))
    a_true = eng.add_const(eng.pick(e_var, true_class), 1.0)
    return eng.sub(eng.log(s), eng.log(a_true))


def evidential_loss_rows(evi_rows: Var, labels: np.ndarray) -> Var:
    """Mean evidential loss over a [T, C] batch of evidence rows."""
    s = eng.add_const(eng.row_sum(evi_rows), float(N_JOINT_CLASSES))
    a_true = eng.add_const(eng.gather_rows(evi_rows, labels), 1.0)
    return eng.vmean(eng.sub(eng.log(s), eng.log(a_true)))


def dirichlet_log_density(p, alpha, tol: float = 1e-9) -> float:
    """Log density of the Dirichlet distribution at a simplex point.

    Test oracle only; the training path never evaluates the density itself.
    Returns -inf where the density vanishes (a zero coordinate with
    evidence on it).
    """
    p = np.asarray(p, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if p.shape != alpha.shape:
        raise ValueError(f"shape mismatch: p {p.shape} vs alpha {alpha.shape}")
    if (p < -tol).any() or abs(p.sum() - 1.0) > tol:
        raise OffSimplexError(f"p is off the unit simplex (sum={p.sum()!r})")
    log_beta = float(sum(math.lgamma(a) for a in alpha) - math.lgamma(alpha.sum()))
    exponents = alpha - 1.0
    total = -log_beta
    for pj, ej in zip(p, exponents):
        if pj <= 0.0:
            if ej > 0.0:
                return float("-inf")
            if ej < 0.0:
                return float("inf")
            continue
        total += ej * math.log(pj)
    return float(total)
