"""Primal and dual objectives for the smoothed-hinge sparse SVM.

Primal (minimized over w):

    P(w) = (1/n) sum_i loss(1 - <xbar_i, w>) + (alpha/2) ||w||^2 + beta ||w||_1

with the smoothed hinge ``loss(t) = 0`` for ``t < 0``, ``t^2 / (2 gamma)`` on
``[0, gamma]`` and ``t - gamma/2`` beyond. Its dual, written here as a
minimization over the box ``[0, 1]^n``:

    D(theta) = (1/(2 alpha)) ||S_beta((1/n) Xbar theta)||^2
               + (gamma/(2n)) ||theta||^2 - (1/n) <1, theta>

where ``S_beta`` is the soft-threshold map. Strong duality gives
``P(w*) = -D(theta*)``, so ``P(w) + D(theta)`` is the duality gap used
throughout (always >= 0 at feasible points, up to float error).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset

__all__ = [
    "Params",
    "SolutionPair",
    "GapReport",
    "smoothed_loss",
    "soft_threshold",
    "margins",
    "primal_objective",
    "dual_objective",
    "dual_gradient",
    "recover_primal",
    "duality_gap",
    "primal_at_zero",
]

BOX_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Params:
    """Problem parameters: ridge weight ``alpha``, l1 weight ``beta``,
    smoothing width ``gamma``."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")


@dataclass(frozen=True, eq=False)
class SolutionPair:
    """A primal/dual iterate: ``w`` of length p, ``theta`` of length n."""

    w: np.ndarray
    theta: np.ndarray


@dataclass(frozen=True)
class GapReport:
    primal_value: float
    dual_value: float

    @property
    def gap(self) -> float:
        return self.primal_value + self.dual_value


def smoothed_loss(t, gamma: float):
    """Smoothed hinge: 0 below 0, quadratic on [0, gamma], affine above."""
    t = np.asarray(t, dtype=np.float64)
    out = np.where(
        t < 0.0,
        0.0,
        np.where(t <= gamma, t * t / (2.0 * gamma), t - gamma / 2.0),
    )
    return float(out) if out.ndim == 0 else out


def soft_threshold(u, beta: float):
    """Shrink toward zero by ``beta``: sign(u) * max(|u| - beta, 0)."""
    u = np.asarray(u, dtype=np.float64)
    out = np.sign(u) * np.maximum(np.abs(u) - beta, 0.0)
    return float(out) if out.ndim == 0 else out


def margins(d: Dataset, w: np.ndarray) -> np.ndarray:
    """Per-sample margins 1 - <xbar_i, w>."""
    return 1.0 - d.xbar_csc.T @ w


def primal_objective(d: Dataset, w: np.ndarray, prm: Params) -> float:
    loss = smoothed_loss(margins(d, w), prm.gamma)
    return float(
        np.sum(loss) / d.n
        + 0.5 * prm.alpha * (w @ w)
        + prm.beta * np.sum(np.abs(w))
    )


def primal_at_zero(gamma: float) -> float:
    """P(0) = loss(1) = 1 - gamma/2; the natural scale for gap tolerances."""
    return 1.0 - gamma / 2.0


def _check_box(theta: np.ndarray) -> None:
    if theta.size == 0:
        return
    lo = float(theta.min())
    hi = float(theta.max())
    if lo < -BOX_TOLERANCE or hi > 1.0 + BOX_TOLERANCE:
        raise ValueError(
            f"theta leaves [0, 1] beyond tolerance (min={lo!r}, max={hi!r})"
        )


def dual_objective(d: Dataset, theta: np.ndarray, prm: Params) -> float:
    _check_box(theta)
    u = (d.xbar_csr @ theta) / d.n
    st = soft_threshold(u, prm.beta)
    return float(
        (st @ st) / (2.0 * prm.alpha)
        + 0.5 * prm.gamma / d.n * (theta @ theta)
        - np.sum(theta) / d.n
    )


def dual_gradient(d: Dataset, theta: np.ndarray, prm: Params) -> np.ndarray:
    u = (d.xbar_csr @ theta) / d.n
    st = soft_threshold(u, prm.beta)
    return (
        (st @ d.xbar_csr) / (prm.alpha * d.n)
        + (prm.gamma / d.n) * theta
        - 1.0 / d.n
    )


def recover_primal(
    d: Dataset, theta: np.ndarray, prm: Params, features: np.ndarray | None = None
) -> np.ndarray:
    """Primal weights implied by a dual point: (1/alpha) S_beta((1/n) Xbar theta).

    With ``features`` given, only those rows are returned (compacted, in the
    order given).
    """
    u = (d.xbar_csr @ theta) / d.n
    if features is not None:
        u = u[features]
    return soft_threshold(u, prm.beta) / prm.alpha


def duality_gap(d: Dataset, pair: SolutionPair, prm: Params) -> GapReport:
    return GapReport(
        primal_value=primal_objective(d, pair.w, prm),
        dual_value=dual_objective(d, pair.theta, prm),
    )
