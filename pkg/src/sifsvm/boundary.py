"""Closed-form boundary of the parameter plane and grid construction.

Above ``beta_max`` the all-zero primal with an all-ones dual is optimal for
every alpha; below it, each beta owns an ``alpha_max`` above which the same
closed form (with soft-thresholded mean vector) solves the problem. Those
free reference solutions anchor the sequential screening chains, so the grid
builder prepends the reference alpha to every row.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .objective import SolutionPair, soft_threshold

logger = logging.getLogger(__name__)

__all__ = [
    "beta_max",
    "alpha_max",
    "closed_form_reference",
    "GridSpec",
    "GridRow",
    "build_grid",
    "log_fracs",
]

# Relative floor below which a row's alpha_max is treated as exactly zero
# (it is zero in exact arithmetic whenever beta >= beta_max, but float
# residue can leave ~1e-16 behind, which would poison frac * alpha_max grids).
_ALPHA_MAX_FLOOR = 1e-12


def _mean_folded(d: Dataset) -> np.ndarray:
    """(1/n) Xbar 1, the folded sample mean over features."""
    return np.asarray(d.xbar_csr.sum(axis=1)).ravel() / d.n


def beta_max(d: Dataset) -> float:
    """Smallest beta at which w* = 0 for every alpha: ||(1/n) Xbar 1||_inf."""
    u = _mean_folded(d)
    return float(np.max(np.abs(u))) if u.size else 0.0


def alpha_max(d: Dataset, beta: float, gamma: float) -> float:
    """Threshold above which the closed-form reference solves the problem.

    Equals (1/(1-gamma)) max_i <xbar_i, S_beta((1/n) Xbar 1)>; nonnegative,
    and exactly zero once beta >= beta_max.
    """
    st = soft_threshold(_mean_folded(d), beta)
    dots = d.xbar_csc.T @ st
    return float(np.max(dots)) / (1.0 - gamma) if dots.size else 0.0


def closed_form_reference(d: Dataset, alpha: float, beta: float, gamma: float) -> SolutionPair:
    """Exact solution for alpha >= max(alpha_max(beta), 0), alpha > 0.

    The dual optimum is the all-ones vector and the primal follows from it:
    w* = (1/alpha) S_beta((1/n) Xbar 1). Ties alpha == alpha_max resolve to
    the closed form.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    am = alpha_max(d, beta, gamma)
    if alpha < am:
        raise ValueError(
            f"closed form requires alpha >= alpha_max ({am!r}), got {alpha!r}"
        )
    w = soft_threshold(_mean_folded(d), beta) / alpha
    return SolutionPair(w=w, theta=np.ones(d.n))


def log_fracs(start: float, stop: float, count: int) -> np.ndarray:
    """Log-spaced fractions from ``start`` down to ``stop`` inclusive."""
    return np.geomspace(start, stop, count)


def _validate_fracs(name: str, fracs: np.ndarray) -> np.ndarray:
    fracs = np.asarray(fracs, dtype=np.float64)
    if fracs.ndim != 1 or fracs.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-d sequence")
    if np.any(fracs <= 0.0) or np.any(fracs > 1.0):
        raise ValueError(f"{name} must lie in (0, 1]")
    if np.any(np.diff(fracs) >= 0.0):
        raise ValueError(f"{name} must be strictly descending")
    return fracs


@dataclass(frozen=True)
class GridSpec:
    """Fractions of beta_max and alpha_max(beta) defining the parameter grid.

    Defaults follow the usual experimental protocol: 10 beta fractions
    log-spaced on [0.05, 1] and 100 alpha fractions log-spaced on [0.01, 1],
    both descending from 1.
    """

    beta_fracs: np.ndarray = field(default_factory=lambda: log_fracs(1.0, 0.05, 10))
    alpha_fracs: np.ndarray = field(default_factory=lambda: log_fracs(1.0, 0.01, 100))

    def __post_init__(self):
        object.__setattr__(self, "beta_fracs", _validate_fracs("beta_fracs", self.beta_fracs))
        object.__setattr__(self, "alpha_fracs", _validate_fracs("alpha_fracs", self.alpha_fracs))


@dataclass(frozen=True)
class GridRow:
    """One beta row: ``alphas[0]`` is the free reference, the rest the grid.

    ``closed_form_all_alphas`` marks rows whose alpha_max vanished (beta at
    or above beta_max): there the closed form solves every alpha > 0 and the
    grid alphas are the requested fractions of a substitute positive scale.
    """

    j: int
    beta_frac: float
    beta: float
    alpha_max: float
    alphas: np.ndarray
    closed_form_all_alphas: bool = False


def build_grid(d: Dataset, spec: GridSpec, gamma: float) -> list[GridRow]:
    """Materialize the (beta, alpha) grid with per-row reference alphas."""
    bmax = beta_max(d)
    if bmax <= 0.0:
        raise ValueError("cannot build a grid: beta_max is zero (all-zero design)")
    alpha_scale = alpha_max(d, 0.0, gamma)
    floor = _ALPHA_MAX_FLOOR * max(alpha_scale, 1.0)
    rows = []
    for j, bf in enumerate(spec.beta_fracs, start=1):
        beta = float(bf * bmax)
        am = alpha_max(d, beta, gamma)
        degenerate = am <= floor
        if degenerate:
            scale = alpha_scale if alpha_scale > floor else 1.0
            grid_alphas = spec.alpha_fracs * scale
            ref = float(grid_alphas[0])
            logger.info(
                "beta row %d (frac %.4g) has alpha_max ~ 0; closed form holds "
                "for every alpha, reference set to largest grid alpha %.4g",
                j, bf, ref,
            )
        else:
            grid_alphas = spec.alpha_fracs * am
            ref = am
        rows.append(
            GridRow(
                j=j,
                beta_frac=float(bf),
                beta=beta,
                alpha_max=float(am),
                alphas=np.concatenate([[ref], grid_alphas]),
                closed_form_all_alphas=degenerate,
            )
        )
    return rows
