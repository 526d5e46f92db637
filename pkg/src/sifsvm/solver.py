"""Coordinate-descent solver for the (possibly screened) dual problem.

Screened samples are frozen out of the dual (0 on the low end, 1 on the high
end) and screened features' rows are dropped from the soft-threshold term,
which leaves a box-constrained problem over the undecided coordinates:

    min over theta_hat in [0,1]^k of
      (1/(2 alpha)) ||S_beta((1/n) G1 theta_hat + g2_one)||^2
      + (gamma/(2n)) ||theta_hat||^2 - (1/n) <1, theta_hat>

with G1 the design restricted to surviving features x undecided samples,
g2_one the precontracted contribution of the pinned-to-one samples, and n
always the full sample count. Each coordinate step uses its exact Lipschitz
constant and clips to the box, so the scaled objective never increases.

The reduction never copies the design: the coordinate kernel walks the
undecided columns of the full matrix and masks screened feature rows out of
the gradient, and the gap evaluation scatters full-length iterates (screened
entries are zero, which the scatter kernels skip). That makes building a
scaled problem O(n + p + nnz of the undecided columns) regardless of how the
screening went.

Convergence is declared on the full problem: the iterate is extended to full
length, the primal is recovered, and the full duality gap is compared to
``gap_tol``. Checks happen at epoch boundaries, spaced so that the work done
between checks roughly matches one pass over the full design (for the
unscreened problem that is every epoch; heavily screened problems amortize
the check over several of their much smaller epochs).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .data import Dataset
from .estimation import ScreeningState
from .objective import (
    GapReport,
    Params,
    SolutionPair,
    primal_at_zero,
    recover_primal,
)

__all__ = [
    "SolverConfig",
    "ScaledProblem",
    "SolveResult",
    "NonConvergenceError",
    "build_scaled",
    "solve_scaled",
    "extend_and_recover",
    "solve_full",
    "reference_config",
    "DEFAULT_GAP_REL",
    "REFERENCE_GAP_REL",
]

DEFAULT_GAP_REL = 1e-8
REFERENCE_GAP_REL = 1e-10

# Longest run of epochs between two full-gap checks.
_MAX_CHECK_SPACING = 64

# Random permutations are drawn in blocks of this many epochs.
_ORDER_POOL = 16


class NonConvergenceError(RuntimeError):
    """The epoch budget ran out before the gap fell under tolerance."""

    def __init__(self, message: str, last_gap: float):
        super().__init__(message)
        self.last_gap = last_gap


@dataclass(frozen=True)
class SolverConfig:
    """``gap_tol`` is absolute; leave it None to use ``DEFAULT_GAP_REL``
    relative to the primal value at zero (1 - gamma/2)."""

    gap_tol: float | None = None
    max_epochs: int = 50_000
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.gap_tol is not None and not self.gap_tol > 0:
            raise ValueError(f"gap_tol must be positive, got {self.gap_tol}")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")

    def resolve_gap_tol(self, gamma: float) -> float:
        if self.gap_tol is not None:
            return self.gap_tol
        return DEFAULT_GAP_REL * primal_at_zero(gamma)


def reference_config(gamma: float, base: SolverConfig | None = None) -> SolverConfig:
    """Config tightened to the reference-solution accuracy contract."""
    base = base or SolverConfig()
    tight = REFERENCE_GAP_REL * primal_at_zero(gamma)
    current = base.resolve_gap_tol(gamma)
    return SolverConfig(
        gap_tol=min(tight, current),
        max_epochs=base.max_epochs,
        shuffle_seed=base.shuffle_seed,
    )


@dataclass(frozen=True, eq=False)
class ScaledProblem:
    """The reduced dual, expressed as views into the full design.

    ``sample_idx`` lists the undecided samples (the scaled coordinates, in
    full-column order), ``feature_idx`` the surviving features;
    ``feature_mask`` is the full-length row mask and ``col_sqnorms`` the
    undecided columns' squared norms restricted to surviving rows.
    ``g2_one`` is the pinned-to-one samples' fixed contribution
    (1/n) X_bar[F_hat^c, L_hat] @ 1, on surviving rows.
    """

    dataset: Dataset
    state: ScreeningState
    prm: Params
    col_sqnorms: np.ndarray
    feature_idx: np.ndarray
    sample_idx: np.ndarray
    feature_mask: np.ndarray
    scaled_nnz: int

    @property
    def n_coords(self) -> int:
        return int(self.sample_idx.size)

    @property
    def reduced(self) -> bool:
        """Whether any screening actually applies."""
        d = self.dataset
        return self.feature_idx.size != d.p or self.sample_idx.size != d.n

    @property
    def g1(self) -> sp.csc_matrix:
        """The scaled design block as a scipy matrix (built on demand)."""
        if not self.reduced:
            return self.dataset.xbar_csc
        block = self.dataset.xbar_csc[:, self.sample_idx]
        if self.feature_idx.size != self.dataset.p:
            block = block.tocsr()[self.feature_idx, :].tocsc()
        return block

    @property
    def g2_one(self) -> np.ndarray:
        d = self.dataset
        l_hat = self.state.l_hat
        if l_hat.size == 0 or self.feature_idx.size == 0:
            return np.zeros(self.feature_idx.size)
        pinned = np.asarray(d.xbar_csc[:, l_hat].sum(axis=1)).ravel()
        return pinned[self.feature_idx] / d.n


def build_scaled(d: Dataset, prm: Params, state: ScreeningState) -> ScaledProblem:
    """Restrict the problem to surviving features x undecided samples."""
    if state.n != d.n or state.p != d.p:
        raise ValueError("state shape does not match the dataset")
    fc = state.remaining_features
    dc = state.remaining_samples
    csc = d.xbar_csc
    mask = state.feature_active_mask()
    if fc.size == d.p and dc.size == d.n:
        col_sqnorms = d.col_sqnorms
        scaled_nnz = int(csc.nnz)
    else:
        col_sqnorms = np.empty(dc.size)
        kernels.masked_col_sqnorms(csc.indptr, csc.indices, csc.data, dc, mask, col_sqnorms)
        scaled_nnz = int(np.sum(csc.indptr[dc + 1] - csc.indptr[dc]))
    return ScaledProblem(
        dataset=d,
        state=state,
        prm=prm,
        col_sqnorms=col_sqnorms,
        feature_idx=fc,
        sample_idx=dc,
        feature_mask=mask,
        scaled_nnz=scaled_nnz,
    )


def extend_and_recover(
    d: Dataset, theta_hat: np.ndarray, state: ScreeningState, prm: Params
) -> SolutionPair:
    """Scatter a scaled dual iterate to full length and recover the primal.

    Pinned samples take their certified values; screened features take
    weight zero regardless of what the soft threshold would say.
    """
    theta = np.zeros(d.n)
    theta[state.l_hat] = 1.0
    theta[state.remaining_samples] = theta_hat
    w = np.zeros(d.p)
    fc = state.remaining_features
    if fc.size:
        w[fc] = recover_primal(d, theta, prm, features=fc)
    return SolutionPair(w=w, theta=theta)


@dataclass(frozen=True, eq=False)
class SolveResult:
    theta_hat: np.ndarray
    pair: SolutionPair
    gap_report: GapReport
    epochs: int
    dual_trace: tuple[float, ...] = field(default_factory=tuple)
    """Dual value at each full-gap check, the first taken before any epoch."""

    @property
    def gap(self) -> float:
        return self.gap_report.gap


def solve_scaled(
    sp_: ScaledProblem,
    warm: np.ndarray | None = None,
    cfg: SolverConfig | None = None,
) -> SolveResult:
    """Randomized-permutation coordinate descent on the scaled dual.

    Starts from ``warm`` (clipped to the box) or from the box center. The
    kernel-maintained soft-threshold input is rebuilt from the iterate at
    every gap check to stop incremental drift, and the reported gap is always
    evaluated fresh from the iterate. Raises :class:`NonConvergenceError`
    when ``max_epochs`` epochs leave the full gap above tolerance, or when
    the iterate reaches an exact coordinate-descent fixpoint that still
    misses it.
    """
    cfg = cfg or SolverConfig()
    d, state, prm = sp_.dataset, sp_.state, sp_.prm
    alpha, beta, gamma = prm.alpha, prm.beta, prm.gamma
    tol = cfg.resolve_gap_tol(gamma)
    k = sp_.n_coords
    if warm is None:
        theta_hat = np.full(k, 0.5)
    else:
        if warm.shape[0] != k:
            raise ValueError(f"warm start has length {warm.shape[0]}, expected {k}")
        theta_hat = np.clip(np.asarray(warm, dtype=np.float64), 0.0, 1.0)

    csc, csr = d.xbar_csc, d.xbar_csr
    dc = sp_.sample_idx
    n = d.n
    inv_n = 1.0 / n
    l_count = float(state.l_hat.size)
    check_every = int(max(1, min(_MAX_CHECK_SPACING, (csc.nnz + n) // (sp_.scaled_nnz + k + 1))))

    u_init = np.zeros(d.p)
    if state.l_hat.size:
        pinned = np.zeros(n)
        pinned[state.l_hat] = 1.0
        kernels.scatter_matvec(csc.indptr, csc.indices, csc.data, pinned, inv_n, u_init)
    w_full = np.zeros(d.p)
    u = np.empty(d.p)
    macc = np.empty(n)
    rng = np.random.default_rng(cfg.shuffle_seed)
    pool = np.empty((0, k), dtype=np.int64)
    pool_pos = 0
    trace: list[float] = []
    epochs_done = 0
    stalled = False
    while True:
        primal, dual = kernels.gap_eval(
            csc.indptr, csc.indices, csc.data, csr.indptr, csr.indices, csr.data,
            u_init, dc, theta_hat, l_count, sp_.feature_mask, w_full, u, macc,
            alpha, beta, gamma,
        )
        report = GapReport(primal_value=primal, dual_value=dual)
        trace.append(dual)
        if k == 0 or report.gap <= tol:
            theta_full = np.zeros(n)
            theta_full[state.l_hat] = 1.0
            theta_full[dc] = theta_hat
            pair = SolutionPair(w=w_full.copy(), theta=theta_full)
            return SolveResult(theta_hat, pair, report, epochs_done, tuple(trace))
        if epochs_done >= cfg.max_epochs:
            raise NonConvergenceError(
                f"gap {report.gap!r} still above tolerance {tol!r}"
                f" after {epochs_done} epochs",
                last_gap=report.gap,
            )
        if stalled:
            raise NonConvergenceError(
                f"coordinate-descent fixpoint reached at gap {report.gap!r},"
                f" above tolerance {tol!r} (after {epochs_done} epochs)",
                last_gap=report.gap,
            )
        batch = min(check_every, cfg.max_epochs - epochs_done)
        if pool_pos + batch > pool.shape[0]:
            pool = np.argsort(rng.random((max(batch, _ORDER_POOL), k)), axis=1)
            pool_pos = 0
        orders = pool[pool_pos : pool_pos + batch]
        pool_pos += batch
        v = u.copy()
        if sp_.reduced:
            ran, stalled = kernels.cd_batch_masked(
                csc.indptr, csc.indices, csc.data, dc, sp_.feature_mask,
                sp_.col_sqnorms, v, theta_hat, orders,
                alpha, beta, gamma, float(n),
            )
        else:
            ran, stalled = kernels.cd_batch(
                csc.indptr, csc.indices, csc.data, sp_.col_sqnorms,
                v, theta_hat, orders,
                alpha, beta, gamma, float(n),
            )
        epochs_done += int(ran)


def solve_full(
    d: Dataset,
    prm: Params,
    cfg: SolverConfig | None = None,
    warm_theta: np.ndarray | None = None,
) -> SolveResult:
    """Solve the unscreened problem (empty state) with an optional warm start."""
    state = ScreeningState.empty(d.n, d.p)
    return solve_scaled(build_scaled(d, prm, state), warm=warm_theta, cfg=cfg)
