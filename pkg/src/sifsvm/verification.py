"""Independent oracle solves and certification of screened sets.

The oracle never sees a screening state: it solves the full problem to a
tight gap, polishes with projected-gradient steps (a different update path
than the coordinate solver), and reads off the exact inactive sets with a
boundary tolerance ``tau``. Indices within ``tau`` of a decision boundary
are listed as ambiguous and excluded from safety assertions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .estimation import ScreeningState
from .objective import (
    GapReport,
    Params,
    SolutionPair,
    dual_gradient,
    duality_gap,
    margins,
    primal_at_zero,
    recover_primal,
)
from .solver import NonConvergenceError, REFERENCE_GAP_REL, SolverConfig, solve_full

__all__ = [
    "OracleSolution",
    "CertificationReport",
    "oracle_solve",
    "certify",
    "projected_gradient_solve",
    "DEFAULT_TAU",
]

DEFAULT_TAU = 1e-7


@dataclass(frozen=True, eq=False)
class OracleSolution:
    """A tight unscreened solve with its exact index sets.

    ``r/e/l_exact`` partition the samples by margin (below 0, in [0, gamma],
    above gamma) and ``f_exact`` holds the features the l1 term zeroes out;
    boundary-ambiguous indices sit only in the ``ambiguous_*`` lists.
    """

    pair: SolutionPair
    gap_report: GapReport
    f_exact: np.ndarray
    r_exact: np.ndarray
    e_exact: np.ndarray
    l_exact: np.ndarray
    ambiguous_features: np.ndarray
    ambiguous_samples: np.ndarray
    tau: float
    kkt_primal_residual: float
    kkt_dual_residual: float

    @property
    def gap(self) -> float:
        return self.gap_report.gap


def _lipschitz_bound(d: Dataset, prm: Params) -> float:
    """Safe (Frobenius-based) bound on the dual gradient's Lipschitz constant."""
    fro_sq = float(np.sum(d.xbar_csr.data ** 2))
    return fro_sq / (prm.alpha * d.n * d.n) + prm.gamma / d.n


def _pg_step(d: Dataset, prm: Params, theta: np.ndarray, step: float) -> np.ndarray:
    return np.clip(theta - step * dual_gradient(d, theta, prm), 0.0, 1.0)


def oracle_solve(
    d: Dataset,
    prm: Params,
    gap_tol: float | None = None,
    tau: float = DEFAULT_TAU,
    max_epochs: int = 200_000,
    polish_steps: int = 50,
) -> OracleSolution:
    """Solve unscreened to a tight gap and extract the exact index sets."""
    tol = gap_tol if gap_tol is not None else REFERENCE_GAP_REL * primal_at_zero(prm.gamma)
    cfg = SolverConfig(gap_tol=tol, max_epochs=max_epochs)
    result = solve_full(d, prm, cfg)
    theta = result.pair.theta
    best_theta = theta
    best_report = result.gap_report
    step = 1.0 / _lipschitz_bound(d, prm)
    for _ in range(polish_steps):
        theta = _pg_step(d, prm, theta, step)
        w = recover_primal(d, theta, prm)
        report = duality_gap(d, SolutionPair(w=w, theta=theta), prm)
        if report.gap < best_report.gap:
            best_theta, best_report = theta, report
        else:
            break
    theta = best_theta
    w = recover_primal(d, theta, prm)
    pair = SolutionPair(w=w, theta=theta)

    u = np.abs(d.xbar_csr @ theta) / d.n
    f_exact = np.flatnonzero(u <= prm.beta - tau)
    ambiguous_features = np.flatnonzero((u > prm.beta - tau) & (u < prm.beta + tau))
    m = margins(d, w)
    r_exact = np.flatnonzero(m < -tau)
    l_exact = np.flatnonzero(m > prm.gamma + tau)
    e_exact = np.flatnonzero((m >= tau) & (m <= prm.gamma - tau))
    decided = np.zeros(d.n, dtype=bool)
    for idx in (r_exact, l_exact, e_exact):
        decided[idx] = True
    ambiguous_samples = np.flatnonzero(~decided)

    kkt_primal = float(np.max(np.abs(w - recover_primal(d, theta, prm)))) if d.p else 0.0
    kkt_dual = float(np.max(np.abs(theta - np.clip(m / prm.gamma, 0.0, 1.0))))
    return OracleSolution(
        pair=pair,
        gap_report=best_report,
        f_exact=f_exact,
        r_exact=r_exact,
        e_exact=e_exact,
        l_exact=l_exact,
        ambiguous_features=ambiguous_features,
        ambiguous_samples=ambiguous_samples,
        tau=tau,
        kkt_primal_residual=kkt_primal,
        kkt_dual_residual=kkt_dual,
    )


@dataclass(frozen=True, eq=False)
class CertificationReport:
    """Screened sets versus the oracle's exact sets.

    A violation is a screened index that the oracle neither certifies
    inactive nor flags ambiguous. Coverage is the certified share of the
    exact set (1.0 when the exact set is empty and nothing is violated).
    """

    violations_f: np.ndarray
    violations_r: np.ndarray
    violations_l: np.ndarray
    coverage_f: float
    coverage_r: float
    coverage_l: float
    oracle_f_count: int
    oracle_r_count: int
    oracle_l_count: int

    @property
    def ok(self) -> bool:
        return not (
            self.violations_f.size or self.violations_r.size or self.violations_l.size
        )

    @property
    def n_violations(self) -> int:
        return int(self.violations_f.size + self.violations_r.size + self.violations_l.size)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations_f": self.violations_f.tolist(),
            "violations_r": self.violations_r.tolist(),
            "violations_l": self.violations_l.tolist(),
            "coverage_f": self.coverage_f,
            "coverage_r": self.coverage_r,
            "coverage_l": self.coverage_l,
            "oracle_f_count": self.oracle_f_count,
            "oracle_r_count": self.oracle_r_count,
            "oracle_l_count": self.oracle_l_count,
        }


def _coverage(screened: np.ndarray, exact: np.ndarray, violations: int) -> float:
    if exact.size == 0:
        return 1.0 if violations == 0 else 0.0
    return float(np.intersect1d(screened, exact).size) / float(exact.size)


def certify(state: ScreeningState, oracle: OracleSolution) -> CertificationReport:
    """Check every screened index against the oracle's exact sets."""
    allowed_f = np.union1d(oracle.f_exact, oracle.ambiguous_features)
    allowed_r = np.union1d(oracle.r_exact, oracle.ambiguous_samples)
    allowed_l = np.union1d(oracle.l_exact, oracle.ambiguous_samples)
    vf = np.setdiff1d(state.f_hat, allowed_f)
    vr = np.setdiff1d(state.r_hat, allowed_r)
    vl = np.setdiff1d(state.l_hat, allowed_l)
    return CertificationReport(
        violations_f=vf,
        violations_r=vr,
        violations_l=vl,
        coverage_f=_coverage(state.f_hat, oracle.f_exact, vf.size),
        coverage_r=_coverage(state.r_hat, oracle.r_exact, vr.size),
        coverage_l=_coverage(state.l_hat, oracle.l_exact, vl.size),
        oracle_f_count=int(oracle.f_exact.size),
        oracle_r_count=int(oracle.r_exact.size),
        oracle_l_count=int(oracle.l_exact.size),
    )


def projected_gradient_solve(
    d: Dataset,
    prm: Params,
    gap_tol: float | None = None,
    max_iters: int = 500_000,
) -> tuple[SolutionPair, GapReport, int]:
    """Plain projected gradient descent on the full dual.

    A deliberately different solver (fixed step 1/L on all coordinates at
    once) used as an independent cross-check of the coordinate method.
    """
    tol = gap_tol if gap_tol is not None else REFERENCE_GAP_REL * primal_at_zero(prm.gamma)
    step = 1.0 / _lipschitz_bound(d, prm)
    theta = np.full(d.n, 0.5)
    report = None
    for it in range(1, max_iters + 1):
        theta = _pg_step(d, prm, theta, step)
        w = recover_primal(d, theta, prm)
        report = duality_gap(d, SolutionPair(w=w, theta=theta), prm)
        if report.gap <= tol:
            return SolutionPair(w=w, theta=theta), report, it
    raise NonConvergenceError(
        f"projected gradient stalled at gap {report.gap!r} after {max_iters} iterations",
        last_gap=report.gap,
    )
