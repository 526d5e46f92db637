"""Inactive-feature and inactive-sample screening rules, and their alternation.

Feature rule: with the dual optimum confined to a ball (c, r) on undecided
samples, feature i is inactive whenever

    s_i = (1/n) (|<row_i restricted, c> + <row_i on l_hat, 1>| + ||row_i restricted|| r)

is at most beta (non-strict). Sample rule: with the primal optimum confined
to a ball on surviving features, the margin of sample i lies in
[l_i, u_i] = 1 - <col_i restricted, c> -+ ||col_i restricted|| r; u_i < 0
pins the dual coordinate to 0, l_i > gamma pins it to 1 (both strict).

``sifs`` alternates the two rules, rebuilding the relevant ball before every
trigger, until one full alternation adds nothing. Screening with only one of
the rules reaches its fixpoint in a single pass, because neither rule's ball
depends on the indices that rule itself adds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import Dataset
from .estimation import Ball, ScreeningState, _clamped_sqrt, dual_ball, primal_ball
from .objective import Params, SolutionPair

__all__ = [
    "ifs_scores",
    "apply_ifs",
    "iss_bounds",
    "apply_iss",
    "TriggerRecord",
    "SifsReport",
    "sifs",
    "screen_once",
    "ORDERS",
]

ORDERS = ("iss-first", "ifs-first")

_EMPTY = np.empty(0, dtype=np.int64)


def ifs_scores(d: Dataset, ball: Ball, state: ScreeningState) -> tuple[np.ndarray, np.ndarray]:
    """Screening scores for every surviving feature, given a dual ball.

    Returns the surviving feature indices and their scores, aligned.
    """
    if ball.index_map is not state.remaining_samples and not np.array_equal(
        ball.index_map, state.remaining_samples
    ):
        raise ValueError("dual ball does not match the state's undecided samples")
    feat_idx = state.remaining_features
    scores = np.empty(feat_idx.size)
    if feat_idx.size == 0:
        return feat_idx, scores
    csr = d.xbar_csr
    kernels.ifs_pass(
        csr.indptr, csr.indices, csr.data,
        feat_idx, state.sample_status(),
        state.sample_slot_map(),
        ball.center, float(ball.radius), float(d.n),
        scores,
    )
    return feat_idx, scores


def apply_ifs(
    feat_idx: np.ndarray, scores: np.ndarray, beta: float, state: ScreeningState
) -> tuple[ScreeningState, np.ndarray]:
    """Fold features whose score is at most beta into the screened set."""
    added = feat_idx[scores <= beta]
    return state.with_features(added), added


def iss_bounds(
    d: Dataset, ball: Ball, state: ScreeningState
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Margin bounds (u, l) for every undecided sample, given a primal ball."""
    if ball.index_map is not state.remaining_features and not np.array_equal(
        ball.index_map, state.remaining_features
    ):
        raise ValueError("primal ball does not match the state's surviving features")
    samp_idx = state.remaining_samples
    u = np.empty(samp_idx.size)
    l = np.empty(samp_idx.size)
    if samp_idx.size == 0:
        return samp_idx, u, l
    csc = d.xbar_csc
    kernels.iss_pass(
        csc.indptr, csc.indices, csc.data,
        samp_idx, state.feature_active_mask(),
        state.feature_slot_map(),
        ball.center, float(ball.radius),
        u, l,
    )
    return samp_idx, u, l


def apply_iss(
    samp_idx: np.ndarray,
    u: np.ndarray,
    l: np.ndarray,
    gamma: float,
    state: ScreeningState,
) -> tuple[ScreeningState, np.ndarray, np.ndarray]:
    """Pin samples with u < 0 to the zero end and l > gamma to the one end."""
    to_r = u < 0.0
    to_l = l > gamma
    if np.any(to_r & to_l):
        raise RuntimeError("sample qualified for both ends; bounds are inconsistent")
    added_r = samp_idx[to_r]
    added_l = samp_idx[to_l]
    return state.with_samples(added_r, added_l), added_r, added_l


@dataclass(frozen=True, eq=False)
class TriggerRecord:
    """What one application of a rule added."""

    kind: str  # "iss" | "ifs"
    added_f: np.ndarray = field(default_factory=lambda: _EMPTY)
    added_r: np.ndarray = field(default_factory=lambda: _EMPTY)
    added_l: np.ndarray = field(default_factory=lambda: _EMPTY)

    @property
    def n_added(self) -> int:
        return int(self.added_f.size + self.added_r.size + self.added_l.size)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "added_f": self.added_f.tolist(),
            "added_r": self.added_r.tolist(),
            "added_l": self.added_l.tolist(),
        }


@dataclass(frozen=True, eq=False)
class SifsReport:
    """Per-trigger log of one screening run.

    ``rounds`` always ends with a trigger that added nothing;
    ``total_triggers`` counts through the last productive trigger (the
    stabilization count compared across rule orders).
    """

    rounds: tuple[TriggerRecord, ...]
    total_triggers: int
    order: str
    alpha0: float
    alpha: float
    beta: float

    @property
    def iss_added_counts(self) -> list[int]:
        return [r.added_r.size + r.added_l.size for r in self.rounds if r.kind == "iss"]

    @property
    def ifs_added_counts(self) -> list[int]:
        return [int(r.added_f.size) for r in self.rounds if r.kind == "ifs"]

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "alpha0": self.alpha0,
            "alpha": self.alpha,
            "beta": self.beta,
            "total_triggers": self.total_triggers,
            "rounds": [r.to_dict() for r in self.rounds],
        }


def _run_trigger(
    d: Dataset,
    ref: SolutionPair,
    alpha0: float,
    prm: Params,
    state: ScreeningState,
    kind: str,
) -> tuple[ScreeningState, TriggerRecord]:
    if kind == "iss":
        ball = primal_ball(ref, alpha0, prm.alpha, state)
        samp_idx, u, l = iss_bounds(d, ball, state)
        state, added_r, added_l = apply_iss(samp_idx, u, l, prm.gamma, state)
        return state, TriggerRecord(kind="iss", added_r=added_r, added_l=added_l)
    if kind == "ifs":
        ball = dual_ball(ref, alpha0, prm.alpha, prm.gamma, state)
        feat_idx, scores = ifs_scores(d, ball, state)
        state, added_f = apply_ifs(feat_idx, scores, prm.beta, state)
        return state, TriggerRecord(kind="ifs", added_f=added_f)
    raise ValueError(f"unknown trigger kind {kind!r}")


def _stabilization_count(rounds: list[TriggerRecord]) -> int:
    for k in range(len(rounds), 0, -1):
        if rounds[k - 1].n_added:
            return k
    return 0


def _check_ref(d: Dataset, ref: SolutionPair, alpha0: float) -> None:
    if ref.w.shape[0] != d.p or ref.theta.shape[0] != d.n:
        raise ValueError("reference solution does not match the dataset's shape")
    if not alpha0 > 0:
        raise ValueError(f"alpha0 must be positive, got {alpha0}")


def sifs(
    d: Dataset,
    ref: SolutionPair,
    alpha0: float,
    prm: Params,
    order: str = "iss-first",
) -> tuple[ScreeningState, SifsReport]:
    """Alternate the sample and feature rules to a joint fixpoint.

    ``ref`` is the solution at (alpha0, prm.beta); screening targets
    (prm.alpha, prm.beta). The relevant ball is rebuilt before every trigger,
    so either rule's additions shrink what the other sees next.

    The loop keeps the screening state in plain masks and index arrays and
    builds the :class:`ScreeningState` once at the end; the ball radii and
    rule decisions are computed exactly as the public per-trigger functions
    compute them. A rule's own additions never change its own inputs (its
    ball depends only on the other side's screening), so a rule that already
    ran at the current state provably adds nothing; its no-op trigger is
    recorded without being executed.
    """
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}, got {order!r}")
    _check_ref(d, ref, alpha0)
    sequence = ("iss", "ifs") if order == "iss-first" else ("ifs", "iss")
    n, p = d.n, d.p
    alpha, beta, gamma = prm.alpha, prm.beta, prm.gamma
    w0, theta0 = ref.w, ref.theta
    half_sum = (alpha0 + alpha) / (2.0 * alpha)
    half_diff = (alpha0 - alpha) / (2.0 * alpha)
    shift = (alpha - alpha0) / (2.0 * gamma * alpha)
    l_const = ((2.0 * gamma - 1.0) * alpha + alpha0) / (2.0 * gamma * alpha)
    dev = theta0 - 1.0 / gamma
    w_r2_base = half_diff * half_diff * float(w0 @ w0)
    th_r2_base = half_diff * half_diff * float(dev @ dev)

    csr, csc = d.xbar_csr, d.xbar_csc
    feat_mask = np.ones(p, dtype=bool)
    samp_status = np.zeros(n, dtype=np.int8)
    keep_f = np.arange(p, dtype=np.int64)
    keep_s = np.arange(n, dtype=np.int64)
    f_slot = np.arange(p, dtype=np.int64)
    s_slot = np.arange(n, dtype=np.int64)
    f_hat = _EMPTY
    r_hat = _EMPTY
    l_hat = _EMPTY

    rounds: list[TriggerRecord] = []
    max_triggers = 2 * (n + p) + 2
    version = 0
    seen = {"iss": -1, "ifs": -1}
    while True:
        added_in_round = 0
        for kind in sequence:
            if seen[kind] == version:
                rounds.append(TriggerRecord(kind=kind))
                continue
            if kind == "iss":
                screened_w = w0[f_hat]
                radius = _clamped_sqrt(
                    w_r2_base - half_sum * half_sum * float(screened_w @ screened_w)
                )
                u = np.empty(keep_s.size)
                l = np.empty(keep_s.size)
                if keep_s.size:
                    kernels.iss_pass(
                        csc.indptr, csc.indices, csc.data,
                        keep_s, feat_mask, f_slot,
                        half_sum * w0[keep_f], float(radius),
                        u, l,
                    )
                to_r = u < 0.0
                to_l = l > gamma
                if np.any(to_r & to_l):
                    raise RuntimeError(
                        "sample qualified for both ends; bounds are inconsistent"
                    )
                rec = TriggerRecord(kind="iss", added_r=keep_s[to_r], added_l=keep_s[to_l])
                if rec.n_added:
                    samp_status[rec.added_r] = 1
                    samp_status[rec.added_l] = 2
                    r_hat = np.flatnonzero(samp_status == 1)
                    l_hat = np.flatnonzero(samp_status == 2)
                    keep_s = keep_s[~(to_r | to_l)]
                    s_slot[keep_s] = np.arange(keep_s.size, dtype=np.int64)
                    version += 1
            else:
                r2 = th_r2_base
                if l_hat.size:
                    l_gap = l_const - half_sum * theta0[l_hat]
                    r2 -= float(l_gap @ l_gap)
                if r_hat.size:
                    r_gap = shift + half_sum * theta0[r_hat]
                    r2 -= float(r_gap @ r_gap)
                radius = _clamped_sqrt(r2)
                scores = np.empty(keep_f.size)
                if keep_f.size:
                    kernels.ifs_pass(
                        csr.indptr, csr.indices, csr.data,
                        keep_f, samp_status, s_slot,
                        shift + half_sum * theta0[keep_s], float(radius), float(n),
                        scores,
                    )
                inactive = scores <= beta
                rec = TriggerRecord(kind="ifs", added_f=keep_f[inactive])
                if rec.n_added:
                    feat_mask[rec.added_f] = False
                    f_hat = np.flatnonzero(~feat_mask)
                    keep_f = keep_f[~inactive]
                    f_slot[keep_f] = np.arange(keep_f.size, dtype=np.int64)
                    version += 1
            seen[kind] = version
            rounds.append(rec)
            added_in_round += rec.n_added
        if added_in_round == 0:
            break
        if len(rounds) > max_triggers:
            raise RuntimeError("screening exceeded its trigger budget without stabilizing")

    state = ScreeningState._trusted(n, p, f_hat, r_hat, l_hat)
    for key, val in (
        ("_remaining_features", keep_f),
        ("_remaining_samples", keep_s),
        ("_feature_active_mask", feat_mask),
        ("_sample_status", samp_status),
        ("_feature_slot_map", f_slot),
        ("_sample_slot_map", s_slot),
    ):
        object.__setattr__(state, key, val)
    report = SifsReport(
        rounds=tuple(rounds),
        total_triggers=_stabilization_count(rounds),
        order=order,
        alpha0=float(alpha0),
        alpha=prm.alpha,
        beta=prm.beta,
    )
    return state, report


def screen_once(
    d: Dataset,
    ref: SolutionPair,
    alpha0: float,
    prm: Params,
    kind: str,
) -> tuple[ScreeningState, SifsReport]:
    """Run a single rule once (its own fixpoint) from an empty state."""
    if kind not in ("iss", "ifs"):
        raise ValueError(f"kind must be 'iss' or 'ifs', got {kind!r}")
    _check_ref(d, ref, alpha0)
    state = ScreeningState.empty(d.n, d.p)
    state, rec = _run_trigger(d, ref, alpha0, prm, state, kind)
    report = SifsReport(
        rounds=(rec,),
        total_triggers=1 if rec.n_added else 0,
        order=kind,
        alpha0=float(alpha0),
        alpha=prm.alpha,
        beta=prm.beta,
    )
    return state, report
