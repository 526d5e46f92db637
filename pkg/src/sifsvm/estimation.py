"""Screening state and ball estimates of the primal/dual optima.

Given a reference solution at (alpha0, beta) and a target alpha at the same
beta, the optima at the target are confined to explicit balls. Each screened
index tightens the radius of the other problem's ball, which is what lets
the feature and sample rules feed each other.

Ball centers are stored on compacted coordinates (the surviving index set),
never scattered to full length; ``index_map`` records which coordinate each
slot refers to.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .objective import SolutionPair

logger = logging.getLogger(__name__)

__all__ = [
    "ScreeningState",
    "Ball",
    "primal_ball",
    "dual_ball",
    "check_containment",
    "negative_radius_clamps",
    "reset_clamp_counter",
]

_clamp_count = 0


def negative_radius_clamps() -> int:
    """How many ball radii have been clamped up from a negative square."""
    return _clamp_count


def reset_clamp_counter() -> None:
    global _clamp_count
    _clamp_count = 0


def _clamped_sqrt(r2: float) -> float:
    global _clamp_count
    if r2 < 0.0:
        _clamp_count += 1
        logger.debug("clamping negative squared radius %r to 0", r2)
        return 0.0
    return math.sqrt(r2)


def _as_sorted_unique(idx, bound: int, name: str) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64).ravel()
    if idx.size == 0:
        return idx
    out = np.unique(idx)
    if out.size != idx.size:
        raise ValueError(f"duplicate indices in {name}")
    if out[0] < 0 or out[-1] >= bound:
        raise ValueError(f"{name} indices out of range [0, {bound})")
    return out


def _fresh_indices(idx, bound: int, name: str) -> np.ndarray:
    """Sorted-unique int64 view of incoming indices, range-checked."""
    idx = np.asarray(idx, dtype=np.int64).ravel()
    if idx.size == 0:
        return idx
    if idx.size > 1:
        idx = np.unique(idx)
    if idx[0] < 0 or idx[-1] >= bound:
        raise ValueError(f"{name} indices out of range [0, {bound})")
    return idx


def _reject_members(base: np.ndarray, fresh: np.ndarray, message: str) -> None:
    """Raise if any of sorted ``fresh`` already sits in sorted ``base``."""
    if base.size == 0 or fresh.size == 0:
        return
    pos = np.minimum(np.searchsorted(base, fresh), base.size - 1)
    if np.any(base[pos] == fresh):
        raise ValueError(message)


def _merge_sorted(base: np.ndarray, fresh: np.ndarray) -> np.ndarray:
    """Merge two sorted, disjoint index arrays into one sorted array."""
    if fresh.size == 0:
        return base
    if base.size == 0:
        return fresh
    return np.insert(base, np.searchsorted(base, fresh), fresh)


@dataclass(frozen=True, eq=False)
class ScreeningState:
    """Indices certified inactive so far: features ``f_hat``, samples split
    into the low-margin set ``r_hat`` (dual coordinate 0) and the high-margin
    set ``l_hat`` (dual coordinate 1). Sets only ever grow."""

    n: int
    p: int
    f_hat: np.ndarray
    r_hat: np.ndarray
    l_hat: np.ndarray

    @classmethod
    def empty(cls, n: int, p: int) -> "ScreeningState":
        z = np.empty(0, dtype=np.int64)
        return cls(n=n, p=p, f_hat=z, r_hat=z.copy(), l_hat=z.copy())

    def __post_init__(self):
        object.__setattr__(self, "f_hat", _as_sorted_unique(self.f_hat, self.p, "f_hat"))
        object.__setattr__(self, "r_hat", _as_sorted_unique(self.r_hat, self.n, "r_hat"))
        object.__setattr__(self, "l_hat", _as_sorted_unique(self.l_hat, self.n, "l_hat"))
        if np.intersect1d(self.r_hat, self.l_hat).size:
            raise ValueError("a sample cannot be in both r_hat and l_hat")

    @classmethod
    def _trusted(cls, n, p, f_hat, r_hat, l_hat) -> "ScreeningState":
        """Build without revalidating; callers guarantee sorted-unique,
        in-range, disjoint arrays (the growth methods below do)."""
        self = object.__new__(cls)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "f_hat", f_hat)
        object.__setattr__(self, "r_hat", r_hat)
        object.__setattr__(self, "l_hat", l_hat)
        return self

    def _cached(self, key: str, builder):
        val = self.__dict__.get(key)
        if val is None:
            val = builder()
            object.__setattr__(self, key, val)
        return val

    # -- growth ---------------------------------------------------------------

    def with_features(self, idx) -> "ScreeningState":
        fresh = _fresh_indices(idx, self.p, "f_hat")
        if fresh.size == 0:
            return self
        _reject_members(self.f_hat, fresh, "feature already screened")
        return ScreeningState._trusted(
            self.n, self.p, _merge_sorted(self.f_hat, fresh), self.r_hat, self.l_hat
        )

    def with_samples(self, r_idx, l_idx) -> "ScreeningState":
        r_fresh = _fresh_indices(r_idx, self.n, "r_hat")
        l_fresh = _fresh_indices(l_idx, self.n, "l_hat")
        if r_fresh.size == 0 and l_fresh.size == 0:
            return self
        if r_fresh.size and l_fresh.size and np.intersect1d(r_fresh, l_fresh).size:
            raise ValueError("a sample cannot be in both r_hat and l_hat")
        for fresh in (r_fresh, l_fresh):
            _reject_members(self.r_hat, fresh, "sample already screened")
            _reject_members(self.l_hat, fresh, "sample already screened")
        return ScreeningState._trusted(
            self.n, self.p, self.f_hat,
            _merge_sorted(self.r_hat, r_fresh),
            _merge_sorted(self.l_hat, l_fresh),
        )

    # -- derived views (cached; treat returned arrays as read-only) ------------

    @property
    def d_hat(self) -> np.ndarray:
        """All screened samples (both ends), sorted."""
        return self._cached("_d_hat", lambda: np.union1d(self.r_hat, self.l_hat))

    @property
    def remaining_features(self) -> np.ndarray:
        return self._cached(
            "_remaining_features", lambda: np.flatnonzero(self.feature_active_mask())
        )

    @property
    def remaining_samples(self) -> np.ndarray:
        return self._cached(
            "_remaining_samples", lambda: np.flatnonzero(self.sample_status() == 0)
        )

    def feature_active_mask(self) -> np.ndarray:
        def build():
            mask = np.ones(self.p, dtype=bool)
            mask[self.f_hat] = False
            return mask

        return self._cached("_feature_active_mask", build)

    def sample_status(self) -> np.ndarray:
        """Per-sample code: 0 undecided, 1 in r_hat, 2 in l_hat."""

        def build():
            status = np.zeros(self.n, dtype=np.int8)
            status[self.r_hat] = 1
            status[self.l_hat] = 2
            return status

        return self._cached("_sample_status", build)

    def feature_slot_map(self) -> np.ndarray:
        """Full-length map feature id -> slot among ``remaining_features``
        (undefined where screened)."""

        def build():
            pos = np.empty(self.p, dtype=np.int64)
            keep = self.remaining_features
            pos[keep] = np.arange(keep.size, dtype=np.int64)
            return pos

        return self._cached("_feature_slot_map", build)

    def sample_slot_map(self) -> np.ndarray:
        """Full-length map sample id -> slot among ``remaining_samples``
        (undefined where screened)."""

        def build():
            pos = np.empty(self.n, dtype=np.int64)
            keep = self.remaining_samples
            pos[keep] = np.arange(keep.size, dtype=np.int64)
            return pos

        return self._cached("_sample_slot_map", build)

    @property
    def n_screened_features(self) -> int:
        return int(self.f_hat.size)

    @property
    def n_screened_samples(self) -> int:
        return int(self.r_hat.size + self.l_hat.size)

    def __repr__(self) -> str:
        return (
            f"ScreeningState(|f_hat|={self.f_hat.size}, |r_hat|={self.r_hat.size}, "
            f"|l_hat|={self.l_hat.size}, n={self.n}, p={self.p})"
        )


@dataclass(frozen=True, eq=False)
class Ball:
    """A ball on compacted coordinates; ``index_map`` names each slot's
    original coordinate and ``full_length`` the uncompacted dimension."""

    center: np.ndarray
    radius: float
    index_map: np.ndarray
    full_length: int


def primal_ball(ref: SolutionPair, alpha0: float, alpha: float, state: ScreeningState) -> Ball:
    """Ball containing the target primal optimum restricted to surviving features.

    Center ((alpha0+alpha)/(2 alpha)) w0 on the survivors; the squared radius
    starts from ((alpha0-alpha)/(2 alpha))^2 ||w0||^2 and loses the screened
    features' share, so every certified feature shrinks it.
    """
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    w0 = ref.w
    keep = state.remaining_features
    half_sum = (alpha0 + alpha) / (2.0 * alpha)
    half_diff = (alpha0 - alpha) / (2.0 * alpha)
    screened = w0[state.f_hat]
    r2 = half_diff * half_diff * float(w0 @ w0) - half_sum * half_sum * float(
        screened @ screened
    )
    return Ball(
        center=half_sum * w0[keep],
        radius=_clamped_sqrt(r2),
        index_map=keep,
        full_length=state.p,
    )


def dual_ball(
    ref: SolutionPair, alpha0: float, alpha: float, gamma: float, state: ScreeningState
) -> Ball:
    """Ball containing the target dual optimum restricted to undecided samples.

    Screened samples pin their dual coordinates (0 on ``r_hat``, 1 on
    ``l_hat``); each pinned coordinate's distance to the unconstrained center
    is subtracted from the squared radius.
    """
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    theta0 = ref.theta
    keep = state.remaining_samples
    shift = (alpha - alpha0) / (2.0 * gamma * alpha)
    half_sum = (alpha0 + alpha) / (2.0 * alpha)
    half_diff = (alpha0 - alpha) / (2.0 * alpha)
    dev = theta0 - 1.0 / gamma
    r2 = half_diff * half_diff * float(dev @ dev)
    if state.l_hat.size:
        l_gap = ((2.0 * gamma - 1.0) * alpha + alpha0) / (2.0 * gamma * alpha) - half_sum * theta0[state.l_hat]
        r2 -= float(l_gap @ l_gap)
    if state.r_hat.size:
        r_gap = shift + half_sum * theta0[state.r_hat]
        r2 -= float(r_gap @ r_gap)
    return Ball(
        center=shift + half_sum * theta0[keep],
        radius=_clamped_sqrt(r2),
        index_map=keep,
        full_length=state.n,
    )


def check_containment(ball: Ball, point: np.ndarray, slack: float = 0.0) -> tuple[bool, float]:
    """Whether ``point`` lies inside ``ball`` (up to ``slack``), plus the distance.

    ``point`` may be given on full coordinates (it is restricted through the
    ball's index map) or already compacted.
    """
    point = np.asarray(point, dtype=np.float64)
    if point.shape[0] == ball.full_length:
        point = point[ball.index_map]
    elif point.shape[0] != ball.center.shape[0]:
        raise ValueError(
            f"point has length {point.shape[0]}; expected {ball.full_length} "
            f"(full) or {ball.center.shape[0]} (compacted)"
        )
    dist = float(np.linalg.norm(point - ball.center))
    return dist <= ball.radius + slack, dist
