"""IFS/ISS rules and the alternating fixpoint, checked against oracles."""

import numpy as np
import pytest

from conftest import random_dataset
from sifsvm.boundary import alpha_max, beta_max, closed_form_reference
from sifsvm.data import SynthSpec, generate_synthetic
from sifsvm.estimation import ScreeningState, dual_ball, primal_ball
from sifsvm.objective import Params, SolutionPair
from sifsvm.screening import (
    apply_ifs,
    apply_iss,
    ifs_scores,
    iss_bounds,
    screen_once,
    sifs,
)
from sifsvm.verification import oracle_solve


def alternate_naively(d, ref, alpha0, prm, order):
    """Reference fixpoint loop built only from the public one-trigger ops.

    Recomputes the matching ball before every trigger and stops when a full
    alternation adds nothing, mirroring the algorithm's repeat-until clause.
    """
    state = ScreeningState.empty(d.n, d.p)
    kinds = ("iss", "ifs") if order == "iss-first" else ("ifs", "iss")
    while True:
        added = 0
        for kind in kinds:
            if kind == "iss":
                ball = primal_ball(ref, alpha0, prm.alpha, state)
                samp_idx, u, l = iss_bounds(d, ball, state)
                state, add_r, add_l = apply_iss(samp_idx, u, l, prm.gamma, state)
                added += add_r.size + add_l.size
            else:
                ball = dual_ball(ref, alpha0, prm.alpha, prm.gamma, state)
                feat_idx, scores = ifs_scores(d, ball, state)
                state, add_f = apply_ifs(feat_idx, scores, prm.beta, state)
                added += add_f.size
        if added == 0:
            return state


_ORACLE_CACHE = {}


def cached_oracle(d, prm):
    key = (id(d), round(prm.alpha, 12), round(prm.beta, 12), prm.gamma)
    if key not in _ORACLE_CACHE:
        _ORACLE_CACHE[key] = oracle_solve(d, prm)
    return _ORACLE_CACHE[key]


def grid_cases(d, gamma, n_beta=3, n_alpha=4):
    """(ref, alpha0, prm) triples walking short warm-started chains."""
    bm = beta_max(d)
    cases = []
    for bf in np.geomspace(0.9, 0.15, n_beta):
        beta = float(bf * bm)
        am = alpha_max(d, beta, gamma)
        ref = closed_form_reference(d, am, beta, gamma)
        alpha0 = am
        for af in np.geomspace(0.7, 0.05, n_alpha):
            alpha = float(af * am)
            prm = Params(alpha=alpha, beta=beta, gamma=gamma)
            cases.append((ref, alpha0, prm))
            ref = cached_oracle(d, prm).pair
            alpha0 = alpha
    return cases


# ---------------------------------------------------------------------------
# Single-rule scores and bounds
# ---------------------------------------------------------------------------


def test_exact_reference_recovers_oracle_sets(small):
    d = small
    gamma = 0.5
    beta = 0.4 * beta_max(d)
    alpha = 0.3 * alpha_max(d, beta, gamma)
    prm = Params(alpha=alpha, beta=beta, gamma=gamma)
    oracle = oracle_solve(d, prm)
    state = ScreeningState.empty(d.n, d.p)

    # radius-0 dual ball at the optimum: scores reduce to |<xbar_row, theta*>| / n
    db = dual_ball(oracle.pair, alpha, alpha, gamma, state)
    assert db.radius == 0.0
    feat_idx, scores = ifs_scores(d, db, state)
    u = np.abs(d.xbar_csr.toarray() @ oracle.pair.theta) / d.n
    np.testing.assert_allclose(scores, u, rtol=1e-10, atol=1e-12)
    screened = feat_idx[scores <= beta]
    assert np.array_equal(
        np.setdiff1d(screened, np.union1d(oracle.f_exact, oracle.ambiguous_features)),
        [],
    )
    assert np.intersect1d(screened, oracle.f_exact).size == oracle.f_exact.size

    # radius-0 primal ball: bounds collapse to the true margins
    pb = primal_ball(oracle.pair, alpha, alpha, state)
    samp_idx, ub, lb = iss_bounds(d, pb, state)
    m = 1.0 - d.xbar_csr.toarray().T @ oracle.pair.w
    np.testing.assert_allclose(ub, m, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(lb, m, rtol=1e-10, atol=1e-12)
    _, add_r, add_l = apply_iss(samp_idx, ub, lb, gamma, state)
    assert np.intersect1d(add_r, oracle.r_exact).size == oracle.r_exact.size
    assert np.intersect1d(add_l, oracle.l_exact).size == oracle.l_exact.size


def test_zero_feature_row_always_screened():
    d = random_dataset(15, 8, seed=1)
    # feature 3 has an all-zero row in a copy of the data
    dense = d.xbar_csr.toarray()
    dense[3, :] = 0.0
    import scipy.sparse as sp

    from sifsvm.data import Dataset

    d2 = Dataset(sp.csr_matrix(dense), d.labels)
    state = ScreeningState.empty(d2.n, d2.p)
    ball = dual_ball(
        SolutionPair(w=np.zeros(d2.p), theta=np.full(d2.n, 0.5)), 1.0, 0.5, 0.5, state
    )
    feat_idx, scores = ifs_scores(d2, ball, state)
    assert scores[np.flatnonzero(feat_idx == 3)[0]] == 0.0
    _, added = apply_ifs(feat_idx, scores, beta=1e-12, state=state)
    assert 3 in added


def test_ifs_scores_with_all_samples_decided():
    d = random_dataset(10, 6, seed=2)
    l_hat = np.arange(d.n // 2)
    r_hat = np.arange(d.n // 2, d.n)
    state = ScreeningState.empty(d.n, d.p).with_samples(r_hat, l_hat)
    ref = SolutionPair(w=np.zeros(d.p), theta=np.full(d.n, 0.5))
    ball = dual_ball(ref, 1.0, 1.0, 0.5, state)
    feat_idx, scores = ifs_scores(d, ball, state)
    dense = d.xbar_csr.toarray()
    expected = np.abs(dense[:, l_hat].sum(axis=1)) / d.n
    np.testing.assert_allclose(scores, expected[feat_idx], rtol=1e-12, atol=1e-15)


def test_iss_bounds_zero_column_and_empty_feature_set():
    d = random_dataset(12, 7, seed=3)
    dense = d.xbar_csr.toarray()
    dense[:, 4] = 0.0
    import scipy.sparse as sp

    from sifsvm.data import Dataset

    d2 = Dataset(sp.csr_matrix(dense), d.labels)
    state = ScreeningState.empty(d2.n, d2.p)
    ref = SolutionPair(w=np.ones(d2.p), theta=np.full(d2.n, 0.5))
    ball = primal_ball(ref, 1.0, 0.8, state)
    samp_idx, u, l = iss_bounds(d2, ball, state)
    slot = np.flatnonzero(samp_idx == 4)[0]
    assert u[slot] == 1.0 and l[slot] == 1.0
    assert np.all(l <= u + 1e-15)
    # zero column: l = 1 > gamma pins the sample to the one-end
    _, _, add_l = apply_iss(samp_idx, u, l, 0.5, state)
    assert 4 in add_l

    # with every feature screened, bounds collapse to exactly 1
    all_f = ScreeningState.empty(d2.n, d2.p).with_features(np.arange(d2.p))
    ball2 = primal_ball(ref, 1.0, 0.8, all_f)
    _, u2, l2 = iss_bounds(d2, ball2, all_f)
    np.testing.assert_array_equal(u2, np.ones(d2.n))
    np.testing.assert_array_equal(l2, np.ones(d2.n))


def test_apply_rules_boundary_semantics():
    state = ScreeningState.empty(4, 3)
    feat_idx = np.arange(3)
    # non-strict comparison for features: score == beta screens
    s2, added = apply_ifs(feat_idx, np.array([0.5, 0.2, 0.7]), beta=0.5, state=state)
    np.testing.assert_array_equal(added, [0, 1])
    # unchanged when every score exceeds beta
    s3, added3 = apply_ifs(feat_idx, np.array([0.6, 0.7, 0.8]), beta=0.5, state=state)
    assert s3 is state and added3.size == 0

    samp_idx = np.arange(4)
    # strict comparisons for samples: u == 0 and l == gamma do NOT screen
    s4, add_r, add_l = apply_iss(
        samp_idx,
        u=np.array([0.0, -1e-12, 0.4, 0.2]),
        l=np.array([-0.5, -1.0, 0.5, 0.2]),
        gamma=0.5,
        state=state,
    )
    np.testing.assert_array_equal(add_r, [1])
    assert add_l.size == 0
    # all bounds inside [0, gamma]: unchanged
    s5, r5, l5 = apply_iss(
        samp_idx, u=np.full(4, 0.3), l=np.full(4, 0.1), gamma=0.5, state=state
    )
    assert s5 is state and r5.size == 0 and l5.size == 0
    # inconsistent bounds qualifying one sample for both ends
    with pytest.raises(RuntimeError):
        apply_iss(
            samp_idx,
            u=np.array([-0.1, 1.0, 1.0, 1.0]),
            l=np.array([0.6, 0.0, 0.0, 0.0]),
            gamma=0.5,
            state=state,
        )


def test_single_rule_fixpoint_in_one_pass(small):
    # neither rule's ball depends on its own additions, so rerunning a rule
    # right after itself (ball rebuilt on the grown state) adds nothing
    d = small
    gamma = 0.5
    beta = 0.3 * beta_max(d)
    am = alpha_max(d, beta, gamma)
    ref = closed_form_reference(d, am, beta, gamma)
    prm = Params(alpha=0.9 * am, beta=beta, gamma=gamma)
    state = ScreeningState.empty(d.n, d.p)

    ball = dual_ball(ref, am, prm.alpha, gamma, state)
    s1, added1 = apply_ifs(*ifs_scores(d, ball, state), prm.beta, state)
    ball2 = dual_ball(ref, am, prm.alpha, gamma, s1)
    s2, added2 = apply_ifs(*ifs_scores(d, ball2, s1), prm.beta, s1)
    assert added1.size > 0 and added2.size == 0 and s2 is s1

    pball = primal_ball(ref, am, prm.alpha, state)
    t1, add_r, add_l = apply_iss(*iss_bounds(d, pball, state), gamma, state)
    pball2 = primal_ball(ref, am, prm.alpha, t1)
    t2, r2, l2 = apply_iss(*iss_bounds(d, pball2, t1), gamma, t1)
    assert add_r.size + add_l.size > 0 and r2.size == 0 and l2.size == 0 and t2 is t1


def test_ball_state_mismatch_rejected(small):
    d = small
    state = ScreeningState.empty(d.n, d.p)
    grown = state.with_features([0])
    ref = SolutionPair(w=np.zeros(d.p), theta=np.full(d.n, 0.5))
    with pytest.raises(ValueError):
        ifs_scores(d, dual_ball(ref, 1.0, 1.0, 0.5, state.with_samples([0], [])), state)
    with pytest.raises(ValueError):
        iss_bounds(d, primal_ball(ref, 1.0, 1.0, grown), state)


# ---------------------------------------------------------------------------
# The alternating fixpoint
# ---------------------------------------------------------------------------


def test_sifs_matches_naive_alternation(small):
    d = small
    for ref, alpha0, prm in grid_cases(d, gamma=0.3):
        for order in ("iss-first", "ifs-first"):
            state, report = sifs(d, ref, alpha0, prm, order=order)
            expected = alternate_naively(d, ref, alpha0, prm, order)
            np.testing.assert_array_equal(state.f_hat, expected.f_hat)
            np.testing.assert_array_equal(state.r_hat, expected.r_hat)
            np.testing.assert_array_equal(state.l_hat, expected.l_hat)
            assert report.rounds[-1].n_added == 0
            assert report.total_triggers <= 2 * (d.n + d.p) + 2


def test_sifs_order_independence(small):
    d = small
    for ref, alpha0, prm in grid_cases(d, gamma=0.5, n_beta=2, n_alpha=3):
        s_a, rep_a = sifs(d, ref, alpha0, prm, order="iss-first")
        s_b, rep_b = sifs(d, ref, alpha0, prm, order="ifs-first")
        np.testing.assert_array_equal(s_a.f_hat, s_b.f_hat)
        np.testing.assert_array_equal(s_a.r_hat, s_b.r_hat)
        np.testing.assert_array_equal(s_a.l_hat, s_b.l_hat)
        assert abs(rep_a.total_triggers - rep_b.total_triggers) <= 1


def test_sifs_monotone_growth_across_rounds(small):
    d = small
    gamma = 0.5
    beta = 0.25 * beta_max(d)
    am = alpha_max(d, beta, gamma)
    ref = closed_form_reference(d, am, beta, gamma)
    prm = Params(alpha=0.1 * am, beta=beta, gamma=gamma)
    _, report = sifs(d, ref, am, prm)
    state = ScreeningState.empty(d.n, d.p)
    sizes = (0, 0, 0)
    for rec in report.rounds:
        if rec.kind == "ifs":
            state = state.with_features(rec.added_f)
        else:
            state = state.with_samples(rec.added_r, rec.added_l)
        now = (state.f_hat.size, state.r_hat.size, state.l_hat.size)
        assert all(a >= b for a, b in zip(now, sizes))
        sizes = now


def test_sifs_at_reference_alpha_recovers_oracle_sets(small):
    d = small
    gamma = 0.5
    beta = 0.35 * beta_max(d)
    alpha = 0.25 * alpha_max(d, beta, gamma)
    prm = Params(alpha=alpha, beta=beta, gamma=gamma)
    oracle = oracle_solve(d, prm)
    state, report = sifs(d, oracle.pair, alpha, prm)
    # zero-radius balls: fixpoint after the first full alternation
    assert report.total_triggers <= 2
    assert np.intersect1d(state.f_hat, oracle.f_exact).size == oracle.f_exact.size
    assert np.intersect1d(state.r_hat, oracle.r_exact).size == oracle.r_exact.size
    assert np.intersect1d(state.l_hat, oracle.l_exact).size == oracle.l_exact.size


def test_sifs_above_beta_max_screens_everything(small):
    d = small
    gamma = 0.5
    beta = 1.2 * beta_max(d)
    ref = closed_form_reference(d, 1.0, beta, gamma)  # w* = 0, theta* = 1
    prm = Params(alpha=1.0, beta=beta, gamma=gamma)
    state, _ = sifs(d, ref, 1.0, prm)
    assert state.r_hat.size + state.l_hat.size == d.n
    np.testing.assert_array_equal(state.l_hat, np.arange(d.n))
    np.testing.assert_array_equal(state.f_hat, np.arange(d.p))


def test_sifs_safety_against_oracle(small):
    d = small
    gamma = 0.5
    tol = 1e-7
    for ref, alpha0, prm in grid_cases(d, gamma=gamma, n_beta=2, n_alpha=3):
        state, _ = sifs(d, ref, alpha0, prm)
        oracle = cached_oracle(d, prm)
        w = oracle.pair.w
        m = 1.0 - d.xbar_csr.toarray().T @ w
        assert np.all(np.abs(w[state.f_hat]) <= tol)
        assert np.all(m[state.r_hat] < tol)
        assert np.all(m[state.l_hat] > gamma - tol)


def test_sifs_superset_of_single_rules(small):
    d = small
    strict_somewhere = False
    for ref, alpha0, prm in grid_cases(d, gamma=0.5, n_beta=2, n_alpha=4):
        full, _ = sifs(d, ref, alpha0, prm)
        ifs_only, _ = screen_once(d, ref, alpha0, prm, kind="ifs")
        iss_only, _ = screen_once(d, ref, alpha0, prm, kind="iss")
        assert np.intersect1d(full.f_hat, ifs_only.f_hat).size == ifs_only.f_hat.size
        singles = np.union1d(iss_only.r_hat, iss_only.l_hat)
        assert np.intersect1d(full.d_hat, singles).size == singles.size
        if full.f_hat.size > ifs_only.f_hat.size or full.d_hat.size > singles.size:
            strict_somewhere = True
    assert strict_somewhere


def test_screen_once_validation_and_trigger_counts(small):
    d = small
    gamma = 0.5
    beta = 0.3 * beta_max(d)
    am = alpha_max(d, beta, gamma)
    ref = closed_form_reference(d, am, beta, gamma)
    prm = Params(alpha=0.5 * am, beta=beta, gamma=gamma)
    with pytest.raises(ValueError):
        screen_once(d, ref, am, prm, kind="both")
    state, report = screen_once(d, ref, am, prm, kind="iss")
    assert report.order == "iss"
    assert len(report.rounds) == 1
    assert report.total_triggers == (1 if report.rounds[0].n_added else 0)
    assert state.f_hat.size == 0  # ISS never touches features


def test_sifs_input_validation(small):
    d = small
    ref = SolutionPair(w=np.zeros(d.p), theta=np.full(d.n, 0.5))
    prm = Params(alpha=1.0, beta=0.5, gamma=0.5)
    with pytest.raises(ValueError):
        sifs(d, ref, 1.0, prm, order="feature-first")
    with pytest.raises(ValueError):
        sifs(d, ref, -1.0, prm)
    bad = SolutionPair(w=np.zeros(d.p + 1), theta=np.full(d.n, 0.5))
    with pytest.raises(ValueError):
        sifs(d, bad, 1.0, prm)


def test_sifs_report_serializes(small):
    d = small
    gamma = 0.5
    beta = 0.3 * beta_max(d)
    am = alpha_max(d, beta, gamma)
    ref = closed_form_reference(d, am, beta, gamma)
    prm = Params(alpha=0.2 * am, beta=beta, gamma=gamma)
    _, report = sifs(d, ref, am, prm)
    payload = report.to_dict()
    assert payload["total_triggers"] == report.total_triggers
    assert len(payload["rounds"]) == len(report.rounds)
    import json

    json.dumps(payload)  # JSON-serializable end to end
