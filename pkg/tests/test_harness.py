"""Path runner records, metrics, the timing guardrail, and serialization."""

import csv
import json

import numpy as np
import pytest

from sifsvm.boundary import GridSpec
from sifsvm.data import SynthSpec, generate_synthetic
from sifsvm.harness import (
    GUARDRAIL_FLOOR_SECONDS,
    MODES,
    Metrics,
    PathResult,
    RunRecord,
    THREADS_ENV,
    compute_metrics,
    guardrail_violations,
    read_records,
    run_path,
    threads_from_env,
    write_metrics_json,
    write_records,
    write_rejection_csvs,
    write_scaling_csv,
)
from sifsvm.solver import SolverConfig


@pytest.fixture(scope="module")
def bench_data():
    return generate_synthetic(SynthSpec(n=200, p=80, seed=5))


@pytest.fixture(scope="module")
def small_grid():
    return GridSpec(beta_fracs=np.array([0.6, 0.25]), alpha_fracs=np.geomspace(1.0, 0.05, 5))


@pytest.fixture(scope="module")
def baseline_run(bench_data, small_grid, warm_kernels):
    return run_path(bench_data, 0.5, small_grid, mode="none", verify=True)


@pytest.fixture(scope="module")
def sifs_run(bench_data, small_grid, warm_kernels):
    return run_path(bench_data, 0.5, small_grid, mode="sifs", verify=True)


def make_record(j=1, i=1, **kw):
    base = dict(
        j=j, i=i, beta_frac=0.5, alpha_frac=0.5, beta=0.1, alpha=0.2, gamma=0.5,
        mode="sifs", order="iss-first", n=10, p=5,
    )
    base.update(kw)
    return RunRecord(**base)


# ---------------------------------------------------------------------------
# Environment and record plumbing
# ---------------------------------------------------------------------------


def test_threads_from_env(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert threads_from_env() == 1
    monkeypatch.setenv(THREADS_ENV, "4")
    assert threads_from_env() == 4
    monkeypatch.setenv(THREADS_ENV, "0")
    assert threads_from_env() == 1
    monkeypatch.setenv(THREADS_ENV, "-3")
    assert threads_from_env() == 1
    monkeypatch.setenv(THREADS_ENV, "two")
    with pytest.raises(ValueError):
        threads_from_env()


def test_scaling_ratio_trivial_cases():
    assert make_record().scaling_ratio == 0.0
    full = make_record(screened_r=4, screened_l=6, screened_f=5)
    assert full.screened_samples == 10
    assert full.scaling_ratio == 1.0
    part = make_record(screened_r=2, screened_l=3, screened_f=1)
    assert part.scaling_ratio == pytest.approx(1.0 - (5 * 4) / 50.0)


def test_record_roundtrip_ignores_unknown_keys():
    rec = make_record(epochs=7, gap=1e-9, iss_added=[3, 1], certified=True)
    payload = rec.to_dict()
    payload["totally_new_field"] = "ignored"
    back = RunRecord.from_dict(payload)
    assert back == rec


def test_run_path_validation(bench_data):
    with pytest.raises(ValueError):
        run_path(bench_data, 0.5, mode="both")
    with pytest.raises(ValueError):
        run_path(bench_data, 0.5, order="features-then-samples")
    assert MODES == ("none", "iss", "ifs", "sifs")


# ---------------------------------------------------------------------------
# Path runs
# ---------------------------------------------------------------------------


def test_run_shapes_and_meta(baseline_run, small_grid, bench_data):
    res = baseline_run
    n_expected = len(small_grid.beta_fracs) * len(small_grid.alpha_fracs)
    assert len(res.records) == n_expected
    assert res.pairs is None
    assert len(res.certifications) == n_expected
    coords = {(r.j, r.i) for r in res.records}
    assert len(coords) == n_expected
    meta = res.meta
    assert meta["mode"] == "none" and meta["verify"] is True
    assert meta["n"] == bench_data.n and meta["p"] == bench_data.p
    assert meta["threads"] == 1
    assert meta["rejection_denominator"] == "oracle_exact_counts"
    assert meta["dataset"]["seed"] == 5
    # an unscreened run certifies vacuously and screens nothing
    assert all(r.certified for r in res.records)
    assert all(r.screened_f == 0 and r.screened_samples == 0 for r in res.records)
    assert all(r.error is None for r in res.records)


def test_sifs_run_screens_and_certifies(sifs_run, baseline_run):
    recs = sifs_run.records
    assert all(r.certified for r in recs), [r.n_violations for r in recs]
    assert any(r.screened_f > 0 for r in recs)
    assert any(r.screened_samples > 0 for r in recs)
    assert all(r.total_triggers >= 0 for r in recs)
    # warm chains make screened solves no less accurate than the contract
    gap_tol = sifs_run.meta["gap_tol"]
    assert all(r.gap <= gap_tol for r in recs)
    # equivalence against the unscreened baseline at matching points
    base = {(r.j, r.i): r for r in baseline_run.records}
    for rec in recs:
        assert abs(rec.primal_value - base[(rec.j, rec.i)].primal_value) <= 2 * gap_tol


def test_keep_solutions_aligns_pairs(bench_data, warm_kernels):
    spec = GridSpec(beta_fracs=np.array([0.5]), alpha_fracs=np.array([0.8, 0.4]))
    res = run_path(bench_data, 0.5, spec, mode="sifs", keep_solutions=True)
    assert len(res.pairs) == len(res.records) == 2
    for rec, pair in zip(res.records, res.pairs):
        assert pair is not None
        assert pair.theta.shape == (bench_data.n,)
        assert rec.gap <= res.meta["gap_tol"]


def test_threaded_run_matches_single(bench_data, small_grid, sifs_run, monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "2")
    res = run_path(bench_data, 0.5, small_grid, mode="sifs", verify=True)
    assert res.meta["threads"] == 2
    timing_fields = {"screen_seconds", "solve_seconds"}
    for a, b in zip(res.records, sifs_run.records):
        da, db = a.to_dict(), b.to_dict()
        for field in timing_fields:
            da.pop(field), db.pop(field)
        assert da == db


def test_error_records_do_not_stop_the_row(bench_data, warm_kernels):
    spec = GridSpec(beta_fracs=np.array([0.5]), alpha_fracs=np.geomspace(0.9, 0.1, 4))
    cfg = SolverConfig(gap_tol=1e-15, max_epochs=1)
    res = run_path(bench_data, 0.5, spec, mode="none", cfg=cfg, keep_solutions=True)
    assert len(res.records) == 4
    assert all(r.error is not None for r in res.records)
    assert all(r.gap is not None and r.epochs is None for r in res.records)
    assert all(p is None for p in res.pairs)
    metrics = compute_metrics(res.records)
    assert metrics.n_errors == 4 and metrics.n_records == 4
    assert metrics.mean_scaling_ratio == 0.0


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def test_compute_metrics_pure(sifs_run, baseline_run):
    before = [r.to_dict() for r in sifs_run.records]
    compute_metrics(sifs_run.records, baseline_run.records)
    after = [r.to_dict() for r in sifs_run.records]
    assert before == after


def test_speedup_from_crafted_timings():
    base = [make_record(i=i, mode="none", solve_seconds=0.4, screen_seconds=0.0) for i in (1, 2)]
    recs = [
        make_record(i=1, screen_seconds=0.05, solve_seconds=0.15),
        make_record(i=2, screen_seconds=0.05, solve_seconds=0.15),
    ]
    m = compute_metrics(recs, base)
    assert m.speedup == pytest.approx(0.8 / 0.4)
    assert compute_metrics(recs).speedup is None


def test_rejection_ratios_need_oracle_counts():
    recs = [make_record(iss_added=[4, 1], ifs_added=[2])]
    m = compute_metrics(recs)
    assert m.rejection_sample_ratios is None and m.rejection_feature_ratios is None

    with_counts = [
        make_record(iss_added=[4, 1], ifs_added=[2], oracle_n0=5, oracle_p0=2),
        make_record(i=2, iss_added=[2], ifs_added=[3], oracle_n0=4, oracle_p0=2),
    ]
    m2 = compute_metrics(with_counts)
    assert m2.rejection_sample_ratios == pytest.approx([(4 / 5 + 2 / 4) / 2, 1 / 5])
    # ratios cap at 1 even when screening catches ambiguous extras
    assert m2.rejection_feature_ratios == pytest.approx([1.0])

    # oracle counts may come from the verified baseline instead
    base = [make_record(mode="none", oracle_n0=5, oracle_p0=2)]
    m3 = compute_metrics([make_record(iss_added=[4], ifs_added=[1])], base)
    assert m3.rejection_sample_ratios == pytest.approx([4 / 5])
    assert m3.rejection_feature_ratios == pytest.approx([0.5])


def test_metrics_on_real_runs(sifs_run, baseline_run):
    m = compute_metrics(sifs_run.records, baseline_run.records)
    assert m.n_records == len(sifs_run.records) and m.n_errors == 0
    assert 0.0 < m.mean_scaling_ratio <= 1.0
    assert m.speedup is not None and m.speedup > 0.0
    assert m.rejection_sample_ratios is not None
    assert all(0.0 <= v <= 1.0 for v in m.rejection_sample_ratios)
    assert all(0.0 <= v <= 1.0 for v in m.rejection_feature_ratios)


# ---------------------------------------------------------------------------
# Guardrail
# ---------------------------------------------------------------------------


def test_guardrail_floor_semantics():
    floor = GUARDRAIL_FLOOR_SECONDS
    base = [make_record(mode="none", screen_seconds=0.0, solve_seconds=floor / 2)]
    fast = [make_record(screen_seconds=0.0, solve_seconds=1.9 * floor)]
    slow = [make_record(screen_seconds=0.0, solve_seconds=2.1 * floor)]
    assert guardrail_violations(fast, base) == []
    assert guardrail_violations(slow, base) == [(1, 1)]
    # zero floor recovers the raw quotient
    assert guardrail_violations(fast, base, floor_seconds=0.0) == [(1, 1)]


def test_guardrail_above_floor_and_skips():
    base = [
        make_record(i=1, mode="none", solve_seconds=0.010),
        make_record(i=2, mode="none", solve_seconds=0.010, error="boom"),
    ]
    recs = [
        make_record(i=1, screen_seconds=0.005, solve_seconds=0.014),
        make_record(i=2, screen_seconds=0.5, solve_seconds=0.5),  # baseline errored
        make_record(i=3, screen_seconds=0.5, solve_seconds=0.5),  # no baseline point
    ]
    assert guardrail_violations(recs, base) == []
    recs[0].solve_seconds = 0.017
    assert guardrail_violations(recs, base) == [(1, 1)]


def test_guardrail_clean_on_real_runs(sifs_run, baseline_run, bench_data, small_grid):
    first = guardrail_violations(sifs_run.records, baseline_run.records)
    if first:
        # one-shot wall times can take scheduler hits; a real pathology repeats
        rerun = run_path(bench_data, 0.5, small_grid, mode="sifs", verify=False)
        second = set(guardrail_violations(rerun.records, baseline_run.records))
        assert not (set(first) & second), sorted(set(first) & second)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def test_records_roundtrip(tmp_path, sifs_run):
    path = tmp_path / "records.jsonl"
    write_records(path, sifs_run)
    meta, records = read_records(path)
    assert meta == json.loads(json.dumps(sifs_run.meta))
    assert len(records) == len(sifs_run.records)
    assert [r.to_dict() for r in records] == [r.to_dict() for r in sifs_run.records]


def test_scaling_csv(tmp_path, sifs_run):
    path = tmp_path / "scaling.csv"
    write_scaling_csv(sifs_run.records, path)
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["beta_frac", "alpha_frac", "scaling_ratio"]
    assert len(rows) == 1 + len(sifs_run.records)
    for row, rec in zip(rows[1:], sifs_run.records):
        assert float(row[2]) == pytest.approx(rec.scaling_ratio)


def test_rejection_csvs(tmp_path, sifs_run):
    fpath = tmp_path / "rej_features.csv"
    spath = tmp_path / "rej_samples.csv"
    write_rejection_csvs(sifs_run.records, fpath, spath)
    for path in (fpath, spath):
        with path.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:2] == ["beta_frac", "alpha_frac"]
        assert len(rows) > 1
        for row in rows[1:]:
            for cell in row[2:]:
                if cell:
                    assert 0.0 <= float(cell) <= 1.0


def test_metrics_json(tmp_path, sifs_run, baseline_run):
    m = compute_metrics(sifs_run.records, baseline_run.records)
    path = tmp_path / "metrics.json"
    write_metrics_json(m, path, extra={"guardrail_violations": [], "run_meta": {"x": 1}})
    payload = json.loads(path.read_text())
    assert payload["n_records"] == m.n_records
    assert payload["speedup"] == pytest.approx(m.speedup)
    assert payload["guardrail_violations"] == []
    assert payload["run_meta"] == {"x": 1}


def test_pathresult_is_plain_container(sifs_run):
    assert isinstance(sifs_run, PathResult)
    assert isinstance(sifs_run.meta, dict)
    m = Metrics(
        n_records=1, n_errors=0, mean_scaling_ratio=0.5,
        rejection_sample_ratios=None, rejection_feature_ratios=None, speedup=None,
    )
    assert m.to_dict()["mean_scaling_ratio"] == 0.5
