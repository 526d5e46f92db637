"""Command-line interface.

Subcommands: ``synth`` (generate data), ``train`` (single solve),
``path`` (grid run with records), ``verify`` (grid run certified against the
oracle) and ``report`` (metrics/CSVs from saved records). Flags may also be
supplied through ``--config FILE`` (JSON object keyed by long flag names);
explicit flags win over the config file.

Exit codes: 2 for bad flags (argparse usage errors), 1 for data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .backend import backend_name
from .boundary import GridSpec, alpha_max, beta_max, closed_form_reference, log_fracs
from .data import (
    Dataset,
    LibsvmFormatError,
    SynthSpec,
    generate_synthetic,
    load_libsvm,
    save_libsvm,
)
from .harness import (
    MODES,
    compute_metrics,
    guardrail_violations,
    read_records,
    run_path,
    write_metrics_json,
    write_records,
    write_rejection_csvs,
    write_scaling_csv,
)
from .objective import Params, duality_gap
from .screening import ORDERS, screen_once, sifs
from .solver import SolverConfig, build_scaled, solve_full, solve_scaled

logger = logging.getLogger(__name__)


def _parse_fracs(text: str) -> np.ndarray:
    """Either comma-separated fractions or ``log:<start>:<stop>:<count>``."""
    if text.startswith("log:"):
        _, start, stop, count = text.split(":")
        return log_fracs(float(start), float(stop), int(count))
    return np.asarray([float(tok) for tok in text.split(",") if tok], dtype=np.float64)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    payload = json.loads(Path(path).read_text())
    if not isinstance(payload, dict):
        raise ValueError("config file must hold a JSON object")
    return {key.replace("-", "_"): value for key, value in payload.items()}


def _setting(args: argparse.Namespace, config: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return value if value is not None else default


def _solver_config(args, config) -> SolverConfig:
    return SolverConfig(
        gap_tol=_setting(args, config, "gap_tol"),
        shuffle_seed=int(_setting(args, config, "seed", 0)),
    )


def _grid_spec(args, config, parser) -> GridSpec:
    beta = _setting(args, config, "beta_fracs", "log:1:0.05:10")
    alpha = _setting(args, config, "alpha_fracs", "log:1:0.01:100")
    try:
        return GridSpec(
            beta_fracs=_parse_fracs(beta) if isinstance(beta, str) else np.asarray(beta),
            alpha_fracs=_parse_fracs(alpha) if isinstance(alpha, str) else np.asarray(alpha),
        )
    except ValueError as exc:
        parser.error(str(exc))


def _gamma(args, config, parser) -> float:
    gamma = float(_setting(args, config, "gamma", 0.5))
    if not 0.0 < gamma < 1.0:
        parser.error(f"--gamma must lie in (0, 1), got {gamma}")
    return gamma


def _load_data(args, config) -> Dataset:
    path = _setting(args, config, "data")
    if not path:
        raise ValueError("--data is required (flag or config file)")
    return load_libsvm(path)


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_synth(args, config, parser) -> int:
    spec = SynthSpec(
        n=int(_setting(args, config, "n", 1000)),
        p=int(_setting(args, config, "p", 200)),
        eta=float(_setting(args, config, "eta", 0.02)),
        mu_scale=float(_setting(args, config, "mu_scale", 1.5)),
        informative_fraction=float(_setting(args, config, "informative_fraction", 0.02)),
        seed=int(_setting(args, config, "seed", 0)),
    )
    out = _setting(args, config, "out")
    if not out:
        parser.error("--out is required for synth")
    d = generate_synthetic(spec)
    save_libsvm(d, out)
    print(f"wrote {d.n} samples x {d.p} features ({d.nnz} nonzeros) to {out}")
    return 0


def _cmd_train(args, config, parser) -> int:
    d = _load_data(args, config)
    gamma = _gamma(args, config, parser)
    alpha = _setting(args, config, "alpha")
    beta = _setting(args, config, "beta")
    if alpha is None or beta is None:
        parser.error("--alpha and --beta are required for train")
    mode = _setting(args, config, "mode", "none")
    order = _setting(args, config, "order", "iss-first")
    try:
        prm = Params(alpha=float(alpha), beta=float(beta), gamma=gamma)
    except ValueError as exc:
        parser.error(str(exc))
    cfg = _solver_config(args, config)
    am = alpha_max(d, prm.beta, prm.gamma)
    screened = {"features": 0, "samples": 0}
    if prm.alpha >= am:
        pair = closed_form_reference(d, prm.alpha, prm.beta, prm.gamma)
        report = duality_gap(d, pair, prm)
        epochs = 0
    elif mode == "none":
        result = solve_full(d, prm, cfg)
        pair, report, epochs = result.pair, result.gap_report, result.epochs
    else:
        ref = closed_form_reference(d, am, prm.beta, prm.gamma)
        if mode == "sifs":
            state, _ = sifs(d, ref, am, prm, order=order)
        else:
            state, _ = screen_once(d, ref, am, prm, kind=mode)
        scaled = build_scaled(d, prm, state)
        result = solve_scaled(scaled, warm=ref.theta[scaled.sample_idx], cfg=cfg)
        pair, report, epochs = result.pair, result.gap_report, result.epochs
        screened = {
            "features": state.n_screened_features,
            "samples": state.n_screened_samples,
        }
    _emit(
        {
            "alpha": prm.alpha,
            "beta": prm.beta,
            "gamma": prm.gamma,
            "mode": mode,
            "alpha_max": am,
            "beta_max": beta_max(d),
            "primal": report.primal_value,
            "dual": report.dual_value,
            "gap": report.gap,
            "epochs": epochs,
            "nnz_w": int(np.count_nonzero(pair.w)),
            "screened": screened,
            "backend": backend_name(),
        },
        _setting(args, config, "out"),
    )
    return 0


def _run_grid(args, config, parser, verify: bool):
    d = _load_data(args, config)
    gamma = _gamma(args, config, parser)
    mode = _setting(args, config, "mode", "sifs")
    order = _setting(args, config, "order", "iss-first")
    spec = _grid_spec(args, config, parser)
    cfg = _solver_config(args, config)
    return run_path(
        d, gamma, spec=spec, mode=mode, order=order, cfg=cfg,
        verify=verify or bool(_setting(args, config, "verify", False)),
    )


def _cmd_path(args, config, parser) -> int:
    result = _run_grid(args, config, parser, verify=False)
    out = _setting(args, config, "out")
    if out:
        write_records(out, result)
        print(f"wrote {len(result.records)} records to {out}")
    else:
        metrics = compute_metrics(result.records)
        _emit({"meta": result.meta, "metrics": metrics.to_dict()}, None)
    return 0


def _cmd_verify(args, config, parser) -> int:
    result = _run_grid(args, config, parser, verify=True)
    total = sum(rec.n_violations or 0 for rec in result.records)
    payload = {
        "meta": result.meta,
        "all_certified": all(rec.certified for rec in result.records if rec.error is None),
        "total_violations": total,
        "points": [
            {
                "beta_frac": rec.beta_frac,
                "alpha_frac": rec.alpha_frac,
                "certified": rec.certified,
                "n_violations": rec.n_violations,
                "screened_features": rec.screened_f,
                "screened_samples": rec.screened_r + rec.screened_l,
                "oracle_p0": rec.oracle_p0,
                "oracle_n0": rec.oracle_n0,
                "error": rec.error,
            }
            for rec in result.records
        ],
    }
    _emit(payload, _setting(args, config, "out"))
    records_out = _setting(args, config, "records_out")
    if records_out:
        write_records(records_out, result)
    print(
        f"certified {sum(1 for r in result.records if r.certified)} / "
        f"{len(result.records)} points, {total} violations"
    )
    return 0


def _cmd_report(args, config, parser) -> int:
    records_path = _setting(args, config, "records")
    if not records_path:
        parser.error("--records is required for report")
    meta, records = read_records(records_path)
    baseline = None
    baseline_path = _setting(args, config, "baseline")
    if baseline_path:
        _, baseline = read_records(baseline_path)
    out_dir = Path(_setting(args, config, "out_dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = compute_metrics(records, baseline_records=baseline)
    write_scaling_csv(records, out_dir / "scaling.csv")
    write_rejection_csvs(
        records,
        out_dir / "rejection_features.csv",
        out_dir / "rejection_samples.csv",
        baseline_records=baseline,
    )
    extra = {"run_meta": meta}
    if baseline is not None:
        extra["guardrail_violations"] = guardrail_violations(records, baseline)
    write_metrics_json(metrics, out_dir / "metrics.json", extra=extra)
    print(f"wrote scaling.csv, rejection_features.csv, rejection_samples.csv, metrics.json to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON file with defaults for any flag")
    sub.add_argument("--out", help="output file (defaults to stdout where applicable)")
    sub.add_argument("--seed", type=int, help="RNG seed (solver shuffles, synthesis)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sifsvm",
        description="Safe simultaneous feature/sample screening for sparse SVMs",
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic LibSVM file")
    p_synth.add_argument("--n", type=int)
    p_synth.add_argument("--p", type=int)
    p_synth.add_argument("--eta", type=float)
    p_synth.add_argument("--mu-scale", dest="mu_scale", type=float)
    p_synth.add_argument(
        "--informative-fraction", dest="informative_fraction", type=float
    )
    _add_common(p_synth)

    def add_problem_flags(p, with_grid: bool):
        p.add_argument("--data", help="LibSVM file (.gz supported)")
        p.add_argument("--gamma", type=float)
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--order", choices=list(ORDERS))
        p.add_argument("--gap-tol", dest="gap_tol", type=float)
        if with_grid:
            p.add_argument(
                "--beta-fracs", dest="beta_fracs",
                help="comma list or log:<start>:<stop>:<count>",
            )
            p.add_argument(
                "--alpha-fracs", dest="alpha_fracs",
                help="comma list or log:<start>:<stop>:<count>",
            )
        _add_common(p)

    p_train = sub.add_parser("train", help="solve one (alpha, beta) problem")
    p_train.add_argument("--alpha", type=float)
    p_train.add_argument("--beta", type=float)
    add_problem_flags(p_train, with_grid=False)

    p_path = sub.add_parser("path", help="run a screening mode over the grid")
    add_problem_flags(p_path, with_grid=True)
    p_path.add_argument("--verify", action="store_true", default=None,
                        help="also certify each point against the oracle")

    p_verify = sub.add_parser("verify", help="grid run certified against the oracle")
    add_problem_flags(p_verify, with_grid=True)
    p_verify.add_argument("--records-out", dest="records_out",
                          help="also dump the run records (JSONL)")

    p_report = sub.add_parser("report", help="metrics and CSVs from saved records")
    p_report.add_argument("--records", help="records JSONL from a path run")
    p_report.add_argument("--baseline", help="mode=none records for speedup")
    p_report.add_argument("--out-dir", dest="out_dir")
    _add_common(p_report)

    return parser


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "path": _cmd_path,
    "verify": _cmd_verify,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level))
    try:
        config = _load_config(getattr(args, "config", None))
        return _COMMANDS[args.command](args, config, parser)
    except (OSError, LibsvmFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
