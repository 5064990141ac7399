"""Batch pipeline CLI: ingest, simulate, fit, scores, baselines, metametrics, compare, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import analysis, baselines, data, metametrics, sido, synth
from .inference import FitStore, ModelConfig, fit_hierarchical, load_fit, save_fit

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read_scores_csv(path) -> pd.DataFrame:
    # server "NA" must survive as a string; only truly empty cells become NaN
    return pd.read_csv(path, keep_default_na=False, na_values=[""])


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    manifest = analysis.RunManifest(seed=args.seed)
    try:
        manifest.add_input(args.games)
        with open(args.games) as fh:
            records, rejections = data.parse_game_records(fh)
    except OSError as exc:
        raise CliError(str(exc), EXIT_IO)
    lines_in = len(records) + len(rejections)
    reject_counts: dict[str, int] = {}
    for r in rejections:
        reject_counts[r.reason] = reject_counts.get(r.reason, 0) + 1
    manifest.add_stage("parse", lines_in, len(records), reject_counts)
    clean = data.filter_disconnects(records)
    manifest.add_stage(
        "disconnect_filter", len(records), len(clean), {"DISCONNECT": len(records) - len(clean)}
    )
    report = {
        "lines_in": lines_in,
        "parsed": len(records),
        "retained": len(clean),
        "rejections": [
            {"line": r.line_no, "reason": r.reason, "detail": r.detail} for r in rejections
        ],
    }
    (out / "ingest_report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    (out / "manifest.json").write_text(manifest.to_json())
    if args.strict and rejections:
        raise CliError(f"{len(rejections)} rejected lines", EXIT_VALIDATION)
    print(f"parsed {len(records)}/{lines_in} lines, retained {len(clean)} games")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = synth.load_synth_config(args.config) if args.config else synth.SynthConfig(
        n_accounts=args.n_accounts, n_champions=args.n_champions, seed=args.seed or 0
    )
    if args.seed is not None:
        cfg = synth.SynthConfig(**{**cfg.__dict__, "seed": args.seed})
    out = _out_dir(args)
    truth = synth.generate_truth(cfg)
    pattern = synth.generate_pattern(cfg)
    table = synth.generate_observations(truth, pattern, cfg.seed)
    data.write_observation_csv(table, out / "observations.csv")
    truth_payload = {
        "beta0": truth.beta0,
        "sigma": truth.sigma,
        "beta_dmgt": truth.beta_dmgt,
        "account_effects": truth.account_effects,
        "champion_effects": truth.champion_effects,
    }
    (out / "truth.json").write_text(json.dumps(truth_payload, indent=2, sort_keys=True))
    manifest = analysis.RunManifest(config=cfg.__dict__, seed=cfg.seed)
    manifest.add_stage("simulate", table.n_rows, table.n_rows, {})
    (out / "manifest.json").write_text(manifest.to_json())
    print(f"simulated {table.n_rows} rows for {table.n_accounts} accounts")
    return EXIT_OK


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        has_covariate=args.covariate,
        chains=args.chains,
        warmup=args.warmup,
        draws=args.draws,
        seed=args.seed or 0,
    )


def cmd_fit(args) -> int:
    out = _out_dir(args)
    try:
        table = data.read_observation_csv(args.table)
    except OSError as exc:
        raise CliError(str(exc), EXIT_IO)
    if args.covariate and table.covariate is None:
        raise CliError("table has no covariate column", EXIT_VALIDATION)
    fit = fit_hierarchical(table, _model_config(args))
    fit.identity["scope"] = args.scope
    store = FitStore(out)
    path = store.save(fit, args.scope)
    diag = fit.diagnostics
    for name in sorted(diag.rhat):
        print(f"{name}: rhat={diag.rhat[name]:.4f} ess={diag.ess[name]:.0f}")
    print(f"saved {path}")
    if fit.convergence_warning:
        print("warning: convergence gate not met", file=sys.stderr)
        if args.strict:
            raise CliError("convergence gate failed", EXIT_CONVERGENCE)
    return EXIT_OK


def cmd_scores(args) -> int:
    out = _out_dir(args)
    try:
        player = load_fit(args.player_fit)
        ally = load_fit(args.ally_fit) if args.ally_fit else None
        enemy = load_fit(args.enemy_fit) if args.enemy_fit else None
    except OSError as exc:
        raise CliError(str(exc), EXIT_IO)
    scores, flags = sido.sido_score_table(player, ally, enemy)
    df = analysis.scores_to_frame(scores)
    df.to_csv(out / "scores.csv", index=False, float_format="%.10g")
    for f in flags:
        print(f"flag: {f}")
    print(f"wrote {len(df)} score rows")
    return EXIT_OK


def cmd_baselines(args) -> int:
    out = _out_dir(args)
    rows = []
    if args.table:
        table = data.read_observation_csv(args.table)
        for s in baselines.ba_scores(table, seed=args.seed or 0):
            rows.append(
                {
                    "account_id": s.account_id,
                    "role": table.role.value,
                    "server": table.server.value,
                    "phase": table.phase.value,
                    "stat": table.stat.value,
                    "scope": "BA",
                    "score": s.mean,
                    "sd": s.se,
                    "sign_prob": "",
                    "category": "",
                }
            )
    if args.games:
        with open(args.games) as fh:
            games, _ = data.parse_game_records(fh)
        games = data.filter_disconnects(games)
        phase = data.Phase(args.phase)
        stat = data.Stat(args.stat)
        fit = baselines.fit_plus_minus(
            baselines.pm_design(games, phase, stat), args.ridge_lambda
        )
        for scope, coeffs in (("PM_OFF", fit.offensive), ("PM_DEF", fit.defensive)):
            for acc, v in sorted(coeffs.items()):
                rows.append(
                    {
                        "account_id": acc,
                        "role": "",
                        "server": "",
                        "phase": phase.value,
                        "stat": stat.value,
                        "scope": scope,
                        "score": v,
                        "sd": "",
                        "sign_prob": "",
                        "category": "",
                    }
                )
    if not rows:
        raise CliError("need --table and/or --games", EXIT_VALIDATION)
    pd.DataFrame(rows).to_csv(out / "baseline_scores.csv", index=False, float_format="%.10g")
    print(f"wrote {len(rows)} baseline rows")
    return EXIT_OK


def cmd_metametrics(args) -> int:
    out = _out_dir(args)
    df = _read_scores_csv(args.scores)
    rows = []
    for (scope,), group in df.groupby(["scope"]):
        col = metametrics.MetricColumn(
            name=str(scope),
            scores=dict(zip(group["account_id"].astype(str), group["score"])),
            sampling_variance={
                str(a): float(s) ** 2
                for a, s in zip(group["account_id"], pd.to_numeric(group["sd"], errors="coerce"))
                if np.isfinite(s)
            },
        )
        try:
            d = metametrics.discrimination(col)
            rows.append({"metric": str(scope), "meta_metric": "discrimination", "value": d.value})
        except ValueError:
            pass
    cols = []
    for (scope,), group in df.groupby(["scope"]):
        cols.append(
            metametrics.MetricColumn(
                name=str(scope),
                scores=dict(zip(group["account_id"].astype(str), group["score"])),
            )
        )
    if len(cols) >= 2:
        try:
            for name, v in metametrics.independence(cols).items():
                rows.append({"metric": name, "meta_metric": "independence", "value": v})
        except ValueError:
            pass
    if args.scores_b:
        df_b = _read_scores_csv(args.scores_b)
        for (scope,), group in df.groupby(["scope"]):
            other = df_b[df_b["scope"] == scope]
            if other.empty:
                continue
            try:
                c = metametrics.concordance(
                    dict(zip(group["account_id"].astype(str), group["score"])),
                    dict(zip(other["account_id"].astype(str), other["score"])),
                )
                rows.append({"metric": str(scope), "meta_metric": "stability", "value": c})
            except ValueError:
                pass
    pd.DataFrame(rows).to_csv(out / "metametrics.csv", index=False, float_format="%.10g")
    print(f"wrote {len(rows)} meta-metric rows")
    return EXIT_OK


def cmd_compare(args) -> int:
    out = _out_dir(args)
    df = _read_scores_csv(args.scores)
    accounts = df["account_id"].astype(str).unique()
    labels = data.link_rosters(accounts, args.roster)
    comparisons = analysis.compare_groups(df, labels)
    analysis.write_comparisons_csv(comparisons, out / "comparisons.csv")
    print(f"wrote {len(comparisons)} comparisons")
    return EXIT_OK


def cmd_report(args) -> int:
    out = _out_dir(args)
    manifest = analysis.RunManifest(seed=args.seed)
    scores = None
    comparisons = None
    differential = None
    if args.games:
        manifest.add_input(args.games)
        with open(args.games) as fh:
            games, rejections = data.parse_game_records(fh)
        differential = analysis.differential_summary(games)
    if args.scores:
        manifest.add_input(args.scores)
        scores = _read_scores_csv(args.scores)
    analysis.emit_reports(
        out, manifest, scores=scores, comparisons=comparisons, differential=differential
    )
    print(f"reports written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sidoscore")
    parser.add_argument("--config", default=None, help="TOML config file")
    parser.add_argument("--seed", type=int, default=None, help="root seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--strict", action="store_true", help="fail on validation/convergence warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and validate a game file")
    p.add_argument("games")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("simulate", help="generate a synthetic observation table")
    p.add_argument("--n-accounts", type=int, default=100)
    p.add_argument("--n-champions", type=int, default=20)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the hierarchical model to a table CSV")
    p.add_argument("--table", required=True)
    p.add_argument("--covariate", action="store_true")
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--scope", default="PLAYER", choices=["PLAYER", "ALLY", "ENEMY"])
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("scores", help="emit SIDO scores from saved fits")
    p.add_argument("--player-fit", required=True)
    p.add_argument("--ally-fit", default=None)
    p.add_argument("--enemy-fit", default=None)
    p.set_defaults(func=cmd_scores)

    p = sub.add_parser("baselines", help="basic-average and plus-minus scores")
    p.add_argument("--table", default=None)
    p.add_argument("--games", default=None)
    p.add_argument("--phase", default="P0_7", choices=[ph.value for ph in data.Phase])
    p.add_argument("--stat", default="GOLD", choices=[st.value for st in data.Stat])
    p.add_argument("--ridge-lambda", type=float, default=None)
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("metametrics", help="grade a score table")
    p.add_argument("--scores", required=True)
    p.add_argument("--scores-b", default=None, help="second period for stability")
    p.set_defaults(func=cmd_metametrics)

    p = sub.add_parser("compare", help="pro vs non-pro comparisons")
    p.add_argument("--scores", required=True)
    p.add_argument("--roster", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="emit CSV/JSON/SVG reports")
    p.add_argument("--games", default=None)
    p.add_argument("--scores", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (data.DataError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
