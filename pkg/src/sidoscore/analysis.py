"""Group comparisons, hypothesis tests, prediction error, and report emission."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .data import GameRecord, ObservationTable, Phase, RosterLabel, Stat, Team, phase_difference
from .inference import PosteriorFit, predict


class AnalysisError(ValueError):
    pass


def welch_one_sided(
    group_a: Sequence[float], group_b: Sequence[float]
) -> tuple[float, float]:
    """Welch t-test of H1: mean(group_a) > mean(group_b). Returns (t, p)."""
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise AnalysisError("each group needs at least 2 values")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0 or vb == 0:
        raise AnalysisError("degenerate group variance")
    se2 = va / a.size + vb / b.size
    t = (a.mean() - b.mean()) / np.sqrt(se2)
    dof = se2**2 / (
        (va / a.size) ** 2 / (a.size - 1) + (vb / b.size) ** 2 / (b.size - 1)
    )
    p = float(stats.t.sf(t, dof))
    return float(t), p


def fdr_adjust(p_values: Sequence[float]) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, original order preserved."""
    p = np.asarray(p_values, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise AnalysisError("p-values must lie in [0, 1]")
    m = p.size
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    adjusted = np.minimum.accumulate(ranked[::-1])[::-1]
    adjusted = np.minimum(adjusted, 1.0)
    out = np.empty(m)
    out[order] = adjusted
    return out


@dataclass(frozen=True)
class GroupComparison:
    cell: dict
    mean_pro: float
    mean_nonpro: float
    normalized_diff: float
    t_stat: float
    p_raw: float
    p_adjusted: float = float("nan")
    n_pro: int = 0
    n_nonpro: int = 0
    skipped: bool = False
    skip_reason: str = ""


def compare_groups(
    score_rows: pd.DataFrame,
    labels: Sequence[RosterLabel],
) -> list[GroupComparison]:
    """Pro vs non-pro comparisons per cell with BH-adjusted one-sided p-values.

    `score_rows` needs columns account_id, score, and any of
    role/server/phase/stat/scope/method to define cells. The normalized
    difference divides by the non-pro standard deviation within the cell.
    """
    pro_accounts = {l.account_id for l in labels if l.is_pro}
    cell_cols = [
        c for c in ("role", "server", "phase", "stat", "scope", "method")
        if c in score_rows.columns
    ]
    results: list[GroupComparison] = []
    grouped = score_rows.groupby(cell_cols, sort=True) if cell_cols else [((), score_rows)]
    for key, df in grouped:
        if not isinstance(key, tuple):
            key = (key,)
        cell = dict(zip(cell_cols, [str(k) for k in key]))
        is_pro = df["account_id"].isin(pro_accounts)
        pro = df.loc[is_pro, "score"].to_numpy(dtype=float)
        nonpro = df.loc[~is_pro, "score"].to_numpy(dtype=float)
        if pro.size < 2 or nonpro.size < 2:
            results.append(
                GroupComparison(
                    cell=cell,
                    mean_pro=float(pro.mean()) if pro.size else float("nan"),
                    mean_nonpro=float(nonpro.mean()) if nonpro.size else float("nan"),
                    normalized_diff=float("nan"),
                    t_stat=float("nan"),
                    p_raw=float("nan"),
                    n_pro=pro.size,
                    n_nonpro=nonpro.size,
                    skipped=True,
                    skip_reason="TOO_FEW_PROS" if pro.size < 2 else "TOO_FEW_NONPROS",
                )
            )
            continue
        sd_nonpro = nonpro.std(ddof=1)
        norm_diff = (pro.mean() - nonpro.mean()) / sd_nonpro if sd_nonpro > 0 else float("nan")
        t, p = welch_one_sided(pro, nonpro)
        results.append(
            GroupComparison(
                cell=cell,
                mean_pro=float(pro.mean()),
                mean_nonpro=float(nonpro.mean()),
                normalized_diff=float(norm_diff),
                t_stat=t,
                p_raw=p,
                n_pro=pro.size,
                n_nonpro=nonpro.size,
            )
        )
    tested = [r for r in results if not r.skipped]
    if tested:
        adjusted = fdr_adjust([r.p_raw for r in tested])
        adj_iter = iter(adjusted)
        final = []
        for r in results:
            if r.skipped:
                final.append(r)
            else:
                final.append(
                    GroupComparison(**{**r.__dict__, "p_adjusted": float(next(adj_iter))})
                )
        results = final
    return results


def rmse_by_account(
    fit: PosteriorFit, holdout: ObservationTable
) -> tuple[dict[str, float], dict[str, int]]:
    """Per-account RMSE of posterior-mean predictions on a holdout table.

    Rows with accounts or champions unseen by the fit are excluded and counted.
    Returns (rmse by account, exclusion counts).
    """
    if holdout.n_rows == 0:
        raise AnalysisError("empty holdout table")
    acc_known = set(fit.account_ids)
    ch_known = set(fit.champion_ids)
    exclusions = {"UNKNOWN_ACCOUNT": 0, "UNKNOWN_CHAMPION": 0}
    sq_err: dict[str, list[float]] = {}
    rows = []
    keep_accounts = []
    for i in range(holdout.n_rows):
        acc = holdout.account_ids[holdout.account_index[i]]
        ch = holdout.champion_ids[holdout.champion_index[i]]
        if acc not in acc_known:
            exclusions["UNKNOWN_ACCOUNT"] += 1
            continue
        if ch not in ch_known:
            exclusions["UNKNOWN_CHAMPION"] += 1
            continue
        x = holdout.covariate[i] if holdout.covariate is not None else None
        rows.append((acc, ch, x))
        keep_accounts.append((acc, float(holdout.response[i])))
    if not rows:
        raise AnalysisError("no holdout rows overlap the fit")
    preds = predict(fit, rows)
    for (acc, obs), pred in zip(keep_accounts, preds):
        sq_err.setdefault(acc, []).append((obs - pred) ** 2)
    rmse = {acc: float(np.sqrt(np.mean(errs))) for acc, errs in sq_err.items()}
    return rmse, exclusions


@dataclass
class DifferentialSummary:
    fraction_winner_ahead: dict[tuple[str, str], float]
    differentials: dict[tuple[str, str], np.ndarray]


def differential_summary(games: Sequence[GameRecord]) -> DifferentialSummary:
    """Per (phase, stat) fraction of games where the winner's team total leads."""
    fractions: dict[tuple[str, str], float] = {}
    diffs: dict[tuple[str, str], list[float]] = {}
    phase_order = [Phase.P0_7, Phase.P7_15, Phase.P15_25]
    for stat in Stat:
        stat_field = "gold" if stat == Stat.GOLD else "dmg"
        for pi, phase in enumerate(phase_order):
            key = (phase.value, stat.value)
            diffs[key] = []
            for g in games:
                totals = {Team.BLUE: 0.0, Team.RED: 0.0}
                ok = True
                for p in g.players:
                    cum = [getattr(s, stat_field) for s in p.snapshots()]
                    per_phase = phase_difference(cum)
                    if pi >= len(per_phase):
                        ok = False
                        break
                    totals[p.team] += per_phase[pi]
                if not ok:
                    continue
                loser = Team.RED if g.winner == Team.BLUE else Team.BLUE
                diffs[key].append(totals[g.winner] - totals[loser])
            arr = np.array(diffs[key])
            fractions[key] = float(np.mean(arr > 0)) if arr.size else float("nan")
    return DifferentialSummary(
        fraction_winner_ahead=fractions,
        differentials={k: np.array(v) for k, v in diffs.items()},
    )


@dataclass
class RunManifest:
    input_digests: dict[str, str] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seed: Optional[int] = None
    stages: list[dict] = field(default_factory=list)

    def add_stage(self, name: str, rows_in: int, rows_out: int, exclusions: dict[str, int]):
        if rows_in != rows_out + sum(exclusions.values()):
            raise AnalysisError(
                f"stage {name}: {rows_in} in != {rows_out} out + {sum(exclusions.values())} excluded"
            )
        self.stages.append(
            {"stage": name, "rows_in": rows_in, "rows_out": rows_out, "exclusions": exclusions}
        )

    def add_input(self, path: str):
        digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        self.input_digests[str(path)] = digest

    def to_json(self) -> str:
        return json.dumps(
            {
                "inputs": self.input_digests,
                "config": self.config,
                "seed": self.seed,
                "stages": self.stages,
            },
            sort_keys=True,
            indent=2,
        )


def scores_to_frame(scores) -> pd.DataFrame:
    """Flatten SidoScore-like rows into the export CSV schema."""
    rows = []
    for s in scores:
        rows.append(
            {
                "account_id": s.account_id,
                "role": s.role.value,
                "server": s.server.value,
                "phase": s.phase.value,
                "stat": s.stat.value,
                "scope": s.scope.value,
                "score": s.score,
                "sd": s.sd,
                "sign_prob": s.sign_prob,
                "category": s.category.name if np.isfinite(s.sign_prob) else "",
            }
        )
    return pd.DataFrame(rows)


def write_comparisons_csv(comparisons: list[GroupComparison], path: str | Path) -> None:
    rows = []
    for c in comparisons:
        row = dict(c.cell)
        row.update(
            mean_pro=c.mean_pro,
            mean_nonpro=c.mean_nonpro,
            normalized_diff=c.normalized_diff,
            t_stat=c.t_stat,
            p_raw=c.p_raw,
            p_adjusted=c.p_adjusted,
            n_pro=c.n_pro,
            n_nonpro=c.n_nonpro,
            skipped=c.skipped,
            skip_reason=c.skip_reason,
        )
        rows.append(row)
    pd.DataFrame(rows).to_csv(path, index=False, float_format="%.10g")


def _density_svg(values: np.ndarray, title: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "sidoscore"
    fig, ax = plt.subplots(figsize=(6, 4))
    if values.size > 1 and np.std(values) > 0:
        kde = stats.gaussian_kde(values)
        xs = np.linspace(values.min(), values.max(), 200)
        ax.plot(xs, kde(xs))
        ax.fill_between(xs, kde(xs), alpha=0.3)
    else:
        ax.axvline(values[0] if values.size else 0.0)
    ax.set_title(title)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _bar_svg(labels: list[str], values: list[float], title: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "sidoscore"
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(values)), values)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_reports(
    out_dir: str | Path,
    manifest: RunManifest,
    scores: Optional[pd.DataFrame] = None,
    comparisons: Optional[list[GroupComparison]] = None,
    metametrics: Optional[pd.DataFrame] = None,
    differential: Optional[DifferentialSummary] = None,
) -> list[Path]:
    """Write deterministic CSV/JSON tables and SVG plots; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit_csv(df: pd.DataFrame, name: str):
        path = out / name
        df.to_csv(path, index=False, float_format="%.10g")
        written.append(path)

    if scores is not None:
        emit_csv(scores.fillna(""), "scores.csv")
    if comparisons is not None:
        write_comparisons_csv(comparisons, out / "comparisons.csv")
        written.append(out / "comparisons.csv")
        tested = [c for c in comparisons if not c.skipped]
        if tested:
            labels = ["/".join(c.cell.values()) for c in tested]
            _bar_svg(
                labels,
                [c.normalized_diff for c in tested],
                "normalized pro minus non-pro difference",
                out / "comparisons.svg",
            )
            written.append(out / "comparisons.svg")
    if metametrics is not None:
        emit_csv(metametrics.fillna(""), "metametrics.csv")
    if differential is not None:
        rows = [
            {"phase": k[0], "stat": k[1], "fraction_winner_ahead": v}
            for k, v in sorted(differential.fraction_winner_ahead.items())
        ]
        emit_csv(pd.DataFrame(rows), "differentials.csv")
        for (phase, stat), vals in sorted(differential.differentials.items()):
            if vals.size:
                name = f"differential_{stat}_{phase}.svg"
                _density_svg(vals, f"winner minus loser {stat} {phase}", out / name)
                written.append(out / name)
    manifest_path = out / "manifest.json"
    manifest_path.write_text(manifest.to_json())
    written.append(manifest_path)
    return written
