"""SIDO decomposition: player models, ally/enemy residual models, proficiency heuristic."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .data import (
    DataError,
    GameRecord,
    ObservationTable,
    Phase,
    Role,
    Server,
    Stat,
    build_observation_table,
)
from .inference import ModelConfig, PosteriorFit, fit_hierarchical, sign_probability
from .metametrics import ImpactCategory, categorize


class Scope(str, Enum):
    PLAYER = "PLAYER"
    ALLY = "ALLY"
    ENEMY = "ENEMY"
    ALLY_PLAYER = "ALLY_PLAYER"


@dataclass(frozen=True)
class SidoScore:
    account_id: str
    role: Role
    server: Server
    phase: Phase
    stat: Stat
    scope: Scope
    score: float
    sd: float
    sign_prob: float

    @property
    def category(self) -> ImpactCategory:
        return categorize(self.sign_prob)


def fit_player_model(
    table: ObservationTable, stat: Stat, config: Optional[ModelConfig] = None
) -> PosteriorFit:
    """Fit the own-performance model; DMG attaches the damage-taken covariate."""
    base = config or ModelConfig()
    cfg = ModelConfig(**{**base.__dict__, "has_covariate": stat == Stat.DMG})
    fit = fit_hierarchical(table, cfg)
    fit.identity["scope"] = Scope.PLAYER.value
    return fit


@dataclass
class ExpandedModel:
    """Own-stat fit on the full participant population of one role, with its scales."""

    fit: PosteriorFit
    response_scale: tuple[float, float]
    covariate_scale: Optional[tuple[float, float]]


def fit_expanded_models(
    games: Sequence[GameRecord],
    server: Server,
    phase: Phase,
    stat: Stat,
    config: Optional[ModelConfig] = None,
) -> dict[Role, ExpandedModel]:
    """Exact re-fit of the own-stat model per role over every participant.

    The expanded population has no game-count floor: anyone appearing in one
    qualifying game gets an effect.
    """
    out: dict[Role, ExpandedModel] = {}
    for role in Role:
        table = build_observation_table(games, role, server, phase, stat)
        fit = fit_player_model(table, stat, config)
        out[role] = ExpandedModel(
            fit=fit,
            response_scale=table.response_scale,
            covariate_scale=table.covariate_scale,
        )
    return out


def expected_own(model: ExpandedModel, account_id: str, champion_id: str, covariate: Optional[float] = None) -> float:
    """Posterior-mean expected standardized stat for one participant row."""
    fit = model.fit
    try:
        ai = fit.account_ids.index(account_id)
    except ValueError:
        raise KeyError(f"account {account_id!r} not in expanded fit") from None
    try:
        ci = fit.champion_ids.index(champion_id)
    except ValueError:
        raise KeyError(f"champion {champion_id!r} not in expanded fit") from None
    value = (
        float(fit.intercept.mean())
        + float(fit.account_effect_means()[ai])
        + float(fit.champion_effect_means()[ci])
    )
    if fit.covariate_coef is not None:
        value += float(fit.covariate_coef.mean()) * (covariate or 0.0)
    return value


@dataclass
class ResidualTable:
    """Per (focal player, game) summed over/under-performance of allies or enemies."""

    table: ObservationTable
    scope: Scope
    n_terms: int  # 4 allies or 5 enemies
    exclusions: dict[str, int] = field(default_factory=dict)


def _phase_deltas(player, phase: Phase, which: str) -> Optional[float]:
    from .data import _phase_value

    return _phase_value(player, phase, which)


def build_residual_table(
    games: Sequence[GameRecord],
    expanded: dict[Role, ExpandedModel],
    scope: Scope,
    focal_role: Role,
    server: Server,
    phase: Phase,
    stat: Stat,
    accounts: Optional[set[str]] = None,
    champions: Optional[set[str]] = None,
) -> ResidualTable:
    """Sum observed-minus-expected standardized stats over allies (4) or enemies (5)."""
    if scope not in (Scope.ALLY, Scope.ENEMY):
        raise ValueError("scope must be ALLY or ENEMY")
    n_terms = 4 if scope == Scope.ALLY else 5
    stat_field = "gold" if stat == Stat.GOLD else "dmg"
    acc_ids: list[str] = []
    champ_ids: list[str] = []
    deltas: list[float] = []
    game_ids: list[str] = []
    exclusions: dict[str, int] = {}
    precomp_means = {
        r: (
            float(m.fit.intercept.mean()),
            m.fit.account_effect_means(),
            m.fit.champion_effect_means(),
            float(m.fit.covariate_coef.mean()) if m.fit.covariate_coef is not None else None,
            {a: i for i, a in enumerate(m.fit.account_ids)},
            {c: i for i, c in enumerate(m.fit.champion_ids)},
        )
        for r, m in expanded.items()
    }
    for g in games:
        if g.server != server:
            continue
        for focal in g.players:
            if focal.role != focal_role:
                continue
            if accounts is not None and focal.account_id not in accounts:
                continue
            if champions is not None and focal.champion_id not in champions:
                continue
            if scope == Scope.ALLY:
                others = [p for p in g.players if p.team == focal.team and p is not focal]
            else:
                others = [p for p in g.players if p.team != focal.team]
            delta = 0.0
            ok = True
            for q in others:
                raw = _phase_deltas(q, phase, stat_field)
                if raw is None:
                    exclusions["MISSING_SNAPSHOT"] = exclusions.get("MISSING_SNAPSHOT", 0) + 1
                    ok = False
                    break
                model = expanded[q.role]
                mean, sd = model.response_scale
                observed = (raw - mean) / sd
                b0, accm, chm, coef, alk, clk = precomp_means[q.role]
                if q.account_id not in alk or q.champion_id not in clk:
                    exclusions["UNKNOWN_PARTICIPANT"] = exclusions.get("UNKNOWN_PARTICIPANT", 0) + 1
                    ok = False
                    break
                expected = b0 + accm[alk[q.account_id]] + chm[clk[q.champion_id]]
                if coef is not None:
                    raw_x = _phase_deltas(q, phase, "dmg_taken")
                    cmean, csd = model.covariate_scale
                    expected += coef * ((raw_x - cmean) / csd if raw_x is not None else 0.0)
                delta += observed - expected
            if not ok:
                continue
            acc_ids.append(focal.account_id)
            champ_ids.append(focal.champion_id)
            deltas.append(delta)
            game_ids.append(g.game_id)
    if not deltas:
        raise DataError("no residual rows produced")
    uniq_accounts = sorted(set(acc_ids))
    uniq_champs = sorted(set(champ_ids))
    alk = {a: i for i, a in enumerate(uniq_accounts)}
    clk = {c: i for i, c in enumerate(uniq_champs)}
    table = ObservationTable(
        account_index=np.array([alk[a] for a in acc_ids], dtype=np.int64),
        champion_index=np.array([clk[c] for c in champ_ids], dtype=np.int64),
        response=np.array(deltas),
        covariate=None,
        account_ids=uniq_accounts,
        champion_ids=uniq_champs,
        role=focal_role,
        server=server,
        phase=phase,
        stat=stat,
        response_scale=(0.0, 1.0),
        game_ids=game_ids,
    )
    return ResidualTable(table=table, scope=scope, n_terms=n_terms, exclusions=exclusions)


def _fit_residual_model(
    residuals: ResidualTable | ObservationTable,
    scope: Scope,
    config: Optional[ModelConfig],
) -> PosteriorFit:
    table = residuals.table if isinstance(residuals, ResidualTable) else residuals
    base = config or ModelConfig()
    cfg = ModelConfig(**{**base.__dict__, "has_covariate": False})
    fit = fit_hierarchical(table, cfg)
    fit.identity["scope"] = scope.value
    return fit


def fit_ally_model(
    residuals: ResidualTable | ObservationTable, config: Optional[ModelConfig] = None
) -> PosteriorFit:
    """Fit the summed-ally-residual model; scores are the raw account effects."""
    return _fit_residual_model(residuals, Scope.ALLY, config)


def fit_enemy_model(
    residuals: ResidualTable | ObservationTable, config: Optional[ModelConfig] = None
) -> PosteriorFit:
    """Fit the summed-enemy-residual model; the fit is sign-unmodified, reported
    scores are negated downstream."""
    return _fit_residual_model(residuals, Scope.ENEMY, config)


@dataclass
class ProficiencyResult:
    champion_id: str
    raw: dict[str, float]
    standardized: dict[str, float]


def champion_proficiency(
    fit: PosteriorFit, champion_id: str, games_by_account: dict[str, Sequence[float]]
) -> ProficiencyResult:
    """Average per-account residual performance on one champion, standardized.

    `games_by_account` maps account id to that account's standardized responses
    on the champion. The per-account value is mean(Y) minus the modeled
    champion baseline (posterior-mean intercept plus champion effect); the
    collection is then centered and scaled across accounts.
    """
    try:
        ci = fit.champion_ids.index(champion_id)
    except ValueError:
        raise KeyError(f"champion {champion_id!r} not in fit") from None
    baseline = float(fit.intercept.mean()) + float(fit.champion_effect_means()[ci])
    raw = {}
    for acc, ys in games_by_account.items():
        ys = np.asarray(ys, dtype=float)
        if ys.size < 1:
            raise ValueError(f"account {acc} has no games on {champion_id}")
        raw[acc] = float(np.mean(ys) - baseline)
    vals = np.array(list(raw.values()))
    if vals.size >= 2 and np.std(vals, ddof=1) > 0:
        z = (vals - vals.mean()) / np.std(vals, ddof=1)
    else:
        z = np.zeros_like(vals)
    standardized = {acc: float(z[i]) for i, acc in enumerate(raw)}
    return ProficiencyResult(champion_id=champion_id, raw=raw, standardized=standardized)


def _scores_from_fit(
    fit: PosteriorFit, scope: Scope, negate: bool
) -> dict[str, SidoScore]:
    ident = fit.identity
    role, server = Role(ident["role"]), Server(ident["server"])
    phase, stat = Phase(ident["phase"]), Stat(ident["stat"])
    sign = -1.0 if negate else 1.0
    out = {}
    for i, acc in enumerate(fit.account_ids):
        draws = sign * fit.account_effects[:, :, i]
        out[acc] = SidoScore(
            account_id=acc,
            role=role,
            server=server,
            phase=phase,
            stat=stat,
            scope=scope,
            score=float(draws.mean()),
            sd=float(draws.std(ddof=0)),
            sign_prob=float(np.mean(draws > 0)),
        )
    return out


def sido_score_table(
    player_fit: PosteriorFit,
    ally_fit: Optional[PosteriorFit] = None,
    enemy_fit: Optional[PosteriorFit] = None,
) -> tuple[list[SidoScore], list[str]]:
    """Per-account scores for all scopes plus the ally+player composite.

    Returns (scores, flags); flags name accounts missing from the ally or
    enemy fits. Enemy scores are negated relative to the stored fit means.
    """
    scores: list[SidoScore] = []
    flags: list[str] = []
    player = _scores_from_fit(player_fit, Scope.PLAYER, negate=False)
    scores.extend(player.values())
    ally = {}
    if ally_fit is not None:
        ally = _scores_from_fit(ally_fit, Scope.ALLY, negate=False)
        scores.extend(ally.values())
    if enemy_fit is not None:
        scores.extend(_scores_from_fit(enemy_fit, Scope.ENEMY, negate=True).values())

    if ally_fit is not None:
        same_shape = ally_fit.account_effects.shape[:2] == player_fit.account_effects.shape[:2]
        for acc, ps in player.items():
            if acc not in ally:
                flags.append(f"{acc}: missing ally score")
                continue
            if same_shape:
                ai = ally_fit.account_ids.index(acc)
                pi = player_fit.account_ids.index(acc)
                draws = (
                    ally_fit.account_effects[:, :, ai] + player_fit.account_effects[:, :, pi]
                )
                sd = float(draws.std(ddof=0))
                sp = float(np.mean(draws > 0))
            else:
                sd = float(np.hypot(ps.sd, ally[acc].sd))
                sp = float("nan")
            scores.append(
                SidoScore(
                    account_id=acc,
                    role=ps.role,
                    server=ps.server,
                    phase=ps.phase,
                    stat=ps.stat,
                    scope=Scope.ALLY_PLAYER,
                    score=ps.score + ally[acc].score,
                    sd=sd,
                    sign_prob=sp,
                )
            )
    if enemy_fit is not None:
        for acc in player:
            if acc not in enemy_fit.account_ids:
                flags.append(f"{acc}: missing enemy score")
    return scores, flags


def sido_sign_probability(fit: PosteriorFit, account_id: str, scope: Scope) -> float:
    """P(effect favors the player's team); enemy effects favor when negative."""
    q = sign_probability(fit, f"account:{account_id}")
    return 1.0 - q if scope == Scope.ENEMY else q
