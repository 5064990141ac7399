"""Basic-average and adjusted Plus-Minus comparison models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .data import (
    GameRecord,
    ObservationTable,
    Phase,
    Role,
    Stat,
    Team,
    phase_difference,
)


@dataclass(frozen=True)
class BaScore:
    account_id: str
    mean: float
    se: float
    n_games: int
    degenerate: bool = False


def ba_scores(
    table: ObservationTable, n_boot: int = 200, seed: int = 0
) -> list[BaScore]:
    """Per-account mean of the standardized response with a seeded bootstrap SE."""
    out = []
    root = np.random.SeedSequence(seed)
    for i, acc in enumerate(table.account_ids):
        vals = table.response[table.account_index == i]
        n = vals.size
        mean = float(np.mean(vals))
        if n < 2:
            out.append(BaScore(acc, mean, 0.0, n, degenerate=True))
            continue
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(i,))))
        idx = rng.integers(0, n, size=(n_boot, n))
        boot_means = vals[idx].mean(axis=1)
        out.append(BaScore(acc, mean, float(np.std(boot_means, ddof=1)), n))
    return out


@dataclass
class PmDesign:
    """Signed team-membership system: two rows per game, one per team."""

    rows: np.ndarray  # (2 * n_games, 2 * n_players) dense +-1 design
    response: np.ndarray
    player_ids: list[str]

    @property
    def n_players(self) -> int:
        return len(self.player_ids)

    def offensive_column(self, j: int) -> int:
        return j

    def defensive_column(self, j: int) -> int:
        return self.n_players + j


def pm_design(
    games: Sequence[GameRecord], phase: Phase, stat: Stat
) -> PmDesign:
    """Build the plus-minus system: response is a team's standardized phase total.

    Each row gets +1 in the offensive column of the team's five players and
    -1 in the defensive column of the five opponents.
    """
    stat_field = "gold" if stat == Stat.GOLD else "dmg"
    phase_idx = [Phase.P0_7, Phase.P7_15, Phase.P15_25].index(phase)
    players: dict[str, int] = {}
    raw_rows: list[tuple[list[str], list[str], float]] = []
    for g in games:
        totals = {Team.BLUE: 0.0, Team.RED: 0.0}
        ok = True
        for p in g.players:
            cum = [getattr(s, stat_field) for s in p.snapshots()]
            diffs = phase_difference(cum)
            if phase_idx >= len(diffs):
                ok = False
                break
            totals[p.team] += diffs[phase_idx]
        if not ok:
            continue
        for team in (Team.BLUE, Team.RED):
            own = [p.account_id for p in g.team_players(team)]
            opp = [p.account_id for p in g.players if p.team != team]
            for a in own + opp:
                players.setdefault(a, len(players))
            raw_rows.append((own, opp, totals[team]))
    if not raw_rows:
        raise ValueError("no games usable for the requested phase")
    player_ids = [a for a, _ in sorted(players.items(), key=lambda kv: kv[1])]
    n_p = len(player_ids)
    X = np.zeros((len(raw_rows), 2 * n_p))
    y = np.empty(len(raw_rows))
    for r, (own, opp, total) in enumerate(raw_rows):
        for a in own:
            X[r, players[a]] = 1.0
        for a in opp:
            X[r, n_p + players[a]] = -1.0
        y[r] = total
    y = (y - y.mean()) / (y.std(ddof=1) if y.size > 1 and y.std(ddof=1) > 0 else 1.0)
    return PmDesign(rows=X, response=y, player_ids=player_ids)


@dataclass
class PmFit:
    offensive: dict[str, float]
    defensive: dict[str, float]
    ridge_lambda: float
    n_iterations: int
    relative_residual: float


class RidgeCGError(RuntimeError):
    """Conjugate-gradient ridge solve failed to converge."""


def _cg_solve(
    A_mul, b: np.ndarray, tol: float, max_iter: int
) -> tuple[np.ndarray, int, float]:
    """Conjugate gradients for SPD systems given a matvec closure."""
    x = np.zeros_like(b)
    r = b - A_mul(x)
    p = r.copy()
    rs = float(np.dot(r, r))
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return x, 0, 0.0
    for it in range(1, max_iter + 1):
        Ap = A_mul(p)
        alpha = rs / float(np.dot(p, Ap))
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(np.dot(r, r))
        rel = np.sqrt(rs_new) / b_norm
        if rel < tol:
            return x, it, rel
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, max_iter, np.sqrt(rs) / b_norm


def fit_plus_minus(
    design: PmDesign,
    ridge_lambda: Optional[float] = None,
    tol: float = 1e-8,
    max_iter: int = 10000,
) -> PmFit:
    """Ridge solution of the plus-minus system via CG on the normal equations."""
    X, y = design.rows, design.response
    lam = 0.1 * X.shape[0] if ridge_lambda is None else ridge_lambda
    if lam <= 0:
        raise ValueError("ridge_lambda must be > 0")

    def A_mul(v):
        return X.T @ (X @ v) + lam * v

    b = X.T @ y
    w, iters, rel = _cg_solve(A_mul, b, tol, max_iter)
    if rel >= tol:
        raise RidgeCGError(f"CG stalled at relative residual {rel:.3e} after {iters} iterations")
    n_p = design.n_players
    return PmFit(
        offensive={a: float(w[j]) for j, a in enumerate(design.player_ids)},
        defensive={a: float(w[n_p + j]) for j, a in enumerate(design.player_ids)},
        ridge_lambda=lam,
        n_iterations=iters,
        relative_residual=rel,
    )


def pm_bootstrap_variance(
    games: Sequence[GameRecord],
    phase: Phase,
    stat: Stat,
    ridge_lambda: Optional[float] = None,
    n_boot: int = 100,
    seed: int = 0,
) -> tuple[PmFit, dict[str, float], dict[str, float]]:
    """Fit plus-minus and estimate coefficient sampling variance by resampling games."""
    base = fit_plus_minus(pm_design(games, phase, stat), ridge_lambda)
    off_samples: dict[str, list[float]] = {a: [] for a in base.offensive}
    def_samples: dict[str, list[float]] = {a: [] for a in base.defensive}
    games = list(games)
    for b in range(n_boot):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(b,)))
        )
        resample = [games[i] for i in rng.integers(0, len(games), size=len(games))]
        try:
            fit = fit_plus_minus(pm_design(resample, phase, stat), ridge_lambda)
        except (ValueError, RidgeCGError):
            continue
        for a, v in fit.offensive.items():
            if a in off_samples:
                off_samples[a].append(v)
        for a, v in fit.defensive.items():
            if a in def_samples:
                def_samples[a].append(v)
    off_var = {
        a: float(np.var(v, ddof=1)) if len(v) > 1 else 0.0 for a, v in off_samples.items()
    }
    def_var = {
        a: float(np.var(v, ddof=1)) if len(v) > 1 else 0.0 for a, v in def_samples.items()
    }
    return base, off_var, def_var


class PlusMinusRegressor(BaseEstimator, RegressorMixin):
    """sklearn-style ridge plus-minus over a signed membership design."""

    def __init__(self, ridge_lambda=None, tol=1e-8, max_iter=10000):
        self.ridge_lambda = ridge_lambda
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        lam = 0.1 * X.shape[0] if self.ridge_lambda is None else self.ridge_lambda

        def A_mul(v):
            return X.T @ (X @ v) + lam * v

        w, iters, rel = _cg_solve(A_mul, X.T @ y, self.tol, self.max_iter)
        if rel >= self.tol:
            raise RidgeCGError(f"CG stalled at relative residual {rel:.3e}")
        self.coef_ = w
        self.n_iter_ = iters
        return self

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.coef_
