import numpy as np
import pytest

from sidoscore.baselines import (
    PlusMinusRegressor,
    RidgeCGError,
    ba_scores,
    fit_plus_minus,
    pm_bootstrap_variance,
    pm_design,
)
from sidoscore.data import ObservationTable, Phase, Role, Server, Stat

from conftest import random_games


def table_from_arrays(y, acc, n_acc):
    return ObservationTable(
        account_index=np.asarray(acc, dtype=np.int64),
        champion_index=np.zeros(len(y), dtype=np.int64),
        response=np.asarray(y, dtype=float),
        covariate=None,
        account_ids=[f"p{i}" for i in range(n_acc)],
        champion_ids=["c0"],
        role=Role.MID,
        server=Server.NA,
        phase=Phase.P0_7,
        stat=Stat.GOLD,
    )


class TestBa:
    def test_mean(self):
        table = table_from_arrays([0.5, 1.5], [0, 0], 1)
        scores = ba_scores(table)
        assert scores[0].mean == pytest.approx(1.0)

    def test_single_game_degenerate(self):
        table = table_from_arrays([0.7, 1.0, -1.0], [0, 1, 1], 2)
        scores = {s.account_id: s for s in ba_scores(table)}
        assert scores["p0"].degenerate and scores["p0"].se == 0.0
        assert not scores["p1"].degenerate

    def test_bootstrap_reproducible(self):
        rng = np.random.default_rng(0)
        table = table_from_arrays(rng.normal(size=100), rng.integers(0, 5, 100), 5)
        a = ba_scores(table, n_boot=200, seed=7)
        b = ba_scores(table, n_boot=200, seed=7)
        assert all(x.se == y.se for x, y in zip(a, b))
        c = ba_scores(table, n_boot=200, seed=8)
        assert any(x.se != y.se for x, y in zip(a, c))

    def test_mean_invariant_to_game_permutation(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=30)
        acc = np.zeros(30, dtype=int)
        a = ba_scores(table_from_arrays(y, acc, 1))[0].mean
        perm = rng.permutation(30)
        b = ba_scores(table_from_arrays(y[perm], acc, 1))[0].mean
        assert a == pytest.approx(b)


class TestPmDesign:
    def test_two_rows_per_game(self):
        games = random_games(1, seed=0)
        d = pm_design(games, Phase.P0_7, Stat.GOLD)
        assert d.rows.shape[0] == 2
        for r in range(2):
            assert np.sum(d.rows[r] == 1.0) == 5
            assert np.sum(d.rows[r] == -1.0) == 5

    def test_row_sums(self):
        games = random_games(4, seed=0)
        d = pm_design(games, Phase.P7_15, Stat.DMG)
        n_p = d.n_players
        off = d.rows[:, :n_p]
        deff = d.rows[:, n_p:]
        assert np.all(off.sum(axis=1) == 5)
        assert np.all(deff.sum(axis=1) == -5)

    def test_appearance_counts(self):
        games = random_games(3, seed=0)
        # force one account into all 3 games
        d = pm_design(games, Phase.P0_7, Stat.GOLD)
        acc = games[0].players[0].account_id
        j = d.player_ids.index(acc)
        n_games_with_acc = sum(
            any(p.account_id == acc for p in g.players) for g in games
        )
        off_appearances = np.sum(d.rows[:, j] == 1.0)
        def_appearances = np.sum(d.rows[:, d.n_players + j] == -1.0)
        assert off_appearances == n_games_with_acc
        assert def_appearances == n_games_with_acc


class TestPmFit:
    def test_huge_lambda_shrinks_to_zero(self):
        games = random_games(5, seed=2)
        d = pm_design(games, Phase.P0_7, Stat.GOLD)
        fit = fit_plus_minus(d, ridge_lambda=1e9)
        assert max(abs(v) for v in fit.offensive.values()) < 1e-6
        assert max(abs(v) for v in fit.defensive.values()) < 1e-6

    def test_single_game_symmetry(self):
        games = random_games(1, seed=3)
        d = pm_design(games, Phase.P0_7, Stat.GOLD)
        fit = fit_plus_minus(d, ridge_lambda=1.0)
        blue = [p.account_id for p in games[0].players if p.team.value == "BLUE"]
        vals = [fit.offensive[a] for a in blue]
        assert np.allclose(vals, vals[0], atol=1e-9)

    def test_matches_dense_oracle(self):
        games = random_games(20, seed=4)
        d = pm_design(games, Phase.P0_7, Stat.GOLD)
        lam = 3.0
        fit = fit_plus_minus(d, ridge_lambda=lam)
        X, y = d.rows, d.response
        w = np.linalg.solve(X.T @ X + lam * np.eye(X.shape[1]), X.T @ y)
        n_p = d.n_players
        for j, a in enumerate(d.player_ids):
            assert abs(fit.offensive[a] - w[j]) < 1e-6
            assert abs(fit.defensive[a] - w[n_p + j]) < 1e-6

    def test_antisymmetric_to_response_negation(self):
        games = random_games(10, seed=5)
        d = pm_design(games, Phase.P0_7, Stat.GOLD)
        fit = fit_plus_minus(d, ridge_lambda=2.0)
        d.response *= -1
        neg = fit_plus_minus(d, ridge_lambda=2.0)
        for a in d.player_ids:
            assert neg.offensive[a] == pytest.approx(-fit.offensive[a], abs=1e-8)

    def test_ridge_monotonicity(self):
        rng = np.random.default_rng(6)
        for trial in range(5):
            games = random_games(15, seed=10 + trial)
            d = pm_design(games, Phase.P0_7, Stat.GOLD)
            norms = []
            for lam in (0.5, 2.0, 10.0, 100.0):
                fit = fit_plus_minus(d, ridge_lambda=lam)
                w = np.array(list(fit.offensive.values()) + list(fit.defensive.values()))
                norms.append(np.linalg.norm(w))
            assert all(a >= b - 1e-10 for a, b in zip(norms, norms[1:]))

    def test_lambda_must_be_positive(self):
        games = random_games(2, seed=0)
        d = pm_design(games, Phase.P0_7, Stat.GOLD)
        with pytest.raises(ValueError):
            fit_plus_minus(d, ridge_lambda=0.0)

    def test_default_lambda_scales_with_rows(self):
        games = random_games(10, seed=1)
        d = pm_design(games, Phase.P0_7, Stat.GOLD)
        fit = fit_plus_minus(d)
        assert fit.ridge_lambda == pytest.approx(0.1 * d.rows.shape[0])

    def test_bootstrap_variance(self):
        games = random_games(12, seed=7)
        base, off_var, def_var = pm_bootstrap_variance(
            games, Phase.P0_7, Stat.GOLD, ridge_lambda=1.0, n_boot=20, seed=0
        )
        assert set(off_var) == set(base.offensive)
        assert all(v >= 0 for v in off_var.values())


class TestEstimator:
    def test_sklearn_api(self):
        from sklearn.base import clone

        rng = np.random.default_rng(0)
        X = rng.choice([-1.0, 0.0, 1.0], size=(40, 12))
        w = rng.normal(size=12)
        y = X @ w + rng.normal(0, 0.1, 40)
        est = PlusMinusRegressor(ridge_lambda=0.5)
        clone(est).fit(X, y)
        est.fit(X, y)
        oracle = np.linalg.solve(X.T @ X + 0.5 * np.eye(12), X.T @ y)
        assert np.allclose(est.coef_, oracle, atol=1e-6)
        assert est.predict(X).shape == (40,)
