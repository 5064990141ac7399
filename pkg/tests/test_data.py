import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sidoscore.data import (
    DataError,
    DegenerateScaleError,
    Phase,
    Role,
    Server,
    Stat,
    Team,
    apply_inclusion_criteria,
    build_observation_table,
    filter_disconnects,
    link_rosters,
    parse_game_records,
    phase_difference,
    read_observation_csv,
    select_champions,
    select_role_mains,
    standardize,
    unstandardize,
    write_observation_csv,
)

from conftest import game_to_json, make_game, random_games


class TestParse:
    def test_valid_line(self):
        line = game_to_json(make_game())
        records, rejections = parse_game_records(io.StringIO(line + "\n"))
        assert len(records) == 1 and not rejections
        assert records[0].game_id == "g1"

    def test_nine_players_rejected(self):
        obj = json.loads(game_to_json(make_game()))
        obj["players"] = obj["players"][:9]
        records, rejections = parse_game_records([json.dumps(obj)])
        assert not records
        assert rejections[0].reason == "PLAYER_COUNT"
        assert rejections[0].line_no == 1

    def test_duplicate_role_rejected(self):
        obj = json.loads(game_to_json(make_game()))
        obj["players"][1]["role"] = "TOP"  # two TOPs on BLUE
        records, rejections = parse_game_records([json.dumps(obj)])
        assert not records
        assert rejections[0].reason == "ROLE_DUP"

    def test_malformed_json_reports_line_number(self):
        lines = [game_to_json(make_game()), "{not json", game_to_json(make_game(game_id="g2"))]
        records, rejections = parse_game_records(lines)
        assert len(records) == 2
        assert rejections[0].reason == "JSON" and rejections[0].line_no == 2

    def test_decreasing_cumulative_rejected(self):
        obj = json.loads(game_to_json(make_game()))
        obj["players"][0]["snap"]["15"]["gold"] = 10.0
        records, rejections = parse_game_records([json.dumps(obj)])
        assert not records
        assert rejections[0].reason == "SCHEMA"


class TestPhaseDifference:
    def test_direct_subtraction(self):
        assert phase_difference([100, 250, 400]) == [100, 150, 150]

    def test_zero_case(self):
        assert phase_difference([0, 0, 0]) == [0, 0, 0]

    def test_non_monotone_raises(self):
        with pytest.raises(DataError):
            phase_difference([100, 90, 200])

    def test_missing_25(self):
        assert phase_difference([100, 250]) == [100, 150]

    @given(
        st.lists(st.floats(min_value=0, max_value=1e6, allow_nan=False), min_size=2, max_size=3)
    )
    def test_reconstruction(self, values):
        values = sorted(values)
        diffs = phase_difference(values)
        for k in range(len(values)):
            assert np.isclose(sum(diffs[: k + 1]), values[k], rtol=0, atol=1e-6)


class TestDisconnectFilter:
    def test_below_threshold_excluded(self):
        game = make_game(
            overrides={(Team.BLUE, Role.TOP): {"dmg_taken": (499.0, 2600.0, 5200.0)}}
        )
        assert filter_disconnects([game]) == []

    def test_exactly_500_retained(self):
        game = make_game(
            overrides={(Team.BLUE, Role.TOP): {"dmg_taken": (500.0, 2600.0, 5200.0)}}
        )
        assert filter_disconnects([game]) == [game]

    def test_empty_input(self):
        assert filter_disconnects([]) == []

    def test_idempotent(self):
        games = random_games(20, seed=3)
        once = filter_disconnects(games)
        assert filter_disconnects(once) == once


class TestSelection:
    def _games_with_counts(self, account_games):
        games = []
        i = 0
        for acc, n in account_games.items():
            for _ in range(n):
                games.append(
                    make_game(
                        game_id=f"g{i}",
                        overrides={(Team.BLUE, Role.MID): {"account_id": acc}},
                    )
                )
                i += 1
        return games

    def test_threshold_inclusive(self):
        games = self._games_with_counts({"a": 50, "b": 49})
        mains = select_role_mains(games, Role.MID, min_games=50)
        assert "a" in mains and "b" not in mains

    def test_per_role_counting(self):
        # 30 MID games and 20 TOP games: excluded in both roles at threshold 50
        games = []
        for i in range(30):
            games.append(
                make_game(game_id=f"m{i}", overrides={(Team.BLUE, Role.MID): {"account_id": "x"}})
            )
        for i in range(20):
            games.append(
                make_game(game_id=f"t{i}", overrides={(Team.BLUE, Role.TOP): {"account_id": "x"}})
            )
        assert "x" not in select_role_mains(games, Role.MID, 50)
        assert "x" not in select_role_mains(games, Role.TOP, 50)

    def test_champion_distinct_accounts(self):
        games = []
        for i in range(30):
            games.append(
                make_game(
                    game_id=f"g{i}",
                    overrides={
                        (Team.BLUE, Role.MID): {"account_id": f"acc{i}", "champion_id": "zed"}
                    },
                )
            )
        # 100 games by 5 accounts on another champion
        for i in range(100):
            games.append(
                make_game(
                    game_id=f"h{i}",
                    overrides={
                        (Team.BLUE, Role.MID): {
                            "account_id": f"few{i % 5}",
                            "champion_id": "yasuo",
                        }
                    },
                )
            )
        champs = select_champions(games, Role.MID, min_accounts=30)
        assert "zed" in champs and "yasuo" not in champs

    def test_empty_games(self):
        assert select_champions([], Role.MID, 30) == set()

    def test_pipeline_fixed_point(self):
        games = random_games(40, seed=9)
        clean, report = apply_inclusion_criteria(games, Role.MID, min_games=2, min_accounts=2)
        clean2, report2 = apply_inclusion_criteria(clean, Role.MID, min_games=2, min_accounts=2)
        assert clean2 == clean
        assert report2.accounts == report.accounts
        assert report2.champions == report.champions


class TestStandardize:
    def test_simple(self):
        z, mean, sd = standardize([1, 2, 3])
        assert np.allclose(z, [-1, 0, 1])
        assert mean == 2 and sd == 1

    def test_round_trip(self, rng):
        vals = rng.normal(5, 3, size=100)
        z, mean, sd = standardize(vals)
        assert np.allclose(unstandardize(z, mean, sd), vals, atol=1e-12)

    def test_constant_raises(self):
        with pytest.raises(DegenerateScaleError):
            standardize([5, 5, 5])

    def test_singleton_raises(self):
        with pytest.raises(DegenerateScaleError):
            standardize([5])

    @given(
        st.lists(
            st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=3, max_size=50
        ).filter(lambda v: max(v) - min(v) > 1e-6)
    )
    def test_output_moments(self, values):
        z, _, _ = standardize(values)
        assert abs(z.mean()) < 1e-9
        assert abs(z.std(ddof=1) - 1) < 1e-9


class TestObservationTable:
    def test_gold_has_no_covariate(self):
        games = random_games(30, seed=5)
        table = build_observation_table(games, Role.MID, Server.NA, Phase.P0_7, Stat.GOLD)
        assert table.covariate is None
        table.validate()

    def test_dmg_covariate_is_standardized_dmg_taken(self):
        games = random_games(30, seed=5)
        table = build_observation_table(games, Role.MID, Server.NA, Phase.P7_15, Stat.DMG)
        assert table.covariate is not None
        assert abs(table.covariate.mean()) < 1e-9
        assert abs(table.covariate.std(ddof=1) - 1) < 1e-9
        # spot-check one row against a direct phase difference
        g = games[0]
        p = g.player_in_role(Team.BLUE, Role.MID)
        raw = p.snap15.dmg_taken - p.snap7.dmg_taken
        cmean, csd = table.covariate_scale
        row = table.game_ids.index(g.game_id)
        assert np.isclose(table.covariate[row], (raw - cmean) / csd)

    def test_short_game_skips_late_phase(self):
        games = [
            make_game(game_id="short", duration_min=22.0),
            make_game(game_id="long1", duration_min=30.0,
                      overrides={(Team.BLUE, Role.MID): {"gold": (900, 2900, 5800)}}),
            make_game(game_id="long2", duration_min=30.0,
                      overrides={(Team.BLUE, Role.MID): {"gold": (1100, 3100, 6100)}}),
        ]
        early = build_observation_table(games, Role.MID, Server.NA, Phase.P0_7, Stat.GOLD)
        late = build_observation_table(games, Role.MID, Server.NA, Phase.P15_25, Stat.GOLD)
        assert "short" in early.game_ids
        assert "short" not in late.game_ids

    def test_empty_table_raises(self):
        with pytest.raises(DataError):
            build_observation_table([], Role.MID, Server.NA, Phase.P0_7, Stat.GOLD)

    def test_standardization_invariant(self):
        games = random_games(25, seed=11)
        for stat in Stat:
            table = build_observation_table(games, Role.BOT, Server.NA, Phase.P0_7, stat)
            assert abs(table.response.mean()) < 1e-9
            assert abs(table.response.std(ddof=1) - 1) < 1e-9

    def test_csv_round_trip(self, tmp_path):
        games = random_games(20, seed=2)
        table = build_observation_table(games, Role.MID, Server.NA, Phase.P0_7, Stat.DMG)
        path = tmp_path / "obs.csv"
        write_observation_csv(table, path)
        back = read_observation_csv(path)
        assert np.allclose(back.response, table.response)
        assert np.allclose(back.covariate, table.covariate)
        assert back.account_ids == table.account_ids
        assert back.stat == table.stat


class TestRosters:
    def _write(self, tmp_path, rows):
        path = tmp_path / "roster.csv"
        path.write_text("account_id,player_name,league\n" + "\n".join(rows) + "\n")
        return str(path)

    def test_listed_account(self, tmp_path):
        path = self._write(tmp_path, ["acc1,Faker,LCK"])
        labels = link_rosters(["acc1"], path)
        assert labels[0].is_pro and labels[0].league.value == "LCK"

    def test_unlisted_account(self, tmp_path):
        path = self._write(tmp_path, ["acc1,Faker,LCK"])
        labels = link_rosters(["other"], path)
        assert not labels[0].is_pro and labels[0].league.value == "NONE"

    def test_conflicting_league_raises(self, tmp_path):
        path = self._write(tmp_path, ["acc1,Faker,LCK", "acc1,Faker,LEC"])
        with pytest.raises(DataError):
            link_rosters(["acc1"], path)
