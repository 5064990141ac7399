import json

import numpy as np
import pytest

from sidoscore.data import (
    GameRecord,
    PlayerRow,
    Role,
    Server,
    Snapshot,
    Team,
)

ROLES = [Role.TOP, Role.JGL, Role.MID, Role.BOT, Role.SUP]


def make_player(
    account_id,
    team,
    role,
    champion_id="champ1",
    win=False,
    gold=(1000.0, 3000.0, 6000.0),
    dmg=(800.0, 2500.0, 5000.0),
    dmg_taken=(900.0, 2600.0, 5200.0),
    include_25=True,
):
    snaps = []
    n = 3 if include_25 else 2
    for i in range(n):
        snaps.append(Snapshot(gold=gold[i], dmg=dmg[i], dmg_taken=dmg_taken[i]))
    return PlayerRow(
        account_id=account_id,
        team=team,
        role=role,
        champion_id=champion_id,
        win=win,
        snap7=snaps[0],
        snap15=snaps[1],
        snap25=snaps[2] if include_25 else None,
    )


def make_game(
    game_id="g1",
    server=Server.NA,
    winner=Team.BLUE,
    duration_min=30.0,
    rng=None,
    account_prefix="acc",
    champions=None,
    overrides=None,
):
    """Build a valid 10-player game. `overrides` maps (team, role) -> kwargs."""
    include_25 = duration_min >= 25
    players = []
    overrides = overrides or {}
    for t_i, team in enumerate(Team):
        for r_i, role in enumerate(ROLES):
            idx = t_i * 5 + r_i
            kwargs = dict(
                account_id=f"{account_prefix}{idx}",
                team=team,
                role=role,
                champion_id=(champions[idx] if champions else f"champ{r_i}"),
                win=(team == winner),
                include_25=include_25,
            )
            if rng is not None:
                base7 = rng.uniform(800, 1500, size=3)
                base15 = base7 + rng.uniform(1000, 3000, size=3)
                base25 = base15 + rng.uniform(1500, 4000, size=3)
                kwargs["gold"] = (base7[0], base15[0], base25[0])
                kwargs["dmg"] = (base7[1], base15[1], base25[1])
                kwargs["dmg_taken"] = (max(base7[2], 500.0), base15[2], base25[2])
            kwargs.update(overrides.get((team, role), {}))
            players.append(make_player(**kwargs))
    return GameRecord(
        game_id=game_id,
        server=server,
        patch="13.14",
        duration_min=duration_min,
        winner=winner,
        players=tuple(players),
    )


def game_to_json(game):
    def snap_dict(s):
        return {"gold": s.gold, "dmg": s.dmg, "dmg_taken": s.dmg_taken}

    players = []
    for p in game.players:
        snap = {"7": snap_dict(p.snap7), "15": snap_dict(p.snap15)}
        if p.snap25 is not None:
            snap["25"] = snap_dict(p.snap25)
        players.append(
            {
                "account_id": p.account_id,
                "team": p.team.value,
                "role": p.role.value,
                "champion_id": p.champion_id,
                "win": p.win,
                "snap": snap,
            }
        )
    return json.dumps(
        {
            "game_id": game.game_id,
            "server": game.server.value,
            "patch": game.patch,
            "duration_min": game.duration_min,
            "winner": game.winner.value,
            "players": players,
        }
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_games(n_games, n_accounts_per_role=6, n_champs=4, seed=0, server=Server.NA):
    """Games where each role draws accounts/champions from small pools."""
    rng = np.random.default_rng(seed)
    games = []
    for g in range(n_games):
        champions = []
        accounts = {}
        for t_i, team in enumerate(Team):
            for r_i, role in enumerate(ROLES):
                idx = t_i * 5 + r_i
                champions.append(f"{role.value}_ch{rng.integers(n_champs)}")
                accounts[(team, role)] = {
                    "account_id": f"{role.value}_p{rng.integers(n_accounts_per_role)}"
                }
        # avoid the same account on both teams in one game
        for role in ROLES:
            if accounts[(Team.BLUE, role)]["account_id"] == accounts[(Team.RED, role)]["account_id"]:
                accounts[(Team.RED, role)]["account_id"] += "_alt"
        game = make_game(
            game_id=f"g{g}",
            server=server,
            winner=Team.BLUE if rng.random() < 0.5 else Team.RED,
            duration_min=float(rng.uniform(20, 40)),
            rng=rng,
            champions=champions,
            overrides=accounts,
        )
        games.append(game)
    return games
