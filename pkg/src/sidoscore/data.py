"""Game telemetry parsing, validation, filtering, and observation-table construction."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Optional, Sequence

import numpy as np


class Server(str, Enum):
    NA = "NA"
    EUW = "EUW"
    KR = "KR"


class Team(str, Enum):
    BLUE = "BLUE"
    RED = "RED"


class Role(str, Enum):
    TOP = "TOP"
    JGL = "JGL"
    MID = "MID"
    BOT = "BOT"
    SUP = "SUP"


class Phase(str, Enum):
    P0_7 = "P0_7"
    P7_15 = "P7_15"
    P15_25 = "P15_25"


class Stat(str, Enum):
    GOLD = "GOLD"
    DMG = "DMG"


class League(str, Enum):
    LCS = "LCS"
    LEC = "LEC"
    LCK = "LCK"
    LPL = "LPL"
    NONE = "NONE"


PHASE_ORDER = [Phase.P0_7, Phase.P7_15, Phase.P15_25]

DISCONNECT_DMG_TAKEN_7MIN = 500.0


class DataError(ValueError):
    """Invalid or inconsistent telemetry data."""


class DegenerateScaleError(DataError):
    """Standardization requested on constant or singleton input."""


@dataclass(frozen=True)
class Snapshot:
    """Cumulative totals at one timestamp."""

    gold: float
    dmg: float
    dmg_taken: float

    def stat(self, stat: Stat) -> float:
        return self.gold if stat == Stat.GOLD else self.dmg


@dataclass(frozen=True)
class PlayerRow:
    account_id: str
    team: Team
    role: Role
    champion_id: str
    win: bool
    snap7: Snapshot
    snap15: Snapshot
    snap25: Optional[Snapshot] = None

    def snapshots(self) -> list[Snapshot]:
        snaps = [self.snap7, self.snap15]
        if self.snap25 is not None:
            snaps.append(self.snap25)
        return snaps


@dataclass(frozen=True)
class GameRecord:
    game_id: str
    server: Server
    patch: str
    duration_min: float
    winner: Team
    players: tuple[PlayerRow, ...]

    def team_players(self, team: Team) -> list[PlayerRow]:
        return [p for p in self.players if p.team == team]

    def player_in_role(self, team: Team, role: Role) -> PlayerRow:
        for p in self.players:
            if p.team == team and p.role == role:
                return p
        raise DataError(f"no {role.value} on {team.value} in game {self.game_id}")


@dataclass(frozen=True)
class RosterLabel:
    account_id: str
    player_name: str
    league: League

    @property
    def is_pro(self) -> bool:
        return self.league != League.NONE


@dataclass(frozen=True)
class Rejection:
    line_no: int
    reason: str
    detail: str = ""


@dataclass
class ObservationTable:
    """Standardized per-phase responses keyed by dense account/champion indices."""

    account_index: np.ndarray
    champion_index: np.ndarray
    response: np.ndarray
    covariate: Optional[np.ndarray]
    account_ids: list[str]
    champion_ids: list[str]
    role: Role
    server: Server
    phase: Phase
    stat: Stat
    response_scale: tuple[float, float] = (0.0, 1.0)
    covariate_scale: Optional[tuple[float, float]] = None
    game_ids: Optional[list[str]] = None

    @property
    def n_rows(self) -> int:
        return len(self.response)

    @property
    def n_accounts(self) -> int:
        return len(self.account_ids)

    @property
    def n_champions(self) -> int:
        return len(self.champion_ids)

    def validate(self) -> None:
        if self.n_rows == 0:
            raise DataError("empty observation table")
        if abs(float(np.mean(self.response))) >= 1e-9:
            raise DataError("response not centered")
        if abs(float(np.std(self.response, ddof=1)) - 1.0) >= 1e-9:
            raise DataError("response not scaled")
        if self.account_index.min() < 0 or self.account_index.max() >= self.n_accounts:
            raise DataError("account index out of range")
        if self.champion_index.min() < 0 or self.champion_index.max() >= self.n_champions:
            raise DataError("champion index out of range")


def _parse_snapshot(obj: dict) -> Snapshot:
    snap = Snapshot(
        gold=float(obj["gold"]), dmg=float(obj["dmg"]), dmg_taken=float(obj["dmg_taken"])
    )
    if snap.gold < 0 or snap.dmg < 0 or snap.dmg_taken < 0:
        raise DataError("negative cumulative statistic")
    return snap


def _parse_player(obj: dict) -> PlayerRow:
    snaps = obj["snap"]
    snap7 = _parse_snapshot(snaps["7"])
    snap15 = _parse_snapshot(snaps["15"])
    snap25 = _parse_snapshot(snaps["25"]) if "25" in snaps and snaps["25"] is not None else None
    row = PlayerRow(
        account_id=str(obj["account_id"]),
        team=Team(obj["team"]),
        role=Role(obj["role"]),
        champion_id=str(obj["champion_id"]),
        win=bool(obj.get("win", False)),
        snap7=snap7,
        snap15=snap15,
        snap25=snap25,
    )
    for a, b in zip(row.snapshots(), row.snapshots()[1:]):
        if b.gold < a.gold or b.dmg < a.dmg or b.dmg_taken < a.dmg_taken:
            raise DataError("cumulative statistics decreased")
    return row


def _validate_game(game: GameRecord) -> Optional[str]:
    """Return a rejection reason code, or None if the record is valid."""
    if len(game.players) != 10:
        return "PLAYER_COUNT"
    for team in Team:
        members = game.team_players(team)
        if len(members) != 5:
            return "TEAM_SPLIT"
        roles = [p.role for p in members]
        if len(set(roles)) != 5:
            return "ROLE_DUP"
    has_25 = game.duration_min >= 25
    for p in game.players:
        if (p.snap25 is not None) != has_25:
            return "SNAPSHOT_MISMATCH"
    if game.duration_min < 0:
        return "NEGATIVE_DURATION"
    return None


def parse_game_records(
    stream: Iterable[str] | IO[str],
) -> tuple[list[GameRecord], list[Rejection]]:
    """Parse newline-delimited JSON games; invalid lines become Rejections.

    Returns (records, rejections). Every returned record satisfies the
    GameRecord invariants (10 players, 5 per team, unique roles per team,
    non-decreasing cumulative snapshots).
    """
    records: list[GameRecord] = []
    rejections: list[Rejection] = []
    for line_no, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            rejections.append(Rejection(line_no, "JSON", str(exc)))
            continue
        try:
            players = tuple(_parse_player(p) for p in obj["players"])
            game = GameRecord(
                game_id=str(obj["game_id"]),
                server=Server(obj["server"]),
                patch=str(obj["patch"]),
                duration_min=float(obj["duration_min"]),
                winner=Team(obj["winner"]),
                players=players,
            )
        except (KeyError, TypeError, ValueError) as exc:
            rejections.append(Rejection(line_no, "SCHEMA", str(exc)))
            continue
        reason = _validate_game(game)
        if reason is not None:
            rejections.append(Rejection(line_no, reason, game.game_id))
            continue
        records.append(game)
    return records, rejections


def phase_difference(cumulative: Sequence[float]) -> list[float]:
    """Convert cumulative snapshot values [v7, v15, v25?] to per-phase deltas."""
    if len(cumulative) not in (2, 3):
        raise DataError(f"expected 2 or 3 snapshot values, got {len(cumulative)}")
    for a, b in zip(cumulative, cumulative[1:]):
        if b < a:
            raise DataError(f"cumulative values decreased: {a} -> {b}")
    out = [float(cumulative[0])]
    for a, b in zip(cumulative, cumulative[1:]):
        out.append(float(b - a))
    return out


def filter_disconnects(games: Sequence[GameRecord]) -> list[GameRecord]:
    """Drop games where any player took < 500 damage by minute 7 (disconnect proxy)."""
    return [
        g
        for g in games
        if all(p.snap7.dmg_taken >= DISCONNECT_DMG_TAKEN_7MIN for p in g.players)
    ]


def select_role_mains(
    games: Sequence[GameRecord], role: Role, min_games: int = 50
) -> set[str]:
    """Accounts with at least `min_games` games in `role` within the window."""
    if min_games < 1:
        raise ValueError("min_games must be >= 1")
    counts: dict[str, int] = {}
    for g in games:
        for p in g.players:
            if p.role == role:
                counts[p.account_id] = counts.get(p.account_id, 0) + 1
    return {a for a, n in counts.items() if n >= min_games}


def select_champions(
    games: Sequence[GameRecord], role: Role, min_accounts: int = 30
) -> set[str]:
    """Champions played in `role` by at least `min_accounts` distinct accounts."""
    if min_accounts < 1:
        raise ValueError("min_accounts must be >= 1")
    users: dict[str, set[str]] = {}
    for g in games:
        for p in g.players:
            if p.role == role:
                users.setdefault(p.champion_id, set()).add(p.account_id)
    return {c for c, accs in users.items() if len(accs) >= min_accounts}


@dataclass
class FilterReport:
    games_in: int = 0
    games_after_disconnect: int = 0
    accounts: set[str] = field(default_factory=set)
    champions: set[str] = field(default_factory=set)

    def counts(self) -> dict[str, int]:
        return {
            "games_in": self.games_in,
            "games_after_disconnect": self.games_after_disconnect,
            "excluded_disconnect": self.games_in - self.games_after_disconnect,
            "n_accounts": len(self.accounts),
            "n_champions": len(self.champions),
        }


def apply_inclusion_criteria(
    games: Sequence[GameRecord],
    role: Role,
    min_games: int = 50,
    min_accounts: int = 30,
) -> tuple[list[GameRecord], FilterReport]:
    """Run the fixed filter order: disconnects, then role-main accounts, then champions."""
    report = FilterReport(games_in=len(games))
    clean = filter_disconnects(games)
    report.games_after_disconnect = len(clean)
    report.accounts = select_role_mains(clean, role, min_games)
    report.champions = select_champions(clean, role, min_accounts)
    return clean, report


def standardize(values: Sequence[float] | np.ndarray) -> tuple[np.ndarray, float, float]:
    """Center and scale to sample sd 1; returns (z, mean, sd) so the map inverts."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        raise DegenerateScaleError("need at least 2 values to standardize")
    mean = float(np.mean(arr))
    sd = float(np.std(arr, ddof=1))
    if sd == 0.0:
        raise DegenerateScaleError("zero variance input")
    return (arr - mean) / sd, mean, sd


def unstandardize(z: np.ndarray, mean: float, sd: float) -> np.ndarray:
    return np.asarray(z, dtype=float) * sd + mean


def _phase_value(player: PlayerRow, phase: Phase, which: str) -> Optional[float]:
    """Per-phase delta of one cumulative statistic; None if the snapshot is absent."""
    cum = [getattr(s, which) for s in player.snapshots()]
    diffs = phase_difference(cum)
    idx = PHASE_ORDER.index(phase)
    if idx >= len(diffs):
        return None
    return diffs[idx]


def build_observation_table(
    games: Sequence[GameRecord],
    role: Role,
    server: Server,
    phase: Phase,
    stat: Stat,
    accounts: Optional[set[str]] = None,
    champions: Optional[set[str]] = None,
) -> ObservationTable:
    """One row per qualifying (account, game); DMG tables carry the damage-taken covariate.

    `accounts`/`champions` restrict rows to the inclusion sets; None admits every
    participant (used for the expanded ally/enemy re-fit population).
    """
    stat_field = "gold" if stat == Stat.GOLD else "dmg"
    acc_ids: list[str] = []
    champ_ids: list[str] = []
    responses: list[float] = []
    covariates: list[float] = []
    game_ids: list[str] = []
    for g in games:
        if g.server != server:
            continue
        for p in g.players:
            if p.role != role:
                continue
            if accounts is not None and p.account_id not in accounts:
                continue
            if champions is not None and p.champion_id not in champions:
                continue
            y = _phase_value(p, phase, stat_field)
            if y is None:
                continue
            acc_ids.append(p.account_id)
            champ_ids.append(p.champion_id)
            responses.append(y)
            game_ids.append(g.game_id)
            if stat == Stat.DMG:
                x = _phase_value(p, phase, "dmg_taken")
                covariates.append(x if x is not None else 0.0)
    if not responses:
        raise DataError(
            f"no qualifying rows for {role.value}/{server.value}/{phase.value}/{stat.value}"
        )
    uniq_accounts = sorted(set(acc_ids))
    uniq_champs = sorted(set(champ_ids))
    acc_lookup = {a: i for i, a in enumerate(uniq_accounts)}
    champ_lookup = {c: i for i, c in enumerate(uniq_champs)}
    z, mean, sd = standardize(responses)
    cov = None
    cov_scale = None
    if stat == Stat.DMG:
        cov, cmean, csd = standardize(covariates)
        cov_scale = (cmean, csd)
    table = ObservationTable(
        account_index=np.array([acc_lookup[a] for a in acc_ids], dtype=np.int64),
        champion_index=np.array([champ_lookup[c] for c in champ_ids], dtype=np.int64),
        response=z,
        covariate=cov,
        account_ids=uniq_accounts,
        champion_ids=uniq_champs,
        role=role,
        server=server,
        phase=phase,
        stat=stat,
        response_scale=(mean, sd),
        covariate_scale=cov_scale,
        game_ids=game_ids,
    )
    table.validate()
    return table


def write_observation_csv(table: ObservationTable, path) -> None:
    """Persist a table in the flat CSV schema (indices, ids, response, covariate)."""
    import pandas as pd

    df = pd.DataFrame(
        {
            "account_index": table.account_index,
            "champion_index": table.champion_index,
            "account_id": [table.account_ids[i] for i in table.account_index],
            "champion_id": [table.champion_ids[i] for i in table.champion_index],
            "response": table.response,
        }
    )
    if table.covariate is not None:
        df["covariate"] = table.covariate
    df["role"] = table.role.value
    df["server"] = table.server.value
    df["phase"] = table.phase.value
    df["stat"] = table.stat.value
    df.to_csv(path, index=False, float_format="%.12g")


def read_observation_csv(path) -> ObservationTable:
    import pandas as pd

    # keep_default_na: the NA server label must survive as a string
    df = pd.read_csv(path, keep_default_na=False, na_values=[])
    acc_idx = df["account_index"].to_numpy(dtype=np.int64)
    ch_idx = df["champion_index"].to_numpy(dtype=np.int64)
    n_acc = int(acc_idx.max()) + 1
    n_ch = int(ch_idx.max()) + 1
    account_ids = [str(i) for i in range(n_acc)]
    champion_ids = [str(i) for i in range(n_ch)]
    if "account_id" in df.columns:
        for i, a in zip(acc_idx, df["account_id"]):
            account_ids[i] = str(a)
    if "champion_id" in df.columns:
        for i, c in zip(ch_idx, df["champion_id"]):
            champion_ids[i] = str(c)
    return ObservationTable(
        account_index=acc_idx,
        champion_index=ch_idx,
        response=df["response"].to_numpy(dtype=float),
        covariate=df["covariate"].to_numpy(dtype=float) if "covariate" in df.columns else None,
        account_ids=account_ids,
        champion_ids=champion_ids,
        role=Role(df["role"].iloc[0]) if "role" in df.columns else Role.MID,
        server=Server(df["server"].iloc[0]) if "server" in df.columns else Server.NA,
        phase=Phase(df["phase"].iloc[0]) if "phase" in df.columns else Phase.P0_7,
        stat=Stat(df["stat"].iloc[0]) if "stat" in df.columns else Stat.GOLD,
    )


def link_rosters(
    accounts: Iterable[str], roster_path: str
) -> list[RosterLabel]:
    """Label accounts against a roster CSV; unlisted accounts become non-pro."""
    listed: dict[str, RosterLabel] = {}
    with open(roster_path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            acc = row["account_id"]
            label = RosterLabel(
                account_id=acc,
                player_name=row["player_name"],
                league=League(row["league"]),
            )
            if acc in listed and listed[acc].league != label.league:
                raise DataError(
                    f"conflicting leagues for account {acc}: "
                    f"{listed[acc].league.value} vs {label.league.value}"
                )
            listed[acc] = label
    out = []
    for acc in accounts:
        if acc in listed:
            out.append(listed[acc])
        else:
            out.append(RosterLabel(account_id=acc, player_name="", league=League.NONE))
    return out
