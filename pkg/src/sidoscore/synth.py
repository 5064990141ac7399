"""Synthetic observation tables with known ground truth for recovery checks.

All randomness goes through the counter-based Philox generator with one
stream per account (spawn keys derived from the root seed), so enlarging
the account pool never perturbs existing draws.
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .data import ObservationTable, Phase, Role, Server, Stat

_STREAM_ACCOUNT_EFFECT = 0
_STREAM_CHAMPION_EFFECT = 1
_STREAM_GLOBAL = 2
_STREAM_OBSERVATION = 3

PATTERNS = ("balanced", "long_tail", "one_trick")


@dataclass(frozen=True)
class SynthConfig:
    n_accounts: int
    n_champions: int
    tau: float = 0.3
    phi: float = 0.3
    sigma: float = 0.5
    beta0: float = 0.0
    beta_dmgt: Optional[float] = None
    effect_law: str = "t3"  # or "normal"
    pattern: str = "balanced"
    games_per_account: int = 60
    zipf_alpha: float = 1.5
    one_trick_weight: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.n_accounts < 1 or self.n_champions < 1:
            raise ValueError("need at least one account and one champion")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.tau < 0 or self.phi < 0:
            raise ValueError("effect scales must be >= 0")
        if self.effect_law not in ("t3", "normal"):
            raise ValueError(f"unknown effect law {self.effect_law!r}")
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}")


@dataclass(frozen=True)
class TruthSet:
    beta0: float
    account_effects: dict[str, float]
    champion_effects: dict[str, float]
    sigma: float
    beta_dmgt: Optional[float] = None

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if not self.account_effects or not self.champion_effects:
            raise ValueError("effect maps must be non-empty")


@dataclass
class AvailabilityPattern:
    """Per-account game counts, champion-usage weights, and the account order."""

    account_ids: list[str]
    champion_ids: list[str]
    game_counts: np.ndarray  # (n_accounts,), all >= 1
    champion_weights: np.ndarray  # (n_accounts, n_champions), rows sum to 1

    def __post_init__(self):
        if np.any(self.game_counts < 1):
            raise ValueError("every account needs at least one game")
        sums = self.champion_weights.sum(axis=1)
        if not np.allclose(sums, 1.0, atol=1e-9):
            raise ValueError("champion weights must sum to 1 per account")


def _stream(seed: int, tag: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(tag, index))
    return np.random.Generator(np.random.Philox(ss))


def account_label(i: int) -> str:
    return f"a{i:05d}"


def champion_label(i: int) -> str:
    return f"c{i:04d}"


def _draw_effect(rng: np.random.Generator, law: str, scale: float) -> float:
    if scale == 0.0:
        return 0.0
    if law == "t3":
        return float(scale * rng.standard_t(3))
    return float(rng.normal(0.0, scale))


def generate_truth(config: SynthConfig, seed: Optional[int] = None) -> TruthSet:
    """Draw ground-truth effects; deterministic in (config, seed)."""
    seed = config.seed if seed is None else seed
    acc = {
        account_label(i): _draw_effect(
            _stream(seed, _STREAM_ACCOUNT_EFFECT, i), config.effect_law, config.tau
        )
        for i in range(config.n_accounts)
    }
    champ = {
        champion_label(i): _draw_effect(
            _stream(seed, _STREAM_CHAMPION_EFFECT, i), config.effect_law, config.phi
        )
        for i in range(config.n_champions)
    }
    return TruthSet(
        beta0=config.beta0,
        account_effects=acc,
        champion_effects=champ,
        sigma=config.sigma,
        beta_dmgt=config.beta_dmgt,
    )


def generate_pattern(config: SynthConfig, seed: Optional[int] = None) -> AvailabilityPattern:
    """Build one of the availability presets: balanced, long_tail, one_trick."""
    seed = config.seed if seed is None else seed
    n_acc, n_ch = config.n_accounts, config.n_champions
    counts = np.full(n_acc, config.games_per_account, dtype=np.int64)
    weights = np.full((n_acc, n_ch), 1.0 / n_ch)
    if config.pattern == "long_tail":
        for i in range(n_acc):
            rng = _stream(seed, _STREAM_GLOBAL, i + 1)
            # Zipf draw capped so a single account cannot dominate the table
            counts[i] = min(int(rng.zipf(config.zipf_alpha)), 5 * config.games_per_account)
        counts = np.maximum(counts, 1)
    elif config.pattern == "one_trick":
        w_main = config.one_trick_weight
        rest = (1.0 - w_main) / max(n_ch - 1, 1)
        for i in range(n_acc):
            rng = _stream(seed, _STREAM_GLOBAL, i + 1)
            main = int(rng.integers(n_ch))
            weights[i, :] = rest
            weights[i, main] = w_main if n_ch > 1 else 1.0
    return AvailabilityPattern(
        account_ids=[account_label(i) for i in range(n_acc)],
        champion_ids=[champion_label(i) for i in range(n_ch)],
        game_counts=counts,
        champion_weights=weights,
    )


def generate_observations(
    truth: TruthSet,
    pattern: AvailabilityPattern,
    seed: int,
    role: Role = Role.MID,
    server: Server = Server.NA,
    phase: Phase = Phase.P0_7,
    stat: Optional[Stat] = None,
) -> ObservationTable:
    """Simulate one observation table from the regression data-generating process.

    Responses are on the model's natural (already standardized) scale; the
    table's scale record is the identity.
    """
    unknown = set(pattern.account_ids) - set(truth.account_effects)
    unknown |= set(pattern.champion_ids) - set(truth.champion_effects)
    if unknown:
        raise ValueError(f"pattern ids missing from truth: {sorted(unknown)[:5]}")

    has_cov = truth.beta_dmgt is not None
    acc_rows: list[int] = []
    ch_rows: list[int] = []
    responses: list[float] = []
    covariates: list[float] = []
    used_champs: set[int] = set()
    for i, acc_id in enumerate(pattern.account_ids):
        rng = _stream(seed, _STREAM_OBSERVATION, i)
        n_g = int(pattern.game_counts[i])
        champs = rng.choice(len(pattern.champion_ids), size=n_g, p=pattern.champion_weights[i])
        eps = rng.normal(0.0, truth.sigma, size=n_g)
        xs = rng.normal(0.0, 1.0, size=n_g) if has_cov else np.zeros(n_g)
        b_p = truth.account_effects[acc_id]
        for g in range(n_g):
            c = int(champs[g])
            used_champs.add(c)
            y = truth.beta0 + b_p + truth.champion_effects[pattern.champion_ids[c]] + eps[g]
            if has_cov:
                y += truth.beta_dmgt * xs[g]
                covariates.append(float(xs[g]))
            acc_rows.append(i)
            ch_rows.append(c)
            responses.append(float(y))

    # compact champion indices to the used set so the fit index space is dense
    used = sorted(used_champs)
    remap = {old: new for new, old in enumerate(used)}
    table = ObservationTable(
        account_index=np.array(acc_rows, dtype=np.int64),
        champion_index=np.array([remap[c] for c in ch_rows], dtype=np.int64),
        response=np.array(responses),
        covariate=np.array(covariates) if has_cov else None,
        account_ids=list(pattern.account_ids),
        champion_ids=[pattern.champion_ids[c] for c in used],
        role=role,
        server=server,
        phase=phase,
        stat=stat if stat is not None else (Stat.DMG if has_cov else Stat.GOLD),
        response_scale=(0.0, 1.0),
        covariate_scale=(0.0, 1.0) if has_cov else None,
    )
    return table


def truth_means(truth: TruthSet, table: ObservationTable) -> np.ndarray:
    """Noise-free mean of each row of `table` under `truth` (covariate included)."""
    b_p = np.array([truth.account_effects[a] for a in table.account_ids])
    b_c = np.array([truth.champion_effects[c] for c in table.champion_ids])
    mu = truth.beta0 + b_p[table.account_index] + b_c[table.champion_index]
    if truth.beta_dmgt is not None and table.covariate is not None:
        mu = mu + truth.beta_dmgt * table.covariate
    return mu


@dataclass
class RecoveryReport:
    account_pearson: float
    account_spearman: float
    account_rmse: float
    champion_pearson: float
    champion_spearman: float
    champion_rmse: float
    n_accounts: int
    n_champions: int


def _recovery(est: np.ndarray, true: np.ndarray) -> tuple[float, float, float]:
    pearson = float(stats.pearsonr(est, true).statistic)
    spearman = float(stats.spearmanr(est, true).statistic)
    rmse = float(np.sqrt(np.mean((est - true) ** 2)))
    return pearson, spearman, rmse


def recovery_report(fit, truth: TruthSet) -> RecoveryReport:
    """Compare posterior-mean effects against the generating truth."""
    shared_acc = [a for a in fit.account_ids if a in truth.account_effects]
    if len(shared_acc) < 3:
        raise ValueError("need at least 3 shared accounts for a recovery report")
    acc_means = fit.account_effect_means()
    idx = [fit.account_ids.index(a) for a in shared_acc]
    est_p = acc_means[idx]
    true_p = np.array([truth.account_effects[a] for a in shared_acc])
    p_r, p_s, p_rmse = _recovery(est_p, true_p)

    shared_ch = [c for c in fit.champion_ids if c in truth.champion_effects]
    ch_means = fit.champion_effect_means()
    cidx = [fit.champion_ids.index(c) for c in shared_ch]
    est_c = ch_means[cidx]
    true_c = np.array([truth.champion_effects[c] for c in shared_ch])
    if len(shared_ch) >= 3:
        c_r, c_s, c_rmse = _recovery(est_c, true_c)
    else:
        c_r = c_s = c_rmse = float("nan")
    return RecoveryReport(
        account_pearson=p_r,
        account_spearman=p_s,
        account_rmse=p_rmse,
        champion_pearson=c_r,
        champion_spearman=c_s,
        champion_rmse=c_rmse,
        n_accounts=len(shared_acc),
        n_champions=len(shared_ch),
    )


_CONFIG_KEYS = {
    "n_accounts",
    "n_champions",
    "tau",
    "phi",
    "sigma",
    "beta0",
    "beta_dmgt",
    "effect_law",
    "pattern",
    "games_per_account",
    "zipf_alpha",
    "one_trick_weight",
    "seed",
}


def load_synth_config(path: str) -> SynthConfig:
    """Read a TOML config file with the documented simulation keys."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return SynthConfig(**raw)
