"""Gibbs sampler for the hierarchical random-effects regression.

Model (all data standardized):

    y_i = intercept + coef * x_i + champ_effect[c_i] + acct_effect[p_i] + noise_i

with priors

    intercept     ~ Normal(0, intercept_sd^2)
    coef          ~ Normal(0, covariate_sd^2)
    champ_effect  ~ Student-t(effect_dof, 0, phi)
    acct_effect   ~ Student-t(effect_dof, 0, tau)
    phi, tau      ~ half-Cauchy(effect_scale_prior)
    sigma (noise) ~ half-Cauchy(noise_scale_prior)

Every conditional is conjugate once the t effects are written as normals with
per-effect inverse-gamma mixing variances and each half-Cauchy scale is
expanded through the two-level inverse-gamma hierarchy:

    s^2 | a ~ InvGamma(1/2, 1/a),  a ~ InvGamma(1/2, 1/A^2)  =>  s ~ HalfC(A)
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ..data import ObservationTable
from .diagnostics import Diagnostics, compute_diagnostics


class FitError(RuntimeError):
    """Model fitting could not proceed (bad inputs, singular index space)."""


# Parameters that may be held fixed via ModelConfig.pinned.
PINNABLE = {"intercept", "covariate_coef", "tau", "phi", "sigma"}


@dataclass(frozen=True)
class ModelConfig:
    has_covariate: bool = False
    intercept_sd: float = 1.0
    covariate_sd: float = 1.0
    effect_scale_prior: float = 0.5
    noise_scale_prior: float = 0.3
    effect_dof: Optional[float] = 3.0  # None => Normal effects
    chains: int = 4
    warmup: int = 1000
    draws: int = 1000
    seed: int = 0
    pinned: dict = field(default_factory=dict)
    rhat_gate: float = 1.05

    def __post_init__(self):
        if self.chains < 2:
            raise ValueError("chains must be >= 2")
        if self.draws < 100:
            raise ValueError("draws must be >= 100")
        for name in ("intercept_sd", "covariate_sd", "effect_scale_prior", "noise_scale_prior"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.effect_dof is not None and self.effect_dof <= 0:
            raise ValueError("effect_dof must be > 0 or None")
        bad = set(self.pinned) - PINNABLE
        if bad:
            raise ValueError(f"cannot pin {sorted(bad)}")


@dataclass
class PosteriorFit:
    """MCMC draws (chains x draws [x dim]) plus the identity of what was fit."""

    config: ModelConfig
    account_ids: list[str]
    champion_ids: list[str]
    intercept: np.ndarray
    covariate_coef: Optional[np.ndarray]
    account_effects: np.ndarray
    champion_effects: np.ndarray
    tau: np.ndarray
    phi: np.ndarray
    sigma: np.ndarray
    identity: dict = field(default_factory=dict)
    diagnostics: Optional[Diagnostics] = None
    convergence_warning: bool = False

    @property
    def n_accounts(self) -> int:
        return len(self.account_ids)

    @property
    def n_champions(self) -> int:
        return len(self.champion_ids)

    def scalar_draws(self) -> dict[str, np.ndarray]:
        out = {"intercept": self.intercept, "tau": self.tau, "phi": self.phi, "sigma": self.sigma}
        if self.covariate_coef is not None:
            out["covariate_coef"] = self.covariate_coef
        return out

    def draws_for(self, name: str) -> np.ndarray:
        """Draw matrix (chains, draws) for a named parameter.

        Names: the scalar parameters above, plus "account:<id>", "champion:<id>",
        and "account_rel:<id>" for the tau-relative account effect.
        """
        scalars = self.scalar_draws()
        if name in scalars:
            return scalars[name]
        if name.startswith("account_rel:"):
            return self.draws_for("account:" + name.split(":", 1)[1]) / self.tau
        for prefix, ids, arr in (
            ("account:", self.account_ids, self.account_effects),
            ("champion:", self.champion_ids, self.champion_effects),
        ):
            if name.startswith(prefix):
                key = name.split(":", 1)[1]
                try:
                    return arr[:, :, ids.index(key)]
                except ValueError:
                    raise KeyError(f"unknown {prefix[:-1]} {key!r}") from None
        raise KeyError(f"unknown parameter {name!r}")

    def account_effect_means(self) -> np.ndarray:
        return self.account_effects.mean(axis=(0, 1))

    def champion_effect_means(self) -> np.ndarray:
        return self.champion_effects.mean(axis=(0, 1))


def _inv_gamma(rng: np.random.Generator, shape: float, rate, size=None) -> np.ndarray:
    return 1.0 / rng.gamma(shape, 1.0 / np.asarray(rate), size=size)


def _run_chain(
    rng: np.random.Generator,
    y: np.ndarray,
    acc: np.ndarray,
    ch: np.ndarray,
    x: Optional[np.ndarray],
    n_acc: int,
    n_ch: int,
    cfg: ModelConfig,
) -> dict[str, np.ndarray]:
    n = y.size
    pin = cfg.pinned
    nu = cfg.effect_dof
    a_eff = cfg.effect_scale_prior
    a_noise = cfg.noise_scale_prior

    beta0 = float(pin.get("intercept", 0.0))
    coef = float(pin.get("covariate_coef", 0.0))
    b_p = np.zeros(n_acc)
    b_c = np.zeros(n_ch)
    tau = float(pin.get("tau", a_eff))
    phi = float(pin.get("phi", a_eff))
    sigma = float(pin.get("sigma", a_noise))
    lam_p = np.ones(n_acc)
    lam_c = np.ones(n_ch)
    aux_tau = aux_phi = aux_sigma = 1.0

    n_per_acc = np.bincount(acc, minlength=n_acc).astype(float)
    n_per_ch = np.bincount(ch, minlength=n_ch).astype(float)
    if cfg.has_covariate:
        xx = float(np.dot(x, x))

    kept = cfg.draws
    out = {
        "intercept": np.empty(kept),
        "tau": np.empty(kept),
        "phi": np.empty(kept),
        "sigma": np.empty(kept),
        "account_effects": np.empty((kept, n_acc)),
        "champion_effects": np.empty((kept, n_ch)),
    }
    if cfg.has_covariate:
        out["covariate_coef"] = np.empty(kept)

    for it in range(cfg.warmup + kept):
        s2 = sigma * sigma
        xb = coef * x if cfg.has_covariate else 0.0

        # intercept
        if "intercept" not in pin:
            r = y - xb - b_c[ch] - b_p[acc]
            prec = n / s2 + 1.0 / cfg.intercept_sd**2
            beta0 = rng.normal(np.sum(r) / s2 / prec, np.sqrt(1.0 / prec))

        # covariate coefficient
        if cfg.has_covariate and "covariate_coef" not in pin:
            r = y - beta0 - b_c[ch] - b_p[acc]
            prec = xx / s2 + 1.0 / cfg.covariate_sd**2
            coef = rng.normal(np.dot(x, r) / s2 / prec, np.sqrt(1.0 / prec))
            xb = coef * x

        # champion effects (conditionally independent given the rest)
        r = y - beta0 - xb - b_p[acc]
        sums = np.bincount(ch, weights=r, minlength=n_ch)
        prec = n_per_ch / s2 + 1.0 / (phi * phi * lam_c)
        b_c = rng.normal(sums / s2 / prec, np.sqrt(1.0 / prec))

        # account effects
        r = y - beta0 - xb - b_c[ch]
        sums = np.bincount(acc, weights=r, minlength=n_acc)
        prec = n_per_acc / s2 + 1.0 / (tau * tau * lam_p)
        b_p = rng.normal(sums / s2 / prec, np.sqrt(1.0 / prec))

        # translation moves: shuttle a shared shift between the intercept and
        # each effect block (likelihood-invariant, so the conditional for the
        # shift involves only the priors; cures the slow-mixing shift direction)
        if "intercept" not in pin:
            for block, scale, lam in (("c", phi, lam_c), ("p", tau, lam_p)):
                eff = b_c if block == "c" else b_p
                prec_shift = 1.0 / cfg.intercept_sd**2 + np.sum(1.0 / (scale * scale * lam))
                mean_shift = (
                    -beta0 / cfg.intercept_sd**2 + np.sum(eff / (scale * scale * lam))
                ) / prec_shift
                shift = rng.normal(mean_shift, np.sqrt(1.0 / prec_shift))
                beta0 += shift
                if block == "c":
                    b_c = b_c - shift
                else:
                    b_p = b_p - shift

        # t mixing variances
        if nu is not None:
            lam_c = _inv_gamma(rng, (nu + 1.0) / 2.0, (nu + (b_c / phi) ** 2) / 2.0)
            lam_p = _inv_gamma(rng, (nu + 1.0) / 2.0, (nu + (b_p / tau) ** 2) / 2.0)

        # effect scales (half-Cauchy via two-level inverse gamma)
        if "phi" not in pin:
            phi2 = _inv_gamma(
                rng, 0.5 + n_ch / 2.0, 1.0 / aux_phi + np.sum(b_c * b_c / lam_c) / 2.0
            )
            phi = float(np.sqrt(phi2))
            aux_phi = float(_inv_gamma(rng, 1.0, 1.0 / a_eff**2 + 1.0 / phi2))
        if "tau" not in pin:
            tau2 = _inv_gamma(
                rng, 0.5 + n_acc / 2.0, 1.0 / aux_tau + np.sum(b_p * b_p / lam_p) / 2.0
            )
            tau = float(np.sqrt(tau2))
            aux_tau = float(_inv_gamma(rng, 1.0, 1.0 / a_eff**2 + 1.0 / tau2))

        # noise scale
        if "sigma" not in pin:
            resid = y - beta0 - xb - b_c[ch] - b_p[acc]
            sig2 = _inv_gamma(
                rng, 0.5 + n / 2.0, 1.0 / aux_sigma + np.dot(resid, resid) / 2.0
            )
            sigma = float(np.sqrt(sig2))
            aux_sigma = float(_inv_gamma(rng, 1.0, 1.0 / a_noise**2 + 1.0 / sig2))

        k = it - cfg.warmup
        if k >= 0:
            out["intercept"][k] = beta0
            out["tau"][k] = tau
            out["phi"][k] = phi
            out["sigma"][k] = sigma
            out["account_effects"][k] = b_p
            out["champion_effects"][k] = b_c
            if cfg.has_covariate:
                out["covariate_coef"][k] = coef
    return out


def fit_hierarchical(table: ObservationTable, config: ModelConfig) -> PosteriorFit:
    """Run the Gibbs sampler on an observation table; deterministic given config.seed."""
    if table.n_rows == 0:
        raise FitError("empty table")
    if config.has_covariate and table.covariate is None:
        raise FitError("config requires a covariate but the table has none")
    acc = np.asarray(table.account_index, dtype=np.int64)
    ch = np.asarray(table.champion_index, dtype=np.int64)
    n_acc, n_ch = table.n_accounts, table.n_champions
    if len(np.unique(acc)) != n_acc:
        raise FitError("account index space has empty slots")
    if len(np.unique(ch)) != n_ch:
        raise FitError("champion index space has empty slots")

    y = np.asarray(table.response, dtype=float)
    x = np.asarray(table.covariate, dtype=float) if config.has_covariate else None

    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    chains = [
        _run_chain(np.random.Generator(np.random.Philox(s)), y, acc, ch, x, n_acc, n_ch, config)
        for s in seeds
    ]

    def stack(name):
        return np.stack([c[name] for c in chains])

    fit = PosteriorFit(
        config=config,
        account_ids=list(table.account_ids),
        champion_ids=list(table.champion_ids),
        intercept=stack("intercept"),
        covariate_coef=stack("covariate_coef") if config.has_covariate else None,
        account_effects=stack("account_effects"),
        champion_effects=stack("champion_effects"),
        tau=stack("tau"),
        phi=stack("phi"),
        sigma=stack("sigma"),
        identity={
            "role": table.role.value,
            "server": table.server.value,
            "phase": table.phase.value,
            "stat": table.stat.value,
        },
    )
    gate = {k: v for k, v in fit.scalar_draws().items() if k not in config.pinned}
    fit.diagnostics = compute_diagnostics(gate)
    fit.convergence_warning = any(
        np.isfinite(r) and r >= config.rhat_gate for r in fit.diagnostics.rhat.values()
    )
    return fit


def posterior_summary(fit: PosteriorFit, include_relative: bool = False) -> dict[str, dict]:
    """Per-parameter mean/sd/5%/50%/95% over pooled post-warmup draws."""
    names = list(fit.scalar_draws())
    names += [f"champion:{c}" for c in fit.champion_ids]
    names += [f"account:{a}" for a in fit.account_ids]
    if include_relative:
        names += [f"account_rel:{a}" for a in fit.account_ids]
    out = {}
    for name in names:
        d = fit.draws_for(name).ravel()
        q05, q50, q95 = np.quantile(d, [0.05, 0.50, 0.95])
        out[name] = {
            "mean": float(np.mean(d)),
            "sd": float(np.std(d, ddof=0)),
            "q05": float(q05),
            "q50": float(q50),
            "q95": float(q95),
        }
    return out


def predict(
    fit: PosteriorFit,
    rows: Sequence[tuple],
) -> np.ndarray:
    """Posterior-mean plug-in predictions for rows of (account_id, champion_id[, covariate])."""
    b0 = float(fit.intercept.mean())
    coef = float(fit.covariate_coef.mean()) if fit.covariate_coef is not None else 0.0
    acc_means = fit.account_effect_means()
    ch_means = fit.champion_effect_means()
    acc_lookup = {a: i for i, a in enumerate(fit.account_ids)}
    ch_lookup = {c: i for i, c in enumerate(fit.champion_ids)}
    preds = np.empty(len(rows))
    for i, row in enumerate(rows):
        account_id, champion_id = row[0], row[1]
        x = float(row[2]) if len(row) > 2 and row[2] is not None else 0.0
        if account_id not in acc_lookup:
            raise KeyError(f"unknown account {account_id!r}")
        if champion_id not in ch_lookup:
            raise KeyError(f"unknown champion {champion_id!r}")
        preds[i] = b0 + acc_means[acc_lookup[account_id]] + ch_means[ch_lookup[champion_id]] + coef * x
    return preds


def sign_probability(fit: PosteriorFit, parameter: str) -> float:
    """Fraction of pooled draws that are strictly positive."""
    d = fit.draws_for(parameter)
    return float(np.mean(d > 0))


class HierarchicalEffectsRegressor(BaseEstimator, RegressorMixin):
    """sklearn-style front end for the hierarchical Gibbs model.

    X is an integer array of shape (n, 2) with columns (account_index,
    champion_index), or (n, 3) with a real covariate in the third column
    when has_covariate=True. y is the standardized response.
    """

    def __init__(
        self,
        has_covariate=False,
        intercept_sd=1.0,
        covariate_sd=1.0,
        effect_scale_prior=0.5,
        noise_scale_prior=0.3,
        effect_dof=3.0,
        chains=4,
        warmup=1000,
        draws=1000,
        seed=0,
    ):
        self.has_covariate = has_covariate
        self.intercept_sd = intercept_sd
        self.covariate_sd = covariate_sd
        self.effect_scale_prior = effect_scale_prior
        self.noise_scale_prior = noise_scale_prior
        self.effect_dof = effect_dof
        self.chains = chains
        self.warmup = warmup
        self.draws = draws
        self.seed = seed

    def _config(self) -> ModelConfig:
        return ModelConfig(
            has_covariate=self.has_covariate,
            intercept_sd=self.intercept_sd,
            covariate_sd=self.covariate_sd,
            effect_scale_prior=self.effect_scale_prior,
            noise_scale_prior=self.noise_scale_prior,
            effect_dof=self.effect_dof,
            chains=self.chains,
            warmup=self.warmup,
            draws=self.draws,
            seed=self.seed,
        )

    def fit(self, X, y):
        from ..data import ObservationTable, Phase, Role, Server, Stat

        X = np.asarray(X)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise ValueError("X must be 2-D with one row per response")
        needed = 3 if self.has_covariate else 2
        if X.shape[1] < needed:
            raise ValueError(f"X needs {needed} columns")
        acc = X[:, 0].astype(np.int64)
        ch = X[:, 1].astype(np.int64)
        n_acc = int(acc.max()) + 1
        n_ch = int(ch.max()) + 1
        table = ObservationTable(
            account_index=acc,
            champion_index=ch,
            response=y,
            covariate=X[:, 2].astype(float) if self.has_covariate else None,
            account_ids=[str(i) for i in range(n_acc)],
            champion_ids=[str(i) for i in range(n_ch)],
            role=Role.MID,
            server=Server.NA,
            phase=Phase.P0_7,
            stat=Stat.DMG if self.has_covariate else Stat.GOLD,
        )
        self.fit_ = fit_hierarchical(table, self._config())
        self.account_effects_ = self.fit_.account_effect_means()
        self.champion_effects_ = self.fit_.champion_effect_means()
        self.intercept_ = float(self.fit_.intercept.mean())
        return self

    def predict(self, X):
        X = np.asarray(X)
        acc = X[:, 0].astype(np.int64)
        ch = X[:, 1].astype(np.int64)
        pred = self.intercept_ + self.account_effects_[acc] + self.champion_effects_[ch]
        if self.has_covariate:
            pred = pred + float(self.fit_.covariate_coef.mean()) * X[:, 2].astype(float)
        return pred


def with_seed(config: ModelConfig, seed: int) -> ModelConfig:
    return replace(config, seed=seed)
