"""Split R-hat and effective sample size for chain x draw matrices.

Definitions follow the standard split-chain recipe: each chain is halved,
R-hat is sqrt(((n-1)/n * W + B/n) / W) over the split halves, and ESS uses
chain-averaged autocorrelations with Geyer initial-positive-sequence
truncation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Diagnostics:
    rhat: dict[str, float] = field(default_factory=dict)
    ess: dict[str, float] = field(default_factory=dict)
    degenerate: set[str] = field(default_factory=set)

    def worst_rhat(self) -> float:
        vals = [v for v in self.rhat.values() if np.isfinite(v)]
        return max(vals) if vals else float("nan")


def _split(chains: np.ndarray) -> np.ndarray:
    c, n = chains.shape
    half = n // 2
    return np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)


def split_rhat(chains: np.ndarray) -> float:
    """Potential scale reduction over split chains; nan for degenerate chains."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[0] < 2:
        raise ValueError("need a (chains, draws) matrix with >= 2 chains")
    parts = _split(chains)
    m, n = parts.shape
    if n < 2:
        raise ValueError("chains too short to split")
    means = parts.mean(axis=1)
    variances = parts.var(axis=1, ddof=1)
    w = variances.mean()
    if w == 0.0:
        return float("nan")
    b = n * means.var(ddof=1)
    var_plus = (n - 1) / n * w + b / n
    return float(np.sqrt(var_plus / w))


def effective_sample_size(chains: np.ndarray) -> float:
    """ESS from chain-averaged autocorrelations of the split chains."""
    parts = _split(np.asarray(chains, dtype=float))
    m, n = parts.shape
    means = parts.mean(axis=1)
    variances = parts.var(axis=1, ddof=1)
    w = variances.mean()
    if w == 0.0:
        return float("nan")
    b = n * means.var(ddof=1) if m > 1 else 0.0
    var_plus = (n - 1) / n * w + b / n

    centered = parts - means[:, None]
    # per-chain autocovariances via FFT
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(centered, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n].real / n
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus

    # Geyer initial positive sequence on paired sums
    tail = 0.0
    for t in range(1, n - 2, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        tail += pair
    ess = m * n / (1.0 + 2.0 * tail)
    return float(min(ess, m * n))


def compute_diagnostics(draws: dict[str, np.ndarray]) -> Diagnostics:
    """Diagnostics for a dict of parameter name -> (chains, draws) matrices."""
    diag = Diagnostics()
    for name, chains in draws.items():
        r = split_rhat(chains)
        e = effective_sample_size(chains)
        diag.rhat[name] = r
        diag.ess[name] = e
        if not np.isfinite(r):
            diag.degenerate.add(name)
    return diag
