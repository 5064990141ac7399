"""Meta-metrics for grading score tables: discrimination, independence, stability."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np
from scipy import stats


class ImpactCategory(IntEnum):
    HIGH_NEG = 1
    LOW_NEG = 2
    NEUTRAL = 3
    LOW_POS = 4
    HIGH_POS = 5


@dataclass
class MetricColumn:
    name: str
    scores: dict[str, float]  # account -> score
    sampling_variance: Optional[dict[str, float]] = None  # account -> variance

    def __post_init__(self):
        if self.sampling_variance is not None:
            if any(v < 0 for v in self.sampling_variance.values()):
                raise ValueError("sampling variances must be >= 0")


@dataclass
class DiscriminationResult:
    value: float
    degenerate: bool = False


def discrimination(column: MetricColumn) -> DiscriminationResult:
    """Fraction of between-account score variance not attributable to sampling noise.

    D = clamp(1 - mean(sampling variance) / var(scores), 0, 1).
    """
    if column.sampling_variance is None:
        raise ValueError("discrimination needs sampling variances")
    accounts = [a for a in column.scores if a in column.sampling_variance]
    if len(accounts) < 3:
        raise ValueError("need at least 3 accounts with sampling variances")
    scores = np.array([column.scores[a] for a in accounts])
    samp = np.array([column.sampling_variance[a] for a in accounts])
    score_var = float(np.var(scores, ddof=1))
    if score_var == 0.0:
        return DiscriminationResult(0.0, degenerate=True)
    d = 1.0 - float(np.mean(samp)) / score_var
    return DiscriminationResult(min(max(d, 0.0), 1.0))


def normal_scores(values: np.ndarray) -> np.ndarray:
    """Rank-based transform to standard normal scores, z = Phi^-1((rank - 0.5)/n)."""
    values = np.asarray(values, dtype=float)
    n = values.size
    ranks = stats.rankdata(values, method="average")
    return stats.norm.ppf((ranks - 0.5) / n)


def independence(
    columns: Sequence[MetricColumn], ridge: float = 1e-6
) -> dict[str, float]:
    """Per-metric fraction of variance unexplained by the other metrics.

    Each column is mapped to normal scores (Gaussian copula), the correlation
    matrix R is ridge-stabilized, and independence of metric j is 1/(R^-1)_jj,
    the conditional-over-marginal variance fraction for standardized normals.
    """
    if len(columns) == 1:
        return {columns[0].name: 1.0}
    if len(columns) < 2:
        raise ValueError("need at least one metric column")
    shared = set(columns[0].scores)
    for col in columns[1:]:
        shared &= set(col.scores)
    if len(shared) < 10:
        raise ValueError(f"only {len(shared)} shared accounts; need >= 10")
    accounts = sorted(shared)
    Z = np.column_stack(
        [normal_scores(np.array([c.scores[a] for a in accounts])) for c in columns]
    )
    R = np.corrcoef(Z, rowvar=False)
    R = R + ridge * np.eye(R.shape[0])
    d = np.sqrt(np.diag(R))
    R = R / np.outer(d, d)
    try:
        prec = np.linalg.inv(R)
    except np.linalg.LinAlgError as exc:
        raise ValueError("correlation matrix singular after stabilization") from exc
    return {col.name: float(1.0 / prec[j, j]) for j, col in enumerate(columns)}


def concordance(scores_a: dict[str, float], scores_b: dict[str, float]) -> float:
    """C-index over accounts present in both periods; ties in either count 0.5."""
    shared = sorted(set(scores_a) & set(scores_b))
    if len(shared) < 2:
        raise ValueError(f"only {len(shared)} overlapping accounts; need >= 2")
    a = np.array([scores_a[k] for k in shared])
    b = np.array([scores_b[k] for k in shared])
    da = np.sign(a[:, None] - a[None, :])
    db = np.sign(b[:, None] - b[None, :])
    iu = np.triu_indices(len(shared), k=1)
    da, db = da[iu], db[iu]
    tied = (da == 0) | (db == 0)
    agree = (~tied) & (da == db)
    credit = agree.sum() + 0.5 * tied.sum()
    return float(credit / da.size)


def categorize(sign_prob: float) -> ImpactCategory:
    """Map a sign probability to the 5-level impact category."""
    if not 0.0 <= sign_prob <= 1.0:
        raise ValueError("sign probability must be in [0, 1]")
    if sign_prob >= 0.95:
        return ImpactCategory.HIGH_POS
    if sign_prob >= 0.75:
        return ImpactCategory.LOW_POS
    if sign_prob > 0.25:
        return ImpactCategory.NEUTRAL
    if sign_prob > 0.05:
        return ImpactCategory.LOW_NEG
    return ImpactCategory.HIGH_NEG


def categorized_concordance(
    probs_a: dict[str, float], probs_b: dict[str, float]
) -> float:
    """Concordance on category ranks derived from sign probabilities."""
    ranks_a = {k: float(int(categorize(v))) for k, v in probs_a.items()}
    ranks_b = {k: float(int(categorize(v))) for k, v in probs_b.items()}
    return concordance(ranks_a, ranks_b)
