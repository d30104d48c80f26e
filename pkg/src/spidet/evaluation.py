"""Ranking metrics and cross-detector statistical comparison.

Metric code always sees anomalousness with higher = more anomalous;
:meth:`LabeledScores.from_detector` applies the orientation flip for
detector outputs (which use lower = more anomalous). Ties in AP, NDCG,
and precision@k break by stable original index; ROC AUC uses the
tie-aware Mann-Whitney form so tie order cannot matter there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2 as chi2_dist
from scipy.stats import rankdata

from .exceptions import DataError

# Critical values q_alpha(k) for the Nemenyi test at alpha = 0.05
# (studentized range at infinite df divided by sqrt(2)).
_NEMENYI_Q_05 = {
    2: 1.959964,
    3: 2.343701,
    4: 2.569032,
    5: 2.727774,
    6: 2.849705,
    7: 2.948320,
    8: 3.030879,
    9: 3.101730,
    10: 3.163684,
    11: 3.218654,
    12: 3.268004,
    13: 3.312739,
    14: 3.353618,
    15: 3.391230,
    16: 3.426041,
    17: 3.458425,
    18: 3.488685,
    19: 3.517073,
    20: 3.543799,
}


@dataclass
class LabeledScores:
    """Anomalousness values (higher = more anomalous) with binary labels."""

    anomalousness: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.anomalousness = np.asarray(self.anomalousness, dtype=np.float64).ravel()
        self.labels = np.asarray(self.labels).ravel().astype(np.int64)
        if self.anomalousness.size != self.labels.size:
            raise DataError("scores and labels must have equal length")
        if self.anomalousness.size == 0:
            raise DataError("empty score vector")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")

    @classmethod
    def from_detector(cls, scores: np.ndarray, labels: np.ndarray) -> "LabeledScores":
        """Flip detector scores (lower = more anomalous) into anomalousness."""
        return cls(anomalousness=-np.asarray(scores, dtype=np.float64), labels=labels)

    def descending_order(self) -> np.ndarray:
        # stable sort on negated values: descending with original-index tie-break
        return np.argsort(-self.anomalousness, kind="stable")


def average_precision(s: LabeledScores) -> float:
    """Mean precision at each positive's rank, ranked by descending anomalousness."""
    ranked = s.labels[s.descending_order()]
    if ranked.sum() == 0:
        raise DataError("average precision needs at least one positive label")
    hits = np.cumsum(ranked)
    ranks = np.arange(1, ranked.size + 1)
    at_pos = ranked == 1
    return float((hits[at_pos] / ranks[at_pos]).mean())


def roc_auc(s: LabeledScores) -> float:
    """P(score_pos > score_neg) + 0.5 P(equal) over all positive/negative pairs."""
    n_pos = int(s.labels.sum())
    n_neg = s.labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC AUC needs both classes present")
    r = rankdata(s.anomalousness, method="average")
    u = r[s.labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def ndcg_at_k(s: LabeledScores, k: int) -> float:
    """Binary-gain NDCG at k; 0 when no positive appears in the top k."""
    if k < 1:
        raise DataError("k must be >= 1")
    ranked = s.labels[s.descending_order()]
    kk = min(k, ranked.size)
    discounts = 1.0 / np.log2(np.arange(2, kk + 2))
    dcg = float(ranked[:kk] @ discounts)
    ideal_hits = min(int(s.labels.sum()), kk)
    if ideal_hits == 0:
        return 0.0
    idcg = float(discounts[:ideal_hits].sum())
    return dcg / idcg


def precision_at_k(s: LabeledScores, k: int) -> float:
    """Fraction of the top k that are anomalies."""
    if k < 1:
        raise DataError("k must be >= 1")
    ranked = s.labels[s.descending_order()]
    return float(ranked[: min(k, ranked.size)].sum() / k)


@dataclass
class RankTable:
    """Per-dataset ranks of each method (rank 1 = best) and their averages."""

    ranks: np.ndarray
    average: np.ndarray


def rank_rows(metric_table: np.ndarray) -> np.ndarray:
    """Rank methods within each row; higher metric = rank 1, ties averaged."""
    table = np.atleast_2d(np.asarray(metric_table, dtype=np.float64))
    return np.vstack([rankdata(-row, method="average") for row in table])


def friedman_test(metric_table: np.ndarray) -> tuple[RankTable, float, float]:
    """Friedman chi-square over a datasets-by-methods metric table.

    Returns the rank table, the chi-square statistic, and its p-value from
    the chi-square distribution with k-1 degrees of freedom.
    """
    table = np.atleast_2d(np.asarray(metric_table, dtype=np.float64))
    n_datasets, k = table.shape
    if n_datasets < 2:
        raise DataError("Friedman test needs at least 2 datasets")
    if k < 2:
        raise DataError("Friedman test needs at least 2 methods")
    ranks = rank_rows(table)
    avg = ranks.mean(axis=0)
    stat = 12.0 * n_datasets / (k * (k + 1)) * (float(avg @ avg) - k * (k + 1) ** 2 / 4.0)
    stat = max(stat, 0.0)
    p_value = float(chi2_dist.sf(stat, k - 1))
    return RankTable(ranks=ranks, average=avg), float(stat), p_value


def nemenyi_cd(k: int, n_datasets: int, alpha: float = 0.05) -> float:
    """Critical difference between average ranks for the Nemenyi post-hoc test."""
    if alpha != 0.05:
        raise DataError("only alpha = 0.05 is supported")
    if n_datasets < 1:
        raise DataError("need at least 1 dataset")
    if k not in _NEMENYI_Q_05:
        raise DataError(f"no critical value tabulated for k = {k}")
    q = _NEMENYI_Q_05[k]
    return float(q * np.sqrt(k * (k + 1) / (6.0 * n_datasets)))
