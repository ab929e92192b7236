"""Pairwise misranking loss, empirical AUC risk and ROC curves.

Two tie conventions coexist on purpose:

* the exponent loss (`misrank_loss`) counts a tied pair s_i <= s_j as
  misranked, so a degenerate constant score is maximally penalized
  instead of rewarded;
* reported AUC (`roc_auc`) uses the usual half-credit convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .data import LabeledDataset
from .errors import DataError


def misrank_counts(scores: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-row count of positive/negative pairs with s_pos <= s_neg.

    `scores` is (n,) or (rows, n); returns a scalar-shaped or (rows,)
    integer-valued float array. Ties count as misranked. O(rows * n log n)
    through max-rank statistics, no pairwise blow-up.
    """
    S = np.atleast_2d(np.asarray(scores, dtype=float))
    neg = y == -1
    # #{i in pos: s_i <= s_j} = #{all: s <= s_j} - #{neg: s <= s_j}
    rank_all = rankdata(S, method="max", axis=1)[:, neg]
    rank_neg = rankdata(S[:, neg], method="max", axis=1)
    counts = (rank_all - rank_neg).sum(axis=1).astype(float)
    return counts if np.asarray(scores).ndim == 2 else counts[0]


def misrank_loss(scores: np.ndarray, ds: LabeledDataset) -> float | np.ndarray:
    """Fraction of positive/negative pairs misranked (ties included).

    Accepts one score vector or a (rows, n) matrix of score vectors.
    """
    ds.require_both_classes()
    return misrank_counts(scores, ds.y) / ds.n_pairs


def _strict_misrank_count(scores: np.ndarray, y: np.ndarray) -> int:
    pos = np.sort(scores[y == 1])
    return int(np.searchsorted(pos, scores[y == -1], side="left").sum())


def empirical_auc_risk(scores: np.ndarray, ds: LabeledDataset) -> float:
    """Ordered-pair ranking risk (1/(n(n-1))) sum_{i!=j} 1{misranked}.

    Each unordered mixed pair with s_pos strictly below s_neg appears
    twice in the ordered sum; same-label pairs and exact ties contribute
    nothing. Equals 2*n_pos*n_neg/(n(n-1)) * misrank_loss for tie-free
    scores.
    """
    scores = np.asarray(scores, dtype=float)
    if ds.n < 2:
        raise DataError("need at least 2 points")
    strict = _strict_misrank_count(scores, ds.y)
    return 2.0 * strict / (ds.n * (ds.n - 1))


@dataclass(frozen=True)
class RocCurve:
    """ROC curve points, from (0,0) to (1,1), both coordinates monotone."""

    fpr: np.ndarray
    tpr: np.ndarray

    def trapezoid_area(self) -> float:
        return float(np.trapezoid(self.tpr, self.fpr))

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("fpr,tpr\n")
            for f, t in zip(self.fpr, self.tpr):
                fh.write(f"{float(f)!r},{float(t)!r}\n")


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> tuple[RocCurve, float]:
    """ROC curve over all distinct score thresholds plus half-credit AUC.

    AUC is the Mann-Whitney statistic with average ranks, identical to
    the trapezoidal area under the returned curve.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == -1).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC needs both classes present")

    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    y_sorted = labels[order]
    # threshold group boundaries: positions where the score changes
    last_of_group = np.flatnonzero(np.diff(s_sorted) != 0)
    cut = np.concatenate([last_of_group, [scores.size - 1]])
    tp = np.cumsum(y_sorted == 1)[cut]
    fp = np.cumsum(y_sorted == -1)[cut]
    fpr = np.concatenate([[0.0], fp / n_neg])
    tpr = np.concatenate([[0.0], tp / n_pos])
    curve = RocCurve(fpr, tpr)

    ranks = rankdata(scores, method="average")
    auc = (ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return curve, float(auc)
