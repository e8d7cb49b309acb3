"""Metrics: classification reports, inter-annotator agreement, McNemar.

Fleiss' kappa treats NA as a fourth category; Pearson agreement drops NA
items pairwise and reports per-pair two-sided p-values from the t
transform. The McNemar comparison reports the uncorrected chi-square on
the discordant counts plus a signed one-sided p testing "the second
classifier is better", constructed by reflection around 0.5 so that
swapping n01 and n10 maps p to exactly 1 - p in floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .config import ASPECTS
from .errors import DataError


# ---------------------------------------------------------------------------
# classification report


@dataclass
class ClassReport:
    classes: list
    precision: dict
    recall: dict
    f1: dict
    support: dict
    accuracy: float


def classification_report(truth, pred) -> ClassReport:
    truth = list(truth)
    pred = list(pred)
    if len(truth) != len(pred):
        raise DataError(f"length mismatch: {len(truth)} truth vs {len(pred)} predictions")
    if not truth:
        raise DataError("empty evaluation set")
    classes = sorted(set(truth) | set(pred))
    precision, recall, f1, support = {}, {}, {}, {}
    correct = sum(1 for t, p in zip(truth, pred) if t == p)
    for c in classes:
        tp = sum(1 for t, p in zip(truth, pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(truth, pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(truth, pred) if t == c and p != c)
        precision[c] = tp / (tp + fp) if tp + fp else 0.0
        recall[c] = tp / (tp + fn) if tp + fn else 0.0
        f1[c] = (2 * precision[c] * recall[c] / (precision[c] + recall[c])
                 if precision[c] + recall[c] else 0.0)
        support[c] = sum(1 for t in truth if t == c)
    return ClassReport(classes=classes, precision=precision, recall=recall,
                       f1=f1, support=support, accuracy=correct / len(truth))


# ---------------------------------------------------------------------------
# Fleiss' kappa


def fleiss_kappa(table) -> float:
    """Kappa over an items x categories count table.

    Every item must be rated by the same number of raters (row sums equal,
    >= 2). When chance agreement is total (P_e = 1, a single category used
    everywhere) kappa is defined as 1.
    """
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] == 0:
        raise DataError("kappa table must be 2-D and non-empty")
    n_raters = table[0].sum()
    if n_raters < 2:
        raise DataError("kappa needs at least 2 raters per item")
    if not np.all(table.sum(axis=1) == n_raters):
        raise DataError("unequal rater counts per item")
    p_i = (table * (table - 1.0)).sum(axis=1) / (n_raters * (n_raters - 1.0))
    p_o = p_i.mean()
    p_j = table.sum(axis=0) / table.sum()
    p_e = float((p_j ** 2).sum())
    if p_e >= 1.0:
        return 1.0
    return float((p_o - p_e) / (1.0 - p_e))


def build_rating_table(rater_labels: list[list], categories: list) -> np.ndarray:
    """items x categories count table from per-rater label sequences."""
    if not rater_labels:
        raise DataError("no raters")
    n_items = len(rater_labels[0])
    for r in rater_labels:
        if len(r) != n_items:
            raise DataError("raters rated different item counts")
    cat_idx = {c: i for i, c in enumerate(categories)}
    table = np.zeros((n_items, len(categories)))
    for r in rater_labels:
        for i, v in enumerate(r):
            if v not in cat_idx:
                raise DataError(f"unknown category {v!r}")
            table[i, cat_idx[v]] += 1
    return table


# ---------------------------------------------------------------------------
# Pearson agreement


def pearson_agreement(scores) -> dict:
    """Pairwise Pearson correlations over a raters x items real table.

    NaN marks missing (NA) scores; each pair uses its complete items only.
    Cells with fewer than 3 complete items or zero variance are undefined
    (NaN in the matrix, excluded from the mean). Returns a dict with the
    symmetric matrix, the per-pair two-sided p-values, the usable item
    counts and the mean off-diagonal correlation.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] < 2:
        raise DataError("need at least 2 raters")
    k = scores.shape[0]
    r_mat = np.full((k, k), np.nan)
    p_mat = np.full((k, k), np.nan)
    m_mat = np.zeros((k, k), dtype=np.int64)
    for i in range(k):
        for j in range(i, k):
            ok = ~np.isnan(scores[i]) & ~np.isnan(scores[j])
            m = int(ok.sum())
            m_mat[i, j] = m_mat[j, i] = m
            if m < 3:
                continue
            a = scores[i, ok]
            b = scores[j, ok]
            va = a - a.mean()
            vb = b - b.mean()
            den = math.sqrt(float(va @ va) * float(vb @ vb))
            if den == 0.0:
                continue
            r = float(va @ vb) / den
            r = max(-1.0, min(1.0, r))
            r_mat[i, j] = r_mat[j, i] = r
            if abs(r) == 1.0:
                p = 0.0
            else:
                t = r * math.sqrt((m - 2) / (1.0 - r * r))
                p = 2.0 * float(stats.t.sf(abs(t), m - 2))
            p_mat[i, j] = p_mat[j, i] = p
    off = [r_mat[i, j] for i in range(k) for j in range(i + 1, k)
           if not np.isnan(r_mat[i, j])]
    return {
        "r": r_mat,
        "p": p_mat,
        "n_items": m_mat,
        "mean_off_diagonal": float(np.mean(off)) if off else float("nan"),
    }


# ---------------------------------------------------------------------------
# McNemar


@dataclass
class McNemarResult:
    n01: int           # first classifier wrong, second right
    n10: int           # first right, second wrong
    chi_square: float
    one_sided_p: float


def mcnemar_one_sided(truth, pred_a, pred_b) -> McNemarResult:
    """Paired one-sided McNemar comparison (is b better than a?).

    chi2 = (n01-n10)^2/(n01+n10); p = 1 - Phi(z) with
    z = (n01-n10)/sqrt(n01+n10). The tail is computed once for |z| and
    reflected by sign, so swapping the two classifiers maps p to exactly
    1 - p. Zero discordant pairs give chi2 = 0 and p = 0.5.
    """
    truth = list(truth)
    pred_a = list(pred_a)
    pred_b = list(pred_b)
    if not (len(truth) == len(pred_a) == len(pred_b)):
        raise DataError("length mismatch between truth and predictions")
    n01 = sum(1 for t, a, b in zip(truth, pred_a, pred_b) if a != t and b == t)
    n10 = sum(1 for t, a, b in zip(truth, pred_a, pred_b) if a == t and b != t)
    s = n01 + n10
    if s == 0:
        return McNemarResult(n01=0, n10=0, chi_square=0.0, one_sided_p=0.5)
    chi2 = (n01 - n10) ** 2 / s
    z_abs = abs(n01 - n10) / math.sqrt(s)
    tail = 0.5 * math.erfc(z_abs / math.sqrt(2.0))  # 1 - Phi(|z|)
    if n01 > n10:
        p = tail
    elif n01 < n10:
        p = 1.0 - tail
    else:
        p = 0.5
    return McNemarResult(n01=n01, n10=n10, chi_square=float(chi2), one_sided_p=p)


def compare_architectures(one_stage, two_stage, X_val, label_sets_val) -> dict:
    """Per-aspect McNemar comparison restricted to ground-truth-relevant
    validation rows. One-stage predictions come from the aspect's 3-class
    model; two-stage predictions from its stage-2 sentiment model (stage 1
    plays no role once rows are known to be relevant). Aspects with no
    relevant rows map to None."""
    X_val = np.atleast_2d(np.asarray(X_val, dtype=np.float64))
    if X_val.shape[0] != len(label_sets_val):
        raise DataError("feature rows do not match label rows")
    out = {}
    for aspect in ASPECTS:
        raw = [ls.labels[aspect] for ls in label_sets_val]
        mask = np.array([v is not None for v in raw])
        if not mask.any():
            out[aspect] = None
            continue
        truth = [v for v in raw if v is not None]
        Xr = X_val[mask]
        pred_a = [int(v) for v in one_stage.models[aspect]["sentiment"].predict(Xr)]
        pred_b = [int(v) for v in two_stage.models[aspect]["sentiment"].predict(Xr)]
        out[aspect] = mcnemar_one_sided(truth, pred_a, pred_b)
    return out
