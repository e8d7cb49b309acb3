"""Business-level aggregation and OLS models 1-4.

Aggregates mean the six predicted sentiment columns per business (neutral
and irrelevant both count as 0) and attach the business's overall rating,
state and cuisine. The four model specs add, on top of the six aspect
means, cuisine dummies (reference American), state dummies (reference AB),
or both. Fitting goes through a pivoted QR factorization; standard errors
are classical homoskedastic ones and p-values use the normal approximation,
which at the corpus sizes involved is indistinguishable from the t
distribution.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from .config import ASPECTS
from .errors import DataError
from .ingest import CorpusRecord, LABEL_HEADER

# aspect ordering used by regression tables
REGRESSION_ASPECT_ORDER = ("service", "food_quality", "ambiance", "wait_time",
                           "menu_variety", "price")

CUISINE_REFERENCE = "American"
STATE_REFERENCE = "AB"

AGGREGATE_HEADER = (["business_id"] + [f"avg_{a}" for a in ASPECTS]
                    + ["overall_rating", "state", "cuisine", "n_reviews"])


@dataclass(frozen=True)
class RestaurantAggregate:
    business_id: str
    aspect_means: dict          # aspect -> mean in [-1, 1]
    overall_rating: float
    state: str
    cuisine: str
    n_reviews: int


@dataclass
class TermResult:
    name: str
    coef: float
    se: float
    ci_lo: float
    ci_hi: float
    p: float
    marker: str


@dataclass
class RegressionReport:
    spec_id: int
    terms: list[TermResult]
    r2: float
    n: int
    cuisine_reference: str | None = None
    state_reference: str | None = None


def significance_marker(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    if p < 0.1:
        return "."
    return ""


# ---------------------------------------------------------------------------
# aggregation


def aggregate_rows(rows: Iterable[tuple[str, dict]],
                   corpus: Iterable[CorpusRecord]) -> list[RestaurantAggregate]:
    """Aggregate (review_id, {aspect: value}) rows per business.

    Rows whose review_id has no corpus record are tallied; more than 1%
    unknown aborts. Output is sorted by business_id.
    """
    review_to_biz: dict[str, str] = {}
    biz_info: dict[str, tuple[float, str, str]] = {}
    for rec in corpus:
        review_to_biz[rec.review_id] = rec.business_id
        biz_info[rec.business_id] = (rec.overall_rating, rec.state, rec.cuisine)
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    unknown = 0
    total = 0
    for review_id, values in rows:
        total += 1
        biz = review_to_biz.get(review_id)
        if biz is None:
            unknown += 1
            continue
        vec = np.array([float(values[a]) for a in ASPECTS])
        if biz in sums:
            sums[biz] += vec
            counts[biz] += 1
        else:
            sums[biz] = vec
            counts[biz] = 1
    if total and unknown / total > 0.01:
        raise DataError(f"{unknown} of {total} prediction rows reference unknown reviews (>1%)")
    out = []
    for biz in sorted(sums):
        rating, state, cuisine = biz_info[biz]
        means = sums[biz] / counts[biz]
        out.append(RestaurantAggregate(
            business_id=biz,
            aspect_means={a: float(m) for a, m in zip(ASPECTS, means)},
            overall_rating=rating,
            state=state,
            cuisine=cuisine,
            n_reviews=counts[biz],
        ))
    return out


def aggregate_restaurants(predictions_path: str | Path,
                          corpus: Iterable[CorpusRecord]) -> list[RestaurantAggregate]:
    """Aggregate a prediction CSV (see classify.predict_corpus) per business."""
    predictions_path = Path(predictions_path)
    if not predictions_path.exists():
        raise DataError(f"input file not found: {predictions_path}")

    def rows():
        with open(predictions_path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != LABEL_HEADER:
                raise DataError(f"{predictions_path}: bad header {header!r}")
            for row in reader:
                if not row:
                    continue
                vals = {}
                for a, cell in zip(ASPECTS, row[1:]):
                    if cell not in ("-1", "0", "1"):
                        raise DataError(
                            f"{predictions_path}: bad prediction value {cell!r} for {row[0]}")
                    vals[a] = int(cell)
                yield row[0], vals

    return aggregate_rows(rows(), corpus)


def write_aggregates(aggregates: Sequence[RestaurantAggregate], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_HEADER)
        for agg in aggregates:
            writer.writerow(
                [agg.business_id]
                + [repr(agg.aspect_means[a]) for a in ASPECTS]
                + [repr(agg.overall_rating), agg.state, agg.cuisine, str(agg.n_reviews)]
            )


def read_aggregates(path: str | Path) -> list[RestaurantAggregate]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != AGGREGATE_HEADER:
            raise DataError(f"{path}: bad header {header!r}")
        for row in reader:
            if not row:
                continue
            out.append(RestaurantAggregate(
                business_id=row[0],
                aspect_means={a: float(v) for a, v in zip(ASPECTS, row[1:7])},
                overall_rating=float(row[7]),
                state=row[8],
                cuisine=row[9],
                n_reviews=int(row[10]),
            ))
    return out


# ---------------------------------------------------------------------------
# design matrices


def _dummy_levels(values: list[str], reference: str) -> tuple[list[str], str]:
    present = sorted(set(values))
    if reference in present:
        ref = reference
    else:
        ref = present[0]
    return [v for v in present if v != ref], ref


def encode_design_matrix(aggregates: Sequence[RestaurantAggregate], spec: int):
    """Build (X, y, term_names) for model spec 1-4.

    Columns: intercept, the six aspect means, then cuisine dummies
    (specs 2 and 4) and state dummies (specs 3 and 4). Reference levels
    (American, AB) are all-zero rows; levels absent from the data get no
    column, and if a reference level itself is absent the first remaining
    level takes its place.
    """
    if spec not in (1, 2, 3, 4):
        raise DataError(f"unknown model spec {spec!r}")
    if len(aggregates) < 2:
        raise DataError("need at least 2 aggregates")
    n = len(aggregates)
    names = ["intercept"] + [f"avg_{a}" for a in REGRESSION_ASPECT_ORDER]
    cols = [np.ones(n)]
    for a in REGRESSION_ASPECT_ORDER:
        cols.append(np.array([agg.aspect_means[a] for agg in aggregates]))
    info = {"cuisine_reference": None, "state_reference": None}
    if spec in (2, 4):
        values = [agg.cuisine for agg in aggregates]
        levels, ref = _dummy_levels(values, CUISINE_REFERENCE)
        info["cuisine_reference"] = ref
        for lv in levels:
            names.append(f"cuisine[{lv}]")
            cols.append(np.array([1.0 if v == lv else 0.0 for v in values]))
    if spec in (3, 4):
        values = [agg.state for agg in aggregates]
        levels, ref = _dummy_levels(values, STATE_REFERENCE)
        info["state_reference"] = ref
        for lv in levels:
            names.append(f"state[{lv}]")
            cols.append(np.array([1.0 if v == lv else 0.0 for v in values]))
    X = np.column_stack(cols)
    y = np.array([agg.overall_rating for agg in aggregates])
    return X, y, names, info


# ---------------------------------------------------------------------------
# OLS


def fit_ols(X, y, names: list[str] | None = None) -> dict:
    """Least squares through a pivoted QR factorization.

    Returns coefficient vector, standard errors, normal-approximation
    two-sided p-values, 95% CIs and R^2 (TSS about the mean). Raises on
    rank deficiency, naming the dependent columns.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("X must be 2-D")
    n, k = X.shape
    if names is None:
        names = [f"x{i}" for i in range(k)]
    if n <= k:
        raise DataError(f"need more rows ({n}) than columns ({k})")
    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, k) * np.finfo(np.float64).eps * (diag[0] if diag.size else 0.0)
    rank = int((diag > tol).sum())
    if rank < k:
        dependent = [names[piv[i]] for i in range(rank, k)]
        raise DataError(f"design matrix is rank deficient; dependent columns: {dependent}")
    qty = Q.T @ y
    beta_piv = linalg.solve_triangular(R, qty)
    beta = np.empty(k)
    beta[piv] = beta_piv
    resid = y - X @ beta
    rss = float(resid @ resid)
    sigma2 = rss / (n - k)
    # (X'X)^{-1} = P R^{-1} R^{-T} P'
    rinv = linalg.solve_triangular(R, np.eye(k))
    xtx_inv_piv = rinv @ rinv.T
    var = np.empty(k)
    var[piv] = np.diag(xtx_inv_piv)
    se = np.sqrt(sigma2 * var)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, beta / se, np.inf * np.sign(beta))
    p = np.array([math.erfc(abs(zi) / math.sqrt(2.0)) for zi in z])
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else (1.0 if rss == 0 else 0.0)
    return {
        "beta": beta,
        "se": se,
        "p": p,
        "ci_lo": beta - 1.96 * se,
        "ci_hi": beta + 1.96 * se,
        "r2": r2,
        "rss": rss,
        "n": n,
        "names": list(names),
    }


def fit_model(aggregates: Sequence[RestaurantAggregate], spec: int) -> RegressionReport:
    X, y, names, info = encode_design_matrix(aggregates, spec)
    core = fit_ols(X, y, names)
    terms = [
        TermResult(name=nm, coef=float(b), se=float(s), ci_lo=float(lo),
                   ci_hi=float(hi), p=float(pv), marker=significance_marker(float(pv)))
        for nm, b, s, lo, hi, pv in zip(core["names"], core["beta"], core["se"],
                                        core["ci_lo"], core["ci_hi"], core["p"])
    ]
    return RegressionReport(spec_id=spec, terms=terms, r2=core["r2"], n=core["n"],
                            cuisine_reference=info["cuisine_reference"],
                            state_reference=info["state_reference"])


def run_model_suite(aggregates: Sequence[RestaurantAggregate]) -> list[RegressionReport]:
    if not aggregates:
        raise DataError("no aggregates to fit")
    return [fit_model(aggregates, spec) for spec in (1, 2, 3, 4)]


# ---------------------------------------------------------------------------
# report writers


def write_report_csv(report: RegressionReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["term", "estimate", "se", "ci_lo", "ci_hi", "p", "stars"])
        for t in report.terms:
            writer.writerow([t.name, repr(t.coef), repr(t.se), repr(t.ci_lo),
                             repr(t.ci_hi), repr(t.p), t.marker])
        writer.writerow(["r_squared", repr(report.r2), "", "", "", "", ""])
        writer.writerow(["n", str(report.n), "", "", "", "", ""])


def write_effects_csv(report: RegressionReport, path: str | Path) -> None:
    """Plot-ready effect table: term, estimate, ci_lo, ci_hi, stars."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["term", "estimate", "ci_lo", "ci_hi", "stars"])
        for t in report.terms:
            if t.name == "intercept":
                continue
            writer.writerow([t.name, repr(t.coef), repr(t.ci_lo), repr(t.ci_hi), t.marker])


def _term_order_key(name: str) -> tuple:
    if name == "intercept":
        return (0, 0, "")
    if name.startswith("avg_"):
        return (1, REGRESSION_ASPECT_ORDER.index(name[4:]), "")
    if name.startswith("cuisine["):
        return (2, 0, name)
    return (3, 0, name)


def render_markdown_table(reports: Sequence[RegressionReport]) -> str:
    """Combined table over model specs: aspects first, then cuisine and
    state effects, estimate (ci_lo, ci_hi) with significance stars."""
    all_names: list[str] = []
    for rep in reports:
        for t in rep.terms:
            if t.name not in all_names:
                all_names.append(t.name)
    all_names.sort(key=_term_order_key)
    by_spec = {rep.spec_id: {t.name: t for t in rep.terms} for rep in reports}
    specs = [rep.spec_id for rep in reports]
    lines = ["| Term | " + " | ".join(f"Model {s}" for s in specs) + " |",
             "|---" * (len(specs) + 1) + "|"]
    for name in all_names:
        cells = []
        for s in specs:
            t = by_spec[s].get(name)
            if t is None:
                cells.append("")
            else:
                cells.append(f"{t.coef:.2f} ({t.ci_lo:.2f}, {t.ci_hi:.2f}){t.marker}")
        lines.append("| " + name + " | " + " | ".join(cells) + " |")
    lines.append("| R-squared | " + " | ".join(f"{rep.r2:.3f}" for rep in reports) + " |")
    lines.append("| N | " + " | ".join(str(rep.n) for rep in reports) + " |")
    return "\n".join(lines) + "\n"
