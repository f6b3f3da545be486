"""Ordinary least squares with categorical expansion and classical errors.

Designs are declared as ordered term lists (continuous, categorical with a
reference level, or pass-through 0/1 dummy blocks) and expanded to a dense
matrix. Fitting goes through a QR factorization; never through an explicit
normal-equation inverse.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
from scipy import stats as sps


class StatsError(ValueError):
    """Invalid design, degenerate matrix, or bad fit input."""


@dataclass(frozen=True)
class Continuous:
    name: str


@dataclass(frozen=True)
class Categorical:
    name: str
    reference_level: str


@dataclass(frozen=True)
class DummyBlock:
    names: tuple[str, ...]

    def __init__(self, names: Sequence[str]):
        object.__setattr__(self, "names", tuple(names))


Term = Continuous | Categorical | DummyBlock


@dataclass(frozen=True)
class DesignMatrixSpec:
    response: str
    terms: tuple[Term, ...]
    intercept: bool = True

    def __init__(self, response: str, terms: Sequence[Term], intercept: bool = True):
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "terms", tuple(terms))
        object.__setattr__(self, "intercept", intercept)


@dataclass
class RegressionFit:
    coefficients: dict[str, float]
    std_errors: dict[str, float]
    t_stats: dict[str, float]
    p_values: dict[str, float]
    n: int
    log_likelihood: float
    bic: float
    r_squared_adj: float
    residual_variance: float
    column_names: list[str] = field(default_factory=list)


def _level_str(value) -> str:
    return str(value)


def encode_design(
    rows: Sequence[Mapping], spec: DesignMatrixSpec
) -> tuple[np.ndarray, list[str], np.ndarray]:
    """Expand rows into (matrix, column names, response vector).

    Categorical terms produce one 0/1 column per non-reference level in level
    sort order; dummy blocks pass through; the intercept column comes first.
    """
    if not rows:
        raise StatsError("cannot encode an empty row set")

    def fetch(row, name):
        try:
            return row[name]
        except KeyError:
            raise StatsError(f"row missing field {name!r}") from None

    names: list[str] = []
    columns: list[np.ndarray] = []
    n = len(rows)
    if spec.intercept:
        names.append("Intercept")
        columns.append(np.ones(n))
    for term in spec.terms:
        if isinstance(term, Continuous):
            names.append(term.name)
            columns.append(np.asarray([float(fetch(r, term.name)) for r in rows]))
        elif isinstance(term, Categorical):
            values = [_level_str(fetch(r, term.name)) for r in rows]
            levels = sorted(set(values))
            if term.reference_level not in levels:
                raise StatsError(
                    f"reference level {term.reference_level!r} of {term.name!r} "
                    f"absent from the data"
                )
            arr = np.asarray(values)
            for level in levels:
                if level == term.reference_level:
                    continue
                names.append(f"{term.name}[{level}]")
                columns.append((arr == level).astype(float))
        elif isinstance(term, DummyBlock):
            for name in term.names:
                names.append(name)
                column = np.asarray([float(fetch(r, name)) for r in rows])
                if not np.isin(column, (0.0, 1.0)).all():
                    raise StatsError(f"dummy column {name!r} contains non-0/1 values")
                columns.append(column)
        else:
            raise StatsError(f"unknown term type {type(term).__name__}")
    if len(set(names)) != len(names):
        dupes = sorted({x for x in names if names.count(x) > 1})
        raise StatsError(f"duplicate design columns {dupes}")
    response = np.asarray([float(fetch(r, spec.response)) for r in rows])
    return np.column_stack(columns), names, response


def ols_fit(
    matrix: np.ndarray, response: np.ndarray, column_names: Sequence[str] | None = None
) -> RegressionFit:
    """Least-squares fit via QR with classical (homoskedastic) inference."""
    X = np.asarray(matrix, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    if X.ndim != 2:
        raise StatsError(f"design must be 2-dimensional, got shape {X.shape}")
    n, p = X.shape
    if y.shape != (n,):
        raise StatsError(f"response has shape {y.shape}, expected ({n},)")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise StatsError("design or response contains NaN/Inf")
    if n < p:
        raise StatsError(f"{n} rows for {p} columns; need n >= p")
    if column_names is None:
        column_names = [f"x{i}" for i in range(p)]
    else:
        column_names = list(column_names)
        if len(column_names) != p:
            raise StatsError(f"{len(column_names)} names for {p} columns")

    # Pivoted QR both detects rank deficiency and names an offending column.
    q, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(n, p) * np.finfo(np.float64).eps * (diag[0] if diag.size else 0.0)
    deficient = np.nonzero(diag <= tol)[0]
    if diag.size == 0 or deficient.size:
        j = int(piv[deficient[0]]) if deficient.size else 0
        raise StatsError(
            f"design is rank deficient: column {column_names[j]!r} is linearly "
            f"dependent on the others"
        )
    qty = q.T @ y
    beta_piv = scipy.linalg.solve_triangular(r, qty)
    beta = np.empty(p)
    beta[piv] = beta_piv

    residuals = y - X @ beta
    rss = float(residuals @ residuals)
    dof = n - p
    sigma2 = rss / dof if dof > 0 else 0.0
    r_inv = scipy.linalg.solve_triangular(r, np.eye(p))
    xtx_inv_diag_piv = np.sum(r_inv * r_inv, axis=1)
    xtx_inv_diag = np.empty(p)
    xtx_inv_diag[piv] = xtx_inv_diag_piv
    std_errors = np.sqrt(sigma2 * xtx_inv_diag)
    # zero std error (exact fit): t is +-inf for nonzero estimates, 0 otherwise
    t_stats = np.zeros(p)
    positive_se = std_errors > 0
    t_stats[positive_se] = beta[positive_se] / std_errors[positive_se]
    t_stats[~positive_se & (beta > 0)] = np.inf
    t_stats[~positive_se & (beta < 0)] = -np.inf
    if dof > 0:
        p_values = 2.0 * sps.t.sf(np.abs(t_stats), dof)
    else:
        p_values = np.full(p, np.nan)

    # Gaussian log-likelihood at the MLE variance rss/n
    if rss > 0:
        log_likelihood = -0.5 * n * (np.log(2.0 * np.pi) + np.log(rss / n) + 1.0)
    else:
        log_likelihood = np.inf
    bic = -2.0 * log_likelihood + p * np.log(n)

    has_intercept = bool(np.any(np.all(X == X[0, :], axis=0) & (X[0, :] != 0.0)))
    tss = float(np.sum((y - y.mean()) ** 2)) if has_intercept else float(y @ y)
    if tss > 0 and dof > 0:
        denom = n - 1 if has_intercept else n
        r_squared_adj = 1.0 - (rss / dof) / (tss / denom)
    else:
        r_squared_adj = np.nan

    return RegressionFit(
        coefficients=dict(zip(column_names, beta.tolist())),
        std_errors=dict(zip(column_names, std_errors.tolist())),
        t_stats=dict(zip(column_names, [float(t) for t in t_stats])),
        p_values=dict(zip(column_names, [float(v) for v in p_values])),
        n=n,
        log_likelihood=float(log_likelihood),
        bic=float(bic),
        r_squared_adj=float(r_squared_adj),
        residual_variance=float(sigma2),
        column_names=column_names,
    )


def fit_design(rows: Sequence[Mapping], spec: DesignMatrixSpec) -> RegressionFit:
    """Encode and fit in one step."""
    matrix, names, response = encode_design(rows, spec)
    return ols_fit(matrix, response, names)


STAR_SCHEMES = {
    "table4": ((0.01, "***"), (0.05, "**"), (0.1, "*")),
    "appendix": ((0.001, "***"), (0.01, "**"), (0.05, "*")),
}


def significance_stars(p_value: float, scheme: str = "table4") -> str:
    """Stars for a p-value under the chosen threshold scheme."""
    if not 0.0 <= p_value <= 1.0:
        raise StatsError(f"p-value {p_value} outside [0, 1]")
    try:
        thresholds = STAR_SCHEMES[scheme]
    except KeyError:
        raise StatsError(f"unknown star scheme {scheme!r}") from None
    for cutoff, stars in thresholds:
        if p_value < cutoff:
            return stars
    return ""


def summarize(fit: RegressionFit, scheme: str = "table4") -> tuple[str, str]:
    """Render a fit as an aligned text table plus a full-precision CSV."""
    name_width = max(len(n) for n in fit.column_names)
    name_width = max(name_width, len("Log-Likelihood"))
    lines = []
    rule = "-" * (name_width + 18)
    lines.append(rule)
    for name in fit.column_names:
        est = fit.coefficients[name]
        stars = significance_stars(fit.p_values[name], scheme)
        lines.append(f"{name:<{name_width}}  {est: .4f}{stars}")
        lines.append(f"{'':<{name_width}}  ({fit.std_errors[name]:.4f})")
    lines.append(rule)
    lines.append(f"{'N':<{name_width}}  {fit.n}")
    lines.append(f"{'BIC':<{name_width}}  {fit.bic:.2f}")
    lines.append(f"{'Log-Likelihood':<{name_width}}  {fit.log_likelihood:.2f}")
    lines.append(rule)
    text = "\n".join(lines) + "\n"

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["term", "estimate", "std_error", "t_stat", "p_value", "stars"])
    for name in fit.column_names:
        writer.writerow(
            [
                name,
                repr(fit.coefficients[name]),
                repr(fit.std_errors[name]),
                repr(fit.t_stats[name]),
                repr(fit.p_values[name]),
                significance_stars(fit.p_values[name], scheme),
            ]
        )
    writer.writerow(["N", fit.n, "", "", "", ""])
    writer.writerow(["BIC", repr(fit.bic), "", "", "", ""])
    writer.writerow(["Log-Likelihood", repr(fit.log_likelihood), "", "", "", ""])
    return text, buffer.getvalue()
