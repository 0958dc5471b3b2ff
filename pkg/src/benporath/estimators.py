"""Regression designs: OLS with classical/HC1/cluster-robust covariance,
age-interaction event studies and two-period difference-in-differences.

The linear algebra lives in :class:`OLS`, a scikit-learn compatible
estimator; the functional helpers build design matrices from long panels.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
import scipy.linalg as sla
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import EmptyData, MissingCell, RankDeficient, ZeroVariance

Z_95 = 1.96
RANK_TOL = 1e-10


class SEType(str, enum.Enum):
    CLASSICAL = "classical"
    HC1 = "hc1"
    CLUSTER = "cluster"


def _se_type(value) -> SEType:
    return SEType(str(getattr(value, "value", value)).lower())


def _demean(values: np.ndarray, groups: np.ndarray) -> np.ndarray:
    codes, inverse = np.unique(groups, return_inverse=True)
    counts = np.bincount(inverse, minlength=len(codes)).astype(float)
    if values.ndim == 1:
        means = np.bincount(inverse, weights=values, minlength=len(codes)) / counts
        return values - means[inverse]
    out = np.empty_like(values, dtype=float)
    for j in range(values.shape[1]):
        means = np.bincount(inverse, weights=values[:, j], minlength=len(codes)) / counts
        out[:, j] = values[:, j] - means[inverse]
    return out


def _encode(groups) -> np.ndarray:
    arr = np.asarray(groups)
    if arr.ndim == 2:
        return np.unique(arr, axis=0, return_inverse=True)[1].ravel()
    return np.unique(arr, return_inverse=True)[1]


class OLS(RegressorMixin, BaseEstimator):
    """Least squares via pivoted QR with selectable standard errors.

    Parameters
    ----------
    se_type : {"classical", "hc1", "cluster"}
        ``"cluster"`` needs ``groups`` in :meth:`fit`. Small-sample factors are
        ``n/(n-k)`` for HC1 and ``G/(G-1) (n-1)/(n-k)`` for clusters.
    fit_intercept : bool
        Prepend a constant column (ignored when ``absorb`` is given).
    drop_collinear : bool
        Drop linearly dependent columns (listed in ``dropped_``) instead of
        raising :class:`RankDeficient`.
    """

    def __init__(self, se_type="hc1", fit_intercept=True, drop_collinear=False):
        self.se_type = se_type
        self.fit_intercept = fit_intercept
        self.drop_collinear = drop_collinear

    def fit(self, X, y, groups=None, absorb=None, feature_names=None):
        """Fit; ``absorb`` holds fixed-effect labels swept out by within-demeaning."""
        if len(y) == 0:
            raise EmptyData("no observations")
        X, y = check_X_y(X, y, dtype=float, y_numeric=True, ensure_min_samples=1)
        se_type = _se_type(self.se_type)
        if se_type is SEType.CLUSTER and groups is None:
            raise ValueError("cluster-robust standard errors need groups")
        names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
        n = X.shape[0]

        n_absorbed = 0
        y_total = y
        if absorb is not None:
            labels = _encode(absorb)
            n_absorbed = int(labels.max()) + 1
            X = _demean(X, labels)
            y = _demean(y, labels)
            intercept = False
        else:
            intercept = self.fit_intercept
        if intercept:
            X = np.column_stack([np.ones(n), X])
            names = ["const", *names]

        keep, dropped = self._independent_columns(X, names)
        X = X[:, keep]
        names = [names[j] for j in keep]
        k = X.shape[1]
        dof_k = k + n_absorbed

        Q, R = np.linalg.qr(X, mode="reduced")
        beta = sla.solve_triangular(R, Q.T @ y)
        resid = y - X @ beta
        R_inv = sla.solve_triangular(R, np.eye(k))
        bread = R_inv @ R_inv.T

        if se_type is SEType.CLASSICAL:
            sigma2 = resid @ resid / max(n - dof_k, 1)
            vcov = sigma2 * bread
        elif se_type is SEType.HC1:
            meat = (X * resid[:, None] ** 2).T @ X
            vcov = n / max(n - dof_k, 1) * bread @ meat @ bread
        else:
            g = _encode(groups)
            n_groups = int(g.max()) + 1
            scores = np.zeros((n_groups, k))
            np.add.at(scores, g, X * resid[:, None])
            meat = scores.T @ scores
            factor = n_groups / max(n_groups - 1, 1) * (n - 1) / max(n - dof_k, 1)
            vcov = factor * bread @ meat @ bread
            self.n_clusters_ = n_groups
        vcov = (vcov + vcov.T) / 2

        sst = float(np.sum((y_total - y_total.mean()) ** 2))
        ssr = float(resid @ resid)
        self.coef_ = beta
        self.bse_ = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
        self.vcov_ = vcov
        self.resid_ = resid
        self.n_obs_ = n
        self.df_model_ = dof_k
        self.r_squared_ = 1.0 - ssr / sst if sst > 0 else (1.0 if ssr == 0 else 0.0)
        self.feature_names_ = names
        self.dropped_ = dropped
        self.absorbed_ = absorb is not None
        self._intercept = intercept
        self._keep = keep
        return self

    def _independent_columns(self, X, names):
        if X.shape[1] == 0:
            return [], []
        _, R, piv = sla.qr(X, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        tol = RANK_TOL * max(diag[0], 1.0) if diag.size else 0.0
        rank = int(np.sum(diag > tol))
        if rank == X.shape[1]:
            return list(range(X.shape[1])), []
        bad = sorted(piv[rank:].tolist())
        dropped = [names[j] for j in bad]
        if not self.drop_collinear:
            raise RankDeficient(dropped)
        return sorted(piv[:rank].tolist()), dropped

    def predict(self, X):
        check_is_fitted(self, "coef_")
        if self.absorbed_:
            raise ValueError("predictions are undefined for absorbed fixed effects")
        X = check_array(X, dtype=float)
        if self._intercept:
            X = np.column_stack([np.ones(X.shape[0]), X])
        return X[:, self._keep] @ self.coef_


@dataclass(frozen=True)
class Design:
    outcome: str
    regressors: tuple
    cluster: Optional[str] = None
    se_type: SEType = SEType.HC1
    add_intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        object.__setattr__(self, "se_type", _se_type(self.se_type))
        if self.outcome in self.regressors:
            raise ValueError("outcome cannot also be a regressor")
        if (self.cluster is not None) != (self.se_type is SEType.CLUSTER):
            raise ValueError("a cluster column is required exactly when se_type is cluster")


@dataclass
class RegressionResult:
    terms: list
    coefficients: np.ndarray
    standard_errors: np.ndarray
    n_obs: int
    r_squared: float
    vcov: np.ndarray
    dropped: list = field(default_factory=list)

    def coef(self, term: str) -> float:
        return float(self.coefficients[self.terms.index(term)])

    def se(self, term: str) -> float:
        return float(self.standard_errors[self.terms.index(term)])

    def to_frame(self, z: float = Z_95) -> pd.DataFrame:
        return pd.DataFrame({
            "term": self.terms,
            "estimate": self.coefficients,
            "se": self.standard_errors,
            "ci_lo": self.coefficients - z * self.standard_errors,
            "ci_hi": self.coefficients + z * self.standard_errors,
        })

    def to_dict(self) -> dict:
        return {
            "terms": list(self.terms),
            "coefficients": [float(v) for v in self.coefficients],
            "standard_errors": [float(v) for v in self.standard_errors],
            "n_obs": int(self.n_obs),
            "r_squared": float(self.r_squared),
            "vcov": np.asarray(self.vcov, dtype=float).tolist(),
            "dropped": list(self.dropped),
        }


def _result(model: OLS) -> RegressionResult:
    return RegressionResult(model.feature_names_, model.coef_, model.bse_, model.n_obs_,
                            model.r_squared_, model.vcov_, list(model.dropped_))


def ols(data: pd.DataFrame, design: Design, drop_collinear: bool = False) -> RegressionResult:
    if data is None or len(data) == 0:
        raise EmptyData("no observations")
    cols = [design.outcome, *design.regressors] + ([design.cluster] if design.cluster else [])
    frame = data.loc[:, cols].dropna()
    if frame.empty:
        raise EmptyData("no complete observations")
    model = OLS(se_type=design.se_type.value, fit_intercept=design.add_intercept,
                drop_collinear=drop_collinear)
    groups = frame[design.cluster].to_numpy() if design.cluster else None
    model.fit(frame.loc[:, list(design.regressors)].to_numpy(dtype=float),
              frame[design.outcome].to_numpy(dtype=float), groups=groups,
              feature_names=design.regressors)
    return _result(model)


def _with_outcome(panel: pd.DataFrame, outcome: str) -> pd.DataFrame:
    if outcome in panel.columns:
        return panel
    if outcome == "employed":
        return panel.assign(employed=(panel["state"] == "employment").astype(float))
    raise KeyError(f"outcome column {outcome!r} not in panel")


@dataclass
class EventStudyResult:
    coefficients: pd.DataFrame  # age, estimate, se, ci_lo, ci_hi
    regression: RegressionResult
    dropped: list


def event_study(panel: pd.DataFrame, treatment: str, ages: Optional[Sequence[int]] = None,
                controls: Sequence[str] = (), outcome: str = "employed", cluster: str = "id",
                z: float = Z_95) -> EventStudyResult:
    """Treatment effect path over age.

    Birth-year by age cells are absorbed as fixed effects (which nests the
    age indicators); the treatment indicator enters interacted with every age
    in ``ages``. Interactions not identified within the absorbed cells are
    dropped and listed in ``dropped``.
    """
    if panel is None or len(panel) == 0:
        raise EmptyData("panel has no rows")
    frame = _with_outcome(panel, outcome)
    if ages is not None:
        frame = frame[frame["age"].isin(list(ages))]
    frame = frame.dropna(subset=[outcome, treatment, *controls])
    if frame.empty:
        raise EmptyData("no observations in the requested age range")
    age_values = np.sort(frame["age"].unique())
    treat = frame[treatment].to_numpy(dtype=float)
    age = frame["age"].to_numpy()
    X = (age[:, None] == age_values[None, :]) * treat[:, None]
    names = [f"{treatment}_x_age{a}" for a in age_values]
    if controls:
        X = np.column_stack([X, frame.loc[:, list(controls)].to_numpy(dtype=float)])
        names += list(controls)
    cells = frame["birth_year"].to_numpy() * 1000 + age
    model = OLS(se_type="cluster", drop_collinear=True).fit(
        X, frame[outcome].to_numpy(dtype=float), groups=frame[cluster].to_numpy(),
        absorb=cells, feature_names=names)
    res = _result(model)
    rows = []
    for a, name in zip(age_values, names):
        if name in res.terms:
            b, s = res.coef(name), res.se(name)
            rows.append((int(a), b, s, b - z * s, b + z * s))
    coefs = pd.DataFrame(rows, columns=["age", "estimate", "se", "ci_lo", "ci_hi"])
    return EventStudyResult(coefs, res, list(res.dropped))


@dataclass(frozen=True)
class DiDResult:
    immediate_effect: float
    se: float
    total_effect_years: float
    post_period_length: float
    control_post_mean: float
    n_obs: int = 0

    def to_dict(self) -> dict:
        return {k: (float(v) if not isinstance(v, int) else v) for k, v in self.__dict__.items()}


def _did(frame: pd.DataFrame, treated: str, outcome: str, post_mask: np.ndarray, cluster: str):
    post = post_mask.astype(float)
    tr = frame[treated].to_numpy(dtype=float)
    cells = {(t, p): int(np.sum((tr == t) & (post == p))) for t in (0.0, 1.0) for p in (0.0, 1.0)}
    empty = [k for k, v in cells.items() if v == 0]
    if empty:
        names = [f"{'treated' if t else 'control'}/{'post' if p else 'pre'}" for t, p in empty]
        raise MissingCell(f"empty DiD cells: {names}")
    X = np.column_stack([tr, post, tr * post])
    y = frame[outcome].to_numpy(dtype=float)
    model = OLS(se_type="cluster").fit(X, y, groups=frame[cluster].to_numpy(),
                                       feature_names=[treated, "post", "did"])
    control_post = float(y[(tr == 0) & (post == 1)].mean())
    return float(model.coef_[3]), float(model.bse_[3]), control_post, model.n_obs_


def did_immediate(panel: pd.DataFrame, treated: str, pre_year: int = 1938, post_year: int = 1946,
                  outcome: str = "exited_employment", cluster: str = "id") -> DiDResult:
    """2x2 difference-in-differences between ``pre_year`` and ``post_year``."""
    if panel is None or len(panel) == 0:
        raise EmptyData("panel has no rows")
    frame = _with_outcome(panel, outcome)
    frame = frame[frame["year"].isin([pre_year, post_year])]
    effect, se, control_post, n = _did(frame, treated, outcome,
                                       (frame["year"] == post_year).to_numpy(), cluster)
    return DiDResult(effect, se, effect * 1.0, 1.0, control_post, n)


def post_window(birth_year: int, post_start: int = 1946, retirement_age: int = 65) -> tuple[int, int]:
    """Inclusive calendar window from ``post_start`` to the year the cohort turns ``retirement_age``."""
    end = birth_year + retirement_age
    if end < post_start:
        raise MissingCell(f"cohort {birth_year} reached {retirement_age} before {post_start}")
    return post_start, end


def did_total_effect(panel: pd.DataFrame, treated: str, pre_year: int = 1938, post_start: int = 1946,
                     retirement_age: int = 65, outcome: str = "exited_employment",
                     cluster: str = "id") -> DiDResult:
    """Employment-years effect of a single birth cohort.

    The DiD coefficient pooled over the post window is the average yearly
    effect; multiplied by the window length it gives the total effect.
    """
    if panel is None or len(panel) == 0:
        raise EmptyData("panel has no rows")
    birth_years = panel["birth_year"].unique()
    if len(birth_years) != 1:
        raise ValueError("did_total_effect needs a single birth cohort; use did_total_by_cohort")
    start, end = post_window(int(birth_years[0]), post_start, retirement_age)
    frame = _with_outcome(panel, outcome)
    year = frame["year"]
    frame = frame[(year == pre_year) | ((year >= start) & (year <= end))]
    effect, se, control_post, n = _did(frame, treated, outcome,
                                       (frame["year"] >= start).to_numpy(), cluster)
    length = float(end - start + 1)
    return DiDResult(effect, se, effect * length, length, control_post, n)


def did_total_by_cohort(panel: pd.DataFrame, treated: str, **kwargs) -> pd.DataFrame:
    rows = []
    for by, sub in panel.groupby("birth_year", sort=True):
        try:
            res = did_total_effect(sub, treated, **kwargs)
        except MissingCell:
            continue
        rows.append({"birth_year": int(by), "effect": res.immediate_effect, "se": res.se,
                     "post_period_length": res.post_period_length,
                     "total_effect_years": res.total_effect_years,
                     "total_effect_se": res.se * res.post_period_length,
                     "control_post_mean": res.control_post_mean})
    return pd.DataFrame(rows, columns=["birth_year", "effect", "se", "post_period_length",
                                       "total_effect_years", "total_effect_se", "control_post_mean"])


def balance_table(data: pd.DataFrame, shock: str, covariates: Sequence[str],
                  se_type: str = "hc1") -> RegressionResult:
    """Regress a shock indicator on pre-war covariates."""
    missing = [c for c in [shock, *covariates] if c not in data.columns]
    if missing:
        raise KeyError(f"columns not found: {missing}")
    return ols(data, Design(shock, tuple(covariates), se_type=se_type))


def correlation_matrix(data: pd.DataFrame, columns: Sequence[str]) -> pd.DataFrame:
    if len(data) < 2:
        raise EmptyData("need at least two rows for correlations")
    frame = data.loc[:, list(columns)].astype(float)
    flat = [c for c in columns if frame[c].std(ddof=0) == 0]
    if flat:
        raise ZeroVariance(flat)
    values = np.atleast_2d(np.corrcoef(frame.to_numpy().T))
    np.fill_diagonal(values, 1.0)
    return pd.DataFrame(values, index=list(columns), columns=list(columns))


# --- export ------------------------------------------------------------------

def write_results_csv(frame: pd.DataFrame, path: Union[str, Path]) -> None:
    frame.to_csv(path, index=False, float_format="%.10g", encoding="utf-8", lineterminator="\n")


def write_results_json(payload: dict, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
