"""First differencing, least squares and the household-clustered bootstrap."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import (
    CATEGORIES,
    ClassifiedPanel,
    EarnerType,
    ExpenditureCategory,
    Transform,
    transform_income,
)
from .simulate import keyed_rng

DEFAULT_BOOTSTRAP_REPS = 1000
RANK_RTOL = 1e-10
MAX_FAILURE_RATE = 0.10


class RankDeficiencyError(np.linalg.LinAlgError):
    """Design matrix is numerically rank deficient."""

    def __init__(self, columns: Sequence[str], message: str | None = None):
        self.columns = tuple(columns)
        super().__init__(message or f"rank-deficient design; collinear columns: {', '.join(self.columns)}")


class BootstrapFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class DifferencedRow:
    household_id: str
    zone_id: str
    matrilineal: bool
    female_headed: bool
    d_rainfall: tuple[float, ...]
    d_log_income: Mapping[EarnerType, float]
    d_log_expenditure: Mapping[ExpenditureCategory, float]


@dataclass(frozen=True, eq=False)
class DifferencedSample:
    """One differenced row per household, stored column-wise.

    Behaves as a sequence of :class:`DifferencedRow`. ``zone_levels`` fixes
    the zone dummy coding and survives :meth:`take`, so bootstrap resamples
    keep the full-sample columns (a zone that disappears from a resample
    produces a zero column and the replication is dropped).
    """

    household_ids: tuple[str, ...]
    zone_codes: np.ndarray
    zone_levels: tuple[str, ...]
    matrilineal: np.ndarray
    female_headed: np.ndarray
    d_rain: np.ndarray
    earner_types: tuple[EarnerType, ...]
    d_income: np.ndarray
    d_exp: np.ndarray

    def __len__(self) -> int:
        return len(self.household_ids)

    def __getitem__(self, i: int) -> DifferencedRow:
        return DifferencedRow(
            household_id=self.household_ids[i],
            zone_id=self.zone_levels[self.zone_codes[i]],
            matrilineal=bool(self.matrilineal[i]),
            female_headed=bool(self.female_headed[i]),
            d_rainfall=tuple(float(v) for v in self.d_rain[i]),
            d_log_income={t: float(v) for t, v in zip(self.earner_types, self.d_income[i])},
            d_log_expenditure={c: float(v) for c, v in zip(CATEGORIES, self.d_exp[i])},
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def rainfall_dim(self) -> int:
        return self.d_rain.shape[1]

    @property
    def zone_ids(self) -> tuple[str, ...]:
        return tuple(self.zone_levels[c] for c in self.zone_codes)

    def take(self, idx: np.ndarray) -> "DifferencedSample":
        idx = np.asarray(idx)
        return DifferencedSample(
            household_ids=tuple(self.household_ids[i] for i in idx),
            zone_codes=self.zone_codes[idx],
            zone_levels=self.zone_levels,
            matrilineal=self.matrilineal[idx],
            female_headed=self.female_headed[idx],
            d_rain=self.d_rain[idx],
            earner_types=self.earner_types,
            d_income=self.d_income[idx],
            d_exp=self.d_exp[idx],
        )

    def subset(self, mask: np.ndarray) -> "DifferencedSample":
        """Rows where ``mask`` holds, with zone levels recomputed from what remains."""
        idx = np.flatnonzero(mask)
        sub = self.take(idx)
        zones = [self.zone_levels[c] for c in sub.zone_codes]
        levels, codes = _encode(zones)
        return DifferencedSample(
            household_ids=sub.household_ids,
            zone_codes=codes,
            zone_levels=levels,
            matrilineal=sub.matrilineal,
            female_headed=sub.female_headed,
            d_rain=sub.d_rain,
            earner_types=sub.earner_types,
            d_income=sub.d_income,
            d_exp=sub.d_exp,
        )

    def column(self, name: str) -> np.ndarray:
        """Look up ``rain_<k>``, ``income_<type>`` or ``exp_<category>``."""
        if name.startswith("rain_"):
            return self.d_rain[:, int(name[5:])]
        if name.startswith("income_"):
            t = EarnerType(name[7:])
            return self.d_income[:, self.earner_types.index(t)]
        if name.startswith("exp_"):
            return self.d_exp[:, CATEGORIES.index(ExpenditureCategory(name[4:]))]
        raise KeyError(name)

    def zone_dummies(self) -> tuple[np.ndarray, list[str]]:
        """One-hot zone indicators with the first level as reference."""
        n_levels = len(self.zone_levels)
        d = np.zeros((len(self), max(n_levels - 1, 0)))
        rows = np.flatnonzero(self.zone_codes > 0)
        d[rows, self.zone_codes[rows] - 1] = 1.0
        return d, [f"zone[{z}]" for z in self.zone_levels[1:]]


def _encode(values: Sequence[str]) -> tuple[tuple[str, ...], np.ndarray]:
    levels = tuple(sorted(set(values)))
    lookup = {v: i for i, v in enumerate(levels)}
    return levels, np.array([lookup[v] for v in values], dtype=np.intp)


def difference_panel(
    classified: ClassifiedPanel, transform: Transform = transform_income
) -> DifferencedSample:
    """Wave 2 minus wave 1 of transformed incomes/expenditures and raw rainfall."""
    by_hh: dict[str, dict[int, object]] = {}
    for row in classified.rows:
        waves = by_hh.setdefault(row.household_id, {})
        if row.wave in waves:
            raise ValueError(f"household {row.household_id} has wave {row.wave} twice")
        waves[row.wave] = row
    types = classified.earner_types
    ids, zones, matri, fem, drain, dinc, dexp = [], [], [], [], [], [], []
    for hid in sorted(by_hh):
        waves = by_hh[hid]
        if set(waves) != {1, 2}:
            raise ValueError(f"household {hid} does not have exactly waves 1 and 2")
        w1, w2 = waves[1], waves[2]
        ids.append(hid)
        zones.append(w1.zone_id)
        matri.append(w1.matrilineal)
        fem.append(w1.female_headed)
        drain.append(np.subtract(w2.rainfall, w1.rainfall))
        dinc.append([transform(w2.income_by_type[t]) - transform(w1.income_by_type[t]) for t in types])
        dexp.append(
            [transform(w2.expenditures.get(c, 0.0)) - transform(w1.expenditures.get(c, 0.0)) for c in CATEGORIES]
        )
    levels, codes = _encode(zones)
    k = classified.rainfall_dim
    return DifferencedSample(
        household_ids=tuple(ids),
        zone_codes=codes,
        zone_levels=levels,
        matrilineal=np.array(matri, dtype=bool),
        female_headed=np.array(fem, dtype=bool),
        d_rain=np.array(drain, dtype=float).reshape(len(ids), k),
        earner_types=types,
        d_income=np.array(dinc, dtype=float).reshape(len(ids), len(types)),
        d_exp=np.array(dexp, dtype=float).reshape(len(ids), len(CATEGORIES)),
    )


# ----------------------------------------------------------------------
# least squares
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class OLSFit:
    names: tuple[str, ...]
    params: np.ndarray
    residuals: np.ndarray


def _collinear_columns(X: np.ndarray, names: Sequence[str]) -> list[str]:
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    null = vt[s <= RANK_RTOL * s[0]] if s[0] > 0 else vt
    involved = np.any(np.abs(null) > 1e-8, axis=0)
    return [names[j] for j in np.flatnonzero(involved)]


def lstsq(X: np.ndarray, Y: np.ndarray, names: Sequence[str] | None = None) -> np.ndarray:
    """Least-squares coefficients for one or many responses via Householder QR.

    Raises :class:`RankDeficiencyError` when the smallest singular value of
    ``X`` is not above ``RANK_RTOL`` times the largest.
    """
    n, p = X.shape
    if names is None:
        names = [f"x{j}" for j in range(p)]
    if n < p:
        raise RankDeficiencyError(names, f"{n} rows cannot identify {p} coefficients")
    q, r = np.linalg.qr(X)
    s = np.linalg.svd(r, compute_uv=False)
    if not (s[-1] > RANK_RTOL * s[0]):
        raise RankDeficiencyError(_collinear_columns(X, names))
    return np.linalg.solve(r, q.T @ Y)


def ols(
    y: np.ndarray,
    X: np.ndarray,
    intercept: bool = False,
    names: Sequence[str] | None = None,
) -> OLSFit:
    """Ordinary least squares; with ``intercept`` a leading ``const`` column is added."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    if intercept:
        X = np.column_stack([np.ones(len(y)), X])
        names = ["const", *names]
    beta = lstsq(X, y, names)
    return OLSFit(tuple(names), beta, y - X @ beta)


def r_squared(y: np.ndarray, resid: np.ndarray) -> np.ndarray:
    """``1 - SSR/SST`` per column; zero when the response has no variation."""
    y = np.asarray(y, dtype=float)
    centred = y - y.mean(axis=0)
    sst = np.sum(centred**2, axis=0)
    ssr = np.sum(np.asarray(resid) ** 2, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r2 = np.where(sst > 0, 1.0 - ssr / np.where(sst > 0, sst, 1.0), 0.0)
    return np.clip(r2, 0.0, 1.0)


# ----------------------------------------------------------------------
# bootstrap
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class BootstrapDraws:
    draws: np.ndarray
    n_failed: int
    seed: int

    @property
    def reps(self) -> int:
        return self.draws.shape[0] + self.n_failed

    def cov(self) -> np.ndarray:
        return empirical_cov(self.draws)


def empirical_cov(draws: np.ndarray) -> np.ndarray:
    draws = np.asarray(draws, dtype=float)
    if draws.shape[0] < 2:
        raise BootstrapFailure("need at least two successful replications for a covariance")
    c = np.cov(draws, rowvar=False, ddof=1)
    c = np.atleast_2d(c)
    return (c + c.T) / 2


def resample_indices(n: int, B: int, seed: int) -> list[np.ndarray]:
    """Household draws for each replication; stream ``b`` depends only on (seed, b)."""
    return [keyed_rng(seed, b).integers(0, n, size=n) for b in range(B)]


def bootstrap_draws(
    estimator: Callable[[DifferencedSample], np.ndarray],
    rows: DifferencedSample,
    B: int,
    seed: int,
    max_failure_rate: float = MAX_FAILURE_RATE,
) -> BootstrapDraws:
    """Re-run ``estimator`` on ``B`` household resamples.

    After differencing each household is one row, so resampling households
    with replacement is the same as resampling rows. Replications whose
    estimator raises a linear-algebra error are dropped and counted; more
    than ``max_failure_rate`` of them aborts.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    if len(rows) == 0:
        raise ValueError("cannot bootstrap an empty sample")
    out, failed = [], 0
    for idx in resample_indices(len(rows), B, seed):
        try:
            out.append(np.asarray(estimator(rows.take(idx)), dtype=float).ravel())
        except np.linalg.LinAlgError:
            failed += 1
    if failed > max_failure_rate * B:
        raise BootstrapFailure(
            f"estimator failed in {failed} of {B} bootstrap replications "
            f"(limit {max_failure_rate:.0%}); the design is close to rank deficient"
        )
    if failed:
        warnings.warn(f"dropped {failed} of {B} bootstrap replications", RuntimeWarning, stacklevel=2)
    return BootstrapDraws(np.array(out), failed, seed)


def cluster_bootstrap(
    estimator: Callable[[DifferencedSample], np.ndarray],
    rows: DifferencedSample,
    B: int,
    seed: int,
) -> np.ndarray:
    """Household-clustered bootstrap covariance of ``estimator``."""
    return bootstrap_draws(estimator, rows, B, seed).cov()


# ----------------------------------------------------------------------
# differenced regressions with zone indicators
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class RegressionResult:
    names: tuple[str, ...]
    params: np.ndarray
    cov: np.ndarray
    r_squared: float
    n_obs: int
    bootstrap_reps: int
    seed: int
    n_failed: int = 0
    response: str = ""

    def __post_init__(self) -> None:
        p = len(self.names)
        if self.params.shape != (p,) or self.cov.shape != (p, p):
            raise ValueError("coefficient and covariance dimensions disagree")

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def coef(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def stderr(self, name: str) -> float:
        return float(self.se[self.names.index(name)])

    def block(self, names: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        idx = [self.names.index(n) for n in names]
        return self.params[idx], self.cov[np.ix_(idx, idx)]

    def to_dict(self) -> dict:
        return {
            "response": self.response,
            "names": list(self.names),
            "params": [float(v) for v in self.params],
            "se": [float(v) for v in self.se],
            "cov": [[float(v) for v in row] for row in self.cov],
            "r_squared": float(self.r_squared),
            "n_obs": int(self.n_obs),
            "bootstrap_reps": int(self.bootstrap_reps),
            "bootstrap_failed": int(self.n_failed),
            "seed": int(self.seed),
        }


def design(rows: DifferencedSample, regressors: np.ndarray, names: Sequence[str]) -> tuple[np.ndarray, list[str]]:
    """``[const, regressors, zone dummies]`` and its column names."""
    dummies, dnames = rows.zone_dummies()
    X = np.column_stack([np.ones(len(rows)), np.asarray(regressors, dtype=float).reshape(len(rows), -1), dummies])
    return X, ["const", *names, *dnames]


def fit_differenced(
    y_name: str,
    regressor_names: Sequence[str],
    rows: DifferencedSample,
    B: int = DEFAULT_BOOTSTRAP_REPS,
    seed: int = 0,
) -> RegressionResult:
    """Regress one differenced column on others plus zone indicators.

    >>> # e.g. fit_differenced("income_male", ["rain_0", "rain_1"], rows)
    """
    regressor_names = list(regressor_names)

    def estimate(sample: DifferencedSample) -> np.ndarray:
        X, names = design(sample, np.column_stack([sample.column(n) for n in regressor_names]), regressor_names)
        return lstsq(X, sample.column(y_name), names)

    X, names = design(rows, np.column_stack([rows.column(n) for n in regressor_names]), regressor_names)
    y = rows.column(y_name)
    fit = ols(y, X, names=names)
    boot = bootstrap_draws(estimate, rows, B, seed)
    return RegressionResult(
        names=tuple(names),
        params=fit.params,
        cov=boot.cov(),
        r_squared=float(r_squared(y, fit.residuals)),
        n_obs=len(rows),
        bootstrap_reps=B,
        seed=seed,
        n_failed=boot.n_failed,
        response=y_name,
    )
