"""Two-stage income-pooling tests.

The first stage regresses each earner type's differenced log income on the
differenced rainfall vector; its rainfall coefficients turn each household's
rainfall change into predicted income changes. The second stage regresses
each expenditure category on those predicted changes. Under income pooling
every category's coefficient vector is a scalar multiple of the aggregate
expenditure's, which is tested with a delta-method Wald statistic. A single
household bootstrap re-runs both stages in every replication, so all
coefficient vectors are resampled jointly and first-stage estimation error is
carried into the second-stage covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .core import (
    CATEGORIES,
    COMPONENTS,
    ClassifiedPanel,
    EarnerType,
    ExpenditureCategory,
    PanelObservation,
    SpecMode,
    classify_panel,
)
from .regress import (
    DEFAULT_BOOTSTRAP_REPS,
    MAX_FAILURE_RATE,
    BootstrapFailure,
    DifferencedSample,
    RegressionResult,
    difference_panel,
    empirical_cov,
    lstsq,
    r_squared,
    resample_indices,
)

SUBSAMPLES = ("all", "matrilineal", "non-matrilineal", "female-headed", "non-female-headed")


class IdentificationError(ValueError):
    """Too few rainfall components for the number of coefficients tested."""


class WaldSingularError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class WaldTestResult:
    statistic: float
    df: int
    p_value: float
    chi_hat: float
    pivot: int = 0

    def to_dict(self) -> dict:
        return {
            "statistic": float(self.statistic),
            "df": int(self.df),
            "p_value": float(self.p_value),
            "chi_hat": float(self.chi_hat),
            "pivot": int(self.pivot),
        }


def _pivot(alpha: np.ndarray) -> int:
    mags = np.abs(alpha)
    if len(alpha) > 1 and mags[0] == mags.min():
        return int(np.argmax(mags))
    return 0


def proportional_wald(beta_g, alpha, joint_cov) -> WaldTestResult:
    """Test ``beta_g = chi * alpha`` for some scalar ``chi``.

    The ``m - 1`` restrictions are the cross products
    ``beta[p] * alpha[k] - beta[k] * alpha[p]`` for ``k != p``, where the
    pivot ``p`` is 0 unless ``|alpha[0]|`` is the smallest magnitude, in which
    case the largest is used. ``joint_cov`` is the covariance of the stacked
    vector ``(beta_g, alpha)``.
    """
    beta = np.asarray(beta_g, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    sigma = np.asarray(joint_cov, dtype=float)
    m = beta.size
    if alpha.size != m:
        raise ValueError("beta_g and alpha must have the same length")
    if sigma.shape != (2 * m, 2 * m):
        raise ValueError(f"joint_cov must be {2 * m}x{2 * m}, got {sigma.shape}")
    if m < 2:
        raise IdentificationError("proportionality needs at least two coefficients (df would be 0)")
    if not np.any(alpha):
        raise ValueError("alpha is the zero vector; proportionality is undefined")

    p = _pivot(alpha)
    others = [k for k in range(m) if k != p]
    r = np.array([beta[p] * alpha[k] - beta[k] * alpha[p] for k in others])
    R = np.zeros((m - 1, 2 * m))
    for row, k in enumerate(others):
        R[row, p] = alpha[k]
        R[row, k] = -alpha[p]
        R[row, m + k] = beta[p]
        R[row, m + p] = -beta[k]
    V = R @ sigma @ R.T
    V = (V + V.T) / 2
    eig = np.linalg.eigvalsh(V)
    if not (eig[-1] > 0 and eig[0] > 1e-12 * eig[-1]):
        raise WaldSingularError(
            "restriction covariance is singular; increase the number of bootstrap replications"
        )
    stat = max(float(r @ np.linalg.solve(V, r)), 0.0)
    return WaldTestResult(
        statistic=stat,
        df=m - 1,
        p_value=float(stats.chi2.sf(stat, m - 1)),
        chi_hat=_chi_hat(beta, alpha, sigma[:m, :m]),
        pivot=p,
    )


def _chi_hat(beta: np.ndarray, alpha: np.ndarray, cov_beta: np.ndarray) -> float:
    try:
        W = np.linalg.inv(cov_beta)
    except np.linalg.LinAlgError:
        W = np.linalg.pinv(cov_beta)
    den = alpha @ W @ alpha
    if den <= 0:
        return float(alpha @ beta / (alpha @ alpha))
    return float(alpha @ W @ beta / den)


# ----------------------------------------------------------------------
# pipeline pieces
# ----------------------------------------------------------------------


def _rain_names(k: int) -> list[str]:
    return [f"rain_{j}" for j in range(k)]


def _pred_names(types: Sequence[EarnerType]) -> list[str]:
    return [f"pred_{t.value}" for t in types]


def _check_identified(rows: DifferencedSample) -> None:
    k, t = rows.rainfall_dim, len(rows.earner_types)
    if k < t:
        raise IdentificationError(
            f"{k} rainfall components cannot separate {t} earner types; "
            "the second stage needs at least as many rainfall measures as earner types"
        )


def _check_mode(rows: DifferencedSample, mode: SpecMode) -> None:
    if tuple(rows.earner_types) != mode.earner_types:
        raise ValueError(
            f"rows were classified with earner types {[t.value for t in rows.earner_types]}, "
            f"not the {mode.value} specification"
        )


def _first_stage(rows: DifferencedSample, Z: np.ndarray, names: list[str]) -> np.ndarray:
    X = np.column_stack([np.ones(len(rows)), rows.d_rain, Z])
    return lstsq(X, rows.d_income, names)


def _second_stage(Y: np.ndarray, P: np.ndarray, Z: np.ndarray, names: list[str]) -> np.ndarray:
    X = np.column_stack([np.ones(len(P)), P, Z])
    return lstsq(X, Y, names)


class _TwoStage:
    """Both stages on one sample, with a flat parameter vector for bootstrapping."""

    def __init__(self, rows: DifferencedSample):
        self.k = rows.rainfall_dim
        self.types = tuple(rows.earner_types)
        _, zone_names = rows.zone_dummies()
        self.names1 = ["const", *_rain_names(self.k), *zone_names]
        self.names2 = ["const", *_pred_names(self.types), *zone_names]

    def run(self, rows: DifferencedSample, predicted: np.ndarray | None = None):
        Z, _ = rows.zone_dummies()
        c1 = _first_stage(rows, Z, self.names1)
        P = rows.d_rain @ c1[1 : 1 + self.k] if predicted is None else predicted
        c2 = _second_stage(rows.d_exp, P, Z, self.names2)
        return c1, c2, P

    def vector(self, c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
        return np.concatenate([c1.T.ravel(), c2.T.ravel()])

    def first_block(self, t: int) -> slice:
        p1 = len(self.names1)
        return slice(t * p1, (t + 1) * p1)

    def second_block(self, c: int) -> slice:
        off = len(self.types) * len(self.names1)
        p2 = len(self.names2)
        return slice(off + c * p2, off + (c + 1) * p2)


def _joint_draws(
    rows: DifferencedSample,
    pipe: _TwoStage,
    B: int,
    seed: int,
    fixed_predicted: np.ndarray | None = None,
) -> tuple[np.ndarray, int]:
    if B < 2:
        raise ValueError("B must be at least 2")
    out, failed = [], 0
    for idx in resample_indices(len(rows), B, seed):
        sample = rows.take(idx)
        pred = None if fixed_predicted is None else fixed_predicted[idx]
        try:
            c1, c2, _ = pipe.run(sample, pred)
        except np.linalg.LinAlgError:
            failed += 1
            continue
        out.append(pipe.vector(c1, c2))
    if failed > MAX_FAILURE_RATE * B:
        raise BootstrapFailure(
            f"pipeline failed in {failed} of {B} bootstrap replications (limit {MAX_FAILURE_RATE:.0%})"
        )
    return np.array(out), failed


@dataclass(frozen=True)
class FirstStageResult:
    mode: SpecMode
    per_type: dict[EarnerType, RegressionResult]

    def rainfall_coefficients(self) -> np.ndarray:
        """``(K, n_types)`` matrix of rainfall loadings in earner-type order."""
        cols = []
        for res in self.per_type.values():
            rain = [n for n in res.names if n.startswith("rain_")]
            cols.append(res.block(rain)[0])
        return np.column_stack(cols)


@dataclass(frozen=True)
class PredictedChanges:
    """Rainfall-driven predicted log income changes, one column per earner type."""

    earner_types: tuple[EarnerType, ...]
    psi: np.ndarray
    values: np.ndarray

    @property
    def names(self) -> list[str]:
        return _pred_names(self.earner_types)


def run_first_stage(
    rows: DifferencedSample, mode: SpecMode, B: int = DEFAULT_BOOTSTRAP_REPS, seed: int = 0
) -> FirstStageResult:
    _check_mode(rows, mode)
    _check_identified(rows)
    pipe = _TwoStage(rows)
    Z, _ = rows.zone_dummies()
    X = np.column_stack([np.ones(len(rows)), rows.d_rain, Z])
    c1 = lstsq(X, rows.d_income, pipe.names1)
    r2 = r_squared(rows.d_income, rows.d_income - X @ c1)

    def estimate(sample: DifferencedSample) -> np.ndarray:
        Zs, _ = sample.zone_dummies()
        return _first_stage(sample, Zs, pipe.names1).T.ravel()

    draws, failed = [], 0
    for idx in resample_indices(len(rows), B, seed):
        try:
            draws.append(estimate(rows.take(idx)))
        except np.linalg.LinAlgError:
            failed += 1
    if failed > MAX_FAILURE_RATE * B:
        raise BootstrapFailure(f"first stage failed in {failed} of {B} bootstrap replications")
    cov = empirical_cov(np.array(draws))
    p1 = len(pipe.names1)
    per_type = {}
    for j, t in enumerate(pipe.types):
        s = slice(j * p1, (j + 1) * p1)
        per_type[t] = RegressionResult(
            names=tuple(pipe.names1),
            params=c1[:, j].copy(),
            cov=cov[s, s].copy(),
            r_squared=float(r2[j]),
            n_obs=len(rows),
            bootstrap_reps=B,
            seed=seed,
            n_failed=failed,
            response=f"income_{t.value}",
        )
    return FirstStageResult(mode, per_type)


def first_stage_loadings(rows: DifferencedSample) -> np.ndarray:
    """Point estimates of the rainfall coefficients, ``(K, n_types)``, without a bootstrap."""
    pipe = _TwoStage(rows)
    Z, _ = rows.zone_dummies()
    return _first_stage(rows, Z, pipe.names1)[1 : 1 + pipe.k]


def predict_changes(first_stage: FirstStageResult, rows: DifferencedSample) -> PredictedChanges:
    psi = first_stage.rainfall_coefficients()
    if psi.shape[0] != rows.rainfall_dim:
        raise ValueError("first stage was estimated with a different rainfall dimension")
    return PredictedChanges(tuple(first_stage.per_type), psi, rows.d_rain @ psi)


def run_second_stage(
    rows: DifferencedSample,
    predicted: PredictedChanges,
    category: ExpenditureCategory,
    B: int = DEFAULT_BOOTSTRAP_REPS,
    seed: int = 0,
    refit_first_stage: bool = True,
) -> RegressionResult:
    """Regress one category on the predicted income changes plus zone indicators.

    With ``refit_first_stage`` (the default) each bootstrap replication
    re-estimates the first stage on its resample; otherwise the predicted
    changes are held fixed, which ignores first-stage estimation error.
    """
    c = CATEGORIES.index(category)
    pipe = _TwoStage(rows)
    if tuple(predicted.earner_types) != pipe.types:
        raise ValueError("predicted changes do not match the rows' earner types")
    Z, _ = rows.zone_dummies()
    y = rows.d_exp[:, [c]]
    coef = _second_stage(y, predicted.values, Z, pipe.names2)
    resid = y - np.column_stack([np.ones(len(rows)), predicted.values, Z]) @ coef

    draws, failed = [], 0
    for idx in resample_indices(len(rows), B, seed):
        sample = rows.take(idx)
        try:
            if refit_first_stage:
                Zs, _ = sample.zone_dummies()
                c1 = _first_stage(sample, Zs, pipe.names1)
                P = sample.d_rain @ c1[1 : 1 + pipe.k]
            else:
                Zs, _ = sample.zone_dummies()
                P = predicted.values[idx]
            draws.append(_second_stage(sample.d_exp[:, [c]], P, Zs, pipe.names2).ravel())
        except np.linalg.LinAlgError:
            failed += 1
    if failed > MAX_FAILURE_RATE * B:
        raise BootstrapFailure(f"second stage failed in {failed} of {B} bootstrap replications")
    return RegressionResult(
        names=tuple(pipe.names2),
        params=coef.ravel(),
        cov=empirical_cov(np.array(draws)),
        r_squared=float(r_squared(y, resid)[0]),
        n_obs=len(rows),
        bootstrap_reps=B,
        seed=seed,
        n_failed=failed,
        response=f"exp_{category.value}",
    )


# ----------------------------------------------------------------------
# full tests
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class CategoryTest:
    category: ExpenditureCategory
    regression: RegressionResult
    wald: WaldTestResult | None
    error: str | None = None


@dataclass(frozen=True)
class PoolingTestReport:
    mode: SpecMode
    subsample: str
    n: int
    first_stage: FirstStageResult
    categories: dict[ExpenditureCategory, CategoryTest]
    bootstrap_reps: int
    seed: int
    n_failed: int = 0
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def earner_types(self) -> tuple[EarnerType, ...]:
        return self.mode.earner_types

    def p_values(self) -> dict[ExpenditureCategory, float]:
        return {
            c: (t.wald.p_value if t.wald is not None else float("nan"))
            for c, t in self.categories.items()
            if c is not ExpenditureCategory.AGGREGATE
        }

    @property
    def has_errors(self) -> bool:
        return any(t.error for t in self.categories.values())


def subsample_mask(rows: DifferencedSample, name: str) -> np.ndarray:
    if name == "all":
        return np.ones(len(rows), dtype=bool)
    if name == "matrilineal":
        return rows.matrilineal.copy()
    if name == "non-matrilineal":
        return ~rows.matrilineal
    if name == "female-headed":
        return rows.female_headed.copy()
    if name == "non-female-headed":
        return ~rows.female_headed
    raise ValueError(f"unknown subsample {name!r}; expected one of {', '.join(SUBSAMPLES)}")


def prepare_rows(
    panel: Sequence[PanelObservation] | ClassifiedPanel | DifferencedSample,
    mode: SpecMode,
    subsample: str = "all",
) -> DifferencedSample:
    if isinstance(panel, DifferencedSample):
        rows = panel
    else:
        classified = panel if isinstance(panel, ClassifiedPanel) else classify_panel(panel, mode)
        if classified.mode is not mode:
            raise ValueError("classified panel mode does not match the requested mode")
        rows = difference_panel(classified)
    _check_mode(rows, mode)
    if subsample != "all":
        rows = rows.subset(subsample_mask(rows, subsample))
    if len(rows) == 0:
        raise ValueError(f"subsample {subsample!r} is empty")
    return rows


def run_pooling_test(
    panel: Sequence[PanelObservation] | ClassifiedPanel | DifferencedSample,
    mode: SpecMode,
    subsample: str = "all",
    B: int = DEFAULT_BOOTSTRAP_REPS,
    seed: int = 0,
) -> PoolingTestReport:
    """First stage, predictions, eleven second stages and ten Wald tests.

    The subsample is filtered before anything is estimated, so each
    subsample gets its own first stage.
    """
    rows = prepare_rows(panel, mode, subsample)
    _check_identified(rows)
    pipe = _TwoStage(rows)
    notes = []
    n_coef = max(len(pipe.names1), len(pipe.names2))
    if len(rows) < 10 * n_coef:
        notes.append(f"subsample has {len(rows)} households, fewer than 10x the {n_coef} coefficients estimated")

    Z, _ = rows.zone_dummies()
    c1, c2, P = pipe.run(rows)
    X1 = np.column_stack([np.ones(len(rows)), rows.d_rain, Z])
    X2 = np.column_stack([np.ones(len(rows)), P, Z])
    r2_first = r_squared(rows.d_income, rows.d_income - X1 @ c1)
    r2_second = r_squared(rows.d_exp, rows.d_exp - X2 @ c2)

    draws, failed = _joint_draws(rows, pipe, B, seed)
    cov = empirical_cov(draws)

    per_type = {}
    for j, t in enumerate(pipe.types):
        s = pipe.first_block(j)
        per_type[t] = RegressionResult(
            names=tuple(pipe.names1),
            params=c1[:, j].copy(),
            cov=cov[s, s].copy(),
            r_squared=float(r2_first[j]),
            n_obs=len(rows),
            bootstrap_reps=B,
            seed=seed,
            n_failed=failed,
            response=f"income_{t.value}",
        )

    m = len(pipe.types)
    agg = CATEGORIES.index(ExpenditureCategory.AGGREGATE)
    agg_slice = pipe.second_block(agg)
    agg_idx = np.arange(agg_slice.start + 1, agg_slice.start + 1 + m)
    alpha = c2[1 : 1 + m, agg]

    results = {}
    for c, cat in enumerate(CATEGORIES):
        s = pipe.second_block(c)
        reg = RegressionResult(
            names=tuple(pipe.names2),
            params=c2[:, c].copy(),
            cov=cov[s, s].copy(),
            r_squared=float(r2_second[c]),
            n_obs=len(rows),
            bootstrap_reps=B,
            seed=seed,
            n_failed=failed,
            response=f"exp_{cat.value}",
        )
        wald, err = None, None
        if cat is not ExpenditureCategory.AGGREGATE:
            idx = np.concatenate([np.arange(s.start + 1, s.start + 1 + m), agg_idx])
            try:
                wald = proportional_wald(c2[1 : 1 + m, c], alpha, cov[np.ix_(idx, idx)])
            except (np.linalg.LinAlgError, ValueError) as exc:
                err = str(exc)
        results[cat] = CategoryTest(cat, reg, wald, err)

    return PoolingTestReport(
        mode=mode,
        subsample=subsample,
        n=len(rows),
        first_stage=FirstStageResult(mode, per_type),
        categories=results,
        bootstrap_reps=B,
        seed=seed,
        n_failed=failed,
        warnings=tuple(notes),
    )


@dataclass(frozen=True)
class UnrestrictedReport:
    n: int
    rainfall_dim: int
    categories: dict[ExpenditureCategory, CategoryTest]
    bootstrap_reps: int
    seed: int
    n_failed: int = 0

    def p_values(self) -> dict[ExpenditureCategory, float]:
        return {
            c: (t.wald.p_value if t.wald is not None else float("nan"))
            for c, t in self.categories.items()
            if c is not ExpenditureCategory.AGGREGATE
        }

    @property
    def has_errors(self) -> bool:
        return any(t.error for t in self.categories.values())


def run_unrestricted_test(
    rows: DifferencedSample, B: int = DEFAULT_BOOTSTRAP_REPS, seed: int = 0
) -> UnrestrictedReport:
    """Regress each category directly on the rainfall changes and test that its
    rainfall coefficients are proportional to the aggregate's (df = K - 1)."""
    k = rows.rainfall_dim
    if k < 2:
        raise IdentificationError("the unrestricted test needs at least two rainfall components (df would be 0)")
    Z, zone_names = rows.zone_dummies()
    names = ["const", *_rain_names(k), *zone_names]
    X = np.column_stack([np.ones(len(rows)), rows.d_rain, Z])
    coef = lstsq(X, rows.d_exp, names)
    r2 = r_squared(rows.d_exp, rows.d_exp - X @ coef)

    draws, failed = [], 0
    for idx in resample_indices(len(rows), B, seed):
        sample = rows.take(idx)
        Zs, _ = sample.zone_dummies()
        try:
            draws.append(lstsq(np.column_stack([np.ones(len(sample)), sample.d_rain, Zs]), sample.d_exp, names).T.ravel())
        except np.linalg.LinAlgError:
            failed += 1
    if failed > MAX_FAILURE_RATE * B:
        raise BootstrapFailure(f"unrestricted regressions failed in {failed} of {B} replications")
    cov = empirical_cov(np.array(draws))
    p = len(names)
    agg = CATEGORIES.index(ExpenditureCategory.AGGREGATE)
    agg_idx = np.arange(agg * p + 1, agg * p + 1 + k)
    alpha = coef[1 : 1 + k, agg]
    results = {}
    for c, cat in enumerate(CATEGORIES):
        s = slice(c * p, (c + 1) * p)
        reg = RegressionResult(
            names=tuple(names),
            params=coef[:, c].copy(),
            cov=cov[s, s].copy(),
            r_squared=float(r2[c]),
            n_obs=len(rows),
            bootstrap_reps=B,
            seed=seed,
            n_failed=failed,
            response=f"exp_{cat.value}",
        )
        wald, err = None, None
        if cat is not ExpenditureCategory.AGGREGATE:
            idx = np.concatenate([np.arange(c * p + 1, c * p + 1 + k), agg_idx])
            try:
                wald = proportional_wald(coef[1 : 1 + k, c], alpha, cov[np.ix_(idx, idx)])
            except (np.linalg.LinAlgError, ValueError) as exc:
                err = str(exc)
        results[cat] = CategoryTest(cat, reg, wald, err)
    return UnrestrictedReport(len(rows), k, results, B, seed, failed)


__all__ = [
    "COMPONENTS",
    "SUBSAMPLES",
    "CategoryTest",
    "FirstStageResult",
    "IdentificationError",
    "PoolingTestReport",
    "PredictedChanges",
    "UnrestrictedReport",
    "WaldSingularError",
    "WaldTestResult",
    "predict_changes",
    "prepare_rows",
    "proportional_wald",
    "run_first_stage",
    "run_pooling_test",
    "run_second_stage",
    "run_unrestricted_test",
    "subsample_mask",
]
