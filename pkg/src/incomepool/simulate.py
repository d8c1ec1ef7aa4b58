"""Synthetic two-wave household panels from a collective-household model.

Households receive male, female and joint crop income whose log responds
linearly to a rainfall vector. Expenditures are then allocated under one of
three regimes:

* full pooling: every category is a fixed share of one pooled budget, so
  conditional on total spending no category carries rainfall information;
* no pooling: each earner type spends its own income with its own budget
  shares;
* partial pooling: the categories in the pooled set come out of the common
  budget, the rest follow earner-specific shares. Every earner devotes the
  same total fraction to the non-pooled set, so aggregate spending stays a
  fixed multiple of total income.

All randomness comes from streams keyed by ``(seed, household, wave)`` so any
household can be regenerated in isolation, in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from functools import lru_cache
from typing import Mapping

import numpy as np
from scipy import optimize, stats

from .core import (
    COMPONENTS,
    EarnerType,
    ExpenditureCategory,
    Gender,
    IncomeRecord,
    PanelObservation,
)

EARNER_ORDER = (EarnerType.MALE, EarnerType.FEMALE, EarnerType.JOINT)

# stream tags for keyed seeding
_RAIN, _DRAWS, _HOUSEHOLD, _ZONE = 0, 1, 2, 3

# Mean expenditure by category in real MK, used as pooled budget shares.
SURVEY_MEAN_EXPENDITURE: dict[ExpenditureCategory, float] = {
    ExpenditureCategory.FOOD: 359_981,
    ExpenditureCategory.ALCOHOL_TOBACCO: 17_746,
    ExpenditureCategory.CLOTHING: 20_548,
    ExpenditureCategory.RECREATION: 4_664,
    ExpenditureCategory.EDUCATION: 9_847,
    ExpenditureCategory.HEALTHCARE: 7_709,
    ExpenditureCategory.HOUSING_UTILITIES: 119_296,
    ExpenditureCategory.TRANSPORTATION: 30_182,
    ExpenditureCategory.COMMUNICATION: 19_722,
    ExpenditureCategory.HOTELS_RESTAURANTS: 7_012,
}

# First-stage rainfall loadings. Component 0 (total seasonal rainfall, per mm)
# carries the reported magnitudes; the auxiliary components are chosen so the
# three loading vectors point in clearly different directions.
DEFAULT_LOADINGS_K4: dict[EarnerType, tuple[float, ...]] = {
    EarnerType.MALE: (0.00113, -0.0030, 0.0010, 0.10),
    EarnerType.FEMALE: (0.00045, 0.0025, -0.0020, -0.05),
    EarnerType.JOINT: (0.00039, -0.0010, 0.0030, 0.20),
}

DEFAULT_INTERCEPTS: dict[EarnerType, float] = {
    EarnerType.MALE: 8.0,
    EarnerType.FEMALE: 7.5,
    EarnerType.JOINT: 8.5,
}


def default_loadings(rainfall_dim: int) -> dict[EarnerType, tuple[float, ...]]:
    """Loadings for ``rainfall_dim`` components; K=4 uses the calibrated set."""
    if rainfall_dim == 4:
        return dict(DEFAULT_LOADINGS_K4)
    out = {}
    for t, base in DEFAULT_LOADINGS_K4.items():
        aux = list(base[1:3]) * rainfall_dim
        vec = [base[0], *aux[: max(rainfall_dim - 2, 0)], base[3]]
        out[t] = tuple(vec[:rainfall_dim])
    return out


def pooled_shares_from_survey_means() -> dict[ExpenditureCategory, float]:
    total = sum(SURVEY_MEAN_EXPENDITURE.values())
    return {c: SURVEY_MEAN_EXPENDITURE[c] / total for c in COMPONENTS}


def tilted_earner_shares(
    pooled: Mapping[ExpenditureCategory, float], separation: float
) -> dict[EarnerType, dict[ExpenditureCategory, float]]:
    """Earner-specific budget shares mixing pooled shares with a favoured set.

    Component ``k`` (in table order) is favoured by earner type ``k mod 3``.
    Each type's shares are ``(1 - separation) * pooled + separation * u``
    where ``u`` is the pooled share vector restricted to that type's
    favoured components and rescaled to sum to one. Both parts sum to one,
    so no renormalisation is needed and a large category such as food cannot
    dilute the tilt of the others.
    """
    if not 0.0 <= separation < 1.0:
        raise ValueError("share separation must lie in [0, 1)")
    pooled = _normalised(pooled)
    out: dict[EarnerType, dict[ExpenditureCategory, float]] = {}
    for j, t in enumerate(EARNER_ORDER):
        favoured = [c for k, c in enumerate(COMPONENTS) if k % len(EARNER_ORDER) == j]
        mass = sum(pooled[c] for c in favoured)
        if mass == 0:  # nothing to tilt towards
            favoured, mass = list(COMPONENTS), 1.0
        out[t] = {
            c: (1.0 - separation) * pooled[c] + (separation * pooled[c] / mass if c in favoured else 0.0)
            for c in COMPONENTS
        }
    return out


@dataclass(frozen=True)
class PoolingRegime:
    """``kind`` is ``"full"``, ``"none"`` or ``"partial"``."""

    kind: str
    pooled_categories: frozenset[ExpenditureCategory] = frozenset()

    def __post_init__(self) -> None:
        if self.kind not in ("full", "none", "partial"):
            raise ValueError(f"unknown pooling regime {self.kind!r}")
        if self.kind == "partial":
            if not self.pooled_categories:
                raise ValueError("partial pooling needs at least one pooled category")
            if ExpenditureCategory.AGGREGATE in self.pooled_categories:
                raise ValueError("the aggregate cannot be a pooled category")
        elif self.pooled_categories:
            raise ValueError("only partial pooling takes a category set")

    @classmethod
    def full(cls) -> "PoolingRegime":
        return cls("full")

    @classmethod
    def none(cls) -> "PoolingRegime":
        return cls("none")

    @classmethod
    def partial(cls, *categories: ExpenditureCategory) -> "PoolingRegime":
        return cls("partial", frozenset(categories))

    @classmethod
    def parse(cls, text: str) -> "PoolingRegime":
        """Parse ``full``, ``none`` or ``partial:food,clothing``."""
        text = text.strip().lower()
        if text in ("full", "fullpooling", "full_pooling"):
            return cls.full()
        if text in ("none", "no", "nopooling", "no_pooling"):
            return cls.none()
        if text.startswith("partial:"):
            names = [n.strip() for n in text.split(":", 1)[1].split(",") if n.strip()]
            try:
                cats = [ExpenditureCategory(n) for n in names]
            except ValueError as exc:
                raise ValueError(f"bad category in regime {text!r}: {exc}") from None
            return cls.partial(*cats)
        raise ValueError(f"cannot parse pooling regime {text!r}")

    def __str__(self) -> str:
        if self.kind == "partial":
            return "partial:" + ",".join(sorted(c.value for c in self.pooled_categories))
        return self.kind

    def is_pooled(self, cat: ExpenditureCategory) -> bool:
        return self.kind == "full" or cat in self.pooled_categories


@dataclass(frozen=True)
class SimConfig:
    n_households: int = 850
    rainfall_dim: int = 4
    rainfall_mean: float = 1163.0
    rainfall_sd: float = 551.0
    segment_concentration: float = 5.0
    income_loadings: Mapping[EarnerType, tuple[float, ...]] | None = None
    income_intercepts: Mapping[EarnerType, float] = field(
        default_factory=lambda: dict(DEFAULT_INTERCEPTS)
    )
    fe_sd: float = 0.5
    income_noise_sd: float = 1.0
    pooled_shares: Mapping[ExpenditureCategory, float] = field(
        default_factory=pooled_shares_from_survey_means
    )
    share_separation: float = 0.6
    earner_shares: Mapping[EarnerType, Mapping[ExpenditureCategory, float]] | None = None
    expenditure_noise_sd: float = 0.3
    zone_shock_sd: float = 0.1
    n_zones: int = 4
    savings_rate: float = 0.8
    p_matrilineal: float = 581 / 850
    p_female_headed: float = 173 / 850
    seed: int = 0

    def __post_init__(self) -> None:
        if self.income_loadings is None:
            object.__setattr__(self, "income_loadings", default_loadings(self.rainfall_dim))
        if self.earner_shares is None:
            object.__setattr__(
                self,
                "earner_shares",
                tilted_earner_shares(self.pooled_shares, self.share_separation),
            )
        self.validate()

    def validate(self) -> None:
        problems = []
        if self.n_households < 1:
            problems.append("n_households must be positive")
        if self.rainfall_dim < 3:
            problems.append("rainfall_dim must be at least 3 (one more than needed per earner type)")
        if self.n_zones < 1:
            problems.append("n_zones must be positive")
        for name in ("rainfall_sd", "fe_sd", "income_noise_sd", "expenditure_noise_sd", "zone_shock_sd"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be nonnegative")
        if self.segment_concentration <= 0:
            problems.append("segment_concentration must be positive")
        for name in ("p_matrilineal", "p_female_headed"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must be a probability")
        if not 0.0 < self.savings_rate < 1.0:
            problems.append("savings_rate must lie in (0, 1)")
        if not 0.0 <= self.share_separation < 1.0:
            problems.append("share_separation must lie in [0, 1)")
        for t in EARNER_ORDER:
            vec = self.income_loadings.get(t)
            if vec is None or len(vec) != self.rainfall_dim:
                problems.append(f"income_loadings[{t.value}] must have {self.rainfall_dim} entries")
            if t not in self.income_intercepts:
                problems.append(f"income_intercepts missing {t.value}")
        problems += _check_shares("pooled_shares", self.pooled_shares)
        for t in EARNER_ORDER:
            if t not in self.earner_shares:
                problems.append(f"earner_shares missing {t.value}")
            else:
                problems += _check_shares(f"earner_shares[{t.value}]", self.earner_shares[t])
        if problems:
            raise ValueError("invalid SimConfig: " + "; ".join(problems))

    @property
    def zone_ids(self) -> tuple[str, ...]:
        return tuple(f"Z{z + 1}" for z in range(self.n_zones))

    def replace(self, **changes) -> "SimConfig":
        kwargs = {f.name: getattr(self, f.name) for f in fields(self)}
        if "rainfall_dim" in changes and "income_loadings" not in changes:
            kwargs["income_loadings"] = None
        if {"share_separation", "pooled_shares"} & set(changes) and "earner_shares" not in changes:
            kwargs["earner_shares"] = None
        kwargs.update(changes)
        return SimConfig(**kwargs)


def _check_shares(name: str, shares: Mapping[ExpenditureCategory, float]) -> list[str]:
    out = []
    if set(shares) != set(COMPONENTS):
        out.append(f"{name} must cover exactly the ten component categories")
        return out
    if any(v < 0 for v in shares.values()):
        out.append(f"{name} must be nonnegative")
    if not math.isclose(sum(shares.values()), 1.0, rel_tol=0, abs_tol=1e-9):
        out.append(f"{name} must sum to 1")
    return out


def keyed_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream identified by ``key``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def draw_rainfall(config: SimConfig, household: int, wave: int) -> np.ndarray:
    """Rainfall vector for one household-wave.

    Component 0 is total seasonal rainfall, Normal truncated at zero and
    shifted so its mean is ``rainfall_mean`` after truncation. The
    season is split into ``K - 1`` segments with Dirichlet shares; components
    ``1..K-2`` are segment share times total (the last segment is left out so
    the columns are not collinear), and the final component is the squared
    standardised deviation of the total.
    """
    rng = keyed_rng(config.seed, _RAIN, household, wave)
    k = config.rainfall_dim
    total = _truncated_normal(rng, config.rainfall_mean, config.rainfall_sd)
    shares = rng.dirichlet(np.full(k - 1, config.segment_concentration))
    dev = (total - config.rainfall_mean) / config.rainfall_sd if config.rainfall_sd > 0 else 0.0
    out = np.empty(k)
    out[0] = total
    out[1 : k - 1] = shares[: k - 2] * total
    out[k - 1] = dev * dev
    return out


@lru_cache(maxsize=64)
def truncation_location(mean: float, sd: float) -> float:
    """Location of a zero-truncated Normal with scale ``sd`` whose mean is ``mean``."""
    if sd == 0 or mean > 40 * sd:
        return mean

    def gap(loc: float) -> float:
        return float(stats.truncnorm.mean(-loc / sd, np.inf, loc=loc, scale=sd)) - mean

    return float(optimize.brentq(gap, mean - 10 * sd, mean, xtol=1e-9))


def _truncated_normal(rng: np.random.Generator, mean: float, sd: float) -> float:
    """Draw from a Normal truncated at zero, located so the draw has mean ``mean``."""
    if sd == 0:
        return max(mean, 0.0)
    loc = truncation_location(mean, sd)
    while True:
        x = rng.normal(loc, sd)
        if x >= 0:
            return float(x)


def draw_income(
    config: SimConfig,
    rainfall: np.ndarray,
    earner_type: EarnerType,
    fe: float,
    rng: np.random.Generator,
) -> float:
    """``expm1(a + V'psi + fe + noise)`` floored at zero."""
    noise = rng.normal(0.0, config.income_noise_sd) if config.income_noise_sd > 0 else 0.0
    index = (
        config.income_intercepts[earner_type]
        + float(np.dot(rainfall, config.income_loadings[earner_type]))
        + fe
        + noise
    )
    return max(math.expm1(index), 0.0)


def draw_expenditures(
    config: SimConfig,
    regime: PoolingRegime,
    incomes_by_type: Mapping[EarnerType, float],
    rng: np.random.Generator,
    shift: float = 0.0,
) -> dict[ExpenditureCategory, float]:
    """Allocate spending across categories; the aggregate is their exact sum.

    Amounts are rounded to whole tambala (0.01 MK) and the aggregate is summed
    in integer tambala, so it equals the component total exactly.
    """
    if any(y < 0 for y in incomes_by_type.values()):
        raise ValueError("incomes must be nonnegative")
    theta = config.savings_rate
    budget = theta * sum(incomes_by_type.values())
    pooled = _normalised(config.pooled_shares)
    pooled_mass = sum(pooled[c] for c in COMPONENTS if regime.is_pooled(c))

    # earner-specific shares restricted to the non-pooled set, rescaled so
    # every earner spends the same fraction (1 - pooled_mass) there
    own: dict[EarnerType, dict[ExpenditureCategory, float]] = {}
    if regime.kind != "full":
        for t in incomes_by_type:
            s = config.earner_shares[t]
            free = sum(s[c] for c in COMPONENTS if not regime.is_pooled(c))
            scale = (1.0 - pooled_mass) / free if free > 0 else 0.0
            own[t] = {c: s[c] * scale for c in COMPONENTS if not regime.is_pooled(c)}

    sd = config.expenditure_noise_sd
    noise = rng.normal(0.0, sd, size=len(COMPONENTS)) if sd > 0 else np.zeros(len(COMPONENTS))
    cents = {}
    for cat, eta in zip(COMPONENTS, noise):
        if regime.is_pooled(cat):
            base = pooled[cat] * budget
        else:
            base = sum(own[t][cat] * theta * y for t, y in incomes_by_type.items())
        cents[cat] = int(round(base * math.exp(eta + shift) * 100))
    out = {cat: c / 100 for cat, c in cents.items()}
    out[ExpenditureCategory.AGGREGATE] = sum(cents.values()) / 100
    return out


def _normalised(shares: Mapping[ExpenditureCategory, float]) -> dict[ExpenditureCategory, float]:
    s = sum(shares[c] for c in COMPONENTS)
    return {c: shares[c] / s for c in COMPONENTS}


def household_id(index: int) -> str:
    return f"H{index + 1:05d}"


def zone_shifts(config: SimConfig) -> np.ndarray:
    """Zone-by-wave log spending shifters, shape ``(n_zones, 2)``."""
    rng = keyed_rng(config.seed, _ZONE)
    if config.zone_shock_sd == 0:
        return np.zeros((config.n_zones, 2))
    return rng.normal(0.0, config.zone_shock_sd, size=(config.n_zones, 2))


def simulate_household(
    config: SimConfig, regime: PoolingRegime, index: int, shifts: np.ndarray | None = None
) -> tuple[PanelObservation, PanelObservation]:
    """Both waves of household ``index``; depends only on (seed, index)."""
    if shifts is None:
        shifts = zone_shifts(config)
    hrng = keyed_rng(config.seed, _HOUSEHOLD, index)
    zone = int(hrng.integers(config.n_zones))
    matrilineal = bool(hrng.random() < config.p_matrilineal)
    female_headed = bool(hrng.random() < config.p_female_headed)
    fes = {t: float(hrng.normal(0.0, config.fe_sd)) if config.fe_sd > 0 else 0.0 for t in EARNER_ORDER}

    hid = household_id(index)
    out = []
    for wave in (1, 2):
        rain = draw_rainfall(config, index, wave)
        rng = keyed_rng(config.seed, _DRAWS, index, wave)
        incomes = {
            t: round(draw_income(config, rain, t, fes[t], rng) * 100) / 100 for t in EARNER_ORDER
        }
        spend = draw_expenditures(config, regime, incomes, rng, shift=float(shifts[zone, wave - 1]))
        out.append(
            PanelObservation(
                household_id=hid,
                wave=wave,
                zone_id=config.zone_ids[zone],
                matrilineal=matrilineal,
                female_headed=female_headed,
                rainfall=tuple(float(v) for v in rain),
                incomes=income_records(incomes),
                expenditures=spend,
            )
        )
    return out[0], out[1]


def income_records(incomes: Mapping[EarnerType, float]) -> tuple[IncomeRecord, ...]:
    """One record per earner type, with a manager structure that classifies back to it."""
    recs = []
    for t in EARNER_ORDER:
        if t not in incomes:
            continue
        if t is EarnerType.MALE:
            recs.append(IncomeRecord("maize", incomes[t], Gender.MALE))
        elif t is EarnerType.FEMALE:
            recs.append(IncomeRecord("groundnut", incomes[t], Gender.FEMALE))
        else:
            recs.append(IncomeRecord("tobacco", incomes[t], Gender.MALE, Gender.FEMALE))
    return tuple(recs)


def simulate_panel(config: SimConfig, regime: PoolingRegime) -> list[PanelObservation]:
    """``2 * n_households`` observations sorted by (household_id, wave)."""
    config.validate()
    shifts = zone_shifts(config)
    panel: list[PanelObservation] = []
    for h in range(config.n_households):
        panel.extend(simulate_household(config, regime, h, shifts))
    return panel
