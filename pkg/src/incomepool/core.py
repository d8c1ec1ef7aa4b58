"""Domain types and income-manager classification.

Every value type here is frozen; the operations are pure functions of their
arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence


class Gender(str, Enum):
    MALE = "M"
    FEMALE = "F"

    @classmethod
    def parse(cls, code: str) -> "Gender":
        try:
            return cls(code.strip().upper())
        except ValueError:
            raise ValueError(f"unknown gender code {code!r} (expected 'M' or 'F')") from None


class SpecMode(str, Enum):
    TRADITIONAL = "traditional"
    EXTENDED = "extended"

    @property
    def earner_types(self) -> tuple["EarnerType", ...]:
        if self is SpecMode.TRADITIONAL:
            return (EarnerType.MALE, EarnerType.FEMALE)
        return (EarnerType.MALE, EarnerType.FEMALE, EarnerType.JOINT)


class EarnerType(str, Enum):
    MALE = "male"
    FEMALE = "female"
    JOINT = "joint"


class ExpenditureCategory(str, Enum):
    AGGREGATE = "aggregate"
    FOOD = "food"
    ALCOHOL_TOBACCO = "alcohol_tobacco"
    CLOTHING = "clothing"
    RECREATION = "recreation"
    EDUCATION = "education"
    HEALTHCARE = "healthcare"
    HOUSING_UTILITIES = "housing_utilities"
    TRANSPORTATION = "transportation"
    COMMUNICATION = "communication"
    HOTELS_RESTAURANTS = "hotels_restaurants"

    @property
    def label(self) -> str:
        return _CATEGORY_LABELS[self]


_CATEGORY_LABELS = {
    ExpenditureCategory.AGGREGATE: "Aggregate",
    ExpenditureCategory.FOOD: "Food",
    ExpenditureCategory.ALCOHOL_TOBACCO: "Alcohol & Tobacco",
    ExpenditureCategory.CLOTHING: "Clothing",
    ExpenditureCategory.RECREATION: "Recreation",
    ExpenditureCategory.EDUCATION: "Education",
    ExpenditureCategory.HEALTHCARE: "Healthcare",
    ExpenditureCategory.HOUSING_UTILITIES: "Housing & Utilities",
    ExpenditureCategory.TRANSPORTATION: "Transportation",
    ExpenditureCategory.COMMUNICATION: "Communication",
    ExpenditureCategory.HOTELS_RESTAURANTS: "Hotels & Restaurants",
}

#: Aggregate first, then the ten components in table order.
CATEGORIES: tuple[ExpenditureCategory, ...] = tuple(ExpenditureCategory)
COMPONENTS: tuple[ExpenditureCategory, ...] = CATEGORIES[1:]


@dataclass(frozen=True)
class IncomeRecord:
    """Revenue from one crop sale and who manages it."""

    crop_label: str
    revenue: float
    primary_manager: Gender
    secondary_manager: Gender | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.primary_manager, Gender):
            raise ValueError("primary_manager must be a Gender")
        if self.secondary_manager is not None and not isinstance(self.secondary_manager, Gender):
            raise ValueError("secondary_manager must be a Gender or None")
        if not (self.revenue >= 0 and math.isfinite(self.revenue)):
            raise ValueError(f"revenue must be finite and nonnegative, got {self.revenue!r}")


@dataclass(frozen=True)
class PanelObservation:
    household_id: str
    wave: int
    zone_id: str
    matrilineal: bool
    female_headed: bool
    rainfall: tuple[float, ...]
    incomes: tuple[IncomeRecord, ...]
    expenditures: Mapping[ExpenditureCategory, float]

    def __post_init__(self) -> None:
        if self.wave not in (1, 2):
            raise ValueError(f"wave must be 1 or 2, got {self.wave!r}")
        if len(self.rainfall) < 1:
            raise ValueError("rainfall vector must have at least one component")
        if any(not (r >= 0 and math.isfinite(r)) for r in self.rainfall):
            raise ValueError("rainfall components must be finite and nonnegative")
        for cat, value in self.expenditures.items():
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"expenditure {cat.value} must be finite and nonnegative")

    @property
    def key(self) -> tuple[str, int]:
        return (self.household_id, self.wave)


@dataclass(frozen=True)
class ClassifiedRow:
    household_id: str
    wave: int
    zone_id: str
    matrilineal: bool
    female_headed: bool
    rainfall: tuple[float, ...]
    income_by_type: Mapping[EarnerType, float]
    expenditures: Mapping[ExpenditureCategory, float]


@dataclass(frozen=True)
class ClassifiedPanel:
    mode: SpecMode
    rows: tuple[ClassifiedRow, ...] = field(default_factory=tuple)

    @property
    def earner_types(self) -> tuple[EarnerType, ...]:
        return self.mode.earner_types

    @property
    def rainfall_dim(self) -> int:
        return len(self.rows[0].rainfall) if self.rows else 0


def classify_record(record: IncomeRecord, mode: SpecMode) -> EarnerType:
    """Map one income record to the earner type it counts towards.

    Under ``EXTENDED`` any record with a secondary manager is joint income,
    whatever the genders involved. Under ``TRADITIONAL`` only the primary
    manager is considered.
    """
    if mode is SpecMode.EXTENDED and record.secondary_manager is not None:
        return EarnerType.JOINT
    return EarnerType.MALE if record.primary_manager is Gender.MALE else EarnerType.FEMALE


def aggregate_incomes(obs: PanelObservation, mode: SpecMode) -> dict[EarnerType, float]:
    """Sum record revenues by earner type, in record order."""
    totals = {t: 0.0 for t in mode.earner_types}
    for rec in obs.incomes:
        totals[classify_record(rec, mode)] += rec.revenue
    return totals


def transform_income(y: float) -> float:
    """``log(1 + y)``; defined at zero, strictly increasing."""
    if y < 0:
        raise ValueError(f"transform_income needs a nonnegative value, got {y!r}")
    return math.log1p(y)


def asinh_transform(y: float) -> float:
    """Inverse hyperbolic sine alternative to :func:`transform_income`."""
    if y < 0:
        raise ValueError(f"asinh_transform needs a nonnegative value, got {y!r}")
    return math.asinh(y)


Transform = Callable[[float], float]


def classify_panel(observations: Sequence[PanelObservation], mode: SpecMode) -> ClassifiedPanel:
    """Classify every observation; rows come out sorted by (household_id, wave)."""
    rows = [
        ClassifiedRow(
            household_id=obs.household_id,
            wave=obs.wave,
            zone_id=obs.zone_id,
            matrilineal=obs.matrilineal,
            female_headed=obs.female_headed,
            rainfall=tuple(obs.rainfall),
            income_by_type=aggregate_incomes(obs, mode),
            expenditures=dict(obs.expenditures),
        )
        for obs in observations
    ]
    rows.sort(key=lambda r: (r.household_id, r.wave))
    return ClassifiedPanel(mode=mode, rows=tuple(rows))


def total_revenue(obs: PanelObservation) -> float:
    total = 0.0
    for rec in obs.incomes:
        total += rec.revenue
    return total
