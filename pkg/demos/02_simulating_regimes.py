"""Three ways a household might spend rainfall-driven income.

Under full pooling every category takes a fixed share of the household budget,
so who earned the money does not matter. Under no pooling each earner type
spends with its own shares. Partial pooling pools a chosen set of categories
and leaves the rest earner-specific.

Below, one household's incomes are swapped between earners. Only the
non-pooled categories respond.
"""

import numpy as np

from incomepool import EarnerType, ExpenditureCategory
from incomepool.simulate import PoolingRegime, SimConfig, draw_expenditures

cfg = SimConfig(expenditure_noise_sd=0.0)
male_rich = {EarnerType.MALE: 80_000.0, EarnerType.FEMALE: 10_000.0, EarnerType.JOINT: 10_000.0}
female_rich = {EarnerType.MALE: 10_000.0, EarnerType.FEMALE: 80_000.0, EarnerType.JOINT: 10_000.0}

for text in ("full", "none", "partial:food"):
    regime = PoolingRegime.parse(text)
    a = draw_expenditures(cfg, regime, male_rich, np.random.default_rng(0))
    b = draw_expenditures(cfg, regime, female_rich, np.random.default_rng(0))
    print(f"\n{text}: spending when the man earns most vs when the woman does")
    for cat in (ExpenditureCategory.FOOD, ExpenditureCategory.CLOTHING,
                ExpenditureCategory.EDUCATION, ExpenditureCategory.AGGREGATE):
        print(f"  {cat.label:22s} {a[cat]:>10,.2f} {b[cat]:>10,.2f}")
