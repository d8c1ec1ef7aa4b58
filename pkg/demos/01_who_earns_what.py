"""How the classification mode moves income between earner types.

A household sells three crops. Tobacco is managed by a man together with his
wife. Counting only the primary manager books the tobacco money as his; the
extended mode books it as joint income. Household totals do not change.
"""

from incomepool import (
    EarnerType,
    Gender,
    IncomeRecord,
    PanelObservation,
    SpecMode,
    aggregate_incomes,
    classify_panel,
)
from incomepool.simulate import PoolingRegime, SimConfig, simulate_panel

records = (
    IncomeRecord("maize", 4_000.0, Gender.MALE),
    IncomeRecord("groundnut", 1_500.0, Gender.FEMALE),
    IncomeRecord("tobacco", 12_000.0, Gender.MALE, Gender.FEMALE),
)
obs = PanelObservation(
    household_id="H1", wave=1, zone_id="Z1", matrilineal=True, female_headed=False,
    rainfall=(1100.0, 300.0, 250.0, 0.1), incomes=records, expenditures={},
)

for mode in SpecMode:
    totals = aggregate_incomes(obs, mode)
    shown = ", ".join(f"{t.value}={v:,.0f}" for t, v in totals.items())
    print(f"{mode.value:12s} {shown}  (total {sum(totals.values()):,.0f})")

# The same shift shows up in sample means on a simulated panel.
panel = simulate_panel(SimConfig(n_households=850, seed=1), PoolingRegime.full())
print()
for mode in SpecMode:
    rows = classify_panel(panel, mode).rows
    means = {t: sum(r.income_by_type[t] for r in rows) / len(rows) for t in mode.earner_types}
    print(f"{mode.value:12s} mean male income {means[EarnerType.MALE]:>10,.0f}",
          *(f" {t.value} {v:,.0f}" for t, v in means.items() if t is not EarnerType.MALE))
