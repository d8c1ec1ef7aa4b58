"""Skipping the first stage: spending regressed directly on rainfall.

With pooling, every category's rainfall coefficients are proportional to those
of total spending. This version needs no income data, at the cost of testing
K - 1 restrictions that mix all earners' responses together.
"""

from incomepool import SpecMode, run_unrestricted_test
from incomepool.overid import prepare_rows
from incomepool.report import unrestricted_markdown
from incomepool.simulate import PoolingRegime, SimConfig, simulate_panel

for regime in ("full", "none"):
    panel = simulate_panel(SimConfig(seed=4), PoolingRegime.parse(regime))
    report = run_unrestricted_test(prepare_rows(panel, SpecMode.EXTENDED), B=200, seed=4)
    print(f"## {regime} pooling\n")
    print(unrestricted_markdown(report))
