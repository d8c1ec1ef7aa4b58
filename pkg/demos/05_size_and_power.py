"""A short Monte Carlo: how often the test rejects under each regime.

Twenty replications keep this quick; the acceptance suite runs two hundred.
Under full pooling rejections are false alarms, so rates near 5% are wanted.
Under no pooling they measure power.
"""

from incomepool import run_montecarlo
from incomepool.simulate import PoolingRegime, SimConfig

for regime in ("full", "none", "partial:food"):
    res = run_montecarlo(SimConfig(), PoolingRegime.parse(regime), reps=20, B=200, seed=11)
    rates = res.rejection_rates()
    print(f"\n{regime}: share of replications rejecting at 5%")
    for cat, r in rates.items():
        print(f"  {cat:20s} {r['0.05']:.2f}")
