"""Builders for small synthetic samples used across tests."""

import numpy as np

from incomepool.core import CATEGORIES, SpecMode
from incomepool.regress import DifferencedSample


def synthetic_sample(
    n=300, k=4, zones=3, mode=SpecMode.EXTENDED, seed=0, hetero=True, exp_from_income=True
) -> DifferencedSample:
    """Differenced rows with heteroskedastic noise and a known linear truth.

    With ``exp_from_income=False`` expenditures load on the rainfall-driven
    part of income only, so their noise is independent of the income noise.
    """
    rng = np.random.default_rng(seed)
    types = mode.earner_types
    d_rain = rng.normal(0, 1, size=(n, k)) * np.array([500.0, 100.0, 100.0, 1.0, 50.0, 50.0][:k] + [1.0] * max(k - 6, 0))
    codes = rng.integers(0, zones, size=n)
    psi = rng.normal(0, 1, size=(k, len(types))) / np.abs(d_rain).mean(axis=0)[:, None]
    scale = 1 + np.abs(d_rain[:, :1]) / 500 if hetero else 1.0
    d_income = d_rain @ psi + 0.1 * codes[:, None] + rng.normal(0, 1, size=(n, len(types))) * scale
    driver = d_income if exp_from_income else d_rain @ psi
    d_exp = driver @ rng.uniform(0.2, 1.0, size=(len(types), len(CATEGORIES))) + rng.normal(
        0, 0.5, size=(n, len(CATEGORIES))
    )
    return DifferencedSample(
        household_ids=tuple(f"H{i:05d}" for i in range(n)),
        zone_codes=codes,
        zone_levels=tuple(f"Z{z}" for z in range(zones)),
        matrilineal=rng.random(n) < 0.7,
        female_headed=rng.random(n) < 0.2,
        d_rain=d_rain,
        earner_types=types,
        d_income=d_income,
        d_exp=d_exp,
    )
