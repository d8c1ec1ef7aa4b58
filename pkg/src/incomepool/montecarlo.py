"""Repeated simulate-and-test runs for size and power studies."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import COMPONENTS, SpecMode
from .overid import run_pooling_test
from .simulate import PoolingRegime, SimConfig, simulate_panel

LEVELS = (0.01, 0.05, 0.10)


def derive_seed(seed: int, rep: int) -> int:
    """64-bit seed for replication ``rep``; used for both simulation and bootstrap."""
    ss = np.random.SeedSequence(seed, spawn_key=(rep,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_replication(
    config: SimConfig,
    regime: PoolingRegime,
    rep: int,
    seed: int,
    B: int,
    mode: SpecMode = SpecMode.EXTENDED,
    subsample: str = "all",
) -> dict:
    rep_seed = derive_seed(seed, rep)
    panel = simulate_panel(config.replace(seed=rep_seed), regime)
    report = run_pooling_test(panel, mode, subsample=subsample, B=B, seed=rep_seed)
    return {
        "rep": rep,
        "seed": rep_seed,
        "n": report.n,
        "p_values": {c.value: p for c, p in report.p_values().items()},
        "wald": {
            c.value: (t.wald.statistic if t.wald is not None else None)
            for c, t in report.categories.items()
            if t.wald is not None or t.error
        },
        "errors": {c.value: t.error for c, t in report.categories.items() if t.error},
        "first_stage_rain_0": {t.value: r.coef("rain_0") for t, r in report.first_stage.per_type.items()},
    }


def _run_one(args) -> dict:
    return run_replication(*args)


@dataclass(frozen=True)
class MonteCarloResult:
    regime: str
    mode: str
    reps: int
    bootstrap_reps: int
    seed: int
    per_rep: list[dict]

    def p_matrix(self) -> np.ndarray:
        """``(reps, 10)`` p-values in component order; NaN where the test errored."""
        return np.array(
            [[r["p_values"].get(c.value, np.nan) for c in COMPONENTS] for r in self.per_rep], dtype=float
        )

    def rejection_rates(self) -> dict[str, dict[str, float]]:
        P = self.p_matrix()
        out = {}
        for j, c in enumerate(COMPONENTS):
            col = P[:, j]
            ok = col[~np.isnan(col)]
            out[c.value] = {f"{a:.2f}": (float(np.mean(ok < a)) if ok.size else float("nan")) for a in LEVELS}
        return out

    def summary(self) -> dict:
        rates = self.rejection_rates()
        return {
            "schema_version": 1,
            "kind": "montecarlo_summary",
            "regime": self.regime,
            "mode": self.mode,
            "reps": self.reps,
            "bootstrap_reps": self.bootstrap_reps,
            "seed": self.seed,
            "failed_tests": {
                c.value: int(sum(c.value in r["errors"] for r in self.per_rep)) for c in COMPONENTS
            },
            "rejection_rates": rates,
        }


def run_montecarlo(
    config: SimConfig,
    regime: PoolingRegime,
    reps: int,
    B: int,
    seed: int,
    mode: SpecMode = SpecMode.EXTENDED,
    subsample: str = "all",
    jobs: int = 1,
) -> MonteCarloResult:
    """``reps`` independent simulate-then-test runs.

    Replication ``r`` uses ``derive_seed(seed, r)`` for both the panel and
    its bootstrap, so results do not depend on ``jobs`` or scheduling.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    tasks = [(config, regime, r, seed, B, mode, subsample) for r in range(reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_rep = list(pool.map(_run_one, tasks))
    else:
        per_rep = [_run_one(t) for t in tasks]
    return MonteCarloResult(str(regime), mode.value, reps, B, seed, per_rep)
