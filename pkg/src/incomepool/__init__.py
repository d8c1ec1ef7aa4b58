"""Income-pooling overidentification tests with joint household income.

Typical use::

    from incomepool import SimConfig, PoolingRegime, SpecMode, simulate_panel, run_pooling_test

    panel = simulate_panel(SimConfig(seed=1), PoolingRegime.parse("partial:food"))
    report = run_pooling_test(panel, SpecMode.EXTENDED, B=500, seed=1)
    report.p_values()
"""

__version__ = "0.1.0"

from .core import (
    CATEGORIES,
    COMPONENTS,
    ClassifiedPanel,
    EarnerType,
    ExpenditureCategory,
    Gender,
    IncomeRecord,
    PanelObservation,
    SpecMode,
    aggregate_incomes,
    classify_panel,
    classify_record,
    transform_income,
)
from .ingest import load_config, load_panel, read_classified, save_config, write_classified, write_raw_panel
from .montecarlo import run_montecarlo
from .overid import (
    IdentificationError,
    PoolingTestReport,
    first_stage_loadings,
    predict_changes,
    proportional_wald,
    run_first_stage,
    run_pooling_test,
    run_second_stage,
    run_unrestricted_test,
)
from .regress import (
    DifferencedSample,
    RankDeficiencyError,
    RegressionResult,
    cluster_bootstrap,
    difference_panel,
    fit_differenced,
    ols,
)
from .simulate import PoolingRegime, SimConfig, simulate_panel
