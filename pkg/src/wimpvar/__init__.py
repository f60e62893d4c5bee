"""Bootstrap impulse-response intervals under cointegration-rank uncertainty."""

__version__ = "0.1.0"

from .bootstrap import (
    BootstrapConfig,
    IntervalEstimate,
    IntervalSet,
    bers_interval,
    fdbb_interval,
    fixed_rank_interval,
    hall_quantile,
    lag_augmented_interval,
    ma_interval,
    per_rank_fan,
    rebuild_sample,
    resample_residuals,
    wimp_interval,
)
from .errors import ConfigError, DataError, EstimationError, WimpvarError
from .montecarlo import (
    CoverageTable,
    DgpSpec,
    ExperimentConfig,
    make_dgp,
    run_experiment,
    simulate_path,
    summarize_widths,
    true_irf,
)
from .ranks import (
    PlausibilityWeights,
    RankSelector,
    plausibility_weights,
    plausibility_weights_from_fit,
    relative_plausibility,
    select_rank_ic,
    select_rank_sequential,
)
from .timeseries import (
    DetrendMode,
    DetrendedSeries,
    TimeSeriesData,
    VecmRegressors,
    build_vecm_regressors,
    detrend,
    difference,
)
from .vecm import (
    IrfArray,
    IrfQuery,
    VarLevels,
    VecmFit,
    cholesky_factor,
    companion_matrix,
    companion_roots,
    evaluate_zeta,
    fit_vecm,
    irf_reduced,
    irf_structural,
    johansen_fit,
    trace_statistics,
    var_to_vecm,
    vecm_to_var,
)
from .wimp import PrudenceReport, WimpInterval, check_prudence, wimp_combine

__all__ = [name for name in dir() if not name.startswith("_")]
