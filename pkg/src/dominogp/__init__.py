"""Few-shot time-series forecasting from shared-mean GPs and a weighted
random walk over their posterior sample paths."""

from .errors import CsvFormatError, DegenerateWeights, NumericalFailure
from .series import (
    Dataset,
    SyntheticSpec,
    TimeGrid,
    TimeSeries,
    generate_synthetic,
    make_grid,
    read_dataset_csv,
    split_holdout,
    split_query,
    write_dataset_csv,
)
from .gp import (
    GpPosterior,
    KernelParams,
    OptimizerConfig,
    fit_hyperparams,
    kernel_matrix,
    log_marginal_likelihood,
    posterior,
    sample_paths,
)
from .magma import (
    EmConfig,
    MagmaModel,
    build_sample_bank,
    e_step,
    fit_magma,
    load_magma,
    m_step,
    predict_magma,
    save_magma,
)
from .domino import (
    DominoConfig,
    DominoModel,
    SampleBank,
    check_stop,
    divergence_profile,
    draw_probabilities,
    forecast,
    init_domino,
    load_bank,
    load_domino,
    run_walk_epoch,
    save_bank,
    save_domino,
    train_domino,
    update_weights,
    evaluate_performance,
)
from .metrics import mae
from .evalx import (
    DEFAULT_ABLATION_GRIDS,
    StudyConfig,
    StudyResult,
    run_ablation,
    run_cv_study,
    run_length_study,
)
from .seeding import derive_seed

__version__ = "0.1.0"
