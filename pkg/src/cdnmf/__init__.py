"""CDN log ingestion, matrix-factorization popularity modeling, cache simulation."""

from .datagen import SynthConfig, generate_logs, generate_rated_dataset
from .errors import ParseError, TrainingDivergedError
from .gridsearch import Grid, SearchReport, grid_search
from .ingest import (
    IdMap,
    InteractionTriple,
    LogRecord,
    Mode,
    aggregate_interactions,
    log_scale,
    parse_log_line,
    read_interactions,
    write_interactions,
)
from .model import (
    BIASED,
    PLAIN,
    FactorModel,
    Hyperparams,
    load_model,
    predict_biased,
    predict_plain,
    regularized_loss,
    save_model,
)
from .cachesim import (
    Cache,
    CacheSimResult,
    LFUPolicy,
    LRUPolicy,
    MFScorePolicy,
    RequestEvent,
    item_score,
    run_simulation,
)
from .training import EvalReport, SplitDataset, evaluate_rmse, split_train_test, train

__version__ = "0.1.0"
