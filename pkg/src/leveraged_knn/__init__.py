"""Boosted leveraged k-NN classification."""

from .classify import (
    FilterSpec,
    Prediction,
    filter_model,
    predict_classic,
    predict_leveraged,
    random_subsample,
    score_classic,
    score_leveraged,
)
from .dataset import (
    Dataset,
    class_vectors,
    encode_class_vector,
    gen_blobs,
    gen_ripley,
    load_csv,
    minmax_normalize,
    save_csv,
    split_kfold,
)
from .errors import DataParseError, DivergenceError, DomainError, FormatVersionError
from .evaluation import (
    confusion_matrix,
    cross_validate,
    empirical_risk,
    evaluate,
    margin_stats,
    mean_per_class_accuracy,
)
from .losses import Loss, solve_delta_closed, solve_delta_exact, update_weight, weight_from_edge
from .neighbors import EUCLIDEAN, Metric, NeighborGraph, build_graph, knn_batch, knn_search
from .serialization import load_model, save_model
from .unn import LeveragedModel, TrainConfig, TrainDiagnostics, check_theorem2, surrogate_risk, train

__version__ = "0.1.0"
