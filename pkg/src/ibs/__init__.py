"""Decision-boundary baselines for Integrated Gradients.

Train a small MLP classifier, sample its 0.5 decision boundary with Informed
Baseline Search (IBS), pick the boundary point closest to a sample as its
Integrated Gradients baseline, and check the results against brute-force
oracles.
"""

from .attribution import Attribution, PathTrace, decompose, gradient_along_path, integrated_gradients
from .datagen import (BrainLayout, Dataset, PRESETS, generate_brain, generate_hypercube,
                      generate_spiral, make_dataset, read_dataset_csv, split_indices,
                      train_test_split, write_dataset_csv)
from .errors import (ConfigurationError, DataFormatError, DegenerateDataError, IBSError,
                     InputShapeError, UnsupportedDimensionError, UnsupportedModelError)
from .nn import (NetworkSpec, TrainConfig, TrainedModel, build_model, init_model, input_gradient,
                 load_model, logit, predict_class, predict_proba, save_model, train)
from .oracle import (GridOracle, analytic_hyperplane, count_crossings, default_bounds,
                     grid_boundary, hyperplane_distance, manifold_closeness)
from .search import (BaselineSelection, BoundarySample, BoundarySet, SearchConfig, ibs_search,
                     ibs_search_batch, sample_boundary, select_baseline, select_optimal_baseline)

__version__ = "0.1.0"

__all__ = [
    "Attribution", "PathTrace", "decompose", "gradient_along_path", "integrated_gradients",
    "BrainLayout", "Dataset", "PRESETS", "generate_brain", "generate_hypercube", "generate_spiral",
    "make_dataset", "read_dataset_csv", "split_indices", "train_test_split", "write_dataset_csv",
    "ConfigurationError", "DataFormatError", "DegenerateDataError", "IBSError", "InputShapeError",
    "UnsupportedDimensionError", "UnsupportedModelError",
    "NetworkSpec", "TrainConfig", "TrainedModel", "build_model", "init_model", "input_gradient",
    "load_model", "logit", "predict_class", "predict_proba", "save_model", "train",
    "GridOracle", "analytic_hyperplane", "count_crossings", "default_bounds", "grid_boundary",
    "hyperplane_distance", "manifold_closeness",
    "BaselineSelection", "BoundarySample", "BoundarySet", "SearchConfig", "ibs_search",
    "ibs_search_batch", "sample_boundary", "select_baseline", "select_optimal_baseline",
]
