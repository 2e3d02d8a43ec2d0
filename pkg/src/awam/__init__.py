"""Sparse additive models with a learned per-sample loss weighting network.

The model is an additive predictor over per-coordinate basis expansions with
a weighted group penalty for variable selection. A small scalar-input
network maps each training sample's loss to a weight in (0, 1); its
parameters are trained by bilevel optimization against a small clean meta
set, so atypical samples (outliers, flipped labels, minority classes) are
re-weighted automatically instead of through a hand-picked robust loss.
"""

from .basis import BasisSpec, ConstantFeatureError, fit_basis, transform, transform_batch
from .bilevel import (
    DivergenceError,
    TrainConfig,
    TrainHistory,
    actual_update,
    meta_update,
    minibatch,
    step_sizes,
    train,
    virtual_update,
)
from .datagen import (
    Dataset,
    component_f,
    corrupt_features,
    corrupt_labels,
    gen_classification,
    gen_regression,
    inject_outliers,
    load_csv,
    make_imbalanced,
    sample_noise,
    split,
)
from .gradcheck import check_meta_gradient
from .metrics import RunMetrics, accuracy, asp, macro_f1, mse, weight_audit
from .model import (
    AdditiveParams,
    PenaltyConfig,
    block_prox,
    group_penalty,
    logistic_loss,
    penalty_subgrad,
    predict,
    predict_proba,
    selected_set,
    squared_loss,
    tau_bound,
)
from .weightnet import WeightNetParams, init_weightnet, v_forward, v_grad_theta

__version__ = "0.1.0"
