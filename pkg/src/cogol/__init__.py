"""Ordinal logistic models that interpolate between parallel and free hyperplanes.

OL ties every threshold to one weight vector, GOL gives each threshold its
own, and coGOL moves between the two with a neighbour-deviation penalty
``beta``. Linear and RBF-kernel variants share one solver.
"""
from importlib.metadata import PackageNotFoundError, version as _version
from types import ModuleType as _ModuleType

try:
    __version__ = _version("cogol")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .data import (
    BENCHMARK_SHAPES,
    CSVFormatError,
    SplitPlan,
    Standardized,
    SyntheticKind,
    SyntheticSpec,
    check_benchmark_shapes,
    export_synthetic,
    load_csv,
    make_synthetic,
    save_csv,
    split_indices,
    standardize,
    stratified_kfold,
    train_test_split,
)
from .evaluation import EvalReport, WilcoxonResult, evaluate, wilcoxon_signed_rank
from .experiment import run_benchmark, run_synthetic
from .kernel import DualModel, KernelKind, KernelSpec, fit_kernel, gamma_range, rbf_gram
from .model import (
    Dataset,
    LossKind,
    Mode,
    OrdinalModel,
    PenaltySpec,
    all_thresholds_loss,
    cogol_gradient,
    cogol_objective,
    coral_loss_form,
    cumulative_logit_nll,
    decision_values,
    immediate_threshold_loss,
    orcnn_loss_form,
    predict,
)
from .optimizer import DegenerateLabelsError, FitReport, FitSpec, TraceRecord, fit
from .serialize import load_model, save_model
from .tuning import SearchSpace, TuneResult, tune

del PackageNotFoundError

__all__ = sorted(n for n, v in globals().items()
                 if not n.startswith("_") and not isinstance(v, _ModuleType))
