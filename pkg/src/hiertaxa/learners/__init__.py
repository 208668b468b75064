from .base import ConstantModel, TrainedModel, ViewOutputs
from .preprocess import Preprocessor, apply, fit_preprocessor
from .softmax import SoftmaxHyper, SoftmaxModel, train_softmax
from .svm import SvmHyper, SvmModel, train_svm
from .grid import (CASCADE_GRID, FLAT_GRID, Data, GridResult, GridSpec, SoftmaxLearner,
                   SvmLearner, fit_pipeline, fit_selected, grid_search)
from .io import load_model, save_model


def predict_labels(model: TrainedModel, X) -> ViewOutputs:
    """Per-row labels plus vote counts (SVM) or logits (softmax)."""
    return model.predict(X)


__all__ = [
    "CASCADE_GRID", "FLAT_GRID", "ConstantModel", "Data", "GridResult", "GridSpec",
    "Preprocessor", "SoftmaxHyper", "SoftmaxLearner", "SoftmaxModel", "SvmHyper",
    "SvmLearner", "SvmModel", "TrainedModel", "ViewOutputs", "apply", "fit_pipeline",
    "fit_preprocessor", "fit_selected", "grid_search", "load_model", "predict_labels",
    "save_model", "train_softmax", "train_svm",
]
