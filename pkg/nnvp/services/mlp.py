import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from nnvp.core.exceptions import DataFormatError, TrainingError
from nnvp.core.utils import SeedScope, derive_seed
from nnvp.models import Dataset, MLPModel, NormalizationStats
from nnvp.schemas import MLPConfig
from nnvp.services.dataset import (
    apply_normalization,
    fit_normalization,
    holdout_size,
    normalize_vector,
    subset,
)
from nnvp.services.scg import NonFiniteObjective, ScaledConjugateGradient

logger = logging.getLogger(__name__)

# Перед логарифмом вероятности обрезаются снизу до LOG_CLAMP
LOG_CLAMP = 1e-12

DUMP_FORMAT = "nnvp-mlp/1"


# --- NETWORK ---

def init_model(num_inputs: int, num_hidden: int, num_outputs: int, rng: np.random.Generator) -> MLPModel:
    """Веса и смещения равномерно в +-1/sqrt(fan_in) своего слоя."""
    r1 = 1.0 / np.sqrt(num_inputs)
    r2 = 1.0 / np.sqrt(num_hidden)
    return MLPModel(
        w1=rng.uniform(-r1, r1, size=(num_hidden, num_inputs)),
        b1=rng.uniform(-r1, r1, size=num_hidden),
        w2=rng.uniform(-r2, r2, size=(num_outputs, num_hidden)),
        b2=rng.uniform(-r2, r2, size=num_outputs),
    )


def _as_batch(model: MLPModel, x: np.ndarray) -> np.ndarray:
    X = np.asarray(x, dtype=np.float64)
    X = X.reshape(1, -1) if X.ndim == 1 else X
    if X.ndim != 2 or X.shape[1] != model.num_inputs:
        raise DataFormatError(f"input has {X.shape[-1]} attributes, network expects {model.num_inputs}")
    return X


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _activations(model: MLPModel, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    H = np.tanh(X @ model.w1.T + model.b1)
    O = _softmax(H @ model.w2.T + model.b2)
    return H, O


def forward(model: MLPModel, x: np.ndarray) -> np.ndarray:
    """
    Output probabilities for one attribute vector (returns shape (c,)) or for
    a batch of rows (returns shape (n, c)).
    """
    X = _as_batch(model, x)
    _, O = _activations(model, X)
    return O[0] if np.ndim(x) == 1 else O


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    T = np.zeros((labels.size, num_classes))
    T[np.arange(labels.size), labels] = 1.0
    return T


def cross_entropy(outputs: np.ndarray, targets: np.ndarray) -> float:
    """-sum_i sum_j t_ij log(o_ij), summed over examples (not averaged)."""
    O = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    T = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if O.shape != T.shape:
        raise DataFormatError(f"outputs {O.shape} and targets {T.shape} differ in shape")
    return float(-np.sum(T * np.log(np.clip(O, LOG_CLAMP, 1.0))))


def gradient(model: MLPModel, X: np.ndarray, T: np.ndarray) -> MLPModel:
    """
    Gradient of the summed cross-entropy w.r.t. every weight and bias,
    returned in the shape of the model. The output delta is (o - t).
    """
    X = _as_batch(model, X)
    T = np.atleast_2d(np.asarray(T, dtype=np.float64))
    if T.shape != (X.shape[0], model.num_outputs):
        raise DataFormatError(f"targets must have shape {(X.shape[0], model.num_outputs)}, got {T.shape}")
    H, O = _activations(model, X)
    delta_out = O - T
    delta_hidden = (delta_out @ model.w2) * (1.0 - H ** 2)
    return MLPModel(
        w1=delta_hidden.T @ X,
        b1=delta_hidden.sum(axis=0),
        w2=delta_out.T @ H,
        b2=delta_out.sum(axis=0),
    )


# --- TRAINING ---

class _Objective:
    """Функция потерь от плоского вектора параметров (в таком виде ее ждет оптимизатор)."""

    def __init__(self, template: MLPModel, X: np.ndarray, T: np.ndarray):
        self.template = template
        self.X = X
        self.T = T

    def loss(self, theta: np.ndarray) -> float:
        return cross_entropy(forward(self.template.with_vector(theta), self.X), self.T)

    def grad(self, theta: np.ndarray) -> np.ndarray:
        return gradient(self.template.with_vector(theta), self.X, self.T).to_vector()


def scg_train(config: MLPConfig, train: Dataset, validation: Dataset) -> MLPModel:
    """
    Полнопакетный SCG по кросс-энтропии обучающей части с ранней остановкой.

    CE на валидации считается на начальных весах и после каждой эпохи;
    возвращаются веса с наименьшим значением. Обучение прекращается по
    `max_epochs`, после `patience` эпох без улучшения или когда оптимизатор
    больше не может продвинуться.

    Raises:
        TrainingError: потери стали не конечными (с номером эпохи).
    """
    if len(train) == 0 or len(validation) == 0:
        raise DataFormatError("training and validation sets must be nonempty")
    if train.num_attributes != validation.num_attributes or train.num_classes != validation.num_classes:
        raise DataFormatError("training and validation sets disagree in attributes or classes")

    rng = np.random.default_rng(config.init_seed)
    template = init_model(train.num_attributes, config.hidden_units, train.num_classes, rng)
    objective = _Objective(template, train.X, one_hot(train.y, train.num_classes))
    T_val = one_hot(validation.y, validation.num_classes)

    def validation_loss(theta: np.ndarray) -> float:
        return cross_entropy(forward(template.with_vector(theta), validation.X), T_val)

    theta0 = template.to_vector()
    best_theta, best_val = theta0, validation_loss(theta0)
    epoch, stale = 0, 0

    try:
        optimizer = ScaledConjugateGradient(objective.loss, objective.grad, theta0)
    except NonFiniteObjective as exc:
        raise TrainingError(str(exc), epoch=0) from exc

    while epoch < config.max_epochs and stale < config.patience and not optimizer.converged:
        epoch += 1
        try:
            optimizer.step()
        except NonFiniteObjective as exc:
            raise TrainingError(str(exc), epoch=epoch) from exc

        val = validation_loss(optimizer.x)
        if val < best_val:
            best_theta, best_val, stale = optimizer.x.copy(), val, 0
        else:
            stale += 1

    logger.debug(
        "SCG seed=%d stopped after %d epochs (train CE %.4f, best validation CE %.4f)",
        config.init_seed, epoch, optimizer.f, best_val,
    )
    return template.with_vector(best_theta)


def validation_split(config: MLPConfig, full_train: Dataset) -> Tuple[Dataset, Dataset]:
    """Детерминированное (по seed) разбиение на (обучение, валидация) без стратификации."""
    total = len(full_train)
    n_val = holdout_size(total, config.validation_fraction)
    if n_val < 1 or n_val >= total:
        raise DataFormatError(
            f"{total} training examples are too few for a {config.validation_fraction:.0%} validation split"
        )
    rng = np.random.default_rng(derive_seed(config.init_seed, SeedScope.validation))
    order = rng.permutation(total)
    return subset(full_train, np.sort(order[n_val:])), subset(full_train, np.sort(order[:n_val]))


def restart_config(config: MLPConfig, restart: int) -> MLPConfig:
    return config.with_seed(derive_seed(config.init_seed, SeedScope.restart, restart))


def train_with_restarts(config: MLPConfig, full_train: Dataset) -> MLPModel:
    """
    Holds out a validation split, trains `num_restarts` networks from different
    initial weights and keeps the one with the lowest validation CE.

    Raises:
        TrainingError: every restart aborted.
    """
    fit, validation = validation_split(config, full_train)
    T_val = one_hot(validation.y, validation.num_classes)

    best_model, best_val = None, np.inf
    failures = []
    for restart in range(config.num_restarts):
        try:
            model = scg_train(restart_config(config, restart), fit, validation)
        except TrainingError as exc:
            logger.warning("Restart %d aborted: %s", restart, exc)
            failures.append(exc)
            continue
        val = cross_entropy(forward(model, validation.X), T_val)
        if val < best_val:
            best_model, best_val = model, val

    if best_model is None:
        raise TrainingError(f"all {config.num_restarts} restarts aborted; last error: {failures[-1]}",
                            epoch=failures[-1].epoch)
    return best_model


@dataclass
class NetworkClassifier:
    """Обученная сеть вместе с нормализацией, под которой она обучалась."""
    stats: NormalizationStats
    model: MLPModel

    @classmethod
    def fit(cls, config: MLPConfig, train: Dataset) -> "NetworkClassifier":
        stats = fit_normalization(train)
        model = train_with_restarts(config, apply_normalization(stats, train))
        return cls(stats=stats, model=model)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return forward(self.model, normalize_vector(self.stats, x))


# --- DUMP ---

def dump_model(model: MLPModel) -> dict:
    """Versioned JSON-ready document. Meant for debugging, not as a stable format."""
    return {
        "format": DUMP_FORMAT,
        "inputs": model.num_inputs,
        "hidden": model.num_hidden,
        "outputs": model.num_outputs,
        "w1": model.w1.ravel().tolist(),
        "b1": model.b1.tolist(),
        "w2": model.w2.ravel().tolist(),
        "b2": model.b2.tolist(),
    }


def load_model(document: dict) -> MLPModel:
    if document.get("format") != DUMP_FORMAT:
        raise DataFormatError(f"unsupported model format {document.get('format')!r}")
    d, h, c = document["inputs"], document["hidden"], document["outputs"]
    try:
        model = MLPModel(
            w1=np.asarray(document["w1"], dtype=np.float64).reshape(h, d),
            b1=np.asarray(document["b1"], dtype=np.float64).reshape(h),
            w2=np.asarray(document["w2"], dtype=np.float64).reshape(c, h),
            b2=np.asarray(document["b2"], dtype=np.float64).reshape(c),
        )
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"malformed model document: {exc}") from exc
    if not model.is_finite():
        raise DataFormatError("model document contains non-finite weights")
    return model
