"""
Трансдуктивный Venn-предиктор поверх нейросети.

Для каждой метки-кандидата k нового примера сеть заново обучается на
расширенном наборе (обучающие примеры + новый пример с меткой k), все l + 1
примеров раскладываются по категориям таксономии по выходам сети, а частоты
меток в категории нового примера дают строку k мультивероятности.
"""
import logging
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from nnvp.core.exceptions import CandidateTrainingError, DataFormatError, TrainingError
from nnvp.core.utils import SeedScope, derive_seed
from nnvp.models import Dataset, MultiProbability
from nnvp.schemas import MLPConfig, PredictionResult, TaxonomyKind, TaxonomyRule
from nnvp.services.dataset import apply_normalization, fit_normalization
from nnvp.services.mlp import forward, train_with_restarts
from nnvp.services.taxonomy import CategoryKey, categorize

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CandidateOutputs:
    """
    Выходы сетей на расширенном наборе для каждой метки-кандидата.
    outputs[k] имеет форму (l + 1, c); последняя строка - новый пример.
    """
    train_labels: np.ndarray
    outputs: Tuple[np.ndarray, ...]

    @property
    def num_classes(self) -> int:
        return len(self.outputs)

    def extended_labels(self, label: int) -> np.ndarray:
        return np.append(self.train_labels, label)


def extended_set(train: Dataset, x_new: np.ndarray, label: int) -> Dataset:
    return train.replace(
        X=np.vstack([train.X, np.asarray(x_new, dtype=np.float64).reshape(1, -1)]),
        y=np.append(train.y, label),
    )


def candidate_seed(base_seed: int, step: int, label: int) -> int:
    return derive_seed(base_seed, SeedScope.venn, step, label)


def _train_candidate(train: Dataset, x_new: np.ndarray, label: int, config: MLPConfig) -> np.ndarray:
    extended = extended_set(train, x_new, label)
    # Нормализация считается заново на расширенном наборе
    normalized = apply_normalization(fit_normalization(extended), extended)
    try:
        model = train_with_restarts(config, normalized)
    except TrainingError as exc:
        raise CandidateTrainingError(label, exc) from exc
    return forward(model, normalized.X)


def category_distribution(
    keys: Sequence[CategoryKey],
    labels: np.ndarray,
    new_index: int,
    num_classes: int,
) -> Tuple[np.ndarray, int]:
    """
    Частоты меток в категории примера `new_index` (сам пример учитывается).
    Возвращает (распределение, размер категории).
    """
    target = keys[new_index]
    members = np.array([i for i, key in enumerate(keys) if key == target], dtype=np.int64)
    # Новый пример всегда входит в свою категорию
    assert members.size >= 1
    counts = np.bincount(np.asarray(labels)[members], minlength=num_classes)
    assert counts.sum() == members.size
    return counts / members.size, int(members.size)


def multiprobability_from_outputs(candidates: CandidateOutputs, rule: TaxonomyRule) -> MultiProbability:
    c = candidates.num_classes
    new_index = candidates.train_labels.size
    rows, sizes, new_keys = [], [], []
    for k in range(c):
        keys = categorize(rule, candidates.outputs[k])
        row, size = category_distribution(keys, candidates.extended_labels(k), new_index, c)
        rows.append(row)
        sizes.append(size)
        new_keys.append(str(keys[new_index]))
    return MultiProbability.from_rows(rows, sizes, new_keys)


def aggregate(P: MultiProbability) -> PredictionResult:
    """
    Границы по классу - минимум и максимум по строкам, точечная оценка -
    среднее строк, прогноз - его argmax (при равенстве меньший индекс).
    """
    M = P.matrix
    lower = M.min(axis=0)
    upper = M.max(axis=0)
    # Среднее остается внутри [min, max] несмотря на округление суммы
    mean = np.clip(M.mean(axis=0), lower, upper)
    best = int(np.argmax(mean))
    return PredictionResult(
        predicted_label=best,
        mean_probs=mean.tolist(),
        lower=lower.tolist(),
        upper=upper.tolist(),
        error_interval=(float(1.0 - upper[best]), float(1.0 - lower[best])),
        category_sizes=list(P.category_sizes),
        category_keys=list(P.category_keys),
    )


class VennPredictor:
    """
    Venn-предсказания с заданной конфигурацией сети.
    С executor'ом c обучений кандидатов идут параллельно.
    """

    def __init__(self, nn_config: MLPConfig, executor: Optional[Executor] = None):
        self.nn_config = nn_config
        self.executor = executor

    def candidates(self, train: Dataset, x_new: np.ndarray, step: int = 0) -> CandidateOutputs:
        """Обучает по сети на каждую метку-кандидата; результаты собираются в порядке меток."""
        if len(train) == 0:
            raise DataFormatError("cannot predict from an empty training set")
        x_new = np.asarray(x_new, dtype=np.float64)
        if x_new.shape != (train.num_attributes,):
            raise DataFormatError(f"new example has shape {x_new.shape}, expected ({train.num_attributes},)")

        labels = list(range(train.num_classes))
        configs = [self.nn_config.with_seed(candidate_seed(self.nn_config.init_seed, step, k)) for k in labels]
        if self.executor is None:
            outputs = [_train_candidate(train, x_new, k, cfg) for k, cfg in zip(labels, configs)]
        else:
            n = len(labels)
            outputs = list(self.executor.map(_train_candidate, [train] * n, [x_new] * n, labels, configs))
        logger.debug("Step %d: trained %d candidate networks on %d examples", step, len(labels), len(train) + 1)
        return CandidateOutputs(train_labels=train.y.copy(), outputs=tuple(outputs))

    def multiprobability(self, train: Dataset, x_new: np.ndarray, rule: TaxonomyRule, step: int = 0) -> MultiProbability:
        return multiprobability_from_outputs(self.candidates(train, x_new, step), rule)

    def predict(self, train: Dataset, x_new: np.ndarray, rule: TaxonomyRule, step: int = 0) -> PredictionResult:
        return aggregate(self.multiprobability(train, x_new, rule, step))

    def predict_many(
        self,
        train: Dataset,
        x_new: np.ndarray,
        rules: Sequence[TaxonomyRule],
        step: int = 0,
    ) -> Dict[TaxonomyKind, PredictionResult]:
        """Прогнозы для нескольких таксономий на общем наборе обученных кандидатов."""
        candidates = self.candidates(train, x_new, step)
        return {rule.kind: aggregate(multiprobability_from_outputs(candidates, rule)) for rule in rules}


# --- FUNCTIONAL API ---

def candidate_outputs(
    train: Dataset,
    x_new: np.ndarray,
    nn_config: MLPConfig,
    step: int = 0,
    executor: Optional[Executor] = None,
) -> CandidateOutputs:
    return VennPredictor(nn_config, executor).candidates(train, x_new, step)


def multiprobability(
    train: Dataset,
    x_new: np.ndarray,
    rule: TaxonomyRule,
    nn_config: MLPConfig,
    step: int = 0,
    executor: Optional[Executor] = None,
) -> MultiProbability:
    return VennPredictor(nn_config, executor).multiprobability(train, x_new, rule, step)


def predict(
    train: Dataset,
    x_new: np.ndarray,
    rule: TaxonomyRule,
    nn_config: MLPConfig,
    step: int = 0,
    executor: Optional[Executor] = None,
) -> PredictionResult:
    return VennPredictor(nn_config, executor).predict(train, x_new, rule, step)


def predict_many(
    train: Dataset,
    x_new: np.ndarray,
    rules: Sequence[TaxonomyRule],
    nn_config: MLPConfig,
    step: int = 0,
    executor: Optional[Executor] = None,
) -> Dict[TaxonomyKind, PredictionResult]:
    return VennPredictor(nn_config, executor).predict_many(train, x_new, rules, step)
