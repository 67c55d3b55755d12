import logging
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from nnvp.core.utils import SeedScope, derive_seed
from nnvp.models import Dataset
from nnvp.schemas import (
    BatchMetrics,
    MLPConfig,
    OnlineSummary,
    PredictionResult,
    SplitPlan,
    TaxonomyKind,
    TaxonomyRule,
)
from nnvp.services.dataset import online_stream, split
from nnvp.services.mlp import NetworkClassifier, cross_entropy, one_hot
from nnvp.services.venn import VennPredictor

logger = logging.getLogger(__name__)

StepCallback = Optional[Callable[[int], None]]
# (n, таксономия, прогноз, истинная метка) для каждого Venn-прогноза on-line прогона
PredictionCallback = Optional[Callable[[int, TaxonomyRule, PredictionResult, int], None]]

BASELINE = "NN"


# --- ON-LINE CURVES ---

@dataclass(frozen=True, eq=False)
class OnlineCurves:
    """
    Cumulative curves of an on-line run, indexed by prediction n = 1..N.

    Venn runs fill `lower`/`upper` (LEP_n, UEP_n); baseline runs fill
    `expected` (EP_n) and `step_error_probs` (1 - p_hat for every step).
    """
    method: str
    errors: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    expected: Optional[np.ndarray] = None
    step_error_probs: Optional[np.ndarray] = None

    @classmethod
    def from_steps(
        cls,
        method: str,
        step_errors: Sequence[int],
        lower_increments: Optional[Sequence[float]] = None,
        upper_increments: Optional[Sequence[float]] = None,
        error_probs: Optional[Sequence[float]] = None,
    ) -> "OnlineCurves":
        def cumsum(values):
            return None if values is None else np.cumsum(np.asarray(values, dtype=np.float64))

        return cls(
            method=method,
            errors=np.cumsum(np.asarray(step_errors, dtype=np.int64)),
            lower=cumsum(lower_increments),
            upper=cumsum(upper_increments),
            expected=cumsum(error_probs),
            step_error_probs=None if error_probs is None else np.asarray(error_probs, dtype=np.float64),
        )

    @property
    def is_venn(self) -> bool:
        return self.lower is not None

    @property
    def num_steps(self) -> int:
        return int(self.errors.size)

    @property
    def final_errors(self) -> int:
        return int(self.errors[-1]) if self.num_steps else 0

    def contained(self) -> bool:
        """LEP_N <= E_N <= UEP_N at the last step."""
        return bool(self.lower[-1] <= self.final_errors <= self.upper[-1])

    def containment_fraction(self) -> float:
        inside = (self.lower <= self.errors) & (self.errors <= self.upper)
        return float(inside.mean())

    def within_tolerance(self, width: float = 2.0) -> bool:
        """LEP_N - width*sqrt(N) <= E_N <= UEP_N + width*sqrt(N)."""
        slack = width * np.sqrt(self.num_steps)
        return bool(self.lower[-1] - slack <= self.final_errors <= self.upper[-1] + slack)

    def to_frame(self) -> pd.DataFrame:
        columns = {"n": np.arange(1, self.num_steps + 1), "E_n": self.errors}
        if self.is_venn:
            columns.update({"LEP_n": self.lower, "UEP_n": self.upper})
        else:
            columns["EP_n"] = self.expected
        return pd.DataFrame(columns)

    def summary(self, subsampled: bool = False, reduced_restarts: bool = False) -> OnlineSummary:
        summary = OnlineSummary(
            method=self.method,
            steps=self.num_steps,
            errors=self.final_errors,
            subsampled=subsampled,
            reduced_restarts=reduced_restarts,
        )
        if self.is_venn:
            summary.lep = float(self.lower[-1])
            summary.uep = float(self.upper[-1])
            summary.contained = self.contained()
            summary.containment_fraction = self.containment_fraction()
            summary.within_tolerance = self.within_tolerance()
        else:
            summary.ep = float(self.expected[-1])
            result = two_sided_pvalue(self.final_errors, self.step_error_probs)
            summary.p_value = result.p_value
            summary.p_value_degenerate = result.degenerate
        return summary


def run_online_vp_many(
    dataset: Dataset,
    rules: Sequence[TaxonomyRule],
    nn_config: MLPConfig,
    initial_size: int = 50,
    limit: Optional[int] = None,
    executor: Optional[Executor] = None,
    on_step: StepCallback = None,
    on_prediction: PredictionCallback = None,
) -> Dict[TaxonomyKind, OnlineCurves]:
    """
    On-line протокол сразу для нескольких таксономий: каждый пример
    предсказывается по предыдущим, после чего его метка раскрывается.
    Сети-кандидаты каждого шага общие для всех таксономий.
    """
    predictor = VennPredictor(nn_config, executor)
    records = {rule.kind: ([], [], []) for rule in rules}
    for step in online_stream(dataset, initial_size, seed=nn_config.init_seed, limit=limit):
        results = predictor.predict_many(step.train, step.example.attributes, rules, step=step.n)
        for rule in rules:
            result = results[rule.kind]
            low, high = result.interval(result.predicted_label)
            errors, lower, upper = records[rule.kind]
            errors.append(int(result.predicted_label != step.example.label))
            lower.append(1.0 - high)
            upper.append(1.0 - low)
            if on_prediction is not None:
                on_prediction(step.n, rule, result, step.example.label)
        if on_step is not None:
            on_step(step.n)

    curves = {}
    for rule in rules:
        errors, lower, upper = records[rule.kind]
        curves[rule.kind] = OnlineCurves.from_steps(rule.label, errors, lower, upper)
        logger.info(
            "On-line %s: E_N=%d, LEP_N=%.2f, UEP_N=%.2f",
            rule.label, curves[rule.kind].final_errors, curves[rule.kind].lower[-1], curves[rule.kind].upper[-1],
        )
    return curves


def run_online_vp(
    dataset: Dataset,
    rule: TaxonomyRule,
    nn_config: MLPConfig,
    initial_size: int = 50,
    limit: Optional[int] = None,
    executor: Optional[Executor] = None,
    on_step: StepCallback = None,
) -> OnlineCurves:
    curves = run_online_vp_many(dataset, [rule], nn_config, initial_size, limit, executor, on_step)
    return curves[rule.kind]


def _baseline_step(train: Dataset, x: np.ndarray, config: MLPConfig) -> np.ndarray:
    return NetworkClassifier.fit(config, train).predict_proba(x)


def run_online_nn(
    dataset: Dataset,
    nn_config: MLPConfig,
    initial_size: int = 50,
    limit: Optional[int] = None,
    executor: Optional[Executor] = None,
    on_step: StepCallback = None,
) -> OnlineCurves:
    """
    Тот же протокол для обычной сети; EP_n накапливает 1 - max_j o_j.
    Шаги только читают префикс потока, поэтому executor может гнать их параллельно.
    """
    steps = list(online_stream(dataset, initial_size, seed=nn_config.init_seed, limit=limit))
    configs = [nn_config.with_seed(derive_seed(nn_config.init_seed, SeedScope.baseline, s.n)) for s in steps]
    trains = [s.train for s in steps]
    xs = [s.example.attributes for s in steps]
    outputs = executor.map(_baseline_step, trains, xs, configs) if executor else map(_baseline_step, trains, xs, configs)

    errors, error_probs = [], []
    for step, o in zip(steps, outputs):
        errors.append(int(int(np.argmax(o)) != step.example.label))
        error_probs.append(abs(1.0 - float(np.max(o))))
        if on_step is not None:
            on_step(step.n)

    curves = OnlineCurves.from_steps(BASELINE, errors, error_probs=error_probs)
    logger.info("On-line NN: E_N=%d, EP_N=%.2f", curves.final_errors, curves.expected[-1])
    return curves


# --- P-VALUE ---

class PValueResult(NamedTuple):
    p_value: float
    degenerate: bool


def two_sided_pvalue(errors: int, error_probs: Sequence[float]) -> PValueResult:
    """
    Two-sided p-value of observing `errors` mistakes when step i errs
    independently with probability q_i. Normal approximation to the
    Poisson-binomial with continuity correction, capped at 1.

    With zero variance the p-value is 1 if errors equals the expected count
    and 0 otherwise; both cases are flagged as degenerate.
    """
    q = np.asarray(error_probs, dtype=np.float64)
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError("error probabilities must lie in [0, 1]")
    mu = float(q.sum())
    sigma = float(np.sqrt(np.sum(q * (1.0 - q))))
    deviation = abs(errors - mu)
    if sigma == 0.0:
        return PValueResult(1.0 if deviation < 0.5 else 0.0, True)
    z = (deviation - 0.5) / sigma
    return PValueResult(float(min(1.0, 2.0 * stats.norm.sf(z))), False)


# --- BATCH METRICS ---

@dataclass(frozen=True, eq=False)
class ReliabilityBinning:
    """K equal-width bins over [0, 1]; bin k is represented by its midpoint r_k."""
    typical: np.ndarray      # r_k
    counts: np.ndarray       # n_k
    frequencies: np.ndarray  # phi_k, 0 for empty bins
    num_examples: int

    @property
    def reliability(self) -> float:
        return float(np.sum(self.counts * (self.typical - self.frequencies) ** 2) / self.num_examples)


def reliability_binning(outputs: np.ndarray, indicators: np.ndarray, bins: int) -> ReliabilityBinning:
    O = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    T = np.atleast_2d(np.asarray(indicators, dtype=np.float64))
    if O.shape != T.shape:
        raise ValueError(f"outputs {O.shape} and indicators {T.shape} differ in shape")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if np.any(O < 0) or np.any(O > 1):
        raise ValueError("outputs must lie in [0, 1]")

    # bin k covers [k/K, (k+1)/K); 1.0 joins the last bin
    edges = np.arange(1, bins) / bins
    index = np.searchsorted(edges, O.ravel(), side="right")
    counts = np.bincount(index, minlength=bins)
    hits = np.bincount(index, weights=T.ravel(), minlength=bins)
    frequencies = np.divide(hits, counts, out=np.zeros(bins), where=counts > 0)
    typical = (np.arange(bins) + 0.5) / bins
    return ReliabilityBinning(typical=typical, counts=counts, frequencies=frequencies, num_examples=O.shape[0])


def reliability(outputs: np.ndarray, indicators: np.ndarray, bins: int) -> float:
    """REL = (1/N) sum_k n_k (r_k - phi_k)^2, N = number of examples."""
    return reliability_binning(outputs, indicators, bins).reliability


def brier_score(probs: np.ndarray, targets: np.ndarray) -> float:
    return float(np.mean(np.sum((probs - targets) ** 2, axis=1)))


def batch_metrics(
    method: str,
    probs: np.ndarray,
    labels: np.ndarray,
    bins: int,
    diameters: Optional[np.ndarray] = None,
) -> BatchMetrics:
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    T = one_hot(labels, probs.shape[1])
    correct = int(np.sum(np.argmax(probs, axis=1) == labels))
    return BatchMetrics(
        method=method,
        examples=int(labels.size),
        accuracy=correct / labels.size,
        cross_entropy=cross_entropy(probs, T),
        brier=brier_score(probs, T),
        reliability=reliability(probs, T, bins),
        mean_diameter=None if diameters is None else float(np.mean(diameters)),
    )


@dataclass
class BatchReport:
    """Метрики по объединению всех тестовых выборок; строка базовой сети первая."""
    metrics: List[BatchMetrics]
    repeats: int
    test_examples: int

    def row(self, method: str) -> BatchMetrics:
        return next(m for m in self.metrics if m.method == method)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([m.model_dump() for m in self.metrics])


def run_batch(
    dataset: Dataset,
    rules: Sequence[TaxonomyRule],
    nn_config: MLPConfig,
    plan: SplitPlan,
    bins: int = 100,
    executor: Optional[Executor] = None,
    on_step: StepCallback = None,
) -> BatchReport:
    """
    Случайные разбиения train/test. На каждом тестовом примере базовая сеть
    дает o, каждая таксономия - средние вероятности Venn; все методы
    оцениваются на объединении тестовых примеров всех повторов.
    """
    methods = [BASELINE] + [rule.label for rule in rules]
    probs: Dict[str, List[np.ndarray]] = {m: [] for m in methods}
    diameters: Dict[str, List[float]] = {rule.label: [] for rule in rules}
    labels: List[np.ndarray] = []

    for repeat in range(plan.num_repeats):
        train, test = split(dataset, plan, repeat)
        base_config = nn_config.with_seed(derive_seed(nn_config.init_seed, SeedScope.batch, repeat))

        baseline = NetworkClassifier.fit(base_config, train)
        predictor = VennPredictor(base_config, executor)
        probs[BASELINE].append(baseline.predict_proba(test.X))

        for i, x in enumerate(test.X):
            if rules:
                results = predictor.predict_many(train, x, rules, step=i)
                for rule in rules:
                    result = results[rule.kind]
                    probs[rule.label].append(np.asarray(result.mean_probs).reshape(1, -1))
                    diameters[rule.label].append(result.diameter)
            if on_step is not None:
                on_step(repeat)
        labels.append(test.y)
        logger.info("Batch repeat %d/%d done (%d test examples)", repeat + 1, plan.num_repeats, len(test))

    y = np.concatenate(labels)
    metrics = [batch_metrics(BASELINE, np.vstack(probs[BASELINE]), y, bins)]
    for rule in rules:
        row = batch_metrics(rule.label, np.vstack(probs[rule.label]), y, bins, np.asarray(diameters[rule.label]))
        if metrics[0].reliability > 0:
            row.rel_improvement = (metrics[0].reliability - row.reliability) / metrics[0].reliability
        metrics.append(row)
    return BatchReport(metrics=metrics, repeats=plan.num_repeats, test_examples=int(y.size))
