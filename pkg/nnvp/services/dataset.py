import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Tuple

import numpy as np
import pandas as pd

from nnvp.core.exceptions import DataFormatError
from nnvp.core.utils import SeedScope, derive_seed
from nnvp.models import Dataset, Example, NormalizationStats
from nnvp.schemas import DatasetPreset, DatasetSchema, SplitPlan

logger = logging.getLogger(__name__)

# Признаки с меньшим разбросом считаются константными
DEGENERATE_STD = 1e-12

_LINE_RE = re.compile(r"line (\d+)")


# --- LOADING ---

def load_csv(path: str | Path, schema: Optional[DatasetSchema] = None) -> Dataset:
    """
    Читает файл в стиле UCI: один пример на строку, сначала признаки, метка в
    последнем столбце. Метки нумеруются в порядке первого появления.

    Raises:
        DataFormatError: файла нет или он пуст, строки разной длины или
            нечисловые признаки (в сообщении номер строки файла, с 1).
    """
    schema = schema or DatasetSchema()
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"file not found: {path}")

    lines = _data_lines(path, schema.has_header)
    try:
        frame = pd.read_csv(
            path,
            header=0 if schema.has_header else None,
            sep=schema.delimiter if schema.delimiter is not None else r"\s+",
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            skipinitialspace=True,
        )
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"{path} is empty")
    except pd.errors.ParserError as exc:
        match = _LINE_RE.search(str(exc))
        row = int(match.group(1)) if match else None
        raise DataFormatError(f"wrong number of columns in {path.name}", row=row) from exc

    if frame.empty:
        raise DataFormatError(f"{path} contains no examples")

    num_columns = frame.shape[1]
    if any(i >= num_columns for i in schema.drop_columns):
        raise DataFormatError(f"drop_columns {schema.drop_columns} out of range for {num_columns} columns")
    kept = [i for i in range(num_columns) if i not in schema.drop_columns]
    if len(kept) < 2:
        raise DataFormatError("need at least one attribute column and a label column")

    frame = frame.iloc[:, kept]
    short = np.flatnonzero(frame.isna().any(axis=1).to_numpy())
    if short.size:
        raise DataFormatError(f"expected {num_columns} columns", row=lines[int(short[0])])

    raw_attributes = frame.iloc[:, :-1].apply(lambda col: col.str.strip())
    attributes = raw_attributes.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(attributes)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        value = raw_attributes.iat[row, col]
        raise DataFormatError(f"non-numeric attribute {value!r} in column {kept[col] + 1}", row=lines[int(row)])

    labels = frame.iloc[:, -1].str.strip()
    empty = np.flatnonzero((labels == "").to_numpy())
    if empty.size:
        raise DataFormatError("missing label", row=lines[int(empty[0])])

    codes, uniques = pd.factorize(labels, sort=False)
    dataset = Dataset(X=attributes, y=codes, class_names=tuple(uniques))
    logger.debug(
        "Loaded %s: %d examples, %d attributes, %d classes",
        path.name, len(dataset), dataset.num_attributes, dataset.num_classes,
    )
    return dataset


def _data_lines(path: Path, has_header: bool) -> list[int]:
    """Номер строки файла (с 1) для каждой строки данных; пустые строки пропускаются, как и в парсере."""
    with path.open(encoding="utf-8", errors="replace") as handle:
        numbers = [i for i, line in enumerate(handle, start=1) if line.strip()]
    return numbers[1:] if has_header else numbers


def subset(dataset: Dataset, indices: np.ndarray) -> Dataset:
    indices = np.asarray(indices, dtype=np.int64)
    return dataset.replace(X=dataset.X[indices], y=dataset.y[indices])


# --- NORMALIZATION ---

def fit_normalization(train: Dataset) -> NormalizationStats:
    """Среднее и std (генеральное) по каждому признаку `train`; при нулевом разбросе std = 1."""
    if len(train) == 0:
        raise DataFormatError("cannot fit normalization on an empty dataset")
    means = train.X.mean(axis=0)
    stds = train.X.std(axis=0)
    stds = np.where(stds < DEGENERATE_STD, 1.0, stds)
    return NormalizationStats(means=means, std_devs=stds)


def _check_dims(stats: NormalizationStats, data: Dataset) -> None:
    if data.num_attributes != stats.num_attributes:
        raise DataFormatError(
            f"dataset has {data.num_attributes} attributes, normalization expects {stats.num_attributes}"
        )


def apply_normalization(stats: NormalizationStats, data: Dataset) -> Dataset:
    _check_dims(stats, data)
    return data.replace(X=(data.X - stats.means) / stats.std_devs)


def invert_normalization(stats: NormalizationStats, data: Dataset) -> Dataset:
    _check_dims(stats, data)
    return data.replace(X=data.X * stats.std_devs + stats.means)


def normalize_vector(stats: NormalizationStats, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != stats.num_attributes:
        raise DataFormatError(f"vector has {x.shape[-1]} attributes, normalization expects {stats.num_attributes}")
    return (x - stats.means) / stats.std_devs


# --- SPLITTING ---

def holdout_size(total: int, fraction: float) -> int:
    """round(fraction * total), halves rounded up."""
    return int(math.floor(fraction * total + 0.5))


def split_indices(total: int, plan: SplitPlan, repeat_index: int) -> Tuple[np.ndarray, np.ndarray]:
    """Отсортированные индексы (train, test) одного повтора; зависят только от (seed, repeat_index)."""
    if not 0 <= repeat_index < plan.num_repeats:
        raise DataFormatError(f"repeat_index {repeat_index} outside [0, {plan.num_repeats})")
    n_test = holdout_size(total, plan.test_fraction)
    if n_test == 0 or n_test == total:
        raise DataFormatError(
            f"test fraction {plan.test_fraction} of {total} examples leaves an empty train or test set"
        )
    rng = np.random.default_rng(derive_seed(plan.seed, SeedScope.split, repeat_index))
    order = rng.permutation(total)
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def split(dataset: Dataset, plan: SplitPlan, repeat_index: int) -> Tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(len(dataset), plan, repeat_index)
    return subset(dataset, train_idx), subset(dataset, test_idx)


# --- ON-LINE STREAM ---

@dataclass(frozen=True)
class OnlineStep:
    """На шаге n пример n потока предсказывается по n - 1 предыдущим."""
    n: int
    train: Dataset
    example: Example


def stream_order(total: int, seed: int) -> np.ndarray:
    return np.random.default_rng(derive_seed(seed, SeedScope.stream)).permutation(total)


def online_stream(
    dataset: Dataset,
    initial_size: int,
    seed: int = 0,
    limit: Optional[int] = None,
) -> Iterator[OnlineStep]:
    """
    Один раз перемешивает набор (с сидом) и выдает шаги
    n = initial_size + 1, ..., N. `limit` оставляет только первые `limit` шагов.
    """
    total = len(dataset)
    if initial_size < 1 or initial_size >= total:
        raise DataFormatError(f"initial_size must lie in [1, {total}), got {initial_size}")
    if limit is not None and limit < 1:
        raise DataFormatError("limit must be positive")

    shuffled = subset(dataset, stream_order(total, seed))
    last = total if limit is None else min(total, initial_size + limit)

    def steps() -> Iterator[OnlineStep]:
        for n in range(initial_size + 1, last + 1):
            yield OnlineStep(
                n=n,
                train=subset(shuffled, np.arange(n - 1)),
                example=Example(attributes=shuffled.X[n - 1], label=int(shuffled.y[n - 1])),
            )

    return steps()


def count_steps(total: int, initial_size: int, limit: Optional[int] = None) -> int:
    steps = total - initial_size
    return steps if limit is None else min(steps, limit)


# --- PRESETS ---

PRESETS_FILE = Path(__file__).resolve().parent.parent.parent / "data" / "datasets.json"


def load_presets(path: Optional[Path] = None) -> dict[str, DatasetPreset]:
    """Пресеты бенчмарков по короткому имени (data/datasets.json)."""
    path = Path(path) if path else PRESETS_FILE
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataFormatError(f"presets file not found: {path}")
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"presets file {path} is not valid JSON: {exc}")
    presets = [DatasetPreset.model_validate(entry) for entry in entries]
    return {p.name: p for p in presets}
