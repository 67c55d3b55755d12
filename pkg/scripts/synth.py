import argparse
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table
from rich.traceback import install

install(show_locals=False)

from nnvp.models import Dataset

# --- GLOBAL CONFIG ---
console = Console()
FLOAT_FORMAT = "%.6f"

# --- GENERATORS ---

def make_blobs(
    num_examples: int = 120,
    num_attributes: int = 4,
    num_classes: int = 3,
    spread: float = 1.0,
    seed: int = 0,
) -> Dataset:
    """
    Гауссовы облака вокруг случайных центров классов. Метки раздаются по
    кругу (каждый класс встречается), затем строки перемешиваются.
    """
    rng = np.random.default_rng(seed)
    centres = rng.normal(0.0, 3.0, size=(num_classes, num_attributes))
    y = np.arange(num_examples) % num_classes
    rng.shuffle(y)
    X = centres[y] + rng.normal(0.0, spread, size=(num_examples, num_attributes))
    return Dataset(X=X, y=y, class_names=[f"class_{k}" for k in range(num_classes)])


def make_separable(num_examples: int = 60, margin: float = 1.0, seed: int = 0) -> Dataset:
    """Two classes split by the hyperplane x0 + x1 = 0 with a gap of `margin`."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-3.0, 3.0, size=(num_examples, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(np.int64)
    # Выталкиваем точки из полосы зазора
    shift = np.where(y == 1, margin, -margin) / np.sqrt(2.0)
    X = X + shift[:, None]
    # Оба класса присутствуют при любой выборке
    y[: 2] = [0, 1]
    X[0], X[1] = [-1.0 - margin, -1.0], [1.0 + margin, 1.0]
    return Dataset(X=X, y=y, class_names=["neg", "pos"])


def to_csv(dataset: Dataset, path: Path, header: bool = False) -> Path:
    """Attributes then the label name as the last column."""
    frame = pd.DataFrame(dataset.X, columns=[f"a{j}" for j in range(dataset.num_attributes)])
    frame["label"] = [dataset.class_names[k] for k in dataset.y]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, header=header, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="Write a synthetic classification dataset as CSV")
    parser.add_argument("kind", choices=["blobs", "separable"], help="Generator")
    parser.add_argument("--out", type=str, required=True, help="Output CSV path")
    parser.add_argument("--examples", type=int, default=120)
    parser.add_argument("--attributes", type=int, default=4, help="blobs only")
    parser.add_argument("--classes", type=int, default=3, help="blobs only")
    parser.add_argument("--spread", type=float, default=1.0, help="blobs only")
    parser.add_argument("--margin", type=float, default=1.0, help="separable only")
    parser.add_argument("--header", action="store_true", help="Write a header line")
    parser.add_argument("--seed", type=int, default=0)
    return parser.parse_args(argv)


# --- MAIN ---

def main(argv=None) -> int:
    args = parse_args(argv)

    # 1. Генерация
    if args.kind == "blobs":
        dataset = make_blobs(args.examples, args.attributes, args.classes, args.spread, args.seed)
    else:
        dataset = make_separable(args.examples, args.margin, args.seed)

    # 2. Запись
    path = to_csv(dataset, Path(args.out), header=args.header)

    # 3. Отчет
    table = Table(title=f"{args.kind} -> {path}", show_header=True, header_style="bold magenta")
    table.add_column("Class", style="cyan")
    table.add_column("Examples", justify="right")
    for name, count in zip(dataset.class_names, dataset.class_counts()):
        table.add_row(name, str(int(count)))
    console.print(table)
    console.print(f"[green]{len(dataset)} examples, {dataset.num_attributes} attributes[/green]")
    return 0


if __name__ == "__main__":
    sys.exit(main())
