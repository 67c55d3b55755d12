import argparse
import json
import os
import sys
from concurrent.futures import Executor, ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional

from pydantic import ValidationError
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn
from rich.table import Table
from rich.traceback import install

from nnvp.core.config import settings
from nnvp.core.exceptions import ConfigurationError, DataFormatError, NNVPError
from nnvp.core.logging import err_console, setup_logging
from nnvp.core.utils import write_text
from nnvp.schemas import DatasetPreset, DatasetSchema, RunConfig, TaxonomyKind, TaxonomyRule
from nnvp.services import reports
from nnvp.services.dataset import count_steps, load_csv, load_presets, split_indices
from nnvp.services.evaluation import run_batch, run_online_nn, run_online_vp_many

install(show_locals=False)

console = Console()

# restarts used by the benchmark protocol; fewer is reported as a deviation
PROTOCOL_RESTARTS = 3


class CliParser(argparse.ArgumentParser):
    """Ошибки использования завершаются кодом 1, а не 2, как у argparse."""

    def error(self, message):
        raise ConfigurationError(f"{self.prog}: {message}")


# --- ARGUMENTS ---

def _add_dataset_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("dataset")
    group.add_argument("--dataset", type=str, default=None, help="Path to the data file")
    group.add_argument("--preset", type=str, default=None,
                       help="Benchmark preset from data/datasets.json (tae, glass, ecoli, vehicle)")
    group.add_argument("--header", action="store_true", default=None, help="First line is a header")
    group.add_argument("--delimiter", type=str, default=None,
                       help="Column separator; 'whitespace' for runs of blanks (default ',')")
    group.add_argument("--drop-column", type=int, action="append", default=None, dest="drop_columns",
                       help="0-based column to ignore (repeatable)")


def _add_run_args(parser: argparse.ArgumentParser) -> None:
    _add_dataset_args(parser)
    parser.add_argument("--config", type=str, default=None, help="Re-run from a config.json written by an earlier run")
    parser.add_argument("--taxonomy", type=str, action="append", default=None, dest="taxonomies",
                        choices=[k.value for k in TaxonomyKind] + ["all"], help="Venn taxonomy (repeatable)")
    parser.add_argument("--theta", type=float, default=None, help="Threshold of a single V2-V5 taxonomy")
    parser.add_argument("--hidden", type=int, default=None, help="Hidden units")
    parser.add_argument("--seed", type=int, default=None, help="Root seed of every random choice")
    parser.add_argument("--restarts", type=int, default=None, help="Training restarts per network")
    parser.add_argument("--max-epochs", type=int, default=None)
    parser.add_argument("--patience", type=int, default=None, help="Epochs without validation improvement")
    parser.add_argument("--bins", type=int, default=None, help="Reliability bins K")
    parser.add_argument("--out-dir", type=str, default=None)
    parser.add_argument("--workers", type=int, default=None, help="Worker processes (0 = all cores)")


def build_parser() -> CliParser:
    parser = CliParser(prog="nnvp", description="Venn prediction with neural network taxonomies")
    parser.add_argument("--log-level", type=str, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    inspect = sub.add_parser("inspect", help="Summarize a dataset file")
    _add_dataset_args(inspect)

    online = sub.add_parser("online", help="On-line calibration experiment")
    _add_run_args(online)
    online.add_argument("--method", choices=["vp", "nn"], default=None, help="Venn predictor or plain network")
    online.add_argument("--initial-size", type=int, default=None)
    online.add_argument("--subsample", type=int, default=None, help="Predict only the first N stream examples")
    online.add_argument("--predictions", action="store_true", default=None,
                        help="Also write every Venn prediction to predictions.jsonl")

    batch = sub.add_parser("batch", help="Repeated random train/test comparison")
    _add_run_args(batch)
    batch.add_argument("--repeats", type=int, default=None)
    batch.add_argument("--test-fraction", type=float, default=None)
    return parser


# --- RESOLUTION ---

def _preset(name: Optional[str]) -> Optional[DatasetPreset]:
    if name is None:
        return None
    presets = load_presets()
    if name not in presets:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(presets)}")
    return presets[name]


def resolve_dataset(args: argparse.Namespace) -> tuple[str, DatasetSchema, Optional[DatasetPreset]]:
    preset = _preset(args.preset)
    if args.dataset:
        path = args.dataset
    elif preset is not None:
        path = str(Path(settings.DATA_DIR) / preset.file)
    else:
        raise ConfigurationError("--dataset (or --preset) is required")

    schema = preset.data_schema if preset is not None else DatasetSchema()
    updates = {}
    if args.header is not None:
        updates["has_header"] = args.header
    if args.delimiter is not None:
        updates["delimiter"] = None if args.delimiter == "whitespace" else args.delimiter
    if args.drop_columns is not None:
        updates["drop_columns"] = args.drop_columns
    if updates:
        schema = DatasetSchema.model_validate({**schema.model_dump(), **updates})
    return path, schema, preset


def _taxonomies(args: argparse.Namespace, command: str) -> List[TaxonomyRule]:
    names = args.taxonomies or (["all"] if command == "batch" else ["v1"])
    kinds = list(TaxonomyKind) if "all" in names else [TaxonomyKind(n) for n in dict.fromkeys(names)]
    if args.theta is not None and len(kinds) != 1:
        raise ConfigurationError("--theta applies to exactly one --taxonomy")
    try:
        return [TaxonomyRule(kind=k, theta=args.theta) for k in kinds]
    except ValidationError as exc:
        raise ConfigurationError(str(exc)) from exc


def _pick(*values):
    return next((v for v in values if v is not None), None)


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Приоритет: флаги > файл конфигурации > пресет > настройки NNVP_*."""
    command = args.command
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}")
        if base.get("command") != command:
            raise ConfigurationError(f"{args.config} describes a {base.get('command')!r} run, not {command!r}")
        if not (args.dataset or args.preset):
            args.dataset = base.get("dataset")
            args.preset = base.get("preset")

    path, schema, preset = resolve_dataset(args)
    if args.config and not any(v is not None for v in (args.header, args.delimiter, args.drop_columns)):
        schema = DatasetSchema.model_validate(base.get("schema", {}))

    hidden = _pick(args.hidden, base.get("hidden_units"), preset.hidden_units if preset else None)
    if hidden is None:
        raise ConfigurationError("--hidden is required without a preset")

    values = {
        "command": command,
        "dataset": path,
        "preset": args.preset,
        "schema": schema,
        "hidden_units": hidden,
        "seed": _pick(args.seed, base.get("seed"), settings.SEED),
        "restarts": _pick(args.restarts, base.get("restarts"), settings.RESTARTS),
        "max_epochs": _pick(args.max_epochs, base.get("max_epochs"), settings.MAX_EPOCHS),
        "patience": _pick(args.patience, base.get("patience"), settings.PATIENCE),
        "bins": _pick(args.bins, base.get("bins"), preset.bins if preset else None, settings.BINS),
    }
    if args.taxonomies is None and args.theta is None and "taxonomies" in base:
        values["taxonomies"] = base["taxonomies"]
    else:
        values["taxonomies"] = _taxonomies(args, command)

    if command == "online":
        values["method"] = _pick(args.method, base.get("method"), "vp")
        values["initial_size"] = _pick(args.initial_size, base.get("initial_size"), settings.INITIAL_SIZE)
        values["subsample"] = args.subsample if args.subsample is not None else base.get("subsample")
        values["predictions"] = _pick(args.predictions, base.get("predictions"), False)
        if values["method"] == "nn":
            if args.predictions:
                raise ConfigurationError("--predictions applies to Venn runs (--method vp)")
            values["taxonomies"] = []
            values["predictions"] = False
    else:
        values["repeats"] = _pick(args.repeats, base.get("repeats"), settings.REPEATS)
        values["test_fraction"] = _pick(args.test_fraction, base.get("test_fraction"), settings.TEST_FRACTION)

    name = preset.name if preset else Path(path).stem
    values["out_dir"] = _pick(args.out_dir, base.get("out_dir"), str(Path(settings.OUT_DIR) / f"{name}-{command}"))

    try:
        return RunConfig.model_validate(values)
    except ValidationError as exc:
        raise ConfigurationError(str(exc)) from exc


@contextmanager
def make_executor(workers: Optional[int]) -> Iterator[Optional[Executor]]:
    workers = _pick(workers, settings.WORKERS)
    workers = workers or os.cpu_count() or 1
    if workers <= 1:
        yield None
        return
    with ProcessPoolExecutor(max_workers=workers) as executor:
        yield executor


def _progress() -> Progress:
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        console=err_console,
        transient=True,
    )


# --- COMMANDS ---

def cmd_inspect(args: argparse.Namespace) -> int:
    path, schema, preset = resolve_dataset(args)
    dataset = load_csv(path, schema)

    console.print(
        f"[bold]{Path(path).name}[/bold]: {len(dataset)} examples, "
        f"{dataset.num_attributes} attributes, {dataset.num_classes} classes"
    )
    table = Table(show_header=True, header_style="bold magenta", border_style="green")
    table.add_column("Index", justify="right")
    table.add_column("Class", style="cyan")
    table.add_column("Examples", justify="right")
    for index, (name, count) in enumerate(zip(dataset.class_names, dataset.class_counts())):
        table.add_row(str(index), name, str(int(count)))
    console.print(table)

    if preset is not None:
        expected = (preset.examples, preset.attributes, preset.classes)
        actual = (len(dataset), dataset.num_attributes, dataset.num_classes)
        if expected != actual:
            console.print(f"[bold red]Счетчики {actual} не совпадают с эталоном {preset.title} {expected}[/bold red]")
            return DataFormatError.exit_code
        console.print(f"[green]Совпадает с эталонными счетчиками {preset.title}[/green]")
    return 0


def _write_config(config: RunConfig, out_dir: Path) -> None:
    reports.write_json(config, out_dir / "config.json")


def cmd_online(config: RunConfig, workers: Optional[int] = None) -> int:
    dataset = load_csv(config.dataset, config.data_schema)
    out_dir = Path(config.out_dir)
    mlp_config = config.mlp_config()
    total = count_steps(len(dataset), config.initial_size, config.subsample)
    subsampled = config.subsample is not None and config.subsample < len(dataset) - config.initial_size
    reduced = config.restarts < PROTOCOL_RESTARTS
    predictions = []

    def record(n, rule, result, label):
        predictions.append({
            "n": n,
            "taxonomy": rule.label,
            "label": dataset.class_names[label],
            **result.to_report(dataset.class_names),
        })

    with make_executor(workers) as executor, _progress() as progress:
        task = progress.add_task(f"[magenta]On-line {config.method.upper()}...", total=total)

        def advance(_):
            progress.advance(task)

        if config.method == "nn":
            curves = {"nn": run_online_nn(dataset, mlp_config, config.initial_size, config.subsample,
                                          executor=executor, on_step=advance)}
        else:
            by_kind = run_online_vp_many(dataset, config.taxonomies, mlp_config, config.initial_size,
                                         config.subsample, executor=executor, on_step=advance,
                                         on_prediction=record if config.predictions else None)
            curves = {kind.value: c for kind, c in by_kind.items()}

    summaries = []
    for name, c in curves.items():
        reports.write_curves(c, out_dir / f"curves_{name}.csv")
        summaries.append(c.summary(subsampled=subsampled, reduced_restarts=reduced))
    reports.write_json([s.model_dump(mode="json") for s in summaries], out_dir / "summary.json")
    if config.predictions:
        reports.write_jsonl(predictions, out_dir / "predictions.jsonl")
    _write_config(config, out_dir)

    console.print(reports.online_table(summaries, title=f"On-line results ({Path(config.dataset).name})"))
    console.print(f"[green]Результаты записаны в {out_dir}[/green]")
    return 0


def cmd_batch(config: RunConfig, workers: Optional[int] = None) -> int:
    dataset = load_csv(config.dataset, config.data_schema)
    out_dir = Path(config.out_dir)
    plan = config.split_plan()
    # validates the plan before any training starts
    _, test_idx = split_indices(len(dataset), plan, 0)

    with make_executor(workers) as executor, _progress() as progress:
        task = progress.add_task("[magenta]Batch repeats...", total=plan.num_repeats * len(test_idx))
        report = run_batch(dataset, config.taxonomies, config.mlp_config(), plan, config.bins,
                           executor=executor, on_step=lambda _: progress.advance(task))

    title = f"{Path(config.dataset).name}: {plan.num_repeats} x {1 - plan.test_fraction:.0%}/{plan.test_fraction:.0%}"
    reports.write_json(
        {
            "repeats": report.repeats,
            "test_examples": report.test_examples,
            "reduced_restarts": config.restarts < PROTOCOL_RESTARTS,
            "metrics": [m.model_dump(mode="json") for m in report.metrics],
        },
        out_dir / "metrics.json",
    )
    write_text(out_dir / "metrics.txt", reports.render_metrics_table(report, title))
    _write_config(config, out_dir)

    console.print(reports.metrics_table(report.metrics, title=title))
    console.print(f"[green]Результаты записаны в {out_dir}[/green]")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        setup_logging(args.log_level or settings.LOG_LEVEL)
        if args.command == "inspect":
            return cmd_inspect(args)
        config = build_run_config(args)
        if args.command == "online":
            return cmd_online(config, args.workers)
        return cmd_batch(config, args.workers)
    except NNVPError as exc:
        err_console.print(f"[bold red]{type(exc).__name__}:[/bold red] {exc}")
        return exc.exit_code
    except ValidationError as exc:
        err_console.print(f"[bold red]Invalid configuration:[/bold red] {exc}")
        return ConfigurationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
