"""Deterministic report files: fixed column order, fixed float format, "\n" line endings."""
import io
import json
from pathlib import Path
from typing import Iterable

from pydantic import BaseModel
from rich.console import Console
from rich.table import Table

from nnvp.core.utils import dumps_json, write_text
from nnvp.schemas import BatchMetrics, OnlineSummary
from nnvp.services.evaluation import BatchReport, OnlineCurves

FLOAT_FORMAT = "%.10f"


def write_curves(curves: OnlineCurves, path: Path) -> Path:
    text = curves.to_frame().to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return write_text(path, text)


def write_json(payload: BaseModel | dict | list, path: Path) -> Path:
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json", by_alias=True)
    return write_text(path, dumps_json(payload))


def write_jsonl(records: Iterable[dict], path: Path) -> Path:
    """One compact JSON object per line."""
    lines = [json.dumps(r, ensure_ascii=False, allow_nan=False) + "\n" for r in records]
    return write_text(path, "".join(lines))


def _render(table: Table) -> str:
    buffer = io.StringIO()
    console = Console(file=buffer, width=120, color_system=None, force_terminal=False, legacy_windows=False)
    console.print(table)
    return "\n".join(line.rstrip() for line in buffer.getvalue().splitlines()) + "\n"


def metrics_table(metrics: Iterable[BatchMetrics], title: str | None = None) -> Table:
    """Accuracy / CE / BS / REL per method, baseline first."""
    table = Table(title=title, show_header=True, header_style="bold magenta")
    table.add_column("Method", style="cyan")
    table.add_column("Accuracy", justify="right")
    table.add_column("CE", justify="right")
    table.add_column("BS", justify="right")
    table.add_column("REL", justify="right")
    table.add_column("Diameter", justify="right", style="dim")
    table.add_column("REL gain", justify="right", style="dim")
    for m in metrics:
        table.add_row(
            m.method,
            f"{m.accuracy:.2%}",
            f"{m.cross_entropy:.2f}",
            f"{m.brier:.4f}",
            f"{m.reliability:.4f}",
            "-" if m.mean_diameter is None else f"{m.mean_diameter:.4f}",
            "-" if m.rel_improvement is None else f"{m.rel_improvement:+.1%}",
        )
    return table


def render_metrics_table(report: BatchReport, title: str | None = None) -> str:
    return _render(metrics_table(report.metrics, title))


def online_table(summaries: Iterable[OnlineSummary], title: str | None = None) -> Table:
    table = Table(title=title, show_header=True, header_style="bold magenta")
    table.add_column("Method", style="cyan")
    table.add_column("Steps", justify="right")
    table.add_column("E_N", justify="right")
    table.add_column("LEP_N / EP_N", justify="right")
    table.add_column("UEP_N", justify="right")
    table.add_column("Inside", justify="center")
    table.add_column("p-value", justify="right")
    for s in summaries:
        low = s.lep if s.lep is not None else s.ep
        table.add_row(
            s.method,
            str(s.steps),
            str(s.errors),
            f"{low:.2f}",
            "-" if s.uep is None else f"{s.uep:.2f}",
            "-" if s.contained is None else ("[green]yes[/green]" if s.contained else "[red]no[/red]"),
            "-" if s.p_value is None else f"{s.p_value:.3g}",
        )
    return table
