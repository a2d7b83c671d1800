from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from src.cli.config import ExperimentConfig

log = logging.getLogger(__name__)

Row = Dict[str, Any]


@dataclass
class ExperimentResult:
    """
    rows go to <kind>.csv, each entry of tables to <kind>_<name>.csv.
    ok is False on a converse violation or a failed self-check.
    """

    kind: str
    rows: List[Row]
    summary: List[str]
    ok: bool = True
    tables: Dict[str, List[Row]] = field(default_factory=dict)
    plot_columns: List[str] = field(default_factory=list)


def fmt(value: Any) -> str:
    """
    Stable text for a CSV cell: 12 significant digits for floats.
    """
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (tuple, list, np.ndarray)):
        return " ".join(fmt(v) for v in value)
    return str(value)


def _header(rows: List[Row]) -> List[str]:
    names: List[str] = []
    for row in rows:
        for key in row:
            if key not in names:
                names.append(key)
    return names


def write_csv(path: Path, rows: List[Row], cfg: ExperimentConfig) -> Path:
    """
    Every row carries the config hash and seed so a file identifies its run.
    """
    stamp = {"config_hash": cfg.config_hash(), "seed": cfg.seed}
    stamped = [{**row, **stamp} for row in rows]
    names = _header(stamped) if stamped else list(stamp)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(names)
        for row in stamped:
            writer.writerow([fmt(row.get(name)) for name in names])
    return path


def write_plot_data(path: Path, rows: List[Row], columns: List[str]) -> Path:
    """
    Whitespace-separated columns with a '#' header line (gnuplot reads it as is).
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        f.write("# " + " ".join(columns) + "\n")
        for row in rows:
            f.write(" ".join(fmt(row.get(c)) for c in columns) + "\n")
    return path


def summary_text(result: ExperimentResult, cfg: ExperimentConfig) -> str:
    lines = [
        f"experiment: {result.kind}",
        f"config_hash: {cfg.config_hash()}",
        f"seed: {cfg.seed}",
        f"status: {'ok' if result.ok else 'FAILED'}",
        "",
    ]
    lines += result.summary
    return "\n".join(lines) + "\n"


def emit(result: ExperimentResult, cfg: ExperimentConfig, out_dir: Optional[Path] = None) -> List[Path]:
    out = Path(out_dir if out_dir is not None else cfg.output.out_dir)
    stem = result.kind.replace("-", "_")
    written = [write_csv(out / f"{stem}.csv", result.rows, cfg)]
    for name, rows in result.tables.items():
        written.append(write_csv(out / f"{stem}_{name}.csv", rows, cfg))
    if cfg.output.write_plot_data and result.plot_columns:
        written.append(write_plot_data(out / f"{stem}.dat", result.rows, result.plot_columns))

    summary = out / "summary.txt"
    summary.write_text(summary_text(result, cfg), encoding="utf-8")
    written.append(summary)
    log.info("wrote %d files to %s", len(written), out)
    return written
