"""Parameter sweeps over (N, v) and result serialisation."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import SimConfig
from .engine import Simulation
from .metrics import finalize

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CSV_COLUMNS = ["N", "v_kph", "seed", "frame_loss_rate", "call_drop_rate", "call_block_rate", "p1", "p2", "p3plus"]
METRICS = CSV_COLUMNS[3:]


def run_cell(cfg: SimConfig, fast: bool = True) -> dict:
    """One run reduced to a result row (plus the raw counters)."""
    record = Simulation(cfg, fast=fast).run()
    row = {"N": cfg.N, "v_kph": cfg.v_kph, "seed": cfg.seed}
    row.update(finalize(record))
    row["counts"] = record.as_dict()
    return row


def _safe_cell(cfg: SimConfig) -> dict:
    try:
        return run_cell(cfg)
    except Exception as exc:  # reported per cell, the sweep keeps going
        return {"N": cfg.N, "v_kph": cfg.v_kph, "seed": cfg.seed, "error": f"{type(exc).__name__}: {exc}"}


def sweep(grid_n, grid_v, base: SimConfig, reps: int = 5, workers: int = 1) -> list:
    """Run every (N, v, seed) cell; seeds are ``base.seed .. base.seed + reps - 1``.

    Rows come back in grid order regardless of ``workers``. A failing cell
    yields a row with an ``error`` field instead of metrics.
    """
    grid_n, grid_v = list(grid_n), list(grid_v)
    if not grid_n or not grid_v or reps < 1:
        raise ValueError("sweep needs at least one N, one v and one replication")
    cfgs = [base.replace(N=n, v_kph=v, seed=base.seed + r) for n in grid_n for v in grid_v for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_safe_cell, cfgs))
    else:
        rows = []
        for i, c in enumerate(cfgs, 1):
            rows.append(_safe_cell(c))
            log.info("cell %d/%d done: N=%d v=%g seed=%d", i, len(cfgs), c.N, c.v_kph, c.seed)
    for row in rows:
        if "error" in row:
            log.warning("cell N=%s v=%s seed=%s failed: %s", row["N"], row["v_kph"], row["seed"], row["error"])
    return rows


def summarize(rows) -> list:
    """Per-(N, v) mean and sample spread of every metric over the successful replications."""
    cells = {}
    for row in rows:
        cells.setdefault((row["N"], row["v_kph"]), []).append(row)
    out = []
    for (n, v), group in cells.items():
        ok = [r for r in group if "error" not in r]
        entry = {"N": n, "v_kph": v, "reps": len(ok), "failed": len(group) - len(ok)}
        for m in METRICS:
            vals = np.array([r[m] for r in ok], dtype=float)
            entry[f"{m}_mean"] = float(vals.mean()) if len(vals) else float("nan")
            entry[f"{m}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out.append(entry)
    return out


def format_csv(rows) -> str:
    """CSV text with the fixed column set; failed cells are left out."""
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        if "error" in row:
            continue
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def format_records(rows) -> str:
    """One JSON object per line, each tagged with the schema version."""
    return "".join(json.dumps({"schema_version": SCHEMA_VERSION, **row}, sort_keys=True) + "\n" for row in rows)


def emit_results(rows, path, fmt: str = "csv") -> None:
    if fmt == "csv":
        text = format_csv(rows)
    elif fmt == "records":
        text = format_records(rows)
    else:
        raise ValueError(f"unknown format {fmt!r} (expected 'csv' or 'records')")
    Path(path).write_text(text)


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["N"] = int(row["N"])
        row["seed"] = int(row["seed"])
        for c in ["v_kph"] + METRICS:
            row[c] = float(row[c])
    return rows
