#!/usr/bin/env python3
"""
Aggregate the summaries of several runs (typically the seeds of a sweep) into a timing table.

Each run directory must hold the summary.json written by the CLI. The table has one row per algorithm and the
mean over runs of the shortest, longest and average time to S^c, plus the number of runs aggregated.
"""

import json
import sys
from pathlib import Path
from typing import Iterable, List, Union

import pandas as pd

from core.log import LOG


def load_summaries(run_dirs: Iterable[Union[str, Path]]) -> pd.DataFrame:
    """One row per (run, algorithm) with the timing statistics of that run."""
    rows: List[dict] = []
    for run_dir in run_dirs:
        summary_path = Path(run_dir) / "summary.json"
        if not summary_path.is_file():
            LOG.warning(f"Skipping {run_dir}: no summary.json")
            continue
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        for algorithm, stats in summary["timing"].items():
            rows.append({
                "run": str(run_dir),
                "seed": summary["config"].get("run_seed"),
                "algorithm": algorithm,
                "shortest": stats["shortest"],
                "longest": stats["longest"],
                "average": stats["average"],
                "unconverged": stats["unconverged"],
            })
    frame = pd.DataFrame(rows, columns=["run", "seed", "algorithm", "shortest", "longest", "average", "unconverged"])
    numeric = ["shortest", "longest", "average", "unconverged"]
    frame[numeric] = frame[numeric].apply(pd.to_numeric, errors="coerce")
    return frame


def summarize_runs(run_dirs: Iterable[Union[str, Path]]) -> pd.DataFrame:
    per_run = load_summaries(run_dirs)
    if per_run.empty:
        return pd.DataFrame(columns=["shortest", "longest", "average", "unconverged", "runs"])
    table = per_run.groupby("algorithm")[["shortest", "longest", "average", "unconverged"]].mean()
    table["runs"] = per_run.groupby("algorithm")["run"].nunique()
    return table


if __name__ == "__main__":
    if len(sys.argv) < 2:
        print("usage: summarize_runs.py RUN_DIR [RUN_DIR ...]", file=sys.stderr)
        sys.exit(1)
    print(summarize_runs(sys.argv[1:]).to_string())
