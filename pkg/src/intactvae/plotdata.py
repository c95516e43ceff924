"""Long-format plot data from a sweep's aggregate CSV.

Each output file holds one panel: ``x_var,x_value,beta,mean,stderr`` with the
mean and standard error (sd / sqrt(n)) of a metric over replications.
"""
from __future__ import annotations

import csv
import math
import os
from collections import defaultdict

from .sweep import read_aggregate

PLOT_COLUMNS = ["x_var", "x_value", "beta", "mean", "stderr"]
METRICS = ("root_pehe", "eps_ate")
MODES = ("post", "pre")


def mean_stderr(values):
    """Sample mean and sd/sqrt(n) (ddof=1); stderr is ``nan`` for n < 2."""
    n = len(values)
    m = math.fsum(values) / n
    if n < 2:
        return m, float("nan")
    var = math.fsum((v - m) ** 2 for v in values) / (n - 1)
    return m, math.sqrt(var) / math.sqrt(n)


def _x_var(rows):
    for name in ("omega", "dim_w"):
        if len({float(r[name]) for r in rows}) > 1:
            return name
    return "omega"


def panel_rows(rows, metric, mode, x_var=None):
    """Group ``rows`` (aggregate dicts) by (x_value, beta) for one metric and mode.

    Rows with a non-finite metric (failed runs) are left out.
    """
    rows = [r for r in rows if r["mode"] == mode]
    x_var = x_var or _x_var(rows)
    groups = defaultdict(list)
    for r in rows:
        v = float(r[metric])
        if math.isfinite(v):
            groups[(float(r[x_var]), float(r["beta"]))].append(v)
    out = []
    for (x, beta) in sorted(groups):
        m, se = mean_stderr(groups[(x, beta)])
        out.append([x_var, x, beta, m, se])
    return out


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else format(v, ".17g")
    return str(v)


def write_panel(rows, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(PLOT_COLUMNS)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])


def emit_plot_data(aggregate_path, out_dir, metrics=METRICS):
    """Write ``plot_<metric>_<mode>[_<other>=<v>].csv`` files; returns their paths.

    The x axis is ``omega`` if it varies in the aggregate, otherwise ``dim_w``.
    When both vary, one file is written per value of ``dim_w``.  An empty
    aggregate gives header-only files.
    """
    rows = read_aggregate(aggregate_path)
    os.makedirs(out_dir, exist_ok=True)
    x_var = _x_var(rows)
    other = "dim_w" if x_var == "omega" else "omega"
    other_values = sorted({r[other] for r in rows}, key=float)
    split_other = len(other_values) > 1
    modes = [m for m in MODES if any(r["mode"] == m for r in rows)] or list(MODES)
    paths = []
    for metric in metrics:
        for mode in modes:
            for value in (other_values if split_other else [None]):
                subset = rows if value is None else [r for r in rows if r[other] == value]
                name = f"plot_{metric}_{mode}" + (f"_{other}={value}" if value is not None else "")
                path = os.path.join(out_dir, name + ".csv")
                write_panel(panel_rows(subset, metric, mode, x_var), path)
                paths.append(path)
    return paths
