"""IHDP semi-synthetic benchmark: loading, preprocessing and the replication loop.

Two published layouts are understood:

* CSV, one file per replication (``ihdp_npci_<r>.csv``, no header, 30 columns:
  treatment, factual y, counterfactual y, mu0, mu1, x1..x25);
* NPZ arrays with a trailing replication axis (``ihdp_npci_1-1000.train.npz``
  and its ``.test.npz`` sibling, keys ``x, t, yf, ycf, mu0, mu1``).  Train and
  test files are concatenated, giving the full 747 units.

The data is not bundled; pass the path of a directory or file you downloaded.
"""
from __future__ import annotations

import csv
import glob
import json
import os
from dataclasses import dataclass

import numpy as np

from .data import Dataset, concat_datasets
from .dgp import split
from .estimation import cate
from .metrics import evaluate
from .rng import derive_seed, make_rng
from .training import init_model, train

CSV_COLUMNS = ["t", "yf", "ycf", "mu0", "mu1"] + [f"x{j}" for j in range(1, 26)]
NPZ_KEYS = ["x", "t", "yf", "ycf", "mu0", "mu1"]
SPLIT_RATIOS = (0.63, 0.27, 0.10)
DIM_Z = 10


class IhdpDataMissing(FileNotFoundError):
    """Raised when no IHDP files are found at the given path."""


def _resolve(path):
    """Return ("npz", [train, test?]) or ("csv", sorted files)."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise IhdpDataMissing(f"IHDP data not found at {path!r}")
    if os.path.isdir(path):
        npz = sorted(glob.glob(os.path.join(path, "*.train.npz")))
        if npz:
            path = npz[0]
        else:
            files = glob.glob(os.path.join(path, "ihdp_npci_*.csv"))
            if not files:
                raise IhdpDataMissing(f"no ihdp_npci_*.csv or *.train.npz files in {path!r}")
            return "csv", sorted(files, key=_csv_index)
    if path.endswith(".npz"):
        test = path.replace(".train.npz", ".test.npz")
        return "npz", [path] + ([test] if test != path and os.path.exists(test) else [])
    return "csv", [path]


def _csv_index(name):
    stem = os.path.splitext(os.path.basename(name))[0]
    tail = stem.rsplit("_", 1)[-1]
    return int(tail) if tail.isdigit() else 0


def n_replications(path):
    kind, files = _resolve(path)
    if kind == "csv":
        return len(files)
    with np.load(files[0]) as f:
        return int(f["t"].shape[1]) if f["t"].ndim == 2 else 1


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty file")
    table = np.empty((len(rows), len(CSV_COLUMNS)))
    for i, row in enumerate(rows):
        if len(row) != len(CSV_COLUMNS):
            missing = CSV_COLUMNS[len(row):] if len(row) < len(CSV_COLUMNS) else []
            raise ValueError(f"{path}: row {i} has {len(row)} columns, expected {len(CSV_COLUMNS)}"
                             + (f" (missing column {missing[0]!r})" if missing else ""))
        for j, cell in enumerate(row):
            try:
                table[i, j] = float(cell)
            except ValueError:
                raise ValueError(f"{path}: column {CSV_COLUMNS[j]!r} is not numeric at row {i}: "
                                 f"{cell!r}") from None
    return {"t": table[:, 0], "yf": table[:, 1], "ycf": table[:, 2], "mu0": table[:, 3],
            "mu1": table[:, 4], "x": table[:, 5:]}


def _read_npz(path, replication):
    with np.load(path) as f:
        missing = [k for k in NPZ_KEYS if k not in f.files]
        if missing:
            raise ValueError(f"{path}: missing column {missing[0]!r}")
        reps = f["t"].shape[1] if f["t"].ndim == 2 else 1
        if not 0 <= replication < reps:
            raise IndexError(f"replication {replication} out of range; {path} holds {reps}")
        out = {}
        for k in NPZ_KEYS:
            a = f[k]
            out[k] = a[..., replication] if a.ndim == (3 if k == "x" else 2) else a
    return out


def _to_dataset(cols, source):
    t = np.asarray(cols["t"], dtype=np.float64)
    if not np.isin(t, (0.0, 1.0)).all():
        raise ValueError(f"{source}: column 't' must be 0/1")
    t = t.astype(np.int64)
    yf, ycf = cols["yf"], cols["ycf"]
    y0 = np.where(t == 1, ycf, yf)
    y1 = np.where(t == 1, yf, ycf)
    return Dataset(x=cols["x"], t=t, y=yf, y0=y0, y1=y1, mu0=cols["mu0"], mu1=cols["mu1"],
                   meta={"source": source})


def load_ihdp(path, replication=0):
    """Raw (unstandardized) IHDP replication ``replication`` (0-based) as a Dataset."""
    kind, files = _resolve(path)
    if kind == "csv":
        if not 0 <= replication < len(files):
            raise IndexError(f"replication {replication} out of range; found {len(files)} CSV files")
        return _to_dataset(_read_csv(files[replication]), files[replication])
    parts = [_to_dataset(_read_npz(f, replication), f) for f in files]
    return concat_datasets(parts)


def continuous_columns(x):
    """Columns taking more than two distinct values (the rest are binary indicators)."""
    return np.array([len(np.unique(x[:, j])) > 2 for j in range(x.shape[1])])


def standardize(train_set, *others):
    """Z-score continuous covariates with statistics of ``train_set``."""
    cont = continuous_columns(train_set.x)
    mean = np.where(cont, train_set.x.mean(axis=0), 0.0)
    std = train_set.x.std(axis=0)
    std = np.where(cont & (std > 0), std, 1.0)
    return tuple(d.with_x((d.x - mean) / std) for d in (train_set, *others))


def prepare(dataset, rng):
    """Split 63:27:10 and standardize; returns (train, val, test)."""
    return standardize(*split(dataset, SPLIT_RATIOS, rng))


@dataclass
class IhdpSummary:
    rows: list            # (replication, mode, eps_ate, root_pehe)
    summary: dict         # mode -> metric -> {"mean", ["se"]}
    n_replications: int

    def to_json(self):
        return json.dumps({"n_replications": self.n_replications, "summary": self.summary},
                          indent=2)


def summarize(values):
    """Mean and standard error; the SE is omitted for a single value."""
    v = np.asarray(values, dtype=np.float64)
    out = {"mean": float(np.mean(v))}
    if len(v) > 1:
        out["se"] = float(np.std(v, ddof=1) / np.sqrt(len(v)))
    return out


def run_replication(cfg, path, replication, dim_z=DIM_Z, beta=1.0):
    ds = load_ihdp(path, replication)
    seed = derive_seed(cfg.seed, "ihdp", replication)
    rng = make_rng(seed)
    tr, va, te = prepare(ds, rng)
    model = init_model(rng, (ds.dim_x, dim_z, ds.dim_y), cfg.net_preset, beta, heads=cfg.heads)
    model, _ = train(model, tr, va, cfg.train_config(beta, seed), rng=rng)
    sets = {"post": concat_datasets([tr, va]), "pre": te}
    out = {}
    for mode in cfg.mode:
        est = cate(model, sets[mode], mode=mode, L=cfg.L, seed=derive_seed(seed, "mc"))
        out[mode] = evaluate(model, sets[mode], est, with_diagnostics=False)
    return out


def run_ihdp(cfg, path, replications, out_dir=None, dim_z=DIM_Z, beta=1.0):
    """Train and evaluate on the first ``replications`` replications.

    Post-treatment metrics use train and validation units, pre-treatment metrics
    the test units; the PEHE target is ``mu1 - mu0``.
    """
    available = n_replications(path)
    if replications < 1:
        raise ValueError("need at least one replication")
    if replications > available:
        raise ValueError(f"asked for {replications} replications, {path!r} holds {available}")
    rows = []
    for r in range(replications):
        for mode, rep in run_replication(cfg, path, r, dim_z, beta).items():
            rows.append((r, mode, rep.eps_ate, rep.root_pehe))
    summary = {}
    for mode in cfg.mode:
        sel = [row for row in rows if row[1] == mode]
        summary[mode] = {"eps_ate": summarize([row[2] for row in sel]),
                         "root_pehe": summarize([row[3] for row in sel])}
    result = IhdpSummary(rows, summary, replications)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        cfg.write(os.path.join(out_dir, "config.txt"))
        with open(os.path.join(out_dir, "ihdp_runs.csv"), "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["replication", "mode", "eps_ate", "root_pehe"])
            for r, mode, e, p in rows:
                wr.writerow([r, mode, format(e, ".17g"), format(p, ".17g")])
        with open(os.path.join(out_dir, "ihdp_summary.json"), "w") as fh:
            fh.write(result.to_json())
    return result
