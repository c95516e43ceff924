"""Grid sweeps over synthetic DGPs: one training run per (dim_w, omega, beta, replication).

Seed derivation (all through :func:`derive_seed`, so the master seed fixes
everything)::

    dgp_seed   = derive_seed(master, "dgp", replication)
    spec rng   = derive_seed(dgp_seed, "spec")    # DGP parameters
    data rng   = derive_seed(dgp_seed, "data")    # sample of n units
    train rng  = derive_seed(dgp_seed, "train")   # split, init, minibatches, validation noise
    MC seed    = derive_seed(dgp_seed, "mc")      # estimation draws

A replication therefore reuses the same random DGP across the whole
``dim_w``/``omega``/``beta`` grid, so grid points are compared on common
random numbers.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from .config import ExperimentConfig
from .data import concat_datasets
from .dgp import generate, sample_dgp_spec, split
from .estimation import cate
from .metrics import evaluate
from .model import save_model
from .rng import derive_seed, make_rng
from .training import init_model, train

log = logging.getLogger(__name__)

AGGREGATE_COLUMNS = ["dgp_seed", "dim_w", "omega", "beta", "mode",
                     "eps_ate", "root_pehe", "r2_pooled", "d_mean"]


@dataclass(frozen=True)
class Cell:
    index: int
    dim_w: int
    omega: float
    beta: float
    replication: int
    dgp_seed: int


@dataclass
class RunRecord:
    cell: int
    config_hash: str
    dgp_seed: int
    dim_w: int
    omega: float
    beta: float
    replication: int
    status: str = "ok"
    error: str = ""
    reports: dict = field(default_factory=dict)   # mode -> MetricsReport as dict
    train: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    artifacts: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, allow_nan=True)


@dataclass
class SweepResult:
    records: list
    aggregate_path: str

    @property
    def n_failed(self):
        return sum(r.status != "ok" for r in self.records)

    @property
    def exit_code(self):
        return 0 if self.n_failed == 0 else 1


def dgp_seed(master, replication):
    return derive_seed(master, "dgp", replication)


def cells(cfg):
    grid = itertools.product(cfg.dim_w, cfg.omega, range(cfg.replications), cfg.beta)
    return [Cell(i, dw, om, b, rep, dgp_seed(cfg.seed, rep))
            for i, (dw, om, rep, b) in enumerate(grid)]


def simulate(cfg, cell):
    """Sample the cell's DGP and draw ``cfg.n`` units from it."""
    spec = sample_dgp_spec(make_rng(derive_seed(cell.dgp_seed, "spec")), cell.dim_w,
                           cell.omega, cfg.noise_mode, dim_x=cfg.dim_x, seed=cell.dgp_seed)
    data = generate(spec, cfg.n, make_rng(derive_seed(cell.dgp_seed, "data")))
    return data


def fit_and_score(cfg, cell, data, out_dir=None):
    """Train on a third, estimate post on train+val and pre on test; return (reports, info)."""
    seed = derive_seed(cell.dgp_seed, "train")
    rng = make_rng(seed)
    tr, va, te = split(data, [1 / 3, 1 / 3, 1 / 3], rng)
    dims = (data.dim_x, cfg.latent_dim(cell.dim_w), data.dim_y)
    model = init_model(rng, dims, cfg.net_preset, cell.beta, heads=cfg.heads)
    model, history = train(model, tr, va, cfg.train_config(cell.beta, seed), rng=rng)
    mc_seed = derive_seed(cell.dgp_seed, "mc")
    eval_sets = {"post": concat_datasets([tr, va]), "pre": te}
    reports = {}
    for mode in cfg.mode:
        est = cate(model, eval_sets[mode], mode=mode, L=cfg.L, seed=mc_seed)
        reports[mode] = evaluate(model, eval_sets[mode], est)
    info = {"best_epoch": history.best_epoch, "epochs_run": history.epochs_run,
            "stop_reason": history.stop_reason,
            "best_val_elbo": float(max(history.val_elbo))}
    artifacts = []
    if out_dir is not None and cfg.save_models:
        stem = os.path.join(out_dir, f"cell_{cell.index:05d}")
        save_model(model, stem + "_model.json")
        history.write_csv(stem + "_history.csv")
        artifacts += [stem + "_model.json", stem + "_history.csv"]
    return reports, info, artifacts


def run_cell(cfg, runs_dir, cell):
    start = time.perf_counter()
    rec = RunRecord(cell.index, cfg.digest(), cell.dgp_seed, cell.dim_w, cell.omega,
                    cell.beta, cell.replication)
    try:
        data = simulate(cfg, cell)
        reports, rec.train, rec.artifacts = fit_and_score(cfg, cell, data, runs_dir)
        rec.reports = {mode: r.to_dict() for mode, r in reports.items()}
    except Exception as exc:  # a failed cell must not stop the sweep
        rec.status, rec.error = "failed", f"{type(exc).__name__}: {exc}"
    rec.wall_clock_s = time.perf_counter() - start
    if runs_dir is not None:
        path = os.path.join(runs_dir, f"cell_{cell.index:05d}.json")
        rec.artifacts.insert(0, path)
        with open(path, "w") as fh:
            fh.write(rec.to_json())
    return rec


def _metric_row(rec, mode):
    nan = float("nan")
    rep = rec.reports.get(mode)
    if rep is None:
        return [nan] * 4
    recovery = rep["recovery_posterior"] if mode == "post" else rep["recovery"]
    r2 = recovery["r2_pooled"] if recovery else nan
    d = rep["imbalance"]["mean"] if rep.get("imbalance") else nan
    return [rep["eps_ate"], rep["root_pehe"], r2, d]


def aggregate_rows(records, modes):
    """One row per record and mode, in cell order.

    ``r2_pooled`` is the affine-recovery R^2 of the representation each mode
    uses: posterior means for ``post``, prior means for ``pre``.
    """
    rows = []
    for rec in sorted(records, key=lambda r: r.cell):
        for mode in modes:
            rows.append([rec.dgp_seed, rec.dim_w, rec.omega, rec.beta, mode] + _metric_row(rec, mode))
    return rows


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_aggregate(rows, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(AGGREGATE_COLUMNS)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])


def read_aggregate(path):
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        missing = [c for c in AGGREGATE_COLUMNS if c not in (rd.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing aggregate column(s) {missing}")
        return list(rd)


def run_sweep(cfg: ExperimentConfig, out_dir=None, jobs=1):
    """Run every cell, write ``config.txt``, ``runs/*.json`` and ``aggregate.csv``.

    Cells run in a pool of ``jobs`` worker processes; results are merged by
    cell index so the output does not depend on completion order.  Failed
    cells are recorded (NaN metrics in the aggregate) and the sweep goes on.
    """
    out_dir = cfg.out if out_dir is None else out_dir
    runs_dir = os.path.join(out_dir, "runs")
    os.makedirs(runs_dir, exist_ok=True)
    cfg.write(os.path.join(out_dir, "config.txt"))
    todo = cells(cfg)
    work = partial(run_cell, cfg, runs_dir)
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(todo))) as pool:
            records = list(pool.map(work, todo))
    else:
        records = [work(c) for c in todo]
    for rec in records:
        if rec.status != "ok":
            log.warning("cell %d failed: %s", rec.cell, rec.error)
    path = os.path.join(out_dir, "aggregate.csv")
    write_aggregate(aggregate_rows(records, cfg.mode), path)
    return SweepResult(records, path)


def baseline_root_pehe(dataset, reference=None):
    """sqrt-PEHE of the constant-effect baseline.

    The constant is the difference of factual group means on ``reference``
    (defaults to ``dataset``) and is scored against the true effects of ``dataset``.
    """
    ref = dataset if reference is None else reference
    y, t = ref.y[:, 0], ref.t
    tau = float(np.mean(y[t == 1]) - np.mean(y[t == 0]))
    truth = dataset.true_effect()[:, 0]
    return float(np.sqrt(np.mean((truth - tau) ** 2)))
