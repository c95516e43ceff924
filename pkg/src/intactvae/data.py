"""Observational datasets ``(X, T, Y)`` with optional ground truth, and CSV I/O."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np


def _col(a):
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(-1, 1) if a.ndim == 1 else a


@dataclass
class Dataset:
    """Covariates ``x`` (n, m), binary treatment ``t`` (n,), outcome ``y`` (n, d).

    Synthetic data also carries both potential outcomes ``y0``/``y1``, the
    true latent ``w`` and the propensity ``p(t=1|x)``.  Semi-synthetic
    benchmarks may carry the noiseless outcome means ``mu0``/``mu1``.
    """
    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    y0: np.ndarray | None = None
    y1: np.ndarray | None = None
    w: np.ndarray | None = None
    propensity: np.ndarray | None = None
    mu0: np.ndarray | None = None
    mu1: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.t = np.asarray(self.t).astype(np.int64).reshape(-1)
        self.y = _col(self.y)
        for name in ("y0", "y1", "w", "mu0", "mu1"):
            if getattr(self, name) is not None:
                setattr(self, name, _col(getattr(self, name)))
        if self.propensity is not None:
            self.propensity = np.asarray(self.propensity, dtype=np.float64).reshape(-1)
        n = len(self.x)
        for name in ("t", "y", "y0", "y1", "w", "propensity", "mu0", "mu1"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise ValueError(f"{name} has {len(arr)} rows, x has {n}")
        if not np.isin(self.t, (0, 1)).all():
            raise ValueError("treatment must be 0/1")
        if self.has_potential_outcomes:
            chosen = np.where(self.t[:, None] == 1, self.y1, self.y0)
            bad = np.flatnonzero(np.any(chosen != self.y, axis=1))
            if bad.size:
                raise ValueError(f"factual y differs from the selected potential outcome at row {bad[0]}")

    def __len__(self):
        return len(self.x)

    @property
    def dim_x(self):
        return self.x.shape[1]

    @property
    def dim_y(self):
        return self.y.shape[1]

    @property
    def has_potential_outcomes(self):
        return self.y0 is not None and self.y1 is not None

    def true_effect(self):
        """Per-unit effect used for evaluation: ``mu1 - mu0`` when known, else ``y1 - y0``."""
        if self.mu0 is not None and self.mu1 is not None:
            return self.mu1 - self.mu0
        if self.has_potential_outcomes:
            return self.y1 - self.y0
        raise ValueError("dataset has no ground-truth potential outcomes")

    def subset(self, idx):
        idx = np.asarray(idx)
        kw = {}
        for name in ("x", "t", "y", "y0", "y1", "w", "propensity", "mu0", "mu1"):
            arr = getattr(self, name)
            kw[name] = None if arr is None else arr[idx]
        return Dataset(**kw, meta=dict(self.meta))

    def with_x(self, x):
        return replace(self, x=x, meta=dict(self.meta))


def concat_datasets(parts):
    kw = {}
    for name in ("x", "t", "y", "y0", "y1", "w", "propensity", "mu0", "mu1"):
        arrs = [getattr(p, name) for p in parts]
        kw[name] = None if any(a is None for a in arrs) else np.concatenate(arrs)
    return Dataset(**kw, meta=dict(parts[0].meta))


def _fmt(v):
    return format(float(v), ".17g")


def write_dataset_csv(ds, path):
    """Header ``x_0..x_{m-1},t,y[,y0,y1][,propensity][,w_0..][,mu0,mu1]``."""
    if ds.dim_y != 1:
        raise ValueError("CSV layout holds univariate outcomes only")
    header = [f"x_{j}" for j in range(ds.dim_x)] + ["t", "y"]
    cols = [ds.x[:, j] for j in range(ds.dim_x)] + [ds.t, ds.y[:, 0]]
    if ds.has_potential_outcomes:
        header += ["y0", "y1"]
        cols += [ds.y0[:, 0], ds.y1[:, 0]]
    if ds.propensity is not None:
        header.append("propensity")
        cols.append(ds.propensity)
    if ds.w is not None:
        header += [f"w_{j}" for j in range(ds.w.shape[1])]
        cols += [ds.w[:, j] for j in range(ds.w.shape[1])]
    if ds.mu0 is not None and ds.mu1 is not None:
        header += ["mu0", "mu1"]
        cols += [ds.mu0[:, 0], ds.mu1[:, 0]]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for i in range(len(ds)):
            wr.writerow([str(int(c[i])) if name == "t" else _fmt(c[i])
                         for name, c in zip(header, cols)])


def read_dataset_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    for required in ("t", "y"):
        if required not in header:
            raise ValueError(f"{path}: missing column {required!r}")
    try:
        table = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric or ragged rows ({exc})") from None
    col = {name: table[:, i] for i, name in enumerate(header)}

    def block(prefix):
        names = sorted((h for h in header if h.startswith(prefix + "_")),
                       key=lambda h: int(h.split("_")[1]))
        return np.column_stack([col[h] for h in names]) if names else None

    x = block("x")
    if x is None:
        raise ValueError(f"{path}: no covariate columns x_0..")
    return Dataset(x=x, t=col["t"], y=col["y"], y0=col.get("y0"), y1=col.get("y1"),
                   w=block("w"), propensity=col.get("propensity"),
                   mu0=col.get("mu0"), mu1=col.get("mu1"))
