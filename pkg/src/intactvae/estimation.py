"""Potential-outcome, CATE and ATE estimates from a trained model.

Post-treatment estimates sample ``z`` from the encoder fed with the unit's
factual ``(x, y, t)``; the counterfactual assignment only enters the decoder.
Pre-treatment estimates sample ``z`` from the prior ``p(z|x)`` instead.

Each unit draws its Monte Carlo noise from its own stream keyed by
``(seed, row contents)``, so estimates do not depend on row order and the same
``z`` draws are shared by both arms.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import decode, encode, prior
from .rng import make_rng, row_key

DEFAULT_MC_SAMPLES = 30


@dataclass
class CateEstimates:
    mu0_hat: np.ndarray
    mu1_hat: np.ndarray
    tau_hat: np.ndarray
    mode: str
    mc_samples: int

    def __len__(self):
        return len(self.tau_hat)

    def write_csv(self, path):
        d = self.tau_hat.shape[1]
        cols = ["mu0_hat", "mu1_hat", "tau_hat"]
        header = ["unit"] + (cols if d == 1 else [f"{c}_{j}" for c in cols for j in range(d)])
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(header)
            for i in range(len(self)):
                vals = np.concatenate([self.mu0_hat[i], self.mu1_hat[i], self.tau_hat[i]])
                wr.writerow([i] + [format(float(v), ".17g") for v in vals])


def read_estimates_csv(path, mode="post", mc_samples=0):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    table = np.array(rows[1:], dtype=np.float64).reshape(len(rows) - 1, len(header))
    d = (len(header) - 1) // 3
    mu0, mu1, tau = (table[:, 1 + k * d:1 + (k + 1) * d] for k in range(3))
    return CateEstimates(mu0, mu1, tau, mode, mc_samples)


def _unit_noise(seed, key, L, dim_z):
    return make_rng([int(seed), int(key)]).standard_normal((L, dim_z))


def _average_outcome(model, mean, var, noise, t_hat):
    z = mean + np.sqrt(var) * noise
    return decode(model, z, np.full(len(z), t_hat)).mean.mean(axis=0)


def estimate_po_post(model, dataset, i, t_hat, L=DEFAULT_MC_SAMPLES, seed=0):
    """mu_hat_{t_hat}(x_i) averaged over ``L`` posterior draws for unit ``i``."""
    if not 0 <= i < len(dataset):
        raise IndexError(f"unit {i} out of range for {len(dataset)} units")
    x, y, t = dataset.x[i], dataset.y[i], dataset.t[i]
    q = encode(model, x, y, t)
    noise = _unit_noise(seed, row_key(x, y, [t]), L, model.dim_z)
    return _average_outcome(model, q.mean, q.var, noise, t_hat)


def estimate_po_pre(model, x, t_hat, L=DEFAULT_MC_SAMPLES, seed=0):
    """mu_hat_{t_hat}(x) averaged over ``L`` prior draws; needs no outcome."""
    x = np.asarray(x, dtype=np.float64)
    p = prior(model, x)
    noise = _unit_noise(seed, row_key(x), L, model.dim_z)
    return _average_outcome(model, p.mean, p.var, noise, t_hat)


def cate(model, dataset, mode="post", L=DEFAULT_MC_SAMPLES, seed=0):
    """Estimates for every unit under both assignments."""
    if mode not in ("post", "pre"):
        raise ValueError(f"mode must be 'post' or 'pre', got {mode!r}")
    if L < 1:
        raise ValueError("L must be >= 1")
    n = len(dataset)
    if mode == "post":
        if dataset.y is None or dataset.t is None:
            raise ValueError("post-treatment estimation needs factual y and t")
        g = encode(model, dataset.x, dataset.y, dataset.t)
        keys = [row_key(dataset.x[i], dataset.y[i], [dataset.t[i]]) for i in range(n)]
    else:
        g = prior(model, dataset.x)
        keys = [row_key(dataset.x[i]) for i in range(n)]
    noise = np.stack([_unit_noise(seed, k, L, model.dim_z) for k in keys])  # (n, L, dz)
    z = (g.mean[:, None, :] + np.sqrt(g.var)[:, None, :] * noise).reshape(n * L, -1)
    mu = []
    for t_hat in (0, 1):
        out = decode(model, z, np.full(n * L, t_hat)).mean
        mu.append(out.reshape(n, L, -1).mean(axis=1))
    return CateEstimates(mu[0], mu[1], mu[1] - mu[0], mode, L)


def ate(estimates):
    if len(estimates) == 0:
        raise ValueError("no estimates")
    out = estimates.tau_hat.mean(axis=0)
    return float(out[0]) if out.size == 1 else out
