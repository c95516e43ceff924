"""Effect-estimation errors and identification diagnostics."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .gaussian import kl_diag_gaussians
from .model import encode, prior


def _effects(y0, y1, tau_hat):
    y0, y1, tau_hat = (np.asarray(a, dtype=np.float64) for a in (y0, y1, tau_hat))
    if not (y0.shape == y1.shape == tau_hat.shape):
        raise ValueError(f"shape mismatch: {y0.shape}, {y1.shape}, {tau_hat.shape}")
    if y0.size == 0:
        raise ValueError("empty input")
    return y1 - y0, tau_hat


def eps_ate(y0, y1, tau_hat):
    """|mean(y1 - y0) - mean(tau_hat)|."""
    ite, tau_hat = _effects(y0, y1, tau_hat)
    return float(np.abs(np.mean(ite) - np.mean(tau_hat)))


def pehe(y0, y1, tau_hat):
    """Mean squared error of per-unit effects; take the square root for sqrt-PEHE."""
    ite, tau_hat = _effects(y0, y1, tau_hat)
    return float(np.mean((ite - tau_hat) ** 2))


def root_pehe(y0, y1, tau_hat):
    return float(np.sqrt(pehe(y0, y1, tau_hat)))


@dataclass
class RecoveryStats:
    slope: list
    intercept: list
    r2_pooled: float
    r2_t0: float
    r2_t1: float
    full_linear: bool = False


def _r2(resid, target):
    ss_tot = np.sum((target - target.mean(axis=0)) ** 2, axis=0)
    ss_res = np.sum(resid ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(ss_tot > 0, 1.0 - ss_res / ss_tot, 0.0)
    return float(np.clip(np.mean(r2), 0.0, 1.0))


def affine_recovery(z_rec, w_true, t, full_linear=False):
    """Least-squares fit ``z_rec ~ diag(a) w_true + b`` pooled over both groups.

    Per-group R^2 reuses the pooled map; values are averaged over latent
    coordinates and clipped to [0, 1].  ``full_linear=True`` fits a full
    matrix instead of a diagonal one.  Returns ``None`` when dimensions differ.
    """
    z = np.asarray(z_rec, dtype=np.float64)
    w = np.asarray(w_true, dtype=np.float64)
    z = z.reshape(len(z), -1)
    w = w.reshape(len(w), -1)
    t = np.asarray(t).reshape(-1)
    if z.shape != w.shape:
        return None
    if full_linear:
        design = np.column_stack([w, np.ones(len(w))])
        coef, *_ = np.linalg.lstsq(design, z, rcond=None)
        fitted = design @ coef
        slope, intercept = coef[:-1].tolist(), coef[-1].tolist()
    else:
        wc = w - w.mean(axis=0)
        zc = z - z.mean(axis=0)
        denom = np.sum(wc ** 2, axis=0)
        a = np.where(denom > 0, np.sum(wc * zc, axis=0) / np.where(denom > 0, denom, 1.0), 0.0)
        b = z.mean(axis=0) - a * w.mean(axis=0)
        fitted = w * a + b
        slope, intercept = a.tolist(), b.tolist()
    resid = z - fitted
    groups = []
    for arm in (0, 1):
        mask = t == arm
        groups.append(_r2(resid[mask], z[mask]) if mask.sum() >= 2 else float("nan"))
    return RecoveryStats(slope, intercept, _r2(resid, z), groups[0], groups[1], full_linear)


@dataclass
class ImbalanceStats:
    per_unit: np.ndarray
    mean: float
    median: float
    max: float
    approximation: str = "q_t(z|x) approximated by the encoder at the factual y for both t"


def imbalance_from_posteriors(q0, q1):
    """sqrt(KL(q0||q1)/2) + sqrt(KL(q1||q0)/2), row-wise."""
    kl01 = np.maximum(kl_diag_gaussians(q0, q1), 0.0)
    kl10 = np.maximum(kl_diag_gaussians(q1, q0), 0.0)
    return np.sqrt(kl01 / 2.0) + np.sqrt(kl10 / 2.0)


def conditional_imbalance(model, dataset):
    """Per-unit conditional imbalance between the two treatment-conditioned posteriors."""
    n = len(dataset)
    q = [encode(model, dataset.x, dataset.y, np.full(n, arm)) for arm in (0, 1)]
    d = imbalance_from_posteriors(*q)
    return ImbalanceStats(d, float(np.mean(d)), float(np.median(d)), float(np.max(d)))


@dataclass
class MetricsReport:
    mode: str
    eps_ate: float
    pehe: float
    root_pehe: float
    recovery: RecoveryStats | None = None
    recovery_posterior: RecoveryStats | None = None
    imbalance: dict | None = None
    notes: str = ""

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def evaluate(model, dataset, estimates, with_diagnostics=True):
    """Build a :class:`MetricsReport` for ``estimates`` computed on ``dataset``.

    The effect target is ``mu1 - mu0`` when the dataset carries noiseless
    means, otherwise the sampled ``y1 - y0``.
    """
    truth = dataset.true_effect()
    zeros = np.zeros_like(truth)
    report = MetricsReport(estimates.mode, eps_ate(zeros, truth, estimates.tau_hat),
                           pehe(zeros, truth, estimates.tau_hat),
                           root_pehe(zeros, truth, estimates.tau_hat))
    if dataset.mu0 is None:
        report.notes = "PEHE against sampled potential outcomes (includes outcome noise)"
    if model is not None and with_diagnostics:
        if dataset.w is not None and dataset.w.shape[1] == model.dim_z:
            report.recovery = affine_recovery(prior(model, dataset.x).mean, dataset.w, dataset.t)
            post = encode(model, dataset.x, dataset.y, dataset.t).mean
            report.recovery_posterior = affine_recovery(post, dataset.w, dataset.t)
        elif dataset.w is not None:
            report.notes += "; affine recovery skipped: dim(Z) != dim(W)"
        imb = conditional_imbalance(model, dataset)
        report.imbalance = {"mean": imb.mean, "median": imb.median, "max": imb.max,
                            "approximation": imb.approximation}
    return report
