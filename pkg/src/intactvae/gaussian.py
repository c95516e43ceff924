"""Diagonal-Gaussian algebra shared by the prior, encoder and decoder.

Functions work on plain arrays and on :class:`~intactvae.autodiff.Tensor`
values alike.  A 1-D mean/var pair is a single distribution; a 2-D pair is a
batch of distributions (one per row) and reductions run over the last axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

VAR_FLOOR = 1e-4
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class DiagonalGaussian:
    mean: object
    var: object

    def __post_init__(self):
        if np.shape(ad.value(self.mean)) != np.shape(ad.value(self.var)):
            raise ValueError(
                f"mean and var shapes differ: {np.shape(ad.value(self.mean))} "
                f"vs {np.shape(ad.value(self.var))}")

    @property
    def dim(self):
        return np.shape(ad.value(self.mean))[-1]

    @property
    def std(self):
        return ad.sqrt(self.var)

    def detach(self):
        return DiagonalGaussian(ad.value(self.mean).copy(), ad.value(self.var).copy())


def positive_var(raw):
    """Map an unconstrained head output to a variance >= VAR_FLOOR."""
    return ad.softplus(raw) + VAR_FLOOR


def gaussian_sample(g, rng=None, noise=None):
    """Reparameterized draw ``mean + sqrt(var) * eps``.

    ``noise`` overrides the standard-normal ``eps`` (used to freeze the Monte
    Carlo noise in gradient checks).
    """
    if noise is None:
        noise = rng.standard_normal(np.shape(ad.value(g.mean)))
    return g.mean + ad.sqrt(g.var) * noise


def gaussian_log_density(g, x):
    """log N(x; mean, diag(var)), summed over the last axis."""
    resid = x - g.mean
    terms = ad.square(resid) / g.var + ad.log(g.var) + LOG_2PI
    return -0.5 * ad.sum(terms, axis=-1)


def kl_diag_gaussians(q, p):
    """Closed-form KL(q || p) for diagonal Gaussians, summed over the last axis."""
    ratio = q.var / p.var
    terms = ratio + ad.square(q.mean - p.mean) / p.var - 1.0 - ad.log(ratio)
    return 0.5 * ad.sum(terms, axis=-1)
