"""Random synthetic DGPs with a latent prognostic score and tunable overlap.

    X ~ N(mu, diag(sigma^2))
    W | X ~ N(h(X), diag(k(X)^2))
    T | X ~ Bernoulli(logistic(omega * l(X)))
    Y(t) | W ~ N(f_t(W) / C_t, g_t(W)^2)

``h``, ``k``, ``l`` are bias-free linear maps with standard-normal weights;
``f_t`` are bias-free leaky-ReLU networks (slope 0.5) of random depth whose
weights are uniform in (-1.1, -0.9).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset

OMEGA_GRID = (0.0, 6.0, 11.0, 16.0, 22.0)
NOISE_MODES = ("unit", "heteroscedastic")
LEAKY_SLOPE = 0.5
G_MAX = 2.0


@dataclass(frozen=True)
class DgpSpec:
    """Fully materialized generator.  ``f0``/``f1`` are lists of weight matrices.

    ``c0``/``c1`` (output scales) and ``g0_scale``/``g1_scale`` (noise-head
    normalizers) are ``None`` until fixed; :func:`generate` then computes them
    on the sample it draws.
    """
    mu: np.ndarray
    sigma: np.ndarray
    h_w: np.ndarray      # (dim_x, dim_w)
    k_w: np.ndarray      # (dim_x, dim_w)
    l_w: np.ndarray      # (dim_x,)
    omega: float
    f0: tuple
    f1: tuple
    noise_mode: str = "unit"
    c0: float | None = None
    c1: float | None = None
    g0_scale: float | None = None
    g1_scale: float | None = None
    seed: int | None = None

    @property
    def dim_x(self):
        return len(self.mu)

    @property
    def dim_w(self):
        return self.h_w.shape[1]

    def outcome_net(self, t):
        return self.f1 if t else self.f0

    def with_omega(self, omega):
        return replace(self, omega=float(omega))


def _leaky(h):
    return np.where(h > 0, h, LEAKY_SLOPE * h)


def _random_net(rng, dim_w, depth):
    sizes = [dim_w] * depth + [1]
    return tuple(rng.uniform(-1.1, -0.9, size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:]))


def raw_outcome(weights, w):
    """Unnormalized f_t(w) for rows of ``w``; returns shape (n,)."""
    h = w
    for i, mat in enumerate(weights):
        h = h @ mat
        if i < len(weights) - 1:
            h = _leaky(h)
    return h[:, 0]


def sample_dgp_spec(rng, dim_w, omega, noise_mode="unit", dim_x=30, seed=None):
    """Draw every random parameter of a DGP from ``rng``.

    Draw order: depths of f0 and f1, mu, sigma, l, h, k, weights of f0 and f1.
    Everything that does not depend on ``dim_w`` is drawn first, so one
    generator state gives the same covariates, propensity and network depths
    for every ``dim_w``; ``omega`` consumes no randomness at all.
    """
    if dim_w < 1 or omega < 0:
        raise ValueError("need dim_w >= 1 and omega >= 0")
    if noise_mode not in NOISE_MODES:
        raise ValueError(f"noise_mode must be one of {NOISE_MODES}")
    depths = [int(d) for d in rng.integers(3, 9, size=2)]
    mu = rng.uniform(-0.2, 0.2, dim_x)
    sigma = rng.uniform(0.0, 0.2, dim_x)
    sigma = np.where(sigma > 0, sigma, 0.2)  # the open interval excludes 0
    l_w = rng.standard_normal(dim_x)
    h_w = rng.standard_normal((dim_x, dim_w))
    k_w = rng.standard_normal((dim_x, dim_w))
    f0 = _random_net(rng, dim_w, depths[0])
    f1 = _random_net(rng, dim_w, depths[1])
    return DgpSpec(mu, sigma, h_w, k_w, l_w, float(omega), f0, f1, noise_mode, seed=seed)


def logistic(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def propensity(spec, x):
    return logistic(spec.omega * (x @ spec.l_w))


def _softplus(a):
    return np.logaddexp(0.0, a)


def calibrate(spec, w, t):
    """Fix C_t (std of f_t(W) over group t) and the noise normalizers on a sample."""
    out = {}
    for arm in (0, 1):
        group = w[t == arm] if np.sum(t == arm) >= 2 else w
        raw = raw_outcome(spec.outcome_net(arm), group)
        c = float(np.std(raw))
        c = c if c > 0 else 1.0
        out[f"c{arm}"] = c
        out[f"g{arm}_scale"] = float(np.max(_softplus(raw / c)))
    return replace(spec, **{k: v for k, v in out.items() if getattr(spec, k) is None})


def outcome_mean(spec, w, arm):
    return raw_outcome(spec.outcome_net(arm), w) / (spec.c1 if arm else spec.c0)


def outcome_std(spec, w, arm):
    if spec.noise_mode == "unit":
        return np.ones(len(w))
    scale = spec.g1_scale if arm else spec.g0_scale
    return G_MAX * _softplus(outcome_mean(spec, w, arm)) / scale


def generate(spec, n, rng):
    """Sample ``n`` units with both potential outcomes, W and the propensity.

    Draw order: X, W noise, T, Y(0) noise, Y(1) noise.  The returned dataset's
    ``meta["spec"]`` is the calibrated spec actually used.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x = spec.mu + spec.sigma * rng.standard_normal((n, spec.dim_x))
    w = x @ spec.h_w + np.abs(x @ spec.k_w) * rng.standard_normal((n, spec.dim_w))
    p = propensity(spec, x)
    t = (rng.uniform(size=n) < p).astype(np.int64)
    e0 = rng.standard_normal(n)
    e1 = rng.standard_normal(n)
    spec = calibrate(spec, w, t)
    y0 = outcome_mean(spec, w, 0) + outcome_std(spec, w, 0) * e0
    y1 = outcome_mean(spec, w, 1) + outcome_std(spec, w, 1) * e1
    y = np.where(t == 1, y1, y0)
    return Dataset(x=x, t=t, y=y, y0=y0, y1=y1, w=w, propensity=p, meta={"spec": spec})


def overlap_degree(dataset, threshold=1e-3):
    """Fraction of units whose smaller treatment probability is below ``threshold``."""
    if dataset.propensity is None:
        raise ValueError("overlap degree needs the true propensity (synthetic data only)")
    p = dataset.propensity
    return float(np.mean(np.minimum(p, 1.0 - p) < threshold))


def split(dataset, ratios, rng):
    """Shuffle rows and cut them into consecutive parts with the given ratios."""
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.ndim != 1 or np.any(ratios <= 0) or not np.isclose(ratios.sum(), 1.0):
        raise ValueError(f"ratios must be positive and sum to 1, got {ratios.tolist()}")
    n = len(dataset)
    cuts = np.round(np.cumsum(ratios)[:-1] * n).astype(int)
    parts = np.split(rng.permutation(n), cuts)
    if any(len(p) == 0 for p in parts):
        raise ValueError(f"ratios {ratios.tolist()} leave an empty split for {n} rows")
    return tuple(dataset.subset(np.sort(p)) for p in parts)


@dataclass(frozen=True)
class LinearGaussianToy:
    """1-D conjugate model with a closed-form marginal likelihood.

        x ~ N(0, 1);  z | x ~ N(a x, s^2);  y | z, t ~ N(b z + c t, noise^2)
        =>  y | x, t ~ N(a b x + c t, b^2 s^2 + noise^2)
    """
    a: float = 1.0
    s: float = 1.0
    b: float = 1.0
    c: float = 1.0
    noise: float = 0.5

    def sample(self, n, rng):
        x = rng.standard_normal(n)
        z = self.a * x + self.s * rng.standard_normal(n)
        t = rng.integers(0, 2, n)
        e0 = rng.standard_normal(n)
        e1 = rng.standard_normal(n)
        y0 = self.b * z + self.noise * e0
        y1 = self.b * z + self.c + self.noise * e1
        y = np.where(t == 1, y1, y0)
        return Dataset(x=x[:, None], t=t, y=y, y0=y0, y1=y1, w=z[:, None],
                       propensity=np.full(n, 0.5))

    @property
    def marginal_var(self):
        return self.b ** 2 * self.s ** 2 + self.noise ** 2

    def log_likelihood(self, dataset):
        """Mean exact log p(y | x, t) over the rows of ``dataset``."""
        mean = self.a * self.b * dataset.x[:, 0] + self.c * dataset.t
        var = self.marginal_var
        resid = dataset.y[:, 0] - mean
        return float(np.mean(-0.5 * (np.log(2 * np.pi * var) + resid ** 2 / var)))
