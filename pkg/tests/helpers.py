"""Hand-built models and independent oracles shared by several test modules."""
import numpy as np

from intactvae.gaussian import LOG_2PI, VAR_FLOOR
from intactvae.model import IntactVaeModel, elbo_beta
from intactvae.nn import MlpParams


def raw_for_var(v):
    """Inverse of softplus(raw) + VAR_FLOOR."""
    return float(np.log(np.expm1(v - VAR_FLOOR)))


def affine(w, b):
    return MlpParams([np.asarray(w, dtype=np.float64)], [np.asarray(b, dtype=np.float64)])


def exact_toy_model(toy, mean_shift=0.0, var_scale=1.0):
    """Shared-heads model whose three nets equal the toy's exact distributions.

    ``mean_shift``/``var_scale`` perturb the encoder away from the exact posterior.
    """
    a, s2, b, c, n2 = toy.a, toy.s ** 2, toy.b, toy.c, toy.noise ** 2
    vp = 1.0 / (1.0 / s2 + b * b / n2)
    prior = affine([[a, 0.0]], [0.0, raw_for_var(s2)])
    enc = affine([[vp * a / s2, 0.0], [vp * b / n2, 0.0], [-vp * b * c / n2, 0.0]],
                 [mean_shift, raw_for_var(vp * var_scale)])
    dec = affine([[b, 0.0], [c, 0.0]], [0.0, raw_for_var(n2)])
    return IntactVaeModel(1, 1, 1, prior, (enc,), (dec,), beta=1.0, heads="shared")


def exact_elbo(model, ds):
    """Mean beta-ELBO (2pi constant restored) with the z-expectation taken exactly.

    For a decoder linear in z the reconstruction term is quadratic in z, so the
    two-point Gauss-Hermite rule (noise +1 and -1, equal weights) is exact.
    """
    x = np.repeat(ds.x, 2, axis=0)
    y = np.repeat(ds.y, 2, axis=0)
    t = np.repeat(ds.t, 2)
    noise = np.tile([[1.0], [-1.0]], (len(ds), 1))
    _, parts = elbo_beta(model, x, y, t, noise=noise)
    return parts.total - 0.5 * LOG_2PI * model.dim_y
