"""The beta-Intact-VAE: balanced conditional prior p(z|x), treatment-conditioned
decoder p(y|z,t), posterior encoder q(z|x,y,t) and the beta-weighted ELBO.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .gaussian import (DiagonalGaussian, gaussian_sample, kl_diag_gaussians,
                       positive_var)
from .nn import MlpParams, init_mlp, mlp_forward

FORMAT_TAG = "intactvae-model/1"

PRESETS = {
    "paper": (200, 200, 200),
    "small": (64, 64),
}


@dataclass
class IntactVaeModel:
    """Three networks plus dimensions and beta.

    ``heads="shared"`` feeds ``t`` as an extra input column to one encoder and
    one decoder; ``heads="split"`` keeps a separate network per treatment arm
    (``encoder_nets[t]``, ``decoder_nets[t]``) without the ``t`` column.
    """
    dim_x: int
    dim_z: int
    dim_y: int
    prior_net: MlpParams
    encoder_nets: tuple
    decoder_nets: tuple
    beta: float = 1.0
    heads: str = "shared"

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.heads not in ("shared", "split"):
            raise ValueError(f"heads must be 'shared' or 'split', got {self.heads!r}")
        self.encoder_nets = tuple(self.encoder_nets)
        self.decoder_nets = tuple(self.decoder_nets)
        n_nets = 1 if self.heads == "shared" else 2
        extra = 1 if self.heads == "shared" else 0
        if len(self.encoder_nets) != n_nets or len(self.decoder_nets) != n_nets:
            raise ValueError(f"{self.heads} heads need {n_nets} encoder/decoder nets")
        checks = [("prior_net", self.prior_net, self.dim_x, 2 * self.dim_z)]
        checks += [("encoder_net", net, self.dim_x + self.dim_y + extra, 2 * self.dim_z)
                   for net in self.encoder_nets]
        checks += [("decoder_net", net, self.dim_z + extra, 2 * self.dim_y)
                   for net in self.decoder_nets]
        for name, net, n_in, n_out in checks:
            if net.n_in != n_in or net.n_out != n_out:
                raise ValueError(f"{name} maps {net.n_in}->{net.n_out}, expected {n_in}->{n_out}")

    def nets(self):
        return [("prior", self.prior_net)] + \
               [(f"encoder{i}", n) for i, n in enumerate(self.encoder_nets)] + \
               [(f"decoder{i}", n) for i, n in enumerate(self.decoder_nets)]

    def parameters(self):
        """Flat list of all weight/bias arrays in a fixed order."""
        out = []
        for _, net in self.nets():
            out += net.arrays()
        return out

    def parameter_names(self):
        names = []
        for name, net in self.nets():
            for i in range(len(net.weights)):
                names += [f"{name}.{i}.weight", f"{name}.{i}.bias"]
        return names

    def with_parameters(self, arrays):
        arrays = list(arrays)
        rebuilt = []
        for _, net in self.nets():
            k = 2 * len(net.weights)
            rebuilt.append(net.replace_arrays(arrays[:k]))
            arrays = arrays[k:]
        n_enc = len(self.encoder_nets)
        return IntactVaeModel(self.dim_x, self.dim_z, self.dim_y, rebuilt[0],
                              tuple(rebuilt[1:1 + n_enc]), tuple(rebuilt[1 + n_enc:]),
                              self.beta, self.heads)

    def with_beta(self, beta):
        return IntactVaeModel(self.dim_x, self.dim_z, self.dim_y, self.prior_net,
                              self.encoder_nets, self.decoder_nets, beta, self.heads)


def build_model(rng, dim_x, dim_z, dim_y=1, net_preset="paper", beta=1.0,
                heads="shared", hidden=None):
    """Randomly initialized model; ``hidden`` overrides the preset layer widths."""
    hidden = tuple(hidden) if hidden is not None else PRESETS[net_preset]
    extra = 1 if heads == "shared" else 0
    n_nets = 1 if heads == "shared" else 2
    prior = init_mlp(rng, [dim_x, *hidden, 2 * dim_z])
    enc = tuple(init_mlp(rng, [dim_x + dim_y + extra, *hidden, 2 * dim_z]) for _ in range(n_nets))
    dec = tuple(init_mlp(rng, [dim_z + extra, *hidden, 2 * dim_y]) for _ in range(n_nets))
    return IntactVaeModel(dim_x, dim_z, dim_y, prior, enc, dec, beta, heads)


def _as_batch(a, width, name):
    v = ad.value(a)
    if v.ndim == 1:
        a = a.reshape(1, -1)
    if np.shape(ad.value(a))[1] != width:
        raise ValueError(f"{name} has width {np.shape(ad.value(a))[1]}, expected {width}")
    return a


def _check_t(t, n):
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    if t.size == 1 and n > 1:
        t = np.full(n, t[0])
    if t.size != n:
        raise ValueError(f"got {t.size} treatment values for {n} rows")
    if not np.isin(t, (0.0, 1.0)).all():
        raise ValueError("treatment must be 0 or 1")
    return t.reshape(-1, 1)


def _gaussian_head(out, k, squeeze):
    mean, raw = out[:, :k], out[:, k:]
    g = DiagonalGaussian(mean, positive_var(raw))
    if squeeze:
        g = DiagonalGaussian(g.mean.reshape(-1), g.var.reshape(-1))
    return g


def _conditional(nets, inputs, t, heads):
    if heads == "shared":
        return mlp_forward(nets[0], ad.concat([inputs, t], axis=1))
    # both arms are evaluated on every row; t selects one per row
    return ad.where(t == 1.0, mlp_forward(nets[1], inputs), mlp_forward(nets[0], inputs))


def prior(model, x):
    """p(z|x) = N(h(x), diag(k(x))).  Depends on x alone."""
    squeeze = np.ndim(ad.value(x)) == 1
    x = _as_batch(x, model.dim_x, "x")
    return _gaussian_head(mlp_forward(model.prior_net, x), model.dim_z, squeeze)


def encode(model, x, y, t):
    """q(z|x,y,t) = N(r_t(x,y), diag(s_t(x,y)))."""
    squeeze = np.ndim(ad.value(x)) == 1
    x = _as_batch(x, model.dim_x, "x")
    y = _as_batch(y, model.dim_y, "y")
    t = _check_t(t, np.shape(ad.value(x))[0])
    out = _conditional(model.encoder_nets, ad.concat([x, y], axis=1), t, model.heads)
    return _gaussian_head(out, model.dim_z, squeeze)


def decode(model, z, t):
    """p(y|z,t) = N(f_t(z), diag(g_t(z)^2)); ``var`` holds the squared scale g^2."""
    squeeze = np.ndim(ad.value(z)) == 1
    z = _as_batch(z, model.dim_z, "z")
    t = _check_t(t, np.shape(ad.value(z))[0])
    out = _conditional(model.decoder_nets, z, t, model.heads)
    return _gaussian_head(out, model.dim_y, squeeze)


@dataclass
class ElboBreakdown:
    """Batch means of the three ELBO terms.

    Sign convention: ``total = -beta * kl_term - recon_term - log_g_term`` is the
    objective (to maximize); the training loss is ``-total``.  The Gaussian
    constant ``-(d/2) log 2pi`` is not included.
    """
    kl_term: float
    recon_term: float
    log_g_term: float
    total: float


def elbo_terms(model, x, y, t, rng=None, noise=None):
    """Per-row (kl, recon, log_g) arrays or Tensors, one reparameterized z per row."""
    x = _as_batch(x, model.dim_x, "x")
    y = _as_batch(y, model.dim_y, "y")
    q = encode(model, x, y, t)
    p = prior(model, x)
    z = gaussian_sample(q, rng, noise)
    dec = decode(model, z, t)
    kl = kl_diag_gaussians(q, p)
    recon = ad.sum(ad.square(y - dec.mean) / (2.0 * dec.var), axis=-1)
    log_g = 0.5 * ad.sum(ad.log(dec.var), axis=-1)
    return kl, recon, log_g


def elbo_beta(model, x, y, t, rng=None, noise=None):
    """Loss (negated beta-ELBO, batch mean) and its :class:`ElboBreakdown`.

    Pass Tensor-valued parameters (see :func:`intactvae.training.attach`) to
    differentiate the loss.  ``noise`` (n, dim_z) freezes the reparameterization.
    """
    if len(ad.value(x)) == 0:
        raise ValueError("empty batch")
    kl, recon, log_g = elbo_terms(model, x, y, t, rng, noise)
    per_row = model.beta * kl + recon + log_g
    vals = ad.value(per_row)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError(f"non-finite ELBO at batch row {int(np.flatnonzero(~np.isfinite(vals))[0])}")
    loss = ad.mean(per_row)
    kl_m = float(np.mean(ad.value(kl)))
    rec_m = float(np.mean(ad.value(recon)))
    lg_m = float(np.mean(ad.value(log_g)))
    return loss, ElboBreakdown(kl_m, rec_m, lg_m, -float(np.mean(vals)))


def _net_to_dict(net):
    return {"activation": net.activation, "alpha": net.alpha,
            "weights": [np.asarray(w).tolist() for w in net.weights],
            "biases": [np.asarray(b).tolist() for b in net.biases]}


def _net_from_dict(d):
    return MlpParams([np.array(w, dtype=np.float64).reshape(len(w), -1) for w in d["weights"]],
                     [np.array(b, dtype=np.float64) for b in d["biases"]],
                     d.get("activation", "relu"), d.get("alpha", 0.01))


def model_to_dict(model):
    return {"format": FORMAT_TAG, "dim_x": model.dim_x, "dim_z": model.dim_z,
            "dim_y": model.dim_y, "beta": model.beta, "heads": model.heads,
            "prior_net": _net_to_dict(model.prior_net),
            "encoder_nets": [_net_to_dict(n) for n in model.encoder_nets],
            "decoder_nets": [_net_to_dict(n) for n in model.decoder_nets]}


def model_from_dict(d):
    if d.get("format") != FORMAT_TAG:
        raise ValueError(f"unsupported checkpoint format {d.get('format')!r}")
    return IntactVaeModel(d["dim_x"], d["dim_z"], d["dim_y"], _net_from_dict(d["prior_net"]),
                          tuple(_net_from_dict(n) for n in d["encoder_nets"]),
                          tuple(_net_from_dict(n) for n in d["decoder_nets"]),
                          d["beta"], d["heads"])


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
