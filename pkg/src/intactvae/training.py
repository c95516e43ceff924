"""Minibatch Adam on the beta-ELBO with early stopping on validation ELBO."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .model import PRESETS, build_model, elbo_beta
from .optim import AdamState, adam_step
from .rng import derive_seed, make_rng

log = logging.getLogger(__name__)

IMPROVEMENT_TOL = 1e-6


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 100
    max_epochs: int = 500
    patience: int = 10
    eval_every: int = 1
    beta: float = 1.0
    seed: int = 0
    net_preset: str = "paper"

    def __post_init__(self):
        if self.lr <= 0 or self.beta <= 0:
            raise ValueError("lr and beta must be positive")
        if min(self.batch_size, self.patience, self.eval_every) < 1 or self.max_epochs < 0:
            raise ValueError("batch_size, patience and eval_every must be >= 1, max_epochs >= 0")
        if self.net_preset not in PRESETS:
            raise ValueError(f"unknown net preset {self.net_preset!r}")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)   # one entry per epoch
    val_epochs: list = field(default_factory=list)   # epochs at which validation ran
    val_elbo: list = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = "max_epochs"

    @property
    def epochs_run(self):
        return len(self.train_loss)

    def to_json(self):
        return json.dumps(asdict(self), indent=2)

    def write_json(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    def write_csv(self, path):
        val = dict(zip(self.val_epochs, self.val_elbo))
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["epoch", "train_loss", "val_elbo"])
            for epoch in range(self.epochs_run + 1):
                loss = format(self.train_loss[epoch - 1], ".17g") if epoch else ""
                v = format(val[epoch], ".17g") if epoch in val else ""
                wr.writerow([epoch, loss, v])


def init_model(rng, dims, net_preset="paper", beta=1.0, heads="shared"):
    """``dims = (dim_x, dim_z, dim_y)``."""
    dim_x, dim_z, dim_y = dims
    if min(dims) < 1:
        raise ValueError(f"dimensions must be positive, got {dims}")
    return build_model(rng, dim_x, dim_z, dim_y, net_preset=net_preset, beta=beta, heads=heads)


def attach(model):
    """Copy of ``model`` whose parameters are gradient-tracking Tensors."""
    leaves = [ad.Tensor(p, requires_grad=True) for p in model.parameters()]
    return model.with_parameters(leaves), leaves


def validation_elbo(model, data, noise):
    return elbo_beta(model, data.x, data.y, data.t, noise=noise)[1].total


def train(model, train_set, val_set, cfg, rng=None, callback=None):
    """Fit ``model`` and return ``(best_model, history)``.

    Validation uses one frozen noise draw (seeded from ``cfg.seed``) so the
    validation ELBO is a deterministic function of the parameters.
    ``callback(epoch, train_loss, val_elbo_or_None)`` is called after every epoch.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation splits must be nonempty")
    for name, ds in (("train", train_set), ("validation", val_set)):
        if ds.dim_x != model.dim_x or ds.dim_y != model.dim_y:
            raise ValueError(f"{name} data dims ({ds.dim_x}, {ds.dim_y}) do not match the model "
                             f"({model.dim_x}, {model.dim_y})")
    rng = make_rng(cfg.seed) if rng is None else rng
    if model.beta != cfg.beta:
        model = model.with_beta(cfg.beta)
    val_noise = make_rng(derive_seed(cfg.seed, "validation")).standard_normal(
        (len(val_set), model.dim_z))

    history = TrainHistory()
    params = model.parameters()
    names = model.parameter_names()
    state = AdamState.for_params(params, lr=cfg.lr)
    best = validation_elbo(model, val_set, val_noise)
    best_params = params
    history.val_epochs.append(0)
    history.val_elbo.append(best)
    stale = 0
    n = len(train_set)
    x, y, t = train_set.x, train_set.y, train_set.t

    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start:start + cfg.batch_size]
            noise = rng.standard_normal((len(idx), model.dim_z))
            tracked, leaves = attach(model.with_parameters(params))
            try:
                loss, _ = elbo_beta(tracked, x[idx], y[idx], t[idx], noise=noise)
            except FloatingPointError as exc:
                raise FloatingPointError(f"epoch {epoch}, batch {b}: {exc}") from None
            grads = ad.grad(loss, leaves)
            params, state = adam_step(state, params, grads, names)
            total += float(loss.value) * len(idx)
        history.train_loss.append(total / n)

        val = None
        if epoch % cfg.eval_every == 0:
            val = validation_elbo(model.with_parameters(params), val_set, val_noise)
            if not np.isfinite(val):
                raise FloatingPointError(f"epoch {epoch}: non-finite validation ELBO")
            history.val_epochs.append(epoch)
            history.val_elbo.append(val)
            if val > best + IMPROVEMENT_TOL:
                best, best_params, history.best_epoch, stale = val, params, epoch, 0
            else:
                stale += 1
        if callback is not None:
            callback(epoch, history.train_loss[-1], val)
        if stale >= cfg.patience:
            history.stop_reason = "early_stopping"
            break

    log.debug("training stopped (%s) after %d epochs, best epoch %d",
              history.stop_reason, history.epochs_run, history.best_epoch)
    return model.with_parameters(best_params), history
