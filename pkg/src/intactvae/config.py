"""Experiment configuration: a flat ``key = value`` text file plus overrides.

Lists are comma separated, ``#`` starts a comment and unknown keys are an
error.  Example::

    dim_w = 1
    omega = 0, 6, 11, 16, 22
    beta = 0.5, 1, 2.5, 3
    replications = 10
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import asdict, dataclass, field, fields

from .dgp import NOISE_MODES
from .model import PRESETS
from .training import TrainConfig

SECTION = "experiment"
MODES = ("post", "pre")
LIST_KEYS = {"dim_w": int, "omega": float, "beta": float, "mode": str}


@dataclass
class ExperimentConfig:
    # data generation
    dim_w: list = field(default_factory=lambda: [1])
    omega: list = field(default_factory=lambda: [0.0])
    n: int = 1500
    replications: int = 10
    noise_mode: str = "heteroscedastic"
    dim_x: int = 30
    # model; dim_z = 0 means "same as dim_w"
    dim_z: int = 0
    beta: list = field(default_factory=lambda: [1.0])
    net_preset: str = "small"
    heads: str = "split"
    # training
    lr: float = 1e-4
    batch_size: int = 100
    max_epochs: int = 2000
    patience: int = 10
    eval_every: int = 1
    # estimation
    mode: list = field(default_factory=lambda: list(MODES))
    L: int = 30
    # bookkeeping
    out: str = "results"
    seed: int = 0
    save_models: bool = False

    def __post_init__(self):
        for name in LIST_KEYS:
            value = getattr(self, name)
            if not isinstance(value, (list, tuple)):
                value = [value]
            if len(value) == 0:
                raise ValueError(f"{name} must be a nonempty list")
            setattr(self, name, list(value))
        self.dim_w = [int(v) for v in self.dim_w]
        self.omega = [float(v) for v in self.omega]
        self.beta = [float(v) for v in self.beta]
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.n < 6:
            raise ValueError("n must be >= 6 so that every split is nonempty")
        if min(self.dim_w) < 1 or min(self.omega) < 0 or min(self.beta) <= 0:
            raise ValueError("need dim_w >= 1, omega >= 0 and beta > 0")
        if self.dim_z < 0 or self.L < 1:
            raise ValueError("need dim_z >= 0 and L >= 1")
        bad = [m for m in self.mode if m not in MODES]
        if bad:
            raise ValueError(f"unknown estimation mode(s) {bad}; use post and/or pre")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}")
        if self.heads not in ("shared", "split"):
            raise ValueError("heads must be shared or split")
        if self.net_preset not in PRESETS:
            raise ValueError(f"unknown net preset {self.net_preset!r}")
        self.train_config(1.0, 0)  # validates the training fields

    def latent_dim(self, dim_w):
        return self.dim_z or dim_w

    def train_config(self, beta, seed):
        return TrainConfig(lr=self.lr, batch_size=self.batch_size, max_epochs=self.max_epochs,
                           patience=self.patience, eval_every=self.eval_every, beta=beta,
                           seed=seed, net_preset=self.net_preset)

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {', '.join(_fmt(x) for x in v) if isinstance(v, list) else _fmt(v)}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    def digest(self):
        """Short hash of every setting that can change results."""
        d = asdict(self)
        for k in ("out", "save_models"):
            d.pop(k)
        return hashlib.sha256(repr(sorted(d.items())).encode()).hexdigest()[:16]


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def _parse(f, raw):
    raw = raw.strip()
    if f.name in LIST_KEYS:
        return [LIST_KEYS[f.name](s.strip()) for s in raw.split(",") if s.strip()]
    kind = type(f.default)
    if kind is bool:
        low = raw.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{f.name}: expected a boolean, got {raw!r}")
        return low in ("true", "1", "yes")
    return kind(raw)


def parse_config_text(text, overrides=None):
    """Build an :class:`ExperimentConfig` from file text and a dict of overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string(f"[{SECTION}]\n" + text)
    by_name = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for key, raw in parser.items(SECTION):
        if key not in by_name:
            raise ValueError(f"unknown config key {key!r}")
        try:
            values[key] = _parse(by_name[key], raw)
        except ValueError as exc:
            raise ValueError(f"config key {key!r}: {exc}") from None
    for key, value in (overrides or {}).items():
        if key not in by_name:
            raise ValueError(f"unknown config key {key!r}")
        if value is not None:
            values[key] = _parse(by_name[key], value) if isinstance(value, str) else value
    return ExperimentConfig(**values)


def load_config(path=None, overrides=None):
    text = ""
    if path is not None:
        with open(path) as fh:
            text = fh.read()
    return parse_config_text(text, overrides)
