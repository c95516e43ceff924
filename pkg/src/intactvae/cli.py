"""Command-line entry point: ``intactvae <subcommand> [options]``.

Exit codes: 0 success, 1 failure (including failed sweep cells),
2 missing IHDP data or bad usage.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import load_config
from .data import read_dataset_csv, write_dataset_csv
from .dgp import NOISE_MODES, generate, sample_dgp_spec, split
from .estimation import cate, read_estimates_csv
from .ihdp import IhdpDataMissing, run_ihdp
from .metrics import evaluate
from .model import PRESETS, load_model, save_model
from .plotdata import emit_plot_data
from .rng import derive_seed, make_rng
from .sweep import run_sweep
from .training import init_model, train

EXIT_FAILURE = 1
EXIT_NO_DATA = 2

log = logging.getLogger("intactvae")


def _overrides(args):
    """Config overrides from whichever common flags the subcommand defines."""
    names = {"seed": "seed", "beta": "beta", "dim_z": "dim_z", "preset": "net_preset",
             "replications": "replications", "dim_w": "dim_w", "omega": "omega",
             "heads": "heads", "noise_mode": "noise_mode", "lr": "lr",
             "max_epochs": "max_epochs", "patience": "patience", "L": "L", "n": "n"}
    out = {key: getattr(args, arg) for arg, key in names.items()
           if getattr(args, arg, None) is not None}
    mode = getattr(args, "mode", None)
    if mode is not None:
        out["mode"] = ["post", "pre"] if mode == "both" else [mode]
    return out


def _common(p, *, beta=True, dim_z=True, mode=True, training=True):
    p.add_argument("--config", help="key = value experiment config file")
    p.add_argument("--seed", type=int, help="master seed")
    if beta:
        p.add_argument("--beta", help="beta (comma-separated list for sweeps)")
    if dim_z:
        p.add_argument("--dim-z", type=int, dest="dim_z", help="latent dimension")
    if mode:
        p.add_argument("--mode", choices=("post", "pre", "both"))
    if training:
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--heads", choices=("shared", "split"))
        p.add_argument("--lr", type=float)
        p.add_argument("--max-epochs", type=int, dest="max_epochs")
        p.add_argument("--patience", type=int)


def cmd_gen(args):
    seed = args.seed or 0
    spec = sample_dgp_spec(make_rng(derive_seed(seed, "spec")), args.dim_w, args.omega,
                           args.noise_mode, dim_x=args.dim_x, seed=seed)
    data = generate(spec, args.n, make_rng(derive_seed(seed, "data")))
    write_dataset_csv(data, args.out)
    print(f"wrote {len(data)} units to {args.out}")
    return 0


def cmd_train(args):
    cfg = load_config(args.config, _overrides(args))
    data = read_dataset_csv(args.data)
    seed = derive_seed(cfg.seed, "train")
    rng = make_rng(seed)
    tr, va, _ = split(data, [1 / 3, 1 / 3, 1 / 3], rng)
    dim_z = cfg.dim_z or (data.w.shape[1] if data.w is not None else 1)
    beta = cfg.beta[0]
    model = init_model(rng, (data.dim_x, dim_z, data.dim_y), cfg.net_preset, beta, heads=cfg.heads)
    model, history = train(model, tr, va, cfg.train_config(beta, seed), rng=rng)
    os.makedirs(args.out, exist_ok=True)
    cfg.write(os.path.join(args.out, "config.txt"))
    save_model(model, os.path.join(args.out, "model.json"))
    history.write_json(os.path.join(args.out, "history.json"))
    history.write_csv(os.path.join(args.out, "history.csv"))
    print(f"best epoch {history.best_epoch} of {history.epochs_run} ({history.stop_reason}); "
          f"model written to {os.path.join(args.out, 'model.json')}")
    return 0


def cmd_estimate(args):
    model = load_model(args.model)
    data = read_dataset_csv(args.data)
    est = cate(model, data, mode=args.mode, L=args.L, seed=args.seed or 0)
    est.write_csv(args.out)
    print(f"wrote {args.mode} estimates for {len(est)} units to {args.out}")
    return 0


def cmd_eval(args):
    model = load_model(args.model) if args.model else None
    data = read_dataset_csv(args.data)
    est = read_estimates_csv(args.estimates, mode=args.mode)
    if len(est) != len(data):
        raise ValueError(f"{len(est)} estimates for {len(data)} units")
    report = evaluate(model, data, est)
    text = report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text)
    return 0


def cmd_sweep(args):
    overrides = _overrides(args)
    if args.out:
        overrides["out"] = args.out
    cfg = load_config(args.config, overrides)
    result = run_sweep(cfg, jobs=args.jobs)
    print(f"{len(result.records)} runs, {result.n_failed} failed; aggregate: {result.aggregate_path}")
    return 0 if result.exit_code == 0 else EXIT_FAILURE


def cmd_ihdp(args):
    overrides = _overrides(args)
    overrides.pop("beta", None)
    overrides.pop("dim_z", None)
    cfg = load_config(args.config, overrides)
    beta = float(args.beta) if args.beta is not None else 1.0
    dim_z = args.dim_z if args.dim_z is not None else 10
    try:
        result = run_ihdp(cfg, args.data, args.replications, args.out, dim_z=dim_z, beta=beta)
    except IhdpDataMissing as exc:
        print(f"{exc}. The IHDP replications are not bundled; see README.md for where to "
              "download them.", file=sys.stderr)
        return EXIT_NO_DATA
    print(result.to_json())
    return 0


def cmd_plotdata(args):
    for path in emit_plot_data(args.aggregate, args.out):
        print(path)
    return 0


def _subcommand(sub, name, help_text):
    return sub.add_parser(name, help=help_text, allow_abbrev=False)


def build_parser():
    parser = argparse.ArgumentParser(prog="intactvae", description=__doc__.splitlines()[0],
                                     allow_abbrev=False)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = _subcommand(sub, "gen", "write a synthetic dataset CSV")
    p.add_argument("--seed", type=int)
    p.add_argument("--dim-w", type=int, default=1, dest="dim_w")
    p.add_argument("--omega", type=float, default=0.0)
    p.add_argument("--n", type=int, default=1500)
    p.add_argument("--dim-x", type=int, default=30, dest="dim_x")
    p.add_argument("--noise-mode", choices=NOISE_MODES, default="heteroscedastic",
                   dest="noise_mode")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_gen)

    p = _subcommand(sub, "train", "fit a model on the first third of a dataset CSV")
    _common(p, mode=False)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = _subcommand(sub, "estimate", "write CATE estimates for a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("post", "pre"), default="post")
    p.add_argument("--L", type=int, default=30, help="Monte Carlo samples per unit")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_estimate)

    p = _subcommand(sub, "eval", "score estimates against true effects")
    p.add_argument("--model", help="model checkpoint, enables latent diagnostics")
    p.add_argument("--data", required=True)
    p.add_argument("--estimates", required=True)
    p.add_argument("--mode", choices=("post", "pre"), default="post")
    p.add_argument("--out", help="output JSON")
    p.set_defaults(func=cmd_eval)

    p = _subcommand(sub, "sweep", "run a grid of synthetic experiments")
    _common(p)
    p.add_argument("--dim-w", dest="dim_w", help="comma-separated list")
    p.add_argument("--omega", help="comma-separated list")
    p.add_argument("--replications", type=int)
    p.add_argument("--n", type=int, help="units per dataset")
    p.add_argument("--noise-mode", choices=NOISE_MODES, dest="noise_mode")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = _subcommand(sub, "ihdp", "run the IHDP benchmark on downloaded data")
    _common(p)
    p.add_argument("--data", required=True, help="IHDP directory, .npz or .csv file")
    p.add_argument("--replications", type=int, default=100)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_ihdp)

    p = _subcommand(sub, "plotdata", "plot data from an aggregate CSV")
    p.add_argument("--aggregate", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, IndexError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
