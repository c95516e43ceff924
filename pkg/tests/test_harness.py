import csv
import json
import os

import numpy as np
import pytest

from intactvae import ihdp, sweep
from intactvae.cli import main
from intactvae.config import ExperimentConfig, load_config, parse_config_text
from intactvae.ihdp import (CSV_COLUMNS, IhdpDataMissing, continuous_columns, load_ihdp, prepare,
                            run_ihdp, summarize)
from intactvae.plotdata import PLOT_COLUMNS, emit_plot_data, mean_stderr
from intactvae.rng import derive_seed
from intactvae.sweep import AGGREGATE_COLUMNS, cells, dgp_seed, run_sweep, write_aggregate

FAST = dict(n=60, max_epochs=3, patience=2, L=3, dim_x=5, replications=1)


def fast_cfg(**kw):
    return ExperimentConfig(**{**FAST, **kw})


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# config

def test_config_text_parsing():
    cfg = parse_config_text("dim_w = 1, 3  # two sizes\nomega = 0, 6\nbeta=2.5\nmode = pre\n"
                            "save_models = yes\n")
    assert cfg.dim_w == [1, 3] and cfg.omega == [0.0, 6.0] and cfg.beta == [2.5]
    assert cfg.mode == ["pre"] and cfg.save_models is True
    assert cfg.n == 1500 and cfg.replications == 10


def test_config_round_trip(tmp_path):
    cfg = fast_cfg(omega=[0, 11.5], beta=[0.5, 1], seed=7)
    path = tmp_path / "c.txt"
    cfg.write(path)
    back = load_config(path)
    assert back == cfg and back.digest() == cfg.digest()


def test_overrides_win_and_digest_ignores_output_dir():
    cfg = parse_config_text("seed = 1\n", {"seed": 5, "out": "elsewhere"})
    assert cfg.seed == 5
    assert cfg.digest() == parse_config_text("seed = 5\n").digest()
    assert cfg.digest() != parse_config_text("seed = 6\n").digest()


@pytest.mark.parametrize("text,match", [
    ("bogus = 1\n", "unknown"), ("replications = 0\n", "replications"),
    ("beta =\n", "nonempty"), ("mode = both\n", "mode"), ("n = many\n", "'n'"),
    ("save_models = maybe\n", "boolean"), ("noise_mode = laplace\n", "noise_mode"),
])
def test_config_errors(text, match):
    with pytest.raises(ValueError, match=match):
        parse_config_text(text)


# sweep

def test_seed_derivation_is_documented_hash():
    cfg = fast_cfg(dim_w=[1, 2], replications=3, seed=11)
    cs = cells(cfg)
    assert [c.index for c in cs] == list(range(6))
    for c in cs:
        assert c.dgp_seed == derive_seed(11, "dgp", c.replication) == dgp_seed(11, c.replication)
    assert len({c.dgp_seed for c in cs}) == 3
    assert cells(fast_cfg(replications=3, seed=12))[0].dgp_seed != cs[0].dgp_seed


def test_single_cell_sweep(tmp_path):
    res = run_sweep(fast_cfg(), tmp_path)
    assert len(res.records) == 1 and res.exit_code == 0
    rows = read_rows(res.aggregate_path)
    assert [r["mode"] for r in rows] == ["post", "pre"]
    assert list(rows[0]) == AGGREGATE_COLUMNS
    rec = json.loads((tmp_path / "runs" / "cell_00000.json").read_text())
    assert rec["status"] == "ok" and rec["config_hash"] == fast_cfg().digest()
    assert set(rec["reports"]) == {"post", "pre"} and rec["wall_clock_s"] > 0
    assert load_config(tmp_path / "config.txt") == fast_cfg(out=fast_cfg().out)


def test_row_count_and_determinism(tmp_path):
    cfg = fast_cfg(dim_w=[1, 2], omega=[0, 6], beta=[1, 2], replications=2, mode=["post"])
    a = run_sweep(cfg, tmp_path / "a")
    assert len(read_rows(a.aggregate_path)) == 2 * 2 * 2 * 2 * 1
    b = run_sweep(cfg, tmp_path / "b", jobs=2)
    assert open(a.aggregate_path, "rb").read() == open(b.aggregate_path, "rb").read()


def test_failed_cell_is_recorded(tmp_path, monkeypatch):
    real = sweep.fit_and_score

    def flaky(cfg, cell, data, out_dir=None):
        if cell.index == 0:
            raise FloatingPointError("diverged")
        return real(cfg, cell, data, out_dir)

    monkeypatch.setattr(sweep, "fit_and_score", flaky)
    res = run_sweep(fast_cfg(replications=2), tmp_path)
    assert res.n_failed == 1 and res.exit_code == 1
    rows = read_rows(res.aggregate_path)
    assert len(rows) == 4
    assert rows[0]["eps_ate"] == "nan" and rows[2]["eps_ate"] != "nan"
    rec = json.loads((tmp_path / "runs" / "cell_00000.json").read_text())
    assert rec["status"] == "failed" and "diverged" in rec["error"]


def test_saved_models_are_listed(tmp_path):
    res = run_sweep(fast_cfg(save_models=True), tmp_path)
    arts = res.records[0].artifacts
    assert any(a.endswith("_model.json") for a in arts)
    assert all(os.path.exists(a) for a in arts)


# plot data

def _agg(tmp_path, rows):
    path = tmp_path / "aggregate.csv"
    write_aggregate(rows, path)
    return path


def test_empty_aggregate_gives_header_only(tmp_path):
    paths = emit_plot_data(_agg(tmp_path, []), tmp_path / "plots")
    assert paths
    for p in paths:
        assert open(p).read() == ",".join(PLOT_COLUMNS) + "\n"


def test_plot_means_and_stderr(tmp_path):
    r = np.random.default_rng(0)
    vals = {(om, b): r.normal(size=10) for om in (0.0, 6.0) for b in (1.0, 2.5)}
    rows = [[k, 1, om, b, "post", v, v * 2, 0.5, 0.1]
            for (om, b), vs in vals.items() for k, v in enumerate(vs)]
    paths = emit_plot_data(_agg(tmp_path, rows), tmp_path / "plots", metrics=("eps_ate",))
    assert [os.path.basename(p) for p in paths] == ["plot_eps_ate_post.csv"]
    out = read_rows(paths[0])
    assert len(out) == 4
    for row in out:
        vs = vals[(float(row["x_value"]), float(row["beta"]))]
        assert row["x_var"] == "omega"
        assert float(row["mean"]) == pytest.approx(vs.mean(), rel=1e-12)
        assert float(row["stderr"]) == pytest.approx(vs.std(ddof=1) / np.sqrt(10), rel=1e-12)


def test_plot_axes_and_failed_rows(tmp_path):
    nan = float("nan")
    rows = [[0, dw, 0.0, 1.0, "pre", v, v, nan, nan] for dw, v in ((1, 1.0), (1, 3.0), (2, nan))]
    paths = emit_plot_data(_agg(tmp_path, rows), tmp_path / "plots", metrics=("root_pehe",))
    out = read_rows(paths[0])
    assert [(r["x_var"], r["x_value"], r["mean"]) for r in out] == [("dim_w", "1", "2")]
    assert mean_stderr([4.0]) == (4.0, pytest.approx(nan, nan_ok=True))


# IHDP

def write_ihdp_csv(directory, n=747, reps=2, seed=0):
    r = np.random.default_rng(seed)
    for k in range(1, reps + 1):
        t = (r.uniform(size=n) < 0.2).astype(int)
        mu0, mu1 = r.normal(size=n), r.normal(size=n) + 4
        y0, y1 = mu0 + r.normal(size=n), mu1 + r.normal(size=n)
        yf, ycf = np.where(t == 1, y1, y0), np.where(t == 1, y0, y1)
        x = np.column_stack([r.normal(size=(n, 6)), r.integers(0, 2, (n, 19))])
        table = np.column_stack([t, yf, ycf, mu0, mu1, x])
        np.savetxt(directory / f"ihdp_npci_{k}.csv", table, delimiter=",", fmt="%.10g")
    return directory


def write_ihdp_npz(directory, reps=3, seed=1):
    r = np.random.default_rng(seed)
    for part, n in (("train", 672), ("test", 75)):
        t = (r.uniform(size=(n, reps)) < 0.2).astype(float)
        mu0, mu1 = r.normal(size=(n, reps)), r.normal(size=(n, reps)) + 4
        np.savez(directory / f"ihdp_npci_1-{reps}.{part}.npz", x=r.normal(size=(n, 25, reps)),
                 t=t, yf=np.where(t == 1, mu1, mu0), ycf=np.where(t == 1, mu0, mu1),
                 mu0=mu0, mu1=mu1)
    return directory


def test_ihdp_csv_layout(tmp_path):
    ds = load_ihdp(write_ihdp_csv(tmp_path), replication=1)
    assert len(ds) == 747 and ds.dim_x == 25
    np.testing.assert_array_equal(np.where(ds.t[:, None] == 1, ds.y1, ds.y0), ds.y)
    np.testing.assert_array_equal(continuous_columns(ds.x), [True] * 6 + [False] * 19)


def test_ihdp_npz_layout(tmp_path):
    d = write_ihdp_npz(tmp_path)
    assert ihdp.n_replications(d) == 3
    ds = load_ihdp(d, replication=2)
    assert len(ds) == 672 + 75
    np.testing.assert_array_equal(ds.true_effect()[:, 0], (ds.mu1 - ds.mu0)[:, 0])
    with pytest.raises(IndexError):
        load_ihdp(d, replication=3)


def test_ihdp_malformed_file_names_column(tmp_path):
    write_ihdp_csv(tmp_path, n=5, reps=1)
    path = tmp_path / "ihdp_npci_1.csv"
    lines = path.read_text().splitlines()
    cells_ = lines[2].split(",")
    cells_[3] = "oops"
    lines[2] = ",".join(cells_)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="'mu0'"):
        load_ihdp(path)
    path.write_text("1,2\n")
    with pytest.raises(ValueError, match="'ycf'"):
        load_ihdp(path)
    np.savez(tmp_path / "bad.train.npz", x=np.zeros((3, 25)), t=np.zeros(3))
    with pytest.raises(ValueError, match="'yf'"):
        load_ihdp(tmp_path / "bad.train.npz")
    assert CSV_COLUMNS[3] == "mu0"


def test_ihdp_missing_data(tmp_path):
    with pytest.raises(IhdpDataMissing):
        load_ihdp(tmp_path / "nowhere")
    with pytest.raises(IhdpDataMissing):
        load_ihdp(tmp_path)


def test_ihdp_split_and_standardization(tmp_path):
    ds = load_ihdp(write_ihdp_csv(tmp_path, reps=1))
    tr, va, te = prepare(ds, np.random.default_rng(0))
    # cut points round(747 * 0.63) = 471 and round(747 * 0.90) = 672
    assert (len(tr), len(va), len(te)) == (471, 201, 75)
    np.testing.assert_allclose(tr.x[:, :6].mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(tr.x[:, :6].std(axis=0), 1, atol=1e-12)
    assert set(np.unique(te.x[:, 6:])) <= {0.0, 1.0}
    np.testing.assert_array_equal(np.sort(np.concatenate([tr.y, va.y, te.y]), axis=0),
                                  np.sort(ds.y, axis=0))


def test_run_ihdp_single_replication_omits_se(tmp_path):
    (tmp_path / "data").mkdir()
    d = write_ihdp_csv(tmp_path / "data", n=80, reps=2)
    cfg = fast_cfg()
    res = run_ihdp(cfg, d, 1, out_dir=tmp_path / "out", dim_z=2)
    assert res.n_replications == 1 and len(res.rows) == 2
    assert set(res.summary["post"]["root_pehe"]) == {"mean"}
    summary = json.loads((tmp_path / "out" / "ihdp_summary.json").read_text())
    assert "se" not in summary["summary"]["pre"]["eps_ate"]
    two = run_ihdp(cfg, d, 2, dim_z=2)
    assert set(two.summary["pre"]["eps_ate"]) == {"mean", "se"}
    assert summarize([1.0, 3.0]) == {"mean": 2.0, "se": 1.0}


# CLI

def test_cli_pipeline(tmp_path, capsys):
    data, run = tmp_path / "d.csv", tmp_path / "run"
    assert main(["gen", "--seed", "3", "--n", "60", "--dim-x", "5", "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--out", str(run), "--max-epochs", "2",
                 "--preset", "small"]) == 0
    est = tmp_path / "est.csv"
    assert main(["estimate", "--model", str(run / "model.json"), "--data", str(data),
                 "--mode", "pre", "--L", "3", "--out", str(est)]) == 0
    rep = tmp_path / "rep.json"
    assert main(["eval", "--model", str(run / "model.json"), "--data", str(data),
                 "--estimates", str(est), "--mode", "pre", "--out", str(rep)]) == 0
    assert json.loads(rep.read_text())["mode"] == "pre"
    capsys.readouterr()


def test_cli_sweep_and_plotdata(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("n = 60\ndim_x = 5\nmax_epochs = 2\nL = 2\n")
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg), "--replications", "1", "--omega", "0,6",
                 "--mode", "post", "--out", str(out)]) == 0
    assert len(read_rows(out / "aggregate.csv")) == 2
    assert main(["plotdata", "--aggregate", str(out / "aggregate.csv"),
                 "--out", str(tmp_path / "plots")]) == 0
    assert (tmp_path / "plots" / "plot_root_pehe_post.csv").exists()


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["ihdp", "--data", str(tmp_path / "missing"), "--replications", "1"]) == 2
    assert "not bundled" in capsys.readouterr().err
    assert main(["eval", "--data", str(tmp_path / "nope.csv"), "--estimates", "x.csv"]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--nois", "unit"])
    assert exc.value.code == 2
