import inspect

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import affine, exact_elbo, exact_toy_model, raw_for_var
from intactvae import autodiff as ad
from intactvae.dgp import LinearGaussianToy
from intactvae.gaussian import LOG_2PI, VAR_FLOOR, gaussian_log_density, kl_diag_gaussians
from intactvae.model import (FORMAT_TAG, IntactVaeModel, build_model, decode, elbo_beta,
                             elbo_terms, encode, load_model, model_from_dict, model_to_dict,
                             prior, save_model)
from intactvae.nn import MlpParams, mlp_forward
from intactvae.rng import make_rng
from intactvae.training import attach


def zero_net(n_in, n_out, bias, hidden=4):
    return MlpParams([np.zeros((n_in, hidden)), np.zeros((hidden, n_out))],
                     [np.ones(hidden), np.asarray(bias, dtype=np.float64)])


def batch(rng, n=7, dim_x=3, dim_y=1):
    return rng.normal(size=(n, dim_x)), rng.normal(size=(n, dim_y)), rng.integers(0, 2, n)


@pytest.fixture(params=["shared", "split"])
def model(request):
    return build_model(make_rng(0), 3, 2, 1, hidden=(8, 8), heads=request.param)


def test_zero_weight_prior_gives_bias_mean(rng):
    bh, bk = np.array([0.5, -2.0]), np.array([0.3, -1.0])
    m = build_model(make_rng(0), 3, 2, hidden=(4,))
    m = IntactVaeModel(3, 2, 1, zero_net(3, 4, np.concatenate([bh, bk])), m.encoder_nets,
                       m.decoder_nets)
    p = prior(m, rng.normal(size=(5, 3)))
    np.testing.assert_array_equal(p.mean, np.tile(bh, (5, 1)))
    np.testing.assert_allclose(p.var, np.tile(np.logaddexp(0, bk) + VAR_FLOOR, (5, 1)))


def test_prior_depends_on_x_only(model, rng):
    assert list(inspect.signature(prior).parameters) == ["model", "x"]
    assert model.prior_net.n_in == model.dim_x
    x = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(prior(model, x).mean, prior(model, x.copy()).mean)


def test_zero_weight_encoder_and_decoder_are_constant(rng):
    m = build_model(make_rng(1), 3, 2, hidden=(4,))
    enc = zero_net(3 + 1 + 1, 4, [1.0, 2.0, 0.0, 0.5])
    dec = zero_net(2 + 1, 2, [-1.0, 0.2])
    m = IntactVaeModel(3, 2, 1, m.prior_net, (enc,), (dec,))
    x, y, t = batch(rng)
    q = encode(m, x, y, t)
    np.testing.assert_array_equal(q.mean, np.tile([1.0, 2.0], (7, 1)))
    d = decode(m, rng.normal(size=(7, 2)), t)
    np.testing.assert_array_equal(d.mean, np.full((7, 1), -1.0))


def test_encoder_responds_to_t_slot():
    m = build_model(make_rng(2), 3, 2, hidden=(8,), heads="shared")
    r = make_rng(3)
    inp = ad.Tensor(np.column_stack([r.normal(size=(5, 4)), r.integers(0, 2, 5)]),
                    requires_grad=True)
    (g,) = ad.grad(ad.sum(mlp_forward(m.encoder_nets[0], inp)), [inp])
    assert np.all(g[:, -1] != 0)
    x, y = r.normal(size=(5, 3)), r.normal(size=(5, 1))
    assert not np.allclose(encode(m, x, y, np.zeros(5)).mean, encode(m, x, y, np.ones(5)).mean)


def test_decoder_arms_differ(model, rng):
    z = rng.normal(size=(6, 2))
    assert not np.allclose(decode(model, z, np.zeros(6)).mean, decode(model, z, np.ones(6)).mean)


def test_variance_floor_at_extreme_inputs(model):
    for v in (-1e3, 1e3):
        x, y = np.full((3, 3), v), np.full((3, 1), v)
        for g in (prior(model, x), encode(model, x, y, [0, 1, 1]),
                  decode(model, np.full((3, 2), v), [0, 1, 0])):
            assert np.all(g.var >= VAR_FLOOR) and np.all(np.isfinite(g.var))


def test_hand_set_linear_decoder(rng):
    dec = affine([[1.0, 0.0], [1.0, 0.0]], [0.0, 0.0])
    m0 = build_model(make_rng(0), 2, 1, hidden=(4,))
    m = IntactVaeModel(2, 1, 1, m0.prior_net, m0.encoder_nets, (dec,))
    z = rng.normal(size=(9, 1))
    t = rng.integers(0, 2, 9)
    np.testing.assert_array_equal(decode(m, z, t).mean, z + t[:, None])


def test_treatment_must_be_binary(model, rng):
    x, y, _ = batch(rng, n=3)
    with pytest.raises(ValueError, match="0 or 1"):
        encode(model, x, y, [0, 2, 1])
    with pytest.raises(ValueError, match="0 or 1"):
        decode(model, np.zeros((3, 2)), [0.5, 0, 1])


def test_shape_mismatch_is_reported(model):
    with pytest.raises(ValueError, match="x has width 4"):
        prior(model, np.zeros((2, 4)))
    with pytest.raises(ValueError, match="z has width"):
        decode(model, np.zeros((2, 3)), [0, 1])


def test_constructor_validates_widths():
    m = build_model(make_rng(0), 3, 2, hidden=(4,))
    with pytest.raises(ValueError, match="encoder_net"):
        IntactVaeModel(3, 2, 1, m.prior_net, (m.decoder_nets[0],), m.decoder_nets)
    with pytest.raises(ValueError, match="beta"):
        m.with_beta(0.0)


def test_elbo_total_is_standard_elbo_up_to_constant(model, rng):
    x, y, t = batch(rng)
    noise = rng.normal(size=(7, 2))
    _, parts = elbo_beta(model, x, y, t, noise=noise)
    q, p = encode(model, x, y, t), prior(model, x)
    z = q.mean + np.sqrt(q.var) * noise
    standard = gaussian_log_density(decode(model, z, t), y) - kl_diag_gaussians(q, p)
    np.testing.assert_allclose(parts.total - 0.5 * LOG_2PI, standard.mean(), rtol=1e-12)
    np.testing.assert_allclose(parts.total, -parts.kl_term - parts.recon_term - parts.log_g_term,
                               rtol=1e-12)


def test_kl_vanishes_when_encoder_equals_prior(rng):
    m = build_model(make_rng(4), 3, 2, hidden=(6,), heads="shared")
    w0 = m.prior_net.weights[0]
    enc_w0 = np.vstack([w0, np.zeros((2, w0.shape[1]))])  # ignore y and t
    enc = MlpParams([enc_w0] + m.prior_net.weights[1:], m.prior_net.biases)
    m = IntactVaeModel(3, 2, 1, m.prior_net, (enc,), m.decoder_nets)
    x, y, t = batch(rng)
    _, parts = elbo_beta(m, x, y, t, rng=rng)
    assert parts.kl_term == 0.0


def test_exact_posterior_recovers_marginal_likelihood():
    toy = LinearGaussianToy()
    ds = toy.sample(500, make_rng(5))
    assert abs(exact_elbo(exact_toy_model(toy), ds) - toy.log_likelihood(ds)) < 1e-6


@pytest.mark.parametrize("shift,scale", [(0.3, 1.0), (0.0, 3.0), (-0.5, 0.2)])
def test_misset_encoder_lower_bounds_likelihood(shift, scale):
    toy = LinearGaussianToy()
    ds = toy.sample(1, make_rng(6))
    m = exact_toy_model(toy, mean_shift=shift, var_scale=scale)
    truth = toy.log_likelihood(ds)
    assert exact_elbo(m, ds) < truth
    n = 10_000
    rows = np.zeros(n, dtype=int)
    kl, recon, log_g = elbo_terms(m, ds.x[rows], ds.y[rows], ds.t[rows], rng=make_rng(7))
    samples = -kl - recon - log_g - 0.5 * LOG_2PI
    se = samples.std() / np.sqrt(n)
    assert samples.mean() <= truth + 3 * se


@pytest.mark.parametrize("heads", ["shared", "split"])
def test_elbo_gradients_match_finite_differences(heads):
    m = build_model(make_rng(8), 2, 2, hidden=(5,), heads=heads, beta=1.7)
    r = make_rng(9)
    x, y, t = r.normal(size=(6, 2)), r.normal(size=(6, 1)), r.integers(0, 2, 6)
    noise = r.normal(size=(6, 2))
    tracked, leaves = attach(m)
    grads = ad.grad(elbo_beta(tracked, x, y, t, noise=noise)[0], leaves)
    arrays = [a.copy() for a in m.parameters()]
    h = 1e-4
    worst = 0.0
    for k, a in enumerate(arrays):
        num = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + h
            up = float(elbo_beta(m.with_parameters(arrays), x, y, t, noise=noise)[0])
            a[idx] = old - h
            down = float(elbo_beta(m.with_parameters(arrays), x, y, t, noise=noise)[0])
            a[idx] = old
            num[idx] = (up - down) / (2 * h)
        den = max(np.linalg.norm(num) + np.linalg.norm(grads[k]), 1e-10)
        worst = max(worst, np.linalg.norm(num - grads[k]) / den)
    assert worst < 1e-3


def test_doubling_beta_doubles_prior_gradient():
    m = build_model(make_rng(10), 3, 2, hidden=(6,), heads="split")
    r = make_rng(11)
    x, y, t = batch(r)
    noise = r.normal(size=(7, 2))
    n_prior = len(m.prior_net.arrays())
    out = []
    for beta in (1.0, 2.0):
        tracked, leaves = attach(m.with_beta(beta))
        out.append(ad.grad(elbo_beta(tracked, x, y, t, noise=noise)[0], leaves)[:n_prior])
    for g1, g2 in zip(*out):
        np.testing.assert_allclose(g2, 2 * g1, rtol=1e-12, atol=1e-15)


@given(seed=st.integers(0, 2**31), beta=st.floats(0.1, 5.0))
def test_term_bounds(seed, beta):
    r = make_rng(seed)
    m = build_model(r, 3, 2, 2, hidden=(6,), beta=beta, heads=["shared", "split"][seed % 2])
    x, y, t = r.normal(size=(5, 3)) * 3, r.normal(size=(5, 2)) * 3, r.integers(0, 2, 5)
    _, parts = elbo_beta(m, x, y, t, rng=r)
    assert parts.kl_term >= 0
    assert parts.log_g_term >= 2 * np.log(np.sqrt(VAR_FLOOR))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_names_the_row(model, rng):
    x, y, t = batch(rng)
    y[4, 0] = np.inf
    with pytest.raises(FloatingPointError, match="row 4"):
        elbo_beta(model, x, y, t, rng=rng)
    with pytest.raises(ValueError, match="empty"):
        elbo_beta(model, x[:0], y[:0], t[:0], rng=rng)


def test_checkpoint_round_trip(model, tmp_path):
    path = tmp_path / "m.json"
    save_model(model, path)
    back = load_model(path)
    assert (back.dim_x, back.dim_z, back.dim_y, back.beta, back.heads) == \
        (model.dim_x, model.dim_z, model.dim_y, model.beta, model.heads)
    for a, b in zip(model.parameters(), back.parameters()):
        np.testing.assert_array_equal(a, b)
    d = model_to_dict(model)
    assert d["format"] == FORMAT_TAG
    d["format"] = "something-else/9"
    with pytest.raises(ValueError, match="format"):
        model_from_dict(d)


def test_raw_for_var_inverts_variance_head():
    for v in (1e-3, 0.25, 4.0):
        assert np.logaddexp(0, raw_for_var(v)) + VAR_FLOOR == pytest.approx(v, rel=1e-12)
