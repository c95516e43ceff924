"""Fit the model on a 1-D linear-Gaussian problem whose likelihood is known.

    x ~ N(0, 1);  z | x ~ N(x, 1);  y | z, t ~ N(z + t, 0.25)

The true effect is 1 for every unit, and the best achievable mean
log-likelihood has a closed form, so both the fit and the effect estimates
can be read against exact answers.

    python demos/toy_oracle.py
"""
import numpy as np

from intactvae import LinearGaussianToy, TrainConfig, cate, init_model, split, train
from intactvae.gaussian import LOG_2PI
from intactvae.model import elbo_beta
from intactvae.rng import make_rng

toy = LinearGaussianToy()
rng = make_rng(1)
tr, va = split(toy.sample(2000, rng), [0.5, 0.5], rng)

model = init_model(rng, (1, 1, 1), "small", beta=1.0, heads="split")
best, history = train(model, tr, va, TrainConfig(max_epochs=2000, net_preset="small"), rng=rng)
print(f"stopped after {history.epochs_run} epochs ({history.stop_reason}), "
      f"best epoch {history.best_epoch}")

# average the ELBO over many latent draws; a single draw is too noisy to compare
noise = np.random.default_rng(0)
draws = [elbo_beta(best, va.x, va.y, va.t, noise=noise.standard_normal((len(va), 1)))[1].total
         for _ in range(200)]
elbo = np.mean(draws) - 0.5 * LOG_2PI
exact = toy.log_likelihood(va)
print(f"validation ELBO {elbo:.4f}  exact log-likelihood {exact:.4f}  "
      f"gap {abs(elbo - exact) / abs(exact):.2%}")

for mode in ("post", "pre"):
    est = cate(best, va, mode=mode)
    tau = est.tau_hat[:, 0]
    print(f"{mode:>4}: mean effect {tau.mean():.3f} (truth 1), spread across units {tau.std():.3f}")
