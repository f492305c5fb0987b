"""Calibrate the tuning parameter on a design, then fit under several noise families.

Run with ``python3 demos/fit_and_calibrate.py``.
"""

import numpy as np

from explasso import Dataset, FitConfig, calibrate, fit_exp_lasso, with_intercept

rng = np.random.default_rng(0)
n, p = 200, 100
X = rng.standard_normal((n, p))
beta = np.zeros(p)
beta[:3] = [2.0, -1.5, 1.0]
# logistic noise, heavier tailed than the normal
y = 4.0 + X @ beta + rng.logistic(size=n)

ds = with_intercept(Dataset(y=y, X=X))
for model in ("gaussian", "logistic", "huber", "subbotin:1"):
    cal = calibrate(ds.X, model, alpha=0.05, eta=0.1, N=2000, seed=1, penalty_mask=ds.penalty_mask)
    fit = fit_exp_lasso(ds, model, FitConfig(), calibration=cal)
    print(f"{model:>11}: lambda={cal.lam:.3f} sigma={fit.sigma:.3f} intercept={fit.beta[0]:.3f} "
          f"active={[j for j in fit.active_set]} kkt={fit.kkt_residual:.1e} converged={fit.converged}")

# the same tuning parameter works at any noise level: rescaling y rescales the fit
cal = calibrate(ds.X, "logistic", N=2000, seed=1, penalty_mask=ds.penalty_mask)
a = fit_exp_lasso(ds, "logistic", FitConfig(), calibration=cal)
b = fit_exp_lasso(ds.with_y(100 * ds.y), "logistic", FitConfig(), calibration=cal)
print("max |fit(100 y) - 100 fit(y)| =", float(np.max(np.abs(b.beta - 100 * a.beta))))
