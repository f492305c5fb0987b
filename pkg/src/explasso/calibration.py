"""Monte Carlo calibration of the tuning parameter.

The pivotal statistic for a noise sample ``xi`` and design ``X`` is

    lam_star = ||X_pen' l'(xi) / n||_inf * exp(mean(l(xi)) + l_const),

which does not involve the unknown scale.  The tuning parameter is an upper
empirical quantile of its simulated distribution, inflated by 1 / (1 - eta).
"""

from dataclasses import dataclass
import math

import numpy as np

from ._rng import as_seed_sequence, child, stream
from .design import generate_gaussian_design
from .noise import make_model

SCHEMA = "explasso/1"
MIN_REPS = 100
_CHUNK = 256


def _order_index(q, N):
    """0-based index of the ceil(q N)-th order statistic, clipped to [0, N - 1]."""
    # round first so that e.g. 0.95 * 1000 = 949.999... still gives rank 950
    k = math.ceil(round(q * N, 9))
    return min(max(k, 1), N) - 1


def _check_alpha_eta(alpha, eta):
    if not 0 < alpha <= 0.5:
        raise ValueError(f"alpha must lie in (0, 1/2], got {alpha}")
    if not 0 <= eta < 1:
        raise ValueError(f"eta must lie in [0, 1), got {eta}")


def _seed_label(seed):
    ss = as_seed_sequence(seed)
    return int(seed) if not isinstance(seed, np.random.SeedSequence) else int(ss.entropy)


@dataclass(frozen=True)
class CalibrationResult:
    """Sorted samples of the pivotal statistic and the tuning parameter they give."""

    samples: np.ndarray
    quantile: float
    lam: float
    alpha: float
    eta: float
    seed: int
    N: int
    mc_bracket: tuple

    def exceedance(self, lam, eta=None):
        """Fraction of samples with lam_star * (1 - eta) > lam, and its standard error."""
        eta = self.eta if eta is None else eta
        prob = float(np.mean(self.samples * (1 - eta) > lam))
        return prob, math.sqrt(prob * (1 - prob) / self.N)

    def to_dict(self):
        return {
            "schema": SCHEMA,
            "quantile": self.quantile,
            "lambda": self.lam,
            "alpha": self.alpha,
            "eta": self.eta,
            "N": self.N,
            "mc_bracket": list(self.mc_bracket),
            "seed": self.seed,
        }


def _penalized_columns(X, penalty_mask):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a matrix")
    if penalty_mask is None:
        return X
    mask = np.asarray(penalty_mask, dtype=bool)
    if mask.shape != (X.shape[1],):
        raise ValueError(f"penalty_mask has length {mask.size}, expected {X.shape[1]}")
    return X[:, mask]


def sample_lambda_star(X, model, N, seed, penalty_mask=None):
    """N independent draws of the pivotal statistic on the fixed design ``X``.

    Replicate ``i`` draws its noise from its own stream keyed by ``(seed, i)``,
    so the output does not depend on chunking.  Returned in replicate order.
    """
    N = int(N)
    if N < MIN_REPS:
        raise ValueError(f"need at least {MIN_REPS} replicates, got {N}")
    model = make_model(model)
    Xp = _penalized_columns(X, penalty_mask)
    n = Xp.shape[0]
    as_seed_sequence(seed)
    out = np.empty(N)
    for start in range(0, N, _CHUNK):
        stop = min(start + _CHUNK, N)
        xi = np.column_stack([model.sample(stream(seed, i), n) for i in range(start, stop)])
        with np.errstate(over="ignore"):
            level = np.exp(np.mean(model.l(xi), axis=0) + model.l_const)
        if Xp.shape[1]:
            score = np.max(np.abs(Xp.T @ model.l_dot(xi)), axis=0) / n
        else:
            score = np.zeros(stop - start)
        out[start:stop] = score * level
    return out


def calibrate(X, model, alpha=0.05, eta=0.1, N=10_000, seed=0, penalty_mask=None):
    """lam = ceil((1 - alpha) N)-th order statistic of the samples / (1 - eta)."""
    _check_alpha_eta(alpha, eta)
    samples = np.sort(sample_lambda_star(X, model, N, seed, penalty_mask))
    samples.setflags(write=False)
    N = samples.size
    q = float(samples[_order_index(1 - alpha, N)])
    half = 2 * math.sqrt(alpha * (1 - alpha) / N)
    bracket = (float(samples[_order_index(1 - alpha - half, N)]),
               float(samples[_order_index(1 - alpha + half, N)]))
    return CalibrationResult(samples=samples, quantile=q, lam=q / (1 - eta), alpha=float(alpha),
                             eta=float(eta), seed=_seed_label(seed), N=N, mc_bracket=bracket)


def quantile_scaling_check(model, n_grid, p_grid, alpha=0.05, N=10_000, seed=0):
    """Calibrated quantile divided by sqrt(log p / n) on fresh Gaussian designs.

    Returns one row per (n, p) pair with keys n, p, quantile, normalized.
    """
    if not len(n_grid) or not len(p_grid):
        raise ValueError("grids must be nonempty")
    rows = []
    for k, (n, p) in enumerate((n, p) for n in n_grid for p in p_grid):
        X = generate_gaussian_design(n, p, stream(seed, k, 0))
        res = calibrate(X, model, alpha, 0.0, N, child(seed, k, 1))
        rows.append({"n": int(n), "p": int(p), "quantile": res.quantile,
                     "normalized": res.quantile / math.sqrt(math.log(p) / n)})
    return rows
