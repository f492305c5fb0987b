import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from explasso.calibration import calibrate, quantile_scaling_check, sample_lambda_star
from explasso.noise import Gaussian, make_model
from explasso._rng import stream
from oracles import EXP_GAUSS


class ShiftedGaussian(Gaussian):
    """The standard normal with 3 moved from the constant into the loss."""

    def l(self, y):
        return super().l(y) + 3.0

    @property
    def l_const(self):
        return super().l_const - 3.0


def _design(n, p, seed=0):
    return np.random.default_rng(seed).standard_normal((n, p))


def test_gaussian_statistic_recomputed_directly():
    X = _design(50, 30)
    N = 200
    got = sample_lambda_star(X, "gaussian", N, seed=4)
    for i in range(N):
        xi = np.random.default_rng(stream(4, i)).standard_normal(50)
        # independent re-derivation for the normal density
        level = math.exp(np.mean(xi ** 2 / 2 + math.log(math.sqrt(2 * math.pi))))
        expected = level * np.max(np.abs(X.T @ xi / 50))
        assert got[i] == pytest.approx(expected, rel=1e-12)


def test_single_column_of_ones():
    n = 10_000
    s = sample_lambda_star(np.ones((n, 1)), "gaussian", 400, seed=1)
    # the statistic is close to 4.13 |mean xi|, a half-normal with scale 1 / sqrt(n)
    assert 0 <= np.median(s) <= 4.2 * 0.6745 / math.sqrt(n) * 2
    assert np.median(s) == pytest.approx(EXP_GAUSS * 0.6745 / math.sqrt(n), rel=0.15)


def test_representation_invariance():
    X = _design(40, 10)
    a = sample_lambda_star(X, Gaussian(), 150, seed=2)
    b = sample_lambda_star(X, ShiftedGaussian(), 150, seed=2)
    assert np.allclose(a, b, rtol=1e-13, atol=0)


def test_deterministic_and_positive():
    X = _design(30, 8)
    a = sample_lambda_star(X, "logistic", 300, seed=5)
    b = sample_lambda_star(X, "logistic", 300, seed=5)
    assert np.array_equal(a, b)
    assert np.all(a > 0)
    assert not np.array_equal(a, sample_lambda_star(X, "logistic", 300, seed=6))


def test_prefix_does_not_depend_on_N():
    X = _design(20, 5)
    a = sample_lambda_star(X, "huber", 700, seed=7)
    b = sample_lambda_star(X, "huber", 300, seed=7)
    assert np.array_equal(a[:300], b)


def test_only_penalized_columns_enter():
    X = _design(30, 6)
    mask = np.array([False, True, True, False, True, True])
    a = sample_lambda_star(X, "gumbel", 200, 8, penalty_mask=mask)
    perm = X[:, [3, 1, 2, 0, 4, 5]]
    b = sample_lambda_star(perm, "gumbel", 200, 8, penalty_mask=mask)
    assert np.array_equal(a, b)
    c = sample_lambda_star(X[:, mask], "gumbel", 200, 8)
    assert np.array_equal(a, c)


def test_too_few_replicates():
    with pytest.raises(ValueError):
        sample_lambda_star(_design(10, 2), "gaussian", 99, seed=0)


def test_quantile_is_order_statistic():
    X = _design(30, 10)
    res = calibrate(X, "gaussian", alpha=0.05, eta=0.1, N=1000, seed=3)
    raw = sample_lambda_star(X, "gaussian", 1000, seed=3)
    assert res.quantile == np.sort(raw)[949]
    assert np.all(np.diff(res.samples) >= 0)
    assert res.lam == res.quantile / 0.9
    assert res.lam >= res.quantile
    lo, hi = res.mc_bracket
    # ranks ceil((0.95 -+ 2 sqrt(0.05 * 0.95 / 1000)) 1000) = 937 and 964
    assert (lo, hi) == (res.samples[936], res.samples[963])
    assert lo <= res.quantile <= hi


def test_eta_zero_gives_quantile():
    res = calibrate(_design(20, 4), "logistic", alpha=0.1, eta=0.0, N=200, seed=1)
    assert res.lam == res.quantile == res.samples[179]


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.01, 0.5), N=st.integers(100, 600))
def test_quantile_rank_property(alpha, N):
    res = calibrate(_design(15, 3), "gaussian", alpha=alpha, eta=0.2, N=N, seed=0)
    k = math.ceil(round((1 - alpha) * N, 9))
    assert res.quantile == res.samples[k - 1]
    # the fraction of samples strictly above the quantile is at most alpha
    assert np.mean(res.samples > res.quantile) <= alpha + 1e-12


def test_quantile_invariant_to_reordering():
    res = calibrate(_design(15, 3), "gaussian", N=300, seed=9)
    shuffled = np.random.default_rng(0).permutation(res.samples)
    assert np.sort(shuffled)[math.ceil(0.95 * 300) - 1] == res.quantile


@pytest.mark.parametrize("alpha,eta", [(0.0, 0.1), (0.6, 0.1), (0.05, 1.0), (0.05, -0.1)])
def test_calibrate_rejects(alpha, eta):
    with pytest.raises(ValueError):
        calibrate(_design(10, 2), "gaussian", alpha=alpha, eta=eta, N=100)


def test_exceedance():
    res = calibrate(_design(20, 5), "gaussian", N=500, seed=2)
    prob, se = res.exceedance(res.quantile)
    assert prob == np.mean(res.samples * 0.9 > res.quantile)
    assert se == pytest.approx(math.sqrt(prob * (1 - prob) / 500))
    assert res.exceedance(1e9) == (0.0, 0.0)


def test_to_dict_fields():
    d = calibrate(_design(20, 5), "gaussian", N=100, seed=11).to_dict()
    assert set(d) >= {"quantile", "lambda", "alpha", "eta", "N", "mc_bracket", "seed"}
    assert d["seed"] == 11 and d["N"] == 100 and len(d["mc_bracket"]) == 2


def test_regression_bound_wide_design():
    n, p = 200, 500
    X = _design(n, p, seed=12)
    X -= X.mean(axis=0)
    res = calibrate(X, "gaussian", N=10_000, seed=13)
    assert 2 <= res.quantile / math.sqrt(math.log(p) / n) <= 12


def test_scaling_check_rows():
    rows = quantile_scaling_check("gaussian", [50], [20], N=100, seed=0)
    assert len(rows) == 1
    r = rows[0]
    assert r["normalized"] == pytest.approx(r["quantile"] / math.sqrt(math.log(20) / 50))
    with pytest.raises(ValueError):
        quantile_scaling_check("gaussian", [], [20])


def test_penalty_mask_length_checked():
    with pytest.raises(ValueError):
        sample_lambda_star(_design(10, 3), "gaussian", 100, 0, penalty_mask=[True, False])


def test_model_specifier_accepted():
    X = _design(10, 3)
    assert np.array_equal(sample_lambda_star(X, "subbotin:1.5", 100, 0),
                          sample_lambda_star(X, make_model("subbotin:1.5"), 100, 0))
