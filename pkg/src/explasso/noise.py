"""Log-concave noise families known up to scale.

Each family stores ``l`` (minus the log density without its normalizing
constant), its derivative, and the constant ``l_const`` separately, so that
``l(y) + l_const == -log f(y)`` for the normalized density ``f``.  The solver
only needs ``l``; the pivotal statistic needs the exact ``-log f``.

Families: ``gaussian``, ``subbotin:<r>`` (r >= 1), ``logistic``, ``huber``,
``gumbel``.
"""

from dataclasses import dataclass
import math
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

from ._rng import check_generator

QUAD_LIMIT = 40.0
QUAD_TOL = 1e-8

# normal mass on [-1, 1] times sqrt(2 pi), and the mass of one exponential tail
_HUBER_CORE = math.sqrt(2 * math.pi) * (2 * special.ndtr(1.0) - 1)
_HUBER_TAIL = math.exp(-0.5)
_HUBER_Z = _HUBER_CORE + 2 * _HUBER_TAIL


class QuadratureError(ArithmeticError):
    """Raised when a quadrature does not reach the requested accuracy."""


class FisherInfo(NamedTuple):
    """Fisher information of the location-scale family at (0, 1).

    Coordinates are (scale, location) with the scale parametrized by sigma.
    ``scale`` is E(l'(xi) xi)^2 - 1, ``location`` is E l'(xi)^2 and
    ``cross`` is E l'(xi)^2 xi.
    """

    location: float
    scale: float
    cross: float

    @property
    def matrix(self):
        return np.array([[self.scale, self.cross], [self.cross, self.location]])

    @property
    def inverse(self):
        return np.linalg.inv(self.matrix)


class NoiseModel:
    """Base class for a noise density f = exp(-(l + l_const))."""

    name = "abstract"
    shape = None
    has_closed_scale_step = False
    symmetric = True
    # points where l_dot is not differentiable
    kinks = ()

    def l(self, y):
        raise NotImplementedError

    def l_dot(self, y):
        raise NotImplementedError

    def l_ddot(self, y):
        """Second derivative where it exists (a.e. for Huber)."""
        raise NotImplementedError

    @property
    def l_const(self):
        raise NotImplementedError

    def neg_log_density(self, y):
        return self.l(y) + self.l_const

    def density(self, y):
        with np.errstate(over="ignore"):
            return np.exp(-self.neg_log_density(np.asarray(y, dtype=float)))

    def sample(self, rng, size):
        raise NotImplementedError

    def analytic_fisher(self):
        return None

    @property
    def spec(self):
        return self.name

    def __repr__(self):
        return f"{type(self).__name__}({self.spec!r})"


@dataclass(frozen=True, repr=False)
class Gaussian(NoiseModel):
    name = "gaussian"
    has_closed_scale_step = True

    def l(self, y):
        y = np.asarray(y, dtype=float)
        return 0.5 * y * y

    def l_dot(self, y):
        return np.asarray(y, dtype=float) * 1.0

    def l_ddot(self, y):
        return np.ones_like(np.asarray(y, dtype=float))

    @property
    def l_const(self):
        return 0.5 * math.log(2 * math.pi)

    def sample(self, rng, size):
        return check_generator(rng).standard_normal(size)

    def analytic_fisher(self):
        return FisherInfo(location=1.0, scale=2.0, cross=0.0)

    def scale_closed_form(self, resid):
        return math.sqrt(np.mean(resid * resid))


@dataclass(frozen=True, repr=False)
class Subbotin(NoiseModel):
    """Density proportional to exp(-|y|^r / r); r = 2 is the standard normal."""

    r: float = 2.0
    name = "subbotin"
    has_closed_scale_step = True

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r >= 1):
            raise ValueError(f"Subbotin shape must satisfy r >= 1, got {self.r}")

    @property
    def shape(self):
        return self.r

    @property
    def kinks(self):
        return (0.0,) if self.r < 2 else ()

    @property
    def spec(self):
        return f"subbotin:{self.r:g}"

    def l(self, y):
        return np.abs(np.asarray(y, dtype=float)) ** self.r / self.r

    def l_dot(self, y):
        y = np.asarray(y, dtype=float)
        return np.sign(y) * np.abs(y) ** (self.r - 1)

    def l_ddot(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            return (self.r - 1) * np.abs(y) ** (self.r - 2)

    @property
    def l_const(self):
        r = self.r
        return math.log(2.0) + (1.0 / r - 1.0) * math.log(r) + special.gammaln(1.0 / r)

    def sample(self, rng, size):
        rng = check_generator(rng)
        g = rng.standard_gamma(1.0 / self.r, size)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return sign * (self.r * g) ** (1.0 / self.r)

    def _abs_moment(self, k):
        r = self.r
        return math.exp(k / r * math.log(r) + special.gammaln((k + 1) / r) - special.gammaln(1 / r))

    def analytic_fisher(self):
        return FisherInfo(location=self._abs_moment(2 * self.r - 2), scale=self.r, cross=0.0)

    def scale_closed_form(self, resid):
        return float(np.mean(np.abs(resid) ** self.r) ** (1.0 / self.r))


@dataclass(frozen=True, repr=False)
class Logistic(NoiseModel):
    name = "logistic"

    def l(self, y):
        y = np.asarray(y, dtype=float)
        return y + 2 * np.logaddexp(0.0, -y)

    def l_dot(self, y):
        return np.tanh(0.5 * np.asarray(y, dtype=float))

    def l_ddot(self, y):
        t = np.tanh(0.5 * np.asarray(y, dtype=float))
        return 0.5 * (1 - t * t)

    @property
    def l_const(self):
        return 0.0

    def sample(self, rng, size):
        u = check_generator(rng).random(size)
        return np.log(u) - np.log1p(-u)

    def analytic_fisher(self):
        return FisherInfo(location=1.0 / 3.0, scale=(math.pi ** 2 + 3) / 9, cross=0.0)


@dataclass(frozen=True, repr=False)
class Huber(NoiseModel):
    """Quadratic on [-1, 1], linear outside; transition fixed at one."""

    name = "huber"
    kinks = (-1.0, 1.0)

    def l(self, y):
        a = np.abs(np.asarray(y, dtype=float))
        return np.where(a <= 1, 0.5 * a * a, a - 0.5)

    def l_dot(self, y):
        return np.clip(np.asarray(y, dtype=float), -1.0, 1.0)

    def l_ddot(self, y):
        return (np.abs(np.asarray(y, dtype=float)) < 1).astype(float)

    @property
    def l_const(self):
        return math.log(_HUBER_Z)

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        left = np.exp(np.minimum(y, -1.0) + 0.5)
        core = math.sqrt(2 * math.pi) * (special.ndtr(np.clip(y, -1, 1)) - special.ndtr(-1.0))
        right = _HUBER_TAIL - np.exp(-np.maximum(y, 1.0) + 0.5)
        return (left + core + right) / _HUBER_Z

    def sample(self, rng, size):
        u = check_generator(rng).random(size)
        return self._inverse_cdf(u)

    def _inverse_cdf(self, u):
        m = np.asarray(u, dtype=float) * _HUBER_Z
        out = np.empty_like(m)
        lo = m < _HUBER_TAIL
        hi = m > _HUBER_TAIL + _HUBER_CORE
        mid = ~(lo | hi)
        out[lo] = np.log(m[lo]) - 0.5
        out[hi] = 0.5 - np.log(_HUBER_Z - m[hi])
        out[mid] = special.ndtri(special.ndtr(-1.0) + (m[mid] - _HUBER_TAIL) / math.sqrt(2 * math.pi))
        return out

    def analytic_fisher(self):
        phi1 = math.exp(-0.5) / math.sqrt(2 * math.pi)
        mass = 2 * special.ndtr(1.0) - 1
        root = math.sqrt(2 * math.pi)
        m2_core = root * (mass - 2 * phi1)
        m4_core = root * (3 * mass - 8 * phi1)
        loc = (m2_core + 2 * _HUBER_TAIL) / _HUBER_Z
        # int_1^inf y^2 exp(-(y - 1/2)) dy = 5 exp(-1/2)
        scale = (m4_core + 2 * 5 * _HUBER_TAIL) / _HUBER_Z - 1
        return FisherInfo(location=loc, scale=scale, cross=0.0)


@dataclass(frozen=True, repr=False)
class Gumbel(NoiseModel):
    """Density exp(-y - exp(-y)), the standard Gumbel for maxima."""

    name = "gumbel"
    symmetric = False

    def l(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(over="ignore"):
            return y + np.exp(-y)

    def l_dot(self, y):
        with np.errstate(over="ignore"):
            return -np.expm1(-np.asarray(y, dtype=float))

    def l_ddot(self, y):
        with np.errstate(over="ignore"):
            return np.exp(-np.asarray(y, dtype=float))

    @property
    def l_const(self):
        return 0.0

    def sample(self, rng, size):
        u = check_generator(rng).random(size)
        return -np.log(-np.log(u))

    def analytic_fisher(self):
        g = np.euler_gamma
        return FisherInfo(location=1.0, scale=math.pi ** 2 / 6 + (1 - g) ** 2, cross=g - 1)


_FAMILIES = {"gaussian": Gaussian, "logistic": Logistic, "huber": Huber, "gumbel": Gumbel}


def make_model(spec):
    """Parse a model specifier such as ``"gaussian"`` or ``"subbotin:1.5"``."""
    if isinstance(spec, NoiseModel):
        return spec
    text = str(spec).strip().lower()
    name, _, arg = text.partition(":")
    if name == "subbotin":
        if not arg:
            raise ValueError("subbotin needs a shape, e.g. 'subbotin:1.5'")
        try:
            r = float(arg)
        except ValueError:
            raise ValueError(f"invalid Subbotin shape {arg!r}") from None
        return Subbotin(r)
    if name in _FAMILIES and not arg:
        return _FAMILIES[name]()
    raise ValueError(f"unknown noise model {spec!r}; expected one of "
                     "gaussian, subbotin:<r>, logistic, huber, gumbel")


def _check_scalar(y):
    y = float(y)
    if not math.isfinite(y):
        raise ValueError(f"argument must be finite, got {y}")
    return y


def eval_l(model, y):
    """l(y) without the normalizing constant."""
    return float(make_model(model).l(_check_scalar(y)))


def eval_l_dot(model, y):
    return float(make_model(model).l_dot(_check_scalar(y)))


def sample(model, rng, count):
    if count < 1:
        raise ValueError("count must be at least 1")
    return make_model(model).sample(rng, int(count))


def neg_log_const(model):
    return float(make_model(model).l_const)


def normalization_check(model, n_mc, rng):
    """Monte Carlo estimates of E l'(xi) and E l'(xi) xi under the model.

    A well-specified density gives (0, 1).
    """
    model = make_model(model)
    if n_mc < 10_000:
        raise ValueError("n_mc must be at least 1e4")
    xi = model.sample(rng, int(n_mc))
    s = model.l_dot(xi)
    return float(np.mean(s)), float(np.mean(s * xi))


def _tail_mass_bound(model, t):
    # log-concave tails: int_t^inf f <= f(t) / l'(t) when l'(t) > 0
    bound = 0.0
    for edge, sgn in ((t, 1.0), (-t, -1.0)):
        slope = sgn * float(model.l_dot(edge))
        dens = float(model.density(edge))
        bound += dens / slope if slope > 0 else (math.inf if dens > 0 else 0.0)
    return bound


def expect(model, g, limit=QUAD_LIMIT, tol=QUAD_TOL):
    """E g(xi) under the normalized density by adaptive quadrature.

    Returns ``(value, abserr)``; raises QuadratureError when the reported
    error exceeds ``tol`` relative to the scale of the integral.
    """
    points = [k for k in model.kinks if -limit < k < limit] or None
    integrand = lambda y: g(y) * model.density(y)
    with np.errstate(over="ignore", invalid="ignore"):
        val, err = integrate.quad(integrand, -limit, limit, points=points,
                                  epsabs=tol * 1e-2, epsrel=tol * 1e-2, limit=500)
    if not (math.isfinite(val) and err <= tol * max(1.0, abs(val))):
        raise QuadratureError(f"quadrature for {model.spec} did not converge: value={val}, abserr={err}")
    return val, err


def fisher_info(model, method="quadrature"):
    """Fisher information matrix at (scale, location) = (1, 0)."""
    model = make_model(model)
    if method == "analytic":
        fi = model.analytic_fisher()
        if fi is None:
            raise ValueError(f"no closed form for {model.spec}")
        return fi
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    tail = _tail_mass_bound(model, QUAD_LIMIT)
    if tail > QUAD_TOL:
        raise QuadratureError(f"tail mass beyond +-{QUAD_LIMIT} may reach {tail:.3g}")
    total, _ = expect(model, lambda y: np.ones_like(y))
    if abs(total - 1) > 1e-6:
        raise QuadratureError(f"density of {model.spec} integrates to {total}")
    loc, _ = expect(model, lambda y: model.l_dot(y) ** 2)
    sc, _ = expect(model, lambda y: (model.l_dot(y) * y) ** 2)
    cross, _ = expect(model, lambda y: model.l_dot(y) ** 2 * y)
    if model.symmetric:
        cross = 0.0
    return FisherInfo(location=loc, scale=sc - 1.0, cross=cross)


def fisher_info_mc(model, n_mc, rng):
    """Plug-in Monte Carlo estimate with standard errors.

    Returns ``(FisherInfo, FisherInfo_of_standard_errors)``.
    """
    model = make_model(model)
    xi = model.sample(rng, int(n_mc))
    s = model.l_dot(xi)
    terms = (s * s, (s * xi) ** 2, s * s * xi)
    means = [float(np.mean(t)) for t in terms]
    ses = [float(np.std(t, ddof=1) / math.sqrt(n_mc)) for t in terms]
    return (FisherInfo(location=means[0], scale=means[1] - 1.0, cross=means[2]),
            FisherInfo(location=ses[0], scale=ses[1], cross=ses[2]))
