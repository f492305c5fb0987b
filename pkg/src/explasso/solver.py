"""The exp-Lasso and the known-scale likelihood Lasso.

The exp-Lasso minimizes ``exp(R_n(beta, sigma)) + lam * ||beta_pen||_1`` over
coefficients and scale, where ``R_n(beta, sigma) = mean(l((y - X beta) / sigma))
+ l_const + log(sigma)``.  Because ``exp(R_n)`` is proportional to sigma, the
problem rescales exactly with y and ``lam`` does not depend on the noise level.

The joint problem is not convex in general.  We alternate an exact scale step
with a proximal-gradient coefficient step (convex at fixed sigma) and certify
the result through its KKT conditions; this gives a stationary point, not a
certified global minimum.
"""

from dataclasses import dataclass, field
import json
import math
import warnings

import numpy as np
from scipy import optimize

from .noise import make_model

SCHEMA = "explasso/1"
# outer alternations before handing over to the profiled solver
SWITCH_AFTER = 20
# proximal-gradient steps allowed without a new best KKT residual
PATIENCE = 2000


@dataclass
class FitConfig:
    """Tuning and stopping parameters.

    ``lam`` is a positive number or ``"calibrate"``, in which case
    ``lam = quantile(1 - alpha) / (1 - eta)`` of the pivotal statistic.
    ``tol_kkt`` is relative to ``exp(R_n) / sigma``, the natural unit of the
    gradient, which keeps the certificate scale free.
    """

    lam: float | str = "calibrate"
    alpha: float = 0.05
    eta: float = 0.1
    tol_obj: float = 1e-10
    tol_kkt: float = 1e-8
    max_outer: int = 200
    max_inner: int = 10_000
    sigma_floor: float | None = None
    seed: int = 0
    calib_reps: int = 10_000
    n_starts: int = 1

    def __post_init__(self):
        if isinstance(self.lam, str):
            if self.lam not in ("calibrate", "auto"):
                raise ValueError(f"lam must be positive or 'calibrate', got {self.lam!r}")
            self.lam = "calibrate"
        elif not (math.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not 0 < self.alpha <= 0.5:
            raise ValueError(f"alpha must lie in (0, 1/2], got {self.alpha}")
        if not 0 <= self.eta < 1:
            raise ValueError(f"eta must lie in [0, 1), got {self.eta}")
        if self.tol_obj <= 0 or self.tol_kkt <= 0:
            raise ValueError("tolerances must be positive")
        if self.sigma_floor is not None and self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be positive")
        if self.max_outer < 1 or self.max_inner < 1 or self.n_starts < 1:
            raise ValueError("iteration caps and n_starts must be at least 1")
        if self.calib_reps < 100:
            raise ValueError("calib_reps must be at least 100")


@dataclass
class FitResult:
    beta: np.ndarray
    sigma: float
    active_set: list
    objective: float
    kkt_residual: float
    outer_iters: int
    converged: bool
    lam: float
    degenerate: bool = False
    trace: list = field(default_factory=list, repr=False)
    calibration: object = field(default=None, repr=False)

    def to_dict(self):
        out = {
            "schema": SCHEMA,
            "beta": [float(b) for b in self.beta],
            "sigma": float(self.sigma),
            "active_set": [int(j) for j in self.active_set],
            "objective": float(self.objective),
            "kkt_residual": float(self.kkt_residual),
            "converged": bool(self.converged),
            "iters": int(self.outer_iters),
            "lambda": float(self.lam),
            "degenerate": bool(self.degenerate),
        }
        if self.calibration is not None:
            out["calibration"] = self.calibration.to_dict()
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def default_sigma_floor(y):
    return 1e-10 * (float(np.std(y)) + np.finfo(float).eps)


def _check_sigma(sigma):
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")


def risk(ds, model, beta, sigma):
    """Empirical risk R_n(beta, sigma) with the exact normalized loss."""
    _check_sigma(sigma)
    model = make_model(model)
    t = (ds.y - ds.X @ beta) / sigma
    return float(np.mean(model.l(t)) + model.l_const + math.log(sigma))


def exp_risk_grad(ds, model, beta, sigma):
    """exp(R_n) and its gradient in (beta, sigma)."""
    _check_sigma(sigma)
    model = make_model(model)
    return _smooth_exp(model, ds.X, ds.y, np.asarray(beta, dtype=float), sigma, grad_sigma=True)


def objective(ds, model, beta, sigma, lam):
    beta = np.asarray(beta, dtype=float)
    R = risk(ds, model, beta, sigma)
    E = math.exp(R) if R < 709.0 else math.inf
    return E + lam * float(np.abs(beta[ds.penalty_mask]).sum())


def _smooth_exp(model, X, y, beta, sigma, grad=True, grad_sigma=False):
    n = y.shape[0]
    t = (y - X @ beta) / sigma
    with np.errstate(over="ignore"):
        E = sigma * math.exp(min(float(np.mean(model.l(t))) + model.l_const, 700.0))
    if not grad:
        return E
    s = model.l_dot(t)
    g = -(E / (n * sigma)) * (X.T @ s)
    if not grad_sigma:
        return E, g
    gs = (E / sigma) * (1.0 - float(np.mean(s * t)))
    return E, g, gs


def _soft(z, thr, mask):
    out = z.copy()
    zm = z[mask]
    out[mask] = np.sign(zm) * np.maximum(np.abs(zm) - thr, 0.0)
    return out


def _kkt_raw(g, beta, mask, lam):
    """Largest violation of the stationarity conditions for a l1 problem."""
    r = 0.0
    if (~mask).any():
        r = float(np.max(np.abs(g[~mask])))
    if mask.any():
        gp, bp = g[mask], beta[mask]
        act = bp != 0
        if act.any():
            r = max(r, float(np.max(np.abs(gp[act] + lam * np.sign(bp[act])))))
        if (~act).any():
            r = max(r, float(np.max(np.abs(gp[~act]))) - lam)
    return max(r, 0.0)


def _pen_diff(b1, b0, mask, lam):
    return lam * float(np.sum(np.abs(b1[mask]) - np.abs(b0[mask])))


def _prox_grad(fg, fdiff, beta0, mask, lam, L0, tol, max_iter, noise=0.0, deltas=None):
    """Monotone accelerated proximal gradient for f(beta) + lam ||beta_mask||_1.

    ``fg(beta) -> (f, grad)``; ``fdiff(b1, b0)`` returns f(b1) - f(b0)
    accurate to the size of the difference, which keeps the descent tests
    meaningful once changes fall below the resolution of f itself.
    Backtracking doubles the curvature estimate until the descent-lemma bound
    holds; an objective increase restarts the momentum from the last accepted
    point.  A plain proximal step from the accepted point whose computed
    change is positive but below ``noise`` (the rounding level of f) is still
    taken, after a few shorter steps have failed to lower the KKT residual:
    it cannot increase the objective beyond rounding.  Such steps may
    wander, so the most stationary iterate since the last clear decrease is
    returned and the loop gives up after ``PATIENCE`` steps without improving it.
    Stops once the KKT residual at the accepted point is <= ``tol``, which
    may be a callable of the current point.  When ``deltas`` is a list, the
    objective change of each accepted step (clipped at zero) is appended.
    """
    tol_at = tol if callable(tol) else (lambda b: tol)
    beta = beta0.copy()
    fb, gb = fg(beta)
    z, gz = beta, gb
    theta = 1.0
    L = L0
    kkt = _kkt_raw(gb, beta, mask, lam)
    best = (kkt, beta, 0)
    it = since_best = retries = 0
    while it < max_iter and kkt > tol_at(beta):
        it += 1
        L *= 0.8
        while True:
            cand = _soft(z - gz / L, lam / L, mask)
            d = cand - z
            if fdiff(cand, z) <= gz @ d + 0.5 * L * (d @ d) + noise:
                break
            L *= 2.0
            if L > 1e300:
                return beta, kkt, it
        delta = fdiff(cand, beta) + _pen_diff(cand, beta, mask, lam)
        if delta > noise or (delta > 0 and z is not beta):
            if z is beta:
                break
            # drop the momentum and retry from the accepted point
            z, gz, theta = beta, gb, 1.0
            continue
        fc, gc = fg(cand)
        kkt_c = _kkt_raw(gc, cand, mask, lam)
        if delta > 0 and kkt_c >= kkt and retries < 5:
            # inside the rounding band: prefer a shorter step that is more stationary
            if not retries:
                L_keep = L
            retries += 1
            z, gz, theta = beta, gb, 1.0
            L *= 4.0
            continue
        if retries:
            L, retries = L_keep, 0
        if deltas is not None:
            deltas.append(min(delta, 0.0))
        theta_new = 0.5 * (1 + math.sqrt(1 + 4 * theta * theta))
        mom = (theta - 1) / theta_new
        prev = beta
        beta, fb, gb, kkt = cand, fc, gc, kkt_c
        since_best += 1
        if kkt < best[0] or delta < -noise:
            best, since_best = (kkt, beta, len(deltas) if deltas is not None else 0), 0
        elif since_best > PATIENCE:
            # wandering inside the rounding band without getting more stationary
            break
        if mom > 0 and np.any(beta != prev):
            z = beta + mom * (beta - prev)
            _, gz = fg(z)
        else:
            z, gz = beta, gb
        theta = theta_new
    if best[0] < kkt:
        kkt, beta = best[0], best[1]
        if deltas is not None:
            del deltas[best[2]:]
    return beta, kkt, it


def _scale_from_resid(model, r, floor, method="auto"):
    """argmin over sigma >= floor of mean(l(r / sigma)) + log(sigma)."""
    amax = float(np.max(np.abs(r))) if r.size else 0.0
    if amax == 0.0:
        return floor, True
    if method == "auto":
        method = "closed" if model.has_closed_scale_step else "numeric"
    if method == "closed":
        if not model.has_closed_scale_step:
            raise ValueError(f"{model.spec} has no closed-form scale step")
        s = model.scale_closed_form(r)
        return (s, False) if s > floor else (floor, True)
    if method != "numeric":
        raise ValueError(f"unknown method {method!r}")

    def score(u):
        t = r * math.exp(-u)
        # at the floor the score can overflow to +inf, which still brackets the root
        with np.errstate(over="ignore"):
            return float(np.mean(model.l_dot(t) * t)) - 1.0

    lo = math.log(floor)
    if score(lo) <= 0:
        return floor, True
    hi = math.log(10 * amax + floor)
    while score(hi) > 0:
        hi += 1.0
    u = optimize.brentq(score, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(u), False


def scale_step(ds, model, beta, sigma_floor=None, method="auto"):
    """Profiled scale: the sigma minimizing R_n(beta, .) on [sigma_floor, inf).

    Closed form for Subbotin (including Gaussian), otherwise the root of
    mean(l'(r/sigma) r/sigma) = 1 found by bracketing in log sigma.  Returns
    ``sigma_floor`` when all residuals vanish.
    """
    model = make_model(model)
    floor = default_sigma_floor(ds.y) if sigma_floor is None else sigma_floor
    r = ds.y - ds.X @ np.asarray(beta, dtype=float)
    return _scale_from_resid(model, r, floor, method)[0]


def _curvature(X):
    n = X.shape[0]
    if X.shape[1] == 0:
        return 1.0
    return float(np.linalg.norm(X, 2) ** 2 / n) or 1.0


class _ExpLassoProblem:
    def __init__(self, X, y, mask, model, lam, floor):
        self.X, self.y, self.mask, self.model, self.lam, self.floor = X, y, mask, model, lam, floor
        self.curv = _curvature(X)

    def obj(self, beta, sigma):
        return _smooth_exp(self.model, self.X, self.y, beta, sigma, grad=False) + \
            self.lam * float(np.abs(beta[self.mask]).sum())

    def exp_diff(self, b1, s1, b0, s0):
        """exp(R_n(b1, s1)) - exp(R_n(b0, s0)), accurate to its own size."""
        l = self.model.l
        t1 = (self.y - self.X @ b1) / s1
        t0 = (self.y - self.X @ b0) / s0
        dlog = math.log(s1 / s0) + float(np.mean(l(t1) - l(t0)))
        return _smooth_exp(self.model, self.X, self.y, b0, s0, grad=False) * math.expm1(dlog)

    def obj_diff(self, b1, s1, b0, s0):
        return self.exp_diff(b1, s1, b0, s0) + _pen_diff(b1, b0, self.mask, self.lam)

    def kkt(self, beta, sigma, coef_only=False):
        E, g, gs = _smooth_exp(self.model, self.X, self.y, beta, sigma, grad_sigma=True)
        unit = E / sigma
        raw = _kkt_raw(g, beta, self.mask, self.lam)
        if not coef_only:
            # at the floor only a negative scale derivative violates stationarity
            raw = max(raw, abs(gs) if sigma > self.floor else max(-gs, 0.0))
        return raw / unit

    def sigma_step(self, beta):
        return _scale_from_resid(self.model, self.y - self.X @ beta, self.floor)

    def beta_step(self, beta, sigma, tol, max_iter):
        model, X, y = self.model, self.X, self.y
        fg = lambda b: _smooth_exp(model, X, y, b, sigma)
        fdiff = lambda b1, b0: self.exp_diff(b1, sigma, b0, sigma)
        E = _smooth_exp(model, X, y, beta, sigma, grad=False)
        L0 = E / sigma ** 2 * self.curv
        b, kkt, it = _prox_grad(fg, fdiff, beta, self.mask, self.lam, L0, tol * E / sigma, max_iter,
                                noise=self.noise(E))
        return b, it

    def noise(self, E):
        return 64 * np.finfo(float).eps * E

    def profiled(self, beta, tol_kkt, max_iter):
        """Proximal gradient on h(beta) = min_sigma exp(R_n(beta, sigma)).

        The scale is re-solved at every point, and by the envelope theorem
        the gradient of h is that of exp(R_n) at the optimal scale.  Returns
        the coefficients, their scale, the accepted objective changes and
        the iteration count.
        """
        cache = {}

        def scale(b):
            key = b.tobytes()
            if key not in cache:
                if len(cache) > 8:
                    cache.clear()
                cache[key] = self.sigma_step(b)
            return cache[key][0]

        model, X, y = self.model, self.X, self.y
        fg = lambda b: _smooth_exp(model, X, y, b, scale(b))
        fdiff = lambda b1, b0: self.exp_diff(b1, scale(b1), b0, scale(b0))
        tol = lambda b: tol_kkt * _smooth_exp(model, X, y, b, scale(b), grad=False) / scale(b)
        sigma = scale(beta)
        E = _smooth_exp(model, X, y, beta, sigma, grad=False)
        deltas = []
        b, _, it = _prox_grad(fg, fdiff, beta, self.mask, self.lam, E / sigma ** 2 * self.curv, tol,
                              max_iter, noise=self.noise(E), deltas=deltas)
        return b, scale(b), deltas, it

    def solve(self, beta, tol_obj, tol_kkt, max_outer, max_inner):
        """Alternate coefficient and scale steps from ``beta``.

        The trace accumulates the accurately computed decrease of each
        accepted step, so it is nonincreasing by construction.  Steps whose
        computed change is positive are rejected unless the change sits below
        the rounding level of the objective, in which case it counts as zero.
        """
        sigma, degenerate = self.sigma_step(beta)
        obj = self.obj(beta, sigma)
        trace = [obj]
        converged = False
        kkt = self.kkt(beta, sigma)
        it = 0
        for it in range(1, max_outer + 1):
            step = 0.0
            moved = False
            noise = self.noise(trace[-1])
            # inexact inner solves early on, tight ones near the end
            b_new, _ = self.beta_step(beta, sigma, 0.1 * max(tol_kkt, min(kkt, 1e-3)), max_inner)
            if np.any(b_new != beta):
                dlt = self.obj_diff(b_new, sigma, beta, sigma)
                if dlt <= 0 or (dlt <= noise and
                                self.kkt(b_new, sigma, coef_only=True) < self.kkt(beta, sigma, coef_only=True)):
                    beta, step, moved = b_new, step + min(dlt, 0.0), True
            s_new, deg = self.sigma_step(beta)
            if s_new != sigma:
                dlt = self.obj_diff(beta, s_new, beta, sigma)
                if dlt <= noise:
                    sigma, degenerate, step, moved = s_new, deg, step + min(dlt, 0.0), True
            trace.append(trace[-1] + step)
            kkt_prev, kkt = kkt, self.kkt(beta, sigma)
            moved = moved and (step < 0 or kkt < kkt_prev)
            if kkt <= tol_kkt and -step <= tol_obj * abs(trace[-1]):
                converged = True
                break
            if (not moved or it >= SWITCH_AFTER) and kkt > tol_kkt:
                break
        if not converged:
            # slow or stalled alternation: finish on the profiled objective
            beta, sigma, deltas, extra = self.profiled(beta, tol_kkt, max_inner)
            degenerate = self.sigma_step(beta)[1]
            trace.extend(trace[-1] + np.cumsum(deltas))
            kkt = self.kkt(beta, sigma)
            converged = kkt <= tol_kkt
            it += extra
        obj = self.obj(beta, sigma)
        return beta, sigma, obj, kkt, it, converged, degenerate, trace


def _is_laplace(model):
    return getattr(model, "r", None) == 1.0


def _lad_lasso(X, y, mask, c, lam):
    """min_beta c * mean|y - X beta| + lam ||beta_pen||_1 as a linear program.

    Returns the coefficients and the dual certificate: the largest violation
    of the subgradient conditions, built from the equality-constraint
    multipliers, in the units of the objective's gradient.
    """
    from scipy import sparse

    n, p = X.shape
    w = np.where(mask, lam, 0.0)
    cost = np.concatenate([w, w, np.full(2 * n, c / n)])
    eye = sparse.identity(n, format="csr")
    A = sparse.hstack([sparse.csr_matrix(X), -sparse.csr_matrix(X), eye, -eye], format="csr")
    res = optimize.linprog(cost, A_eq=A, b_eq=y, bounds=(0, None), method="highs-ds",
                           options={"primal_feasibility_tolerance": 1e-10,
                                    "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        return np.zeros(p), math.inf, False
    beta = res.x[:p] - res.x[p:2 * p]
    nu = res.eqlin.marginals
    # subgradient of c * mean|r| is -(c / n) X' u with u in [-1, 1], u = sign(r) off zero
    u = np.clip(nu * n / c, -1.0, 1.0)
    r = y - X @ beta
    scale_r = max(float(np.max(np.abs(y))), 1.0)
    off = np.abs(r) > 1e-9 * scale_r
    sign_gap = float(np.max(np.abs(u[off] - np.sign(r[off])))) * c if off.any() else 0.0
    g = -(c / n) * (X.T @ u)
    return beta, max(_kkt_raw(g, beta, mask, lam), sign_gap), True


def _fit_laplace(X, y, mask, model, lam, floor):
    """Exp-Lasso for the Laplace family.

    With r = 1 the profiled scale is mean|r| and exp(R_n) becomes
    2e * mean|r|, so the problem is a least-absolute-deviation Lasso.
    """
    c = math.exp(1.0 + model.l_const)
    prob = _ExpLassoProblem(X, y, mask, model, lam, floor)
    beta0 = np.zeros(X.shape[1])
    sigma0, _ = prob.sigma_step(beta0)
    start = prob.obj(beta0, sigma0)
    beta, viol, ok = _lad_lasso(X, y, mask, c, lam)
    sigma, degenerate = prob.sigma_step(beta)
    obj = prob.obj(beta, sigma)
    kkt = viol / c if ok else math.inf
    trace = [start, min(obj, start)]
    return beta, sigma, obj, kkt, 1, ok and not degenerate, degenerate, trace


def _restricted_start(X, y, mask, model, floor, cfg):
    """Unpenalized block at its restricted MLE, penalized block at zero."""
    beta = np.zeros(X.shape[1])
    unpen = np.flatnonzero(~mask)
    if unpen.size:
        sub = _ExpLassoProblem(X[:, unpen], y, np.zeros(unpen.size, dtype=bool), model, 1.0, floor)
        # only a starting point, so a loose tolerance will do
        b, *_ = sub.solve(np.zeros(unpen.size), cfg.tol_obj, 1e-6, cfg.max_outer, cfg.max_inner)
        beta[unpen] = b
    return beta


def fit_exp_lasso(ds, model, cfg=None, calibration=None, init=None):
    """Fit the exp-Lasso on ``ds`` with noise family ``model``.

    When ``cfg.lam == "calibrate"`` the tuning parameter comes from
    ``calibration`` or from a fresh Monte Carlo calibration on ``ds.X``.
    ``init`` optionally warm-starts the coefficients.  Non-convergence is
    reported through ``converged=False``, never raised.
    """
    model = make_model(model)
    cfg = cfg or FitConfig()
    if cfg.lam == "calibrate":
        if calibration is None:
            from .calibration import calibrate
            calibration = calibrate(ds.X, model, cfg.alpha, cfg.eta, cfg.calib_reps, cfg.seed,
                                    penalty_mask=ds.penalty_mask)
        lam = calibration.lam
    else:
        lam = float(cfg.lam)
    floor = cfg.sigma_floor if cfg.sigma_floor is not None else default_sigma_floor(ds.y)
    X, y, mask = ds.X, ds.y, ds.penalty_mask
    prob = _ExpLassoProblem(X, y, mask, model, lam, floor)

    if _is_laplace(model):
        # convex after profiling the scale, so no starting point is needed
        beta, sigma, obj, kkt, it, converged, degenerate, trace = _fit_laplace(X, y, mask, model, lam, floor)
        converged = converged and kkt <= cfg.tol_kkt
        return FitResult(beta=beta, sigma=float(sigma), active_set=[int(j) for j in np.flatnonzero(mask) if beta[j] != 0],
                         objective=float(obj), kkt_residual=float(kkt), outer_iters=it,
                         converged=bool(converged), lam=lam, degenerate=bool(degenerate), trace=trace,
                         calibration=calibration if cfg.lam == "calibrate" else None)

    starts = [np.array(init, dtype=float) if init is not None else _restricted_start(X, y, mask, model, floor, cfg)]
    if cfg.n_starts > 1:
        rng = np.random.default_rng(cfg.seed)
        scale = float(np.std(y)) / math.sqrt(max(mask.sum(), 1))
        for _ in range(cfg.n_starts - 1):
            b = starts[0].copy()
            b[mask] = rng.standard_normal(mask.sum()) * scale
            starts.append(b)

    best = None
    for b0 in starts:
        sol = prob.solve(b0, cfg.tol_obj, cfg.tol_kkt, cfg.max_outer, cfg.max_inner)
        if best is None or (sol[5], -sol[2]) > (best[5], -best[2]):
            best = sol
    beta, sigma, obj, kkt, it, converged, degenerate, trace = best
    active = [int(j) for j in np.flatnonzero(mask) if beta[j] != 0]
    return FitResult(beta=beta, sigma=float(sigma), active_set=active, objective=float(obj),
                     kkt_residual=float(kkt), outer_iters=int(it), converged=bool(converged),
                     lam=lam, degenerate=bool(degenerate), trace=trace,
                     calibration=calibration if cfg.lam == "calibrate" else None)


def fit_known_scale(ds, model, sigma_star, lam, tol_kkt=1e-8, max_iter=100_000, full_output=False):
    """Lasso on the likelihood with known scale:
    min_beta R_n(beta, sigma_star) + lam ||beta_pen||_1 / sigma_star.

    The KKT residual is measured in units of 1 / sigma_star.
    """
    _check_sigma(sigma_star)
    if not lam > 0:
        raise ValueError("lam must be positive")
    model = make_model(model)
    X, y, mask = ds.X, ds.y, ds.penalty_mask
    n = y.shape[0]

    def fg(b):
        t = (y - X @ b) / sigma_star
        return float(np.mean(model.l(t))), -(X.T @ model.l_dot(t)) / (n * sigma_star)

    def fdiff(b1, b0):
        return float(np.mean(model.l((y - X @ b1) / sigma_star) - model.l((y - X @ b0) / sigma_star)))

    if _is_laplace(model):
        beta, kkt_rel, _ = _lad_lasso(X, y, mask, 1.0, lam)
        it = 1
    else:
        L0 = _curvature(X) / sigma_star ** 2
        noise = 64 * np.finfo(float).eps * max(abs(fg(np.zeros(X.shape[1]))[0]), 1.0)
        beta, kkt, it = _prox_grad(fg, fdiff, np.zeros(X.shape[1]), mask, lam / sigma_star, L0,
                                   tol_kkt / sigma_star, max_iter, noise=noise)
        kkt_rel = kkt * sigma_star
    F = fg(beta)[0] + lam / sigma_star * float(np.abs(beta[mask]).sum())
    if not full_output:
        if kkt_rel > tol_kkt:
            warnings.warn(f"known-scale Lasso stopped with KKT residual {kkt_rel:.3g}", RuntimeWarning)
        return beta
    return beta, {"kkt_residual": kkt_rel, "iters": it, "converged": kkt_rel <= tol_kkt,
                  "objective": float(F + model.l_const + math.log(sigma_star))}


def predict(ds, beta, X_new):
    """Predictions for raw rows ``X_new`` in the training column space.

    When ``ds`` carries an intercept, ``X_new`` excludes the column of ones
    and is centered with the training means.
    """
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (ds.p,):
        raise ValueError(f"beta has length {beta.size}, expected {ds.p}")
    if ds.intercept:
        if X_new.shape[1] != ds.p - 1:
            raise ValueError(f"X_new has {X_new.shape[1]} columns, expected {ds.p - 1}")
        X_new = np.column_stack([np.ones(X_new.shape[0]), X_new - ds.col_means[1:]])
    else:
        if X_new.shape[1] != ds.p:
            raise ValueError(f"X_new has {X_new.shape[1]} columns, expected {ds.p}")
        X_new = X_new - ds.col_means
    return X_new @ beta


def null_threshold(ds, model, cfg=None):
    """Smallest lam at which the null fit (penalized block zero) is stationary.

    Returns ``max_j |d exp(R_n) / d beta_j|`` over penalized ``j`` at the
    restricted MLE of the unpenalized block and sigma.
    """
    model = make_model(model)
    cfg = cfg or FitConfig(lam=1.0)
    floor = cfg.sigma_floor if cfg.sigma_floor is not None else default_sigma_floor(ds.y)
    beta = _restricted_start(ds.X, ds.y, ds.penalty_mask, model, floor, cfg)
    sigma, _ = _scale_from_resid(model, ds.y - ds.X @ beta, floor)
    _, g = _smooth_exp(model, ds.X, ds.y, beta, sigma)
    return float(np.max(np.abs(g[ds.penalty_mask]))) if ds.penalty_mask.any() else 0.0
