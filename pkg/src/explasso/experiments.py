"""Replicated simulation studies: error rates, the detection edge, variable
selection and efficiency of the scale and intercept estimates.

Replicate ``i`` of a study draws everything from streams keyed by
``(seed, 1, i, ...)`` and a shared fixed design from ``(seed, 0, ...)``, so
results are reproducible and independent of ``n_jobs``.  Records come back
in replicate order.
"""

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import asdict, dataclass, replace
import json
import math
import warnings

import numpy as np

from ._rng import child, stream
from .calibration import calibrate
from .design import Dataset, generate_gaussian_design, irrepresentable_eta0, read_matrix_csv, with_intercept
from .noise import fisher_info, make_model
from .solver import FitConfig, fit_exp_lasso

SCHEMA = "explasso/1"
STUDIES = ("rates", "edge", "select", "efficiency")


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario.

    ``design`` is ``"gaussian"`` (a fresh standard Gaussian design per
    replicate), ``"fixed"`` (one Gaussian design shared by all replicates) or
    the path of a CSV design file, which is also shared.  The first
    ``s_star`` penalized coefficients equal ``beta_magnitude``; the intercept
    is ``intercept_value`` and is never penalized.
    """

    n: int
    p: int
    s_star: int = 0
    beta_magnitude: float = 1.0
    sigma_star: float = 1.0
    model: str = "gaussian"
    design: str = "gaussian"
    replications: int = 100
    alpha: float = 0.05
    eta: float = 0.1
    seed: int = 0
    calib_reps: int = 2000
    intercept_value: float = 0.0
    n_jobs: int = 1

    def __post_init__(self):
        for name in ("n", "p", "s_star", "replications", "calib_reps", "seed", "n_jobs"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise ValueError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 and p >= 1")
        if not 0 <= self.s_star <= self.p:
            raise ValueError(f"s_star must lie in [0, p], got {self.s_star}")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not (math.isfinite(self.sigma_star) and self.sigma_star > 0):
            raise ValueError("sigma_star must be positive")
        if not math.isfinite(self.beta_magnitude):
            raise ValueError("beta_magnitude must be finite")
        if not 0 < self.alpha <= 0.5:
            raise ValueError("alpha must lie in (0, 1/2]")
        if not 0 <= self.eta < 1:
            raise ValueError("eta must lie in [0, 1)")
        if self.calib_reps < 100:
            raise ValueError("calib_reps must be at least 100")
        if self.seed < 0 or self.n_jobs < 1:
            raise ValueError("seed must be >= 0 and n_jobs >= 1")
        make_model(self.model)

    @classmethod
    def from_file(cls, path, **overrides):
        """Read ``key = value`` lines; ``#`` starts a comment."""
        kw = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"line {lineno}: expected key = value")
                key, value = (s.strip() for s in line.split("=", 1))
                kw[key] = value
        kw.update(overrides)
        return cls.from_strings(kw)

    @classmethod
    def from_strings(cls, kw):
        fields = cls.__dataclass_fields__
        out = {}
        for key, value in kw.items():
            if key not in fields:
                raise ValueError(f"unknown scenario key {key!r}")
            typ = fields[key].type
            if isinstance(value, str) and typ in (int, float):
                try:
                    value = typ(value)
                except ValueError:
                    raise ValueError(f"{key} must be {typ.__name__}, got {value!r}") from None
            out[key] = value
        return cls(**out)


@dataclass
class ExperimentReport:
    """Per-replicate records plus aggregates computed from them."""

    study: str
    config: ScenarioConfig
    records: list
    aggregates: dict
    notes: str = ""
    calibration: object = None

    def recompute(self):
        if self.study == "edge":
            return _edge_with_bound(self.records, self.config, self.calibration)
        return _AGGREGATE[self.study](self.records, self.config)

    def to_csv(self, path):
        cols = _CSV_COLUMNS.get(self.study) or list(self.records[0])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for rec in self.records:
                w.writerow([_fmt(rec[c]) for c in cols])

    def to_dict(self):
        return {"schema": SCHEMA, "study": self.study, "config": asdict(self.config),
                "aggregates": self.aggregates, "notes": self.notes}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def _json_default(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")


# ---------------------------------------------------------------- data

def _beta_star(cfg):
    """Coefficients for the design with the intercept in column 0."""
    b = np.zeros(cfg.p + 1)
    b[0] = cfg.intercept_value
    b[1:cfg.s_star + 1] = cfg.beta_magnitude
    return b


def _shared_design(cfg):
    if cfg.design == "gaussian":
        return None
    if cfg.design == "fixed":
        return generate_gaussian_design(cfg.n, cfg.p, stream(cfg.seed, 0, 0))
    X = read_matrix_csv(cfg.design)
    if X.shape != (cfg.n, cfg.p):
        raise ValueError(f"design file has shape {X.shape}, scenario says ({cfg.n}, {cfg.p})")
    return X


def _replicate(cfg, i, X_shared):
    X = X_shared if X_shared is not None else generate_gaussian_design(cfg.n, cfg.p, stream(cfg.seed, 1, i, 0))
    base = with_intercept(Dataset(np.zeros(cfg.n), X))
    model = make_model(cfg.model)
    xi = model.sample(stream(cfg.seed, 1, i, 1), cfg.n)
    beta = _beta_star(cfg)
    return base.with_y(base.X @ beta + cfg.sigma_star * xi), beta


def _calibration(cfg, ds, i, shared_cal):
    if shared_cal is not None:
        return shared_cal
    return calibrate(ds.X, cfg.model, cfg.alpha, cfg.eta, cfg.calib_reps, child(cfg.seed, 1, i, 2),
                     penalty_mask=ds.penalty_mask)


def _shared_calibration(cfg, X_shared):
    if X_shared is None:
        return None
    ds = with_intercept(Dataset(np.zeros(cfg.n), X_shared))
    return calibrate(ds.X, cfg.model, cfg.alpha, cfg.eta, cfg.calib_reps, child(cfg.seed, 0, 1),
                     penalty_mask=ds.penalty_mask)


def _fit_fields(fit):
    return {"converged": fit.converged, "kkt_residual": fit.kkt_residual, "degenerate": fit.degenerate,
            "trace_monotone": bool(np.all(np.diff(fit.trace) <= 0))}


def _run(fn, cfg, shared, extra=None):
    args = [(cfg, i, shared, extra) for i in range(cfg.replications)]
    if cfg.n_jobs == 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=cfg.n_jobs) as ex:
        return list(ex.map(fn, *zip(*args)))


def _quantile_upper(v, q):
    v = np.sort(np.asarray(v, dtype=float))
    if not v.size:
        return math.nan
    return float(v[min(max(math.ceil(round(q * v.size, 9)), 1), v.size) - 1])


def _converged_only(records):
    return [r for r in records if r["converged"]]


def _cert_summary(records):
    return {"replications": len(records),
            "nonconverged": sum(not r["converged"] for r in records),
            "degenerate": sum(r["degenerate"] for r in records),
            "max_kkt_converged": max((r["kkt_residual"] for r in records if r["converged"]), default=0.0),
            "all_traces_monotone": all(r["trace_monotone"] for r in records)}


# ---------------------------------------------------------------- error rates

def _rates_rep(cfg, i, shared, extra):
    X_shared, cal = shared
    ds, beta = _replicate(cfg, i, X_shared)
    cal = _calibration(cfg, ds, i, cal)
    fit = fit_exp_lasso(ds, cfg.model, FitConfig(lam=cal.lam))
    d = fit.beta[1:] - beta[1:]
    Xp = ds.X[:, 1:]
    rec = {"n": cfg.n, "replication": i, "lambda": cal.lam,
           "l2_error": float(np.linalg.norm(d)),
           "l1_error": float(np.abs(d).sum()),
           "pred_error": float(np.sum((Xp @ d) ** 2) / cfg.n),
           "sigma_rel_error": abs(fit.sigma - cfg.sigma_star) / cfg.sigma_star,
           "sigma_hat": fit.sigma,
           "active_size": len(fit.active_set)}
    rec.update(_fit_fields(fit))
    return rec


def _rates_aggregate(records, cfg):
    out = {"by_n": {}}
    errs = ("l2_error", "l1_error", "pred_error", "sigma_rel_error")
    points = []
    for n in sorted({r["n"] for r in records}):
        rs = _converged_only([r for r in records if r["n"] == n])
        lam = float(np.mean([r["lambda"] for r in rs])) if rs else math.nan
        unit = lam * math.sqrt(max(cfg.s_star, 1))
        row = {"mean_lambda": lam}
        for e in errs:
            v = [r[e] for r in rs]
            row[f"{e}_quantile"] = _quantile_upper(v, 1 - cfg.alpha)
            row[f"{e}_median"] = float(np.median(v)) if v else math.nan
            row[f"{e}_normalized_median"] = row[f"{e}_median"] / unit if v else math.nan
        row.update(_cert_summary([r for r in records if r["n"] == n]))
        out["by_n"][str(n)] = row
        if rs and row["l2_error_median"] > 0:
            points.append((math.log(unit), math.log(row["l2_error_median"])))
    if len(points) >= 2:
        x, y = np.array(points).T
        out["log_log_slope"] = float(np.polyfit(x, y, 1)[0])
    out.update(_cert_summary(records))
    return out


def run_oracle_rates(cfg, n_grid=None):
    """Estimation errors at the calibrated tuning parameter.

    With ``n_grid`` the scenario is rerun for each sample size and the
    aggregates include the slope of log median l2 error against
    log(lambda sqrt(s*)).
    """
    records = []
    for n in (n_grid or [cfg.n]):
        c = replace(cfg, n=int(n))
        X_shared = _shared_design(c)
        records += _run(_rates_rep, c, (X_shared, _shared_calibration(c, X_shared)))
    return ExperimentReport("rates", cfg, records, _rates_aggregate(records, cfg))


# ---------------------------------------------------------------- detection edge

def _edge_rep(cfg, i, shared, multipliers):
    X_shared, cal = shared
    ds, _ = _replicate(cfg, i, X_shared)
    out = []
    for m in multipliers:
        fit = fit_exp_lasso(ds, cfg.model, FitConfig(lam=m * cal.quantile))
        rec = {"multiplier": float(m), "replication": i,
               "retained_null": bool(not np.any(fit.beta[1:] != 0))}
        rec.update(_fit_fields(fit))
        out.append(rec)
    return out


def _edge_aggregate(records, cfg):
    rows = {}
    for m in sorted({r["multiplier"] for r in records}):
        rs = [r for r in records if r["multiplier"] == m]
        ok = _converged_only(rs)
        R = len(ok)
        keep = sum(r["retained_null"] for r in ok) / R if R else math.nan
        se = math.sqrt(keep * (1 - keep) / R) if R else math.nan
        rows[repr(m)] = {"retention": keep, "activity": 1 - keep, "se": se, **_cert_summary(rs)}
    return {"by_multiplier": rows, **_cert_summary(records)}


def run_detection_edge(cfg, lambda_grid=(0.2, 0.5, 1.0, 1.5)):
    """Null-model retention of an all-zero penalized block as the tuning
    parameter moves across the calibrated quantile.

    The design is fixed across replicates ("gaussian" is treated as
    "fixed") and calibrated once; each multiplier ``m`` uses
    ``lam = m * quantile``.  The aggregates carry, per multiplier, the
    lower bound on activity P(lam_star (1 - eta) > lam) estimated from the
    calibration sample.
    """
    if cfg.s_star != 0:
        raise ValueError("the detection edge is studied under the null model (s_star = 0)")
    if cfg.design == "gaussian":
        cfg = replace(cfg, design="fixed")
    X_shared = _shared_design(cfg)
    cal = _shared_calibration(cfg, X_shared)
    grid = [float(m) for m in lambda_grid]
    if not grid or min(grid) <= 0:
        raise ValueError("multipliers must be positive")
    nested = _run(_edge_rep, cfg, (X_shared, cal), grid)
    records = sorted((r for rs in nested for r in rs), key=lambda r: (grid.index(r["multiplier"]), r["replication"]))
    return ExperimentReport("edge", cfg, records, _edge_with_bound(records, cfg, cal), calibration=cal)


def _edge_with_bound(records, cfg, cal):
    agg = _edge_aggregate(records, cfg)
    agg["quantile"] = cal.quantile
    for key, row in agg["by_multiplier"].items():
        lam = float(key) * cal.quantile
        prob, se = cal.exceedance(lam)
        row.update(lam=lam, activity_lower_bound=prob, activity_lower_bound_se=se)
    return agg


# ---------------------------------------------------------------- variable selection

def eta0_threshold(eta):
    """Irrepresentable bound for support recovery in the limit of vanishing
    remainder: eta / (2 - eta)."""
    return eta / (2 - eta)


def _select_rep(cfg, i, shared, extra):
    X_shared, cal = shared
    ds, beta = _replicate(cfg, i, X_shared)
    cal = _calibration(cfg, ds, i, cal)
    fit = fit_exp_lasso(ds, cfg.model, FitConfig(lam=cal.lam))
    S = list(range(1, cfg.s_star + 1))
    off = [j for j in range(1, cfg.p + 1) if j > cfg.s_star]
    eta0 = irrepresentable_eta0(ds, S) if off else 0.0
    fp = int(np.count_nonzero(fit.beta[off])) if off else 0
    rec = {"replication": i, "lambda": cal.lam, "eta0": eta0,
           "stratum": "degenerate" if not off else ("below" if eta0 <= eta0_threshold(cfg.eta) else "above"),
           "false_positives": fp, "no_false_positive": fp == 0,
           "support_recovered": fp == 0 and bool(np.all(fit.beta[S] != 0))}
    rec.update(_fit_fields(fit))
    return rec


def _select_aggregate(records, cfg):
    def rate(rs):
        ok = _converged_only(rs)
        if not ok:
            return {"rate": math.nan, "se": math.nan, "count": 0}
        v = sum(r["no_false_positive"] for r in ok) / len(ok)
        return {"rate": v, "se": math.sqrt(v * (1 - v) / len(ok)), "count": len(ok)}

    out = {"no_false_positive": rate(records), "eta0_threshold": eta0_threshold(cfg.eta),
           "strata": {s: rate([r for r in records if r["stratum"] == s])
                      for s in ("below", "above", "degenerate") if any(r["stratum"] == s for r in records)}}
    ok = _converged_only(records)
    out["support_recovery_rate"] = sum(r["support_recovered"] for r in ok) / len(ok) if ok else math.nan
    out.update(_cert_summary(records))
    return out


def run_variable_selection(cfg):
    """Frequency of no false positives off the true support, stratified by
    the irrepresentable constant of each realized design."""
    if cfg.s_star < 1:
        raise ValueError("variable selection needs s_star >= 1")
    X_shared = _shared_design(cfg)
    records = _run(_select_rep, cfg, (X_shared, _shared_calibration(cfg, X_shared)))
    return ExperimentReport("select", cfg, records, _select_aggregate(records, cfg))


# ---------------------------------------------------------------- efficiency

def _efficiency_rep(cfg, i, shared, extra):
    X_shared, cal = shared
    ds, beta = _replicate(cfg, i, X_shared)
    cal = _calibration(cfg, ds, i, cal)
    fit = fit_exp_lasso(ds, cfg.model, FitConfig(lam=cal.lam))
    # oracle: intercept and scale by maximum likelihood with the slopes known
    off = ds.X[:, 1:] @ beta[1:]
    oracle = fit_exp_lasso(Dataset(ds.y - off, np.ones((cfg.n, 1)), penalty_mask=[False]), cfg.model,
                           FitConfig(lam=1.0))
    rn, s = math.sqrt(cfg.n), cfg.sigma_star
    rec = {"n": cfg.n, "replication": i,
           "scale_stat": rn * (fit.sigma - s) / s,
           "location_stat": rn * (fit.beta[0] - beta[0]) / s,
           "oracle_scale_stat": rn * (oracle.sigma - s) / s,
           "oracle_location_stat": rn * (oracle.beta[0] - beta[0]) / s,
           "paired_scale_diff": rn * abs(fit.sigma - oracle.sigma) / s,
           "paired_location_diff": rn * abs(fit.beta[0] - oracle.beta[0]) / s}
    rec.update(_fit_fields(fit))
    rec["converged"] = fit.converged and oracle.converged
    return rec


def _efficiency_aggregate(records, cfg):
    target = fisher_info(make_model(cfg.model)).inverse
    out = {"target_covariance": target.tolist(), "by_n": {}}
    for n in sorted({r["n"] for r in records}):
        rs = [r for r in records if r["n"] == n]
        ok = _converged_only(rs)
        row = dict(_cert_summary(rs))
        if len(ok) >= 2:
            Z = np.array([[r["scale_stat"], r["location_stat"]] for r in ok])
            C = np.cov(Z, rowvar=False)
            row.update(covariance=C.tolist(), var_ratio=[C[0, 0] / target[0, 0], C[1, 1] / target[1, 1]],
                       median_paired_scale_diff=float(np.median([r["paired_scale_diff"] for r in ok])),
                       median_paired_location_diff=float(np.median([r["paired_location_diff"] for r in ok])))
        out["by_n"][str(n)] = row
    out.update(_cert_summary(records))
    return out


def run_efficiency(cfg, n_grid=None):
    """Sampling covariance of the scale and intercept estimates against the
    inverse Fisher information, and their distance from the oracle MLE."""
    for n in (n_grid or [cfg.n]):
        logp = math.log(cfg.p)
        if cfg.s_star > math.sqrt(n) / logp:
            warnings.warn(f"s_star={cfg.s_star} is large for n={n}, p={cfg.p}: the efficiency regime "
                          "assumes s_star << sqrt(n) / log p", RuntimeWarning)
    records = []
    for n in (n_grid or [cfg.n]):
        c = replace(cfg, n=int(n))
        X_shared = _shared_design(c)
        records += _run(_efficiency_rep, c, (X_shared, _shared_calibration(c, X_shared)))
    notes = ("desk-scale surrogate of the sparse regime: s_star fixed while n grows; "
             "statistics are sqrt(n)(sigma_hat - sigma*)/sigma* and sqrt(n)(b0_hat - b0*)/sigma*")
    return ExperimentReport("efficiency", cfg, records, _efficiency_aggregate(records, cfg), notes)


_AGGREGATE = {"rates": _rates_aggregate, "select": _select_aggregate, "efficiency": _efficiency_aggregate}
_CSV_COLUMNS = {"edge": ["multiplier", "replication", "retained_null"]}


def run_study(study, cfg, **kw):
    if study not in STUDIES:
        raise ValueError(f"unknown study {study!r}; expected one of {', '.join(STUDIES)}")
    return {"rates": run_oracle_rates, "edge": run_detection_edge,
            "select": run_variable_selection, "efficiency": run_efficiency}[study](cfg, **kw)
