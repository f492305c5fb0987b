"""Design matrices: loading, centering, Gram matrix and diagnostics."""

import csv
from dataclasses import dataclass, field, replace
import math

import numpy as np

from ._rng import check_generator


class DataError(ValueError):
    """Malformed input data; carries the offending row and column when known."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column


class RankError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response ``y``, design ``X`` and a penalty mask (False = unpenalized).

    ``col_means`` holds the means subtracted from each column (zero for
    columns that were not centered) and ``intercept`` records whether the
    first column is a prepended column of ones.
    """

    y: np.ndarray
    X: np.ndarray
    penalty_mask: np.ndarray = None
    centered: bool = False
    intercept: bool = False
    col_means: np.ndarray = None
    names: tuple = field(default=())

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        n = y.shape[0]
        if X.ndim != 2 or X.shape[0] != n:
            raise DataError(f"X has shape {X.shape}, expected ({n}, p)")
        if n < 2:
            raise DataError("need at least two observations")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DataError("non-finite entries in y or X")
        p = X.shape[1]
        mask = np.ones(p, dtype=bool) if self.penalty_mask is None else np.array(self.penalty_mask, dtype=bool)
        if mask.shape != (p,):
            raise DataError(f"penalty_mask has length {mask.size}, expected {p}")
        means = np.zeros(p) if self.col_means is None else np.array(self.col_means, dtype=float)
        names = tuple(self.names) if self.names else tuple(f"x{j + 1}" for j in range(p))
        for name, arr in (("y", y), ("X", X), ("penalty_mask", mask), ("col_means", means)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "names", names)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def penalized(self):
        return np.flatnonzero(self.penalty_mask)

    @property
    def unpenalized(self):
        return np.flatnonzero(~self.penalty_mask)

    def with_y(self, y):
        return replace(self, y=y)


def load_csv(path):
    """Read a CSV with a header row, a ``y`` column and numeric predictors."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("empty file") from None
        if "y" not in header:
            raise DataError("missing 'y' column in header")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"expected {len(header)} fields, found {len(row)}", row=lineno)
            values = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"non-numeric cell {cell!r}", row=lineno, column=name) from None
                if not math.isfinite(v):
                    raise DataError(f"non-finite cell {cell!r}", row=lineno, column=name)
                values.append(v)
            rows.append(values)
    if len(rows) < 2:
        raise DataError(f"need at least two data rows, found {len(rows)}")
    data = np.array(rows)
    iy = header.index("y")
    xcols = [j for j in range(len(header)) if j != iy]
    return Dataset(y=data[:, iy], X=data[:, xcols].reshape(len(rows), len(xcols)),
                   names=tuple(header[j] for j in xcols))


def read_matrix_csv(path):
    """Predictor matrix from a CSV with a header row.

    A ``y`` column and an unnamed first column (row labels, as written by
    :func:`write_matrix_csv`) are dropped.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        # skip the response and an unnamed leading column of row labels
        cols = [j for j, h in enumerate(header) if h != "y" and (h or j > 0)]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"expected {len(header)} fields, found {len(row)}", row=lineno)
            try:
                rows.append([float(row[j]) for j in cols])
            except ValueError:
                raise DataError("non-numeric cell", row=lineno) from None
    X = np.array(rows, dtype=float).reshape(len(rows), len(cols))
    if X.shape[0] < 2 or not np.all(np.isfinite(X)):
        raise DataError("design needs at least two finite rows")
    return X


def write_matrix_csv(path, M, row_names=None, col_names=None):
    M = np.atleast_2d(M)
    col_names = col_names or [f"c{j + 1}" for j in range(M.shape[1])]
    row_names = row_names or [f"r{i + 1}" for i in range(M.shape[0])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([""] + list(col_names))
        for name, row in zip(row_names, M):
            w.writerow([name] + [repr(float(v)) for v in row])


def with_intercept(ds):
    """Prepend an unpenalized column of ones and center the penalized columns."""
    X = ds.X
    mask = ds.penalty_mask
    means = np.where(mask, X.mean(axis=0), 0.0) if X.shape[1] else np.zeros(0)
    Xc = X - means
    return Dataset(
        y=ds.y,
        X=np.column_stack([np.ones(ds.n), Xc]),
        penalty_mask=np.concatenate([[False], mask]),
        centered=True,
        intercept=True,
        col_means=np.concatenate([[0.0], ds.col_means + means]),
        names=("intercept",) + tuple(ds.names),
    )


def gram(ds_or_X):
    X = ds_or_X.X if isinstance(ds_or_X, Dataset) else np.asarray(ds_or_X, dtype=float)
    G = X.T @ X / X.shape[0]
    return 0.5 * (G + G.T)


def _split_support(ds, S):
    S = np.atleast_1d(np.asarray(S, dtype=int)).reshape(-1)
    if S.size and (S.min() < 0 or S.max() >= ds.p):
        raise IndexError(f"support indices out of range for p={ds.p}")
    if len(set(S.tolist())) != S.size:
        raise ValueError("support indices must be distinct")
    rest = np.array([j for j in ds.penalized if j not in set(S.tolist())], dtype=int)
    return S, rest


def irrepresentable_eta0(ds, S):
    """max over signs tau of ||X_{-S}' X_S (X_S' X_S)^{-1} tau||_inf.

    The maximum of a linear form over sign vectors equals the l1 norm of its
    coefficients, so this is the largest row l1 norm of the projection
    coefficient matrix.  ``-S`` runs over penalized columns not in ``S``.
    """
    S, rest = _split_support(ds, S)
    if S.size == 0 or rest.size == 0:
        return 0.0
    XS = ds.X[:, S]
    A = XS.T @ XS
    if np.linalg.matrix_rank(A) < S.size:
        raise RankError(f"X_S'X_S is singular (condition number {np.linalg.cond(A):.3g})")
    coef = np.linalg.solve(A, XS.T @ ds.X[:, rest]).T
    return float(np.max(np.sum(np.abs(coef), axis=1)))


def _cone_project(b, S, c):
    """Shrink the off-support part so that ||b||_1 <= c ||b_S||_1."""
    on = np.abs(b[S]).sum()
    mask = np.ones(b.size, dtype=bool)
    mask[S] = False
    off = np.abs(b[mask]).sum()
    budget = (c - 1) * on
    if off > budget and off > 0:
        b = b.copy()
        b[mask] *= budget / off
    return b


def restricted_eigenvalue_proxy(ds, S, eta, n_random, rng):
    """Randomized estimate of min b'Sigma_hat b / ||b||^2 over the cone
    ||b||_1 <= (9 / eta) ||b_S||_1.

    Every candidate direction lies in the cone, so the value is an upper
    bound on the true cone minimum; it is a diagnostic, not a certificate.
    """
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    if n_random < 1:
        raise ValueError("n_random must be at least 1")
    rng = check_generator(rng)
    G = gram(ds)
    S = np.atleast_1d(np.asarray(S, dtype=int)).reshape(-1)
    w, V = np.linalg.eigh(G)
    if S.size == 0:
        return float(max(w[0], 0.0))
    c = 9.0 / eta
    p = G.shape[0]
    cands = [_cone_project(V[:, k], S, c) for k in range(min(p, 10))]
    for _ in range(int(n_random)):
        b = np.zeros(p)
        b[S] = rng.standard_normal(S.size)
        off = rng.laplace(size=p) * (rng.random(p) < rng.random())
        off[S] = 0.0
        b = _cone_project(b + off * rng.exponential() * np.abs(b[S]).sum(), S, c)
        cands.append(b)
    best = math.inf
    for b in cands:
        nb = b @ b
        if nb > 0 and np.abs(b[S]).sum() > 0:
            # a few projected-gradient steps on the Rayleigh quotient
            for _ in range(25):
                q = b @ G @ b / (b @ b)
                b = _cone_project(b - 0.5 / (w[-1] + 1e-300) * (G @ b - q * b), S, c)
                if not np.abs(b[S]).sum():
                    break
            if np.abs(b[S]).sum():
                best = min(best, float(b @ G @ b / (b @ b)))
    return best


def generate_gaussian_design(n, p, rng):
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    return check_generator(rng).standard_normal((int(n), int(p)))


@dataclass(frozen=True)
class DesignDiagnostics:
    k_x: float
    gram_deviation: float | None
    min_col_norm_sq: float
    irrepresentable_eta0: float
    restricted_eigenvalue: float | None = None

    def asdict(self):
        return dict(self.__dict__)


def diagnose(ds, S=(), sigma_ref=None, eta=None, n_random=200, rng=None):
    """Condition-style summaries of a design.

    ``sigma_ref`` is an optional reference covariance for the Gram deviation;
    ``eta`` switches on the restricted-eigenvalue proxy.
    """
    G = gram(ds)
    pen = ds.penalized
    dev = None
    if sigma_ref is not None:
        sigma_ref = np.asarray(sigma_ref, dtype=float)
        if sigma_ref.shape != G.shape:
            raise DataError(f"reference matrix has shape {sigma_ref.shape}, expected {G.shape}")
        dev = float(np.max(np.abs(G - sigma_ref)))
    re = None
    if eta is not None:
        re = restricted_eigenvalue_proxy(ds, S, eta, n_random, rng or np.random.default_rng(0))
    return DesignDiagnostics(
        k_x=float(np.max(np.abs(ds.X))),
        gram_deviation=dev,
        min_col_norm_sq=float(np.min(np.diag(G)[pen])) if pen.size else 0.0,
        irrepresentable_eta0=irrepresentable_eta0(ds, S),
        restricted_eigenvalue=re,
    )

