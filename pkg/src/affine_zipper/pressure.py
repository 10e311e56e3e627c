"""Matrix pressure, its Legendre transform and related exponents."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import NoRootError, ParameterError
from .products import (
    DEFAULT_BUDGET,
    WordTable,
    as_system,
    enumerate_words,
    matrix_norm,
    word_product,
    xi_products,
)

DEFAULT_T_GRID = np.round(np.arange(-10.0, 10.0 + 1e-9, 0.05), 10)
_DERIV_STEP = 1e-3
_LEAF_BUDGET = 1 << 20


def solve_pressure(table: WordTable, t):
    """Root s of sum_w ||A_w||^t lambda_w^(-s) = 1 for one word table."""
    L = table.group_lse(t)
    lw = -table.group_log_weight  # positive
    if L.shape[0] == 1:
        return float(-L[0] / lw[0])
    hi = float(np.min(-L / lw))
    lo = float(np.min((-math.log(L.shape[0]) - L) / lw))

    def f(s):
        x = L + s * lw
        m = x.max()
        return m + math.log(np.exp(x - m).sum())

    if f(hi) == 0.0:
        return hi
    if f(lo) == 0.0:
        return lo
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def pressure_at(system, t, n, norm="2", budget=DEFAULT_BUDGET):
    """P_n(t) by full enumeration of words of length n."""
    table = enumerate_words(as_system(system), n, norm=norm, budget=budget)
    return solve_pressure(table, t)


def default_depths(n_maps, leaf_budget=_LEAF_BUDGET):
    """Five evenly spaced depths up to the deepest level within ``leaf_budget`` words."""
    n_max = max(1, int(math.floor(math.log(leaf_budget) / math.log(n_maps) + 1e-9)))
    depths = sorted({max(1, round(n_max * k / 5)) for k in range(1, 6)})
    return tuple(depths)


def extrapolate(depths, values, method="linear"):
    """Estimate lim P_n from the deepest levels.

    "linear" fits P_n = P + a/n on the top three depths and returns (P, rms residual);
    "aitken" applies delta-squared acceleration to the top three values.
    """
    depths = np.asarray(depths, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape[0] == 1:
        return float(values[0]), 0.0
    n = depths[-3:]
    v = values[-3:]
    if method == "aitken" and v.shape[0] == 3:
        d1, d2 = v[1] - v[0], v[2] - v[1]
        den = d2 - d1
        if abs(den) < 1e-15 * max(1.0, abs(v[2])):
            return float(v[2]), 0.0
        return float(v[2] - d2 * d2 / den), 0.0
    if method != "linear" and method != "aitken":
        raise ParameterError(f"unknown extrapolation method {method!r}")
    X = np.stack([np.ones_like(n), 1.0 / n], axis=1)
    coef, *_ = np.linalg.lstsq(X, v, rcond=None)
    res = v - X @ coef
    return float(coef[0]), float(np.sqrt(np.mean(res**2)))


class PressureModel:
    """Per-depth word tables plus the extrapolation rule; evaluates P at any t."""

    def __init__(self, system, depths, norm="2", method="linear", budget=DEFAULT_BUDGET):
        self.system = as_system(system)
        self.depths = tuple(int(n) for n in depths)
        if not self.depths or any(b <= a for a, b in zip(self.depths, self.depths[1:])):
            raise ParameterError(f"depth schedule must be increasing, got {depths}")
        self.norm = norm
        self.method = method
        self.tables = {n: enumerate_words(self.system, n, norm=norm, budget=budget) for n in self.depths}

    @property
    def deepest(self):
        return self.tables[self.depths[-1]]

    def per_depth(self, t):
        return np.array([solve_pressure(self.tables[n], t) for n in self.depths])

    def value_and_residual(self, t):
        fit = self.depths[-3:]
        vals = [solve_pressure(self.tables[n], t) for n in fit]
        return extrapolate(fit, vals, self.method)

    def __call__(self, t):
        return self.value_and_residual(t)[0]

    def derivative(self, t, h=_DERIV_STEP):
        """Five-point central difference of the extrapolated pressure."""
        p = [self(t + k * h) for k in (-2, -1, 1, 2)]
        return (p[0] - 8 * p[1] + 8 * p[2] - p[3]) / (12 * h)


def grid_derivative(t, p):
    """Fourth-order central differences on a uniform grid, second order near the ends."""
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    if t.shape[0] < 3:
        return np.gradient(p, t)
    h = np.diff(t)
    if not np.allclose(h, h[0], rtol=1e-9, atol=1e-12) or t.shape[0] < 5:
        return np.gradient(p, t, edge_order=2)
    h = h[0]
    d = np.gradient(p, h, edge_order=2)
    d[2:-2] = (p[:-4] - 8 * p[1:-3] + 8 * p[3:-1] - p[4:]) / (12 * h)
    return d


@dataclass
class PressureCurve:
    t_grid: np.ndarray
    depths: tuple
    per_depth: np.ndarray  # shape (len(depths), len(t_grid))
    extrapolated: np.ndarray
    residual: np.ndarray
    derivative: np.ndarray
    summary: dict
    flags: list = field(default_factory=list)
    model: PressureModel | None = field(default=None, repr=False)

    def P(self, t):
        if self.model is None:
            return float(np.interp(t, self.t_grid, self.extrapolated))
        return self.model(t)

    def dP(self, t):
        if self.model is None:
            return float(np.interp(t, self.t_grid, self.derivative))
        return self.model.derivative(t)

    @property
    def d0(self):
        return self.summary["d0"]

    @property
    def alpha_hat(self):
        return self.summary["alpha_hat"]

    @property
    def alpha_min(self):
        return self.summary["alpha_min"]

    @property
    def alpha_max(self):
        return self.summary["alpha_max"]


def _concavity_violation(t, p):
    """Largest violation of midpoint concavity over consecutive grid triples."""
    if t.shape[0] < 3:
        return 0.0
    t0, t1, t2 = t[:-2], t[1:-1], t[2:]
    w = (t2 - t1) / (t2 - t0)
    chord = w * p[:-2] + (1 - w) * p[2:]
    return float(np.max(chord - p[1:-1], initial=0.0))


def find_d0(model, t_grid, values):
    """Root of the extrapolated pressure, bracketed on the grid then refined."""
    sign = np.sign(values)
    idx = np.flatnonzero(sign[:-1] * sign[1:] <= 0)
    if idx.size == 0:
        raise NoRootError(
            f"pressure has no sign change on [{t_grid[0]}, {t_grid[-1]}]: "
            f"P({t_grid[0]})={values[0]:.6g}, P({t_grid[-1]})={values[-1]:.6g}"
        )
    k = idx[0]
    a, b = float(t_grid[k]), float(t_grid[k + 1])
    fa, fb = model(a), model(b)
    if fa == 0:
        return a
    if fb == 0:
        return b
    if fa * fb > 0:
        raise NoRootError(f"extrapolated pressure does not change sign on [{a}, {b}]")
    return brentq(model, a, b, xtol=1e-11, rtol=1e-14)


def pressure_curve(
    system,
    t_grid=None,
    depth_schedule=None,
    norm="2",
    method="linear",
    budget=DEFAULT_BUDGET,
    concavity_tol=1e-6,
):
    """Tabulate P_n(t) per depth, the extrapolated P(t), P'(t) and summary exponents."""
    system = as_system(system)
    t = DEFAULT_T_GRID.copy() if t_grid is None else np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.shape[0] < 2 or np.any(np.diff(t) <= 0):
        raise ParameterError("t grid must be a strictly increasing array of at least two values")
    depths = default_depths(system.n_maps) if depth_schedule is None else tuple(depth_schedule)
    model = PressureModel(system, depths, norm=norm, method=method, budget=budget)

    per_depth = np.empty((len(depths), t.shape[0]))
    for k, tk in enumerate(t):
        per_depth[:, k] = model.per_depth(tk)
    fit = np.array(depths[-3:], dtype=float)
    ext = np.empty(t.shape[0])
    res = np.empty(t.shape[0])
    for k in range(t.shape[0]):
        ext[k], res[k] = extrapolate(fit, per_depth[-fit.shape[0] :, k], method)
    deriv = grid_derivative(t, ext)

    flags = []
    viol = _concavity_violation(t, ext)
    if viol > concavity_tol:
        flags.append(f"non-concave extrapolation (violation {viol:.3g})")
    if np.any(np.diff(ext) < -concavity_tol):
        flags.append("non-monotone extrapolation")
    for msg in flags:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    ratios = model.deepest.ratios()
    summary = {
        "alpha_min": float(ratios.min()),
        "alpha_max": float(ratios.max()),
        "alpha_hat": model.derivative(0.0),
        "alpha_min_grid": float(ext[-1] / t[-1]) if t[-1] > 0 else math.nan,
        "alpha_max_grid": float(ext[0] / t[0]) if t[0] < 0 else math.nan,
        "depth": depths[-1],
        "norm": norm,
        "method": method,
    }
    try:
        summary["d0"] = find_d0(model, t, ext)
    except NoRootError as exc:
        summary["d0"] = math.nan
        flags.append(str(exc))
    return PressureCurve(t, tuple(depths), per_depth, ext, res, deriv, summary, flags, model)


def d0(system, curve=None, **kwargs):
    """Root of the extrapolated pressure."""
    if curve is None:
        curve = pressure_curve(system, **kwargs)
    val = curve.summary["d0"]
    if math.isnan(val):
        raise NoRootError(next(f for f in curve.flags if "sign change" in f))
    return val


# ---------------------------------------------------------------- Legendre


@dataclass(frozen=True)
class LegendrePoint:
    beta: float
    D: float
    t_star: float
    clamped: bool


def legendre(curve: PressureCurve, beta, tol=1e-6):
    """D(beta) = inf_t {t beta - P(t)} and the minimiser t*.

    The admissible range also covers the grid slopes, since the deepest-level
    ratio range can sit slightly inside the extrapolated one.
    """
    a_min = min(curve.alpha_min, float(curve.derivative[-1]))
    a_max = max(curve.alpha_max, float(curve.derivative[0]))
    if beta < a_min - tol or beta > a_max + tol:
        raise ParameterError(f"beta={beta} outside [{a_min}, {a_max}] (tol {tol})")
    if beta == curve.alpha_hat:
        # P(0) = -1 for every system since the weights sum to 1
        return LegendrePoint(beta, 1.0, 0.0, False)
    t, dp = curve.t_grid, curve.derivative
    # dp is nonincreasing; locate dp[k] >= beta >= dp[k+1]
    if beta > dp[0] or beta < dp[-1]:
        vals = t * beta - curve.extrapolated
        k = int(np.argmin(vals))
        return LegendrePoint(beta, float(vals[k]), float(t[k]), True)
    rev = dp[::-1]
    j = int(np.searchsorted(rev, beta, side="left"))
    k = t.shape[0] - 1 - j
    k = min(max(k, 0), t.shape[0] - 2)
    d1, d2 = dp[k], dp[k + 1]
    if d1 == d2:
        ts = 0.5 * (t[k] + t[k + 1])
    else:
        ts = t[k] + (d1 - beta) / (d1 - d2) * (t[k + 1] - t[k])
    ts = float(ts)
    return LegendrePoint(beta, ts * beta - curve.P(ts), ts, False)


def is_symmetric(system, k_max=30, tol=1e-9):
    """lambda_0 == lambda_{N-1} and ||A_0^k|| / ||A_{N-1}^k|| == 1 for k <= k_max."""
    system = as_system(system)
    w = system.weights
    if abs(w[0] - w[-1]) > tol:
        return False
    a, b = system.matrices[0], system.matrices[-1]
    pa, pb = np.eye(system.dim), np.eye(system.dim)
    for _ in range(k_max):
        pa, pb = pa @ a, pb @ b
        na, nb = matrix_norm(pa[None])[0], matrix_norm(pb[None])[0]
        if abs(na / nb - 1.0) > tol:
            return False
    return True


@dataclass
class SpectrumCurve:
    beta_grid: np.ndarray
    values: np.ndarray
    t_star: np.ndarray
    window_tags: list
    regular_tags: list
    clamped: np.ndarray


def _window_tag(beta, alpha_hat, symmetric, assumption_a, eps=1e-12):
    at_hat = abs(beta - alpha_hat) <= eps
    if assumption_a:
        if symmetric or beta >= alpha_hat - eps:
            return "full" if symmetric else "assumption-a"
        return "qualitative"
    if at_hat:
        return "nondeg"
    if symmetric and beta < alpha_hat:
        return "symmetric-extension"
    return "qualitative"


def auto_betas(curve: PressureCurve, count=121):
    """Uniform grid over the slopes the t grid resolves, plus alpha_hat."""
    lo = max(curve.alpha_min, float(curve.derivative[-1]))
    hi = min(curve.alpha_max, float(curve.derivative[0]))
    if hi - lo < 1e-12:
        return np.array([curve.alpha_hat])
    grid = np.linspace(lo, hi, count)
    return np.unique(np.append(grid, curve.alpha_hat))


def spectrum_curve(system, curve: PressureCurve, beta_grid=None, symmetric=None, assumption_a=False):
    """Tabulate D(beta) with validity tags for the pointwise and regular exponents."""
    if symmetric is None:
        symmetric = is_symmetric(system)
    if beta_grid is None or (isinstance(beta_grid, str) and beta_grid == "auto"):
        beta_grid = auto_betas(curve)
    betas = np.asarray(beta_grid, dtype=float)
    if curve.alpha_max - curve.alpha_min < 1e-9:
        # degenerate spectrum: a single point
        betas = np.array([curve.alpha_hat])
    pts = [legendre(curve, float(b)) for b in betas]
    wtags = [_window_tag(b, curve.alpha_hat, symmetric, assumption_a) for b in betas]
    rtags = ["full" if assumption_a else "none" for _ in betas]
    return SpectrumCurve(
        betas,
        np.array([p.D for p in pts]),
        np.array([p.t_star for p in pts]),
        wtags,
        rtags,
        np.array([p.clamped for p in pts]),
    )


# ---------------------------------------------------------------- Gibbs


def gibbs_weight(system, curve: PressureCurve, word, t):
    """Unnormalised weight ||A_w||^t lambda_w^(-P(t))."""
    system = as_system(system)
    word = tuple(word)
    norm = float(matrix_norm(word_product(system.matrices, word)[None])[0])
    lam = float(np.prod(system.weights[list(word)])) if word else 1.0
    return norm**t * lam ** (-curve.P(t))


def gibbs_weights(system, curve: PressureCurve, n, t, normalise=True):
    """Weights of all words of length n in lexicographic order."""
    system = as_system(system)
    table = enumerate_words(system, n)
    logw = t * table.log_norm - curve.P(t) * table.log_weight
    if not normalise:
        return np.exp(logw)
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def gibbs_dimension(curve: PressureCurve, t):
    """t P'(t) - P(t)."""
    if t == 0:
        return -curve.P(0.0)
    return t * curve.dP(t) - curve.P(t)


# ---------------------------------------------------------------- counting oracle


@dataclass
class CountingSpectrum:
    r: float
    delta: float
    beta_grid: np.ndarray
    values: np.ndarray
    counts: np.ndarray


def counting_spectrum(system, r, delta, beta_grid, budget=DEFAULT_BUDGET):
    """D_count(beta) = log #{w in Xi_r : ratio(w) within delta of beta} / (-log r).

    Empty bins give -inf.
    """
    system = as_system(system)
    betas = np.asarray(beta_grid, dtype=float)
    counts = _bin_counts(system, r, delta, betas, budget)
    with np.errstate(divide="ignore"):
        vals = np.where(counts > 0, np.log(np.maximum(counts, 1)) / -math.log(r), -np.inf)
    return CountingSpectrum(r, delta, betas, vals, counts)


def _bin_counts(system, r, delta, betas, budget):
    _, log_norm, log_weight = xi_products(system, r, budget=budget)
    ratios = np.sort(log_norm / log_weight)
    lo = np.searchsorted(ratios, betas - delta, side="left")
    hi = np.searchsorted(ratios, betas + delta, side="right")
    return (hi - lo).astype(np.int64)
