"""De Rham curve preset and its closed-form companions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import NoRootError, ParameterError, SmoothCaseError
from .pressure import PressureCurve, pressure_curve
from .zipper import AffineMap, Zipper, fixed_point, validate_zipper

SMOOTH_OMEGA = 0.25
JORDAN_OMEGA = 1.0 / 3.0
_SPECIAL_TOL = 1e-12


def _check_omega(omega):
    if not 0 < omega < 0.5:
        raise ParameterError(f"omega must lie in (0, 1/2), got {omega}")


def derham_matrices(omega):
    w = float(omega)
    a0 = np.array([[w, 0.0], [w, 1 - 2 * w]])
    a1 = np.array([[1 - 2 * w, w], [0.0, w]])
    return np.stack([a0, a1])


def derham_translations(omega):
    w = float(omega)
    return np.array([[0.0, -2 * w], [2 * w, 0.0]])


def capability_notes(omega):
    notes = []
    if abs(omega - SMOOTH_OMEGA) < _SPECIAL_TOL:
        notes.append("smooth case: parabola arc")
    if abs(omega - JORDAN_OMEGA) < _SPECIAL_TOL:
        notes.append("no dominated splitting")
    return tuple(notes)


def build(omega, tol=1e-12):
    """The de Rham zipper; vertices are computed from the maps, not hardcoded."""
    _check_omega(omega)
    mats = derham_matrices(omega)
    trans = derham_translations(omega)
    maps = tuple(AffineMap(a, t) for a, t in zip(mats, trans))
    z0 = fixed_point(maps[0])
    z2 = fixed_point(maps[1])
    z1 = maps[0](z2)
    z = Zipper(maps, np.stack([z0, z1, z2]), (0, 0), (0.5, 0.5), name=f"derham(omega={omega!r})",
               notes=capability_notes(omega))
    validate_zipper(z, tol=max(tol, 1e-12)).raise_if_failed()
    return z


def tilde_transform(eps):
    return np.array([[1.0, eps], [eps, 1.0]])


def hat_transform(delta):
    return np.array([[1.0, -delta], [-delta, 1.0]])


def positivity_window(family, param):
    """Admissible omega interval for conjugation by the given family member."""
    if not 0 < param < 1:
        raise ParameterError(f"family parameter must lie in (0, 1), got {param}")
    if family == "tilde":
        e = param
        return 1.0 / (3.0 - e), 1.0 / (2.0 - e - e * e)
    if family == "hat":
        d = param
        return d / (1.0 + 3.0 * d), 1.0 / (3.0 + d)
    raise ParameterError(f"unknown family {family!r}; use 'tilde' or 'hat'")


@dataclass(frozen=True)
class StochasticReport:
    omega: float
    row_sums: np.ndarray
    row_residual: float
    p: np.ndarray
    e: np.ndarray
    left_residual: float
    right_residual: float

    @property
    def passed(self):
        return max(self.row_residual, self.left_residual, self.right_residual) <= 1e-12


def stochastic_check(omega):
    """A_0 + A_1 is stochastic with left eigenvector p = (1/2, 1/2) and right e = (1, 1)."""
    m = derham_matrices(omega).sum(axis=0)
    rows = m.sum(axis=1)
    p = np.array([0.5, 0.5])
    e = np.ones(2)
    return StochasticReport(
        float(omega),
        rows,
        float(np.abs(rows - 1).max()),
        p,
        e,
        float(np.abs(p @ m - p).max()),
        float(np.abs(m @ e - e).max()),
    )


def mu1_weight(omega, word):
    """p^T A_w e with p = (1/2, 1/2), e = (1, 1)."""
    mats = derham_matrices(omega)
    v = np.ones(2)
    for s in reversed(tuple(word)):
        v = mats[int(s)] @ v
    return float(0.5 * (v[0] + v[1]))


def mu1_level(omega, n):
    """mu_1 of every level-n cylinder in lexicographic order."""
    mats = derham_matrices(omega)
    rows = np.array([[0.5, 0.5]])
    for _ in range(n):
        rows = np.einsum("ki,sij->ksj", rows, mats).reshape(-1, 2)
    return rows.sum(axis=1)


def mu1_closed_form_00(omega):
    w = omega
    return w * w + (1 - 2 * w) * w / 2 + (1 - 2 * w) ** 2 / 2


@dataclass(frozen=True)
class NondiffResult:
    t_star: float
    dim: float
    residual: float
    degenerate: bool


def _is_affine_pressure(curve: PressureCurve, tol=1e-9):
    return bool(np.all(np.abs(curve.derivative - 1.0) < tol))


def nondiff_dimension(curve: PressureCurve, omega=None):
    """t* with P'(t*) = 1 and dim = t* - P(t*)."""
    if omega is not None and abs(omega - SMOOTH_OMEGA) < _SPECIAL_TOL:
        raise SmoothCaseError("smooth case: the curve is a parabola arc and P' is identically 1")
    if _is_affine_pressure(curve):
        t0 = 0.0
        return NondiffResult(t0, t0 - curve.P(t0), 0.0, True)
    dp = curve.derivative
    t = curve.t_grid
    idx = np.flatnonzero((dp[:-1] - 1.0) * (dp[1:] - 1.0) <= 0)
    if idx.size == 0:
        raise NoRootError(
            f"P' does not cross 1 on [{t[0]}, {t[-1]}] (P' from {dp[0]:.6g} to {dp[-1]:.6g}); widen t-grid"
        )
    k = idx[0]
    from scipy.optimize import brentq

    a, b = float(t[k]), float(t[k + 1])
    fa, fb = curve.dP(a) - 1.0, curve.dP(b) - 1.0
    if fa * fb > 0:
        ts = a + (dp[k] - 1.0) / (dp[k] - dp[k + 1]) * (b - a)
    else:
        ts = brentq(lambda s: curve.dP(s) - 1.0, a, b, xtol=1e-10)
    ts = float(ts)
    val, res = curve.model.value_and_residual(ts) if curve.model is not None else (curve.P(ts), math.nan)
    return NondiffResult(ts, ts - val, res, False)


def projected_measure_dim(curve: PressureCurve, omega=None):
    """1 / P'(0); equals 1 in the smooth case."""
    if omega is not None and abs(omega - SMOOTH_OMEGA) < _SPECIAL_TOL:
        return 1.0
    return 1.0 / curve.alpha_hat


def derham_curve(omega, **kwargs):
    """Pressure curve of the de Rham system with the standard depth schedule."""
    return pressure_curve(build(omega).system, **kwargs)


def all_words(n):
    return itertools.product((0, 1), repeat=n)
