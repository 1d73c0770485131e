"""Quantum Fisher information for a displacement-encoded force.

Only the mean of the Gaussian state depends on the force amplitude f, through
<x> = f b, so the QFI is b^T sigma^{-1} b.  The fidelity route and the explicit
homodyne observable are kept as independent checks of that formula.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from nmforce.bath import BathSpec, default_step, tabulate_kernels
from nmforce.dynamics import (
    CovarianceState,
    ForceShape,
    SqueezeParams,
    accumulate_noise_moments,
    markovian_entries,
    markovian_response,
    nonmarkovian_entries,
    response_curve,
    response_vector,
    window_data,
)
from nmforce.volterra import green_table

__all__ = [
    "Bath",
    "QfiResult",
    "qfi",
    "gaussian_fidelity",
    "qfi_from_fidelity",
    "homodyne_sensitivity",
    "optimize_theta",
    "optimal_window_qfi",
    "golden_maximize",
    "qfi_curve",
    "DET_FLOOR",
]

DET_FLOOR = 1e-14
THETA_SCAN = 64
THETA_TOL = 1e-6
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class Bath(str, enum.Enum):
    IDEAL = "ideal"
    MARKOVIAN = "markovian"
    NONMARKOVIAN = "nonmarkovian"


@dataclass(frozen=True)
class QfiResult:
    h: float
    theta_opt: float

    @property
    def sensitivity(self) -> float:
        """Cramer-Rao bound on the variance of f."""
        return math.inf if self.h == 0 else 1.0 / self.h


def _quad_form(sxx, sxp, spp, det, bx, bp):
    # b^T sigma^{-1} b as two positive terms of the factorization
    # sigma = M diag(det/p, p) M^T, pivoting on the larger diagonal entry p
    swap = sxx > spp
    piv = np.where(swap, sxx, spp)
    u = np.where(swap, bp, bx)
    v = np.where(swap, bx, bp)
    lead = piv * u - sxp * v
    return lead * lead / (piv * det) + v * v / piv


def qfi(state: CovarianceState) -> float:
    """b^T sigma^{-1} b with the explicit 2x2 inverse."""
    if not (state.sxx > 0 and state.spp > 0 and state.det > DET_FLOOR):
        raise ValueError(
            f"covariance is not positive definite (sxx={state.sxx}, spp={state.spp}, det={state.det})"
        )
    return float(_quad_form(state.sxx, state.sxp, state.spp, state.det, state.bx, state.bp))


def gaussian_fidelity(sigma1, mu1, sigma2, mu2) -> float:
    """Uhlmann fidelity Tr sqrt(sqrt(rho1) rho2 sqrt(rho1)) of two one-mode Gaussian states.

    The closed form exp(-u^T (s1+s2)^{-1} u / 2) / (sqrt(G + 4P) - sqrt(4P))
    gives the squared fidelity; its square root is returned.  Vacuum
    covariance is identity/2.
    """
    s1 = np.asarray(sigma1, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    u = np.asarray(mu2, dtype=float) - np.asarray(mu1, dtype=float)
    total = s1 + s2
    gamma = float(np.linalg.det(total))
    if gamma <= DET_FLOOR:
        raise ValueError("sigma1 + sigma2 is singular")
    pi = (np.linalg.det(s1) - 0.25) * (np.linalg.det(s2) - 0.25)
    pi = max(float(pi), 0.0)
    exponent = -0.5 * float(u @ np.linalg.solve(total, u))
    squared = math.exp(exponent) / (math.sqrt(gamma + 4.0 * pi) - math.sqrt(4.0 * pi))
    return math.sqrt(squared)


def qfi_from_fidelity(
    state_builder: Callable[[float], tuple[np.ndarray, np.ndarray]],
    f0: float = 0.0,
    df: float = 1e-4,
) -> float:
    """Finite-difference QFI 4 (1 - F^2) / df^2 between f0 and f0 + df."""
    if df == 0:
        raise ValueError("df must be nonzero")
    sigma1, mu1 = state_builder(f0)
    sigma2, mu2 = state_builder(f0 + df)
    fid = gaussian_fidelity(sigma1, mu1, sigma2, mu2)
    return 4.0 * (1.0 - fid * fid) / (df * df)


def homodyne_sensitivity(state: CovarianceState, quadrature=None) -> float:
    """Variance of f inferred from measuring the quadrature M = w . (x, p).

    The default w is the optimal sigma^{-1} b direction.  Var(M) = w^T sigma w
    is evaluated through the pivoted factorization of sigma, so nearly
    singular squeezed covariances keep full relative precision.
    """
    b = state.b
    if not np.any(b):
        raise ValueError("response vector is zero; the force is not observable")
    swap = state.sxx > state.spp
    order = [1, 0] if swap else [0, 1]
    piv = state.sxx if swap else state.spp
    a = state.sxp / piv
    d1 = state.det / piv
    if not (piv > 0 and d1 > 0):
        raise ValueError("covariance is not positive definite")
    b1, b2 = b[order]
    c1, c2 = b1 - a * b2, b2  # b = M c
    if quadrature is None:
        w = np.array([c1 / d1, c2 / piv - a * c1 / d1])
    else:
        w = np.asarray(quadrature, dtype=float)[order]
    w = w / math.hypot(*w)
    y1, y2 = w[0], a * w[0] + w[1]  # y = M^T w
    var_m = d1 * y1 * y1 + piv * y2 * y2
    slope = y1 * c1 + y2 * c2  # d<M>/df = w . b
    if slope == 0:
        return math.inf
    return float(var_m / (slope * slope))


def golden_maximize(func, lo, hi, tol: float = THETA_TOL, max_iter: int = 200):
    """Golden-section maximization of many independent 1-D problems at once.

    ``func`` maps an array of abscissae (one per problem) to their values.
    Returns (argmax, max) arrays.
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(max_iter):
        if np.all(b - a <= tol):
            break
        left = fc > fd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        x_new = np.where(left, b - _INVPHI * (b - a), a + _INVPHI * (b - a))
        f_new = func(x_new)
        c, d = np.where(left, x_new, d), np.where(left, c, x_new)
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
    x = np.where(fc > fd, c, d)
    return x, np.maximum(fc, fd)


def _scan_thetas():
    return np.pi * np.arange(THETA_SCAN) / THETA_SCAN


def _nonmarkov_optimum(end_values, xi, bx, bp):
    *ends, bx, bp = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in (*end_values, bx, bp)))

    def h_of(theta, cols=None):
        vals = ends if cols is None else [v[:, None] for v in ends]
        sxx, sxp, spp, det = nonmarkovian_entries(*vals, xi, theta)
        if cols is None:
            return _quad_form(sxx, sxp, spp, det, bx, bp)
        return _quad_form(sxx, sxp, spp, det, bx[:, None], bp[:, None])

    grid = _scan_thetas()
    table = h_of(grid[None, :], cols=True)
    j = np.argmax(table, axis=1)
    step = np.pi / THETA_SCAN
    theta, h = golden_maximize(h_of, grid[j] - step, grid[j] + step)
    coarse = table[np.arange(len(j)), j]
    better = h >= coarse
    return np.where(better, h, coarse), np.mod(np.where(better, theta, grid[j]), np.pi)


def _markov_optimum(gamma, n_thermal, xi, tau, bx, bp):
    tau, bx, bp = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in (tau, bx, bp)))
    # b along the minor axis of sigma
    theta = np.mod(tau - np.arctan2(bx, bp), np.pi)
    sxx, sxp, spp, det = markovian_entries(gamma, n_thermal, xi, theta, tau)
    h = _quad_form(sxx, sxp, spp, det, bx, bp)
    grid = _scan_thetas()
    s = markovian_entries(gamma, n_thermal, xi, grid[None, :], tau[:, None])
    scan = _quad_form(*s, bx[:, None], bp[:, None]).max(axis=1)
    if np.any(scan > h * (1 + 1e-9) + 1e-300):
        raise ArithmeticError("closed-form squeeze angle lost to the theta scan")
    return h, theta


def optimal_window_qfi(bath: Bath, spec: BathSpec, tau: float, xi: float, bx, bp, step: float | None = None):
    """Maximal per-window QFI over theta for given response vectors.

    All windows share the elapsed time tau; ``bx``/``bp`` are arrays with
    one entry per window.  Returns (h, theta) arrays.
    """
    bath = Bath(bath)
    if bath is Bath.NONMARKOVIAN:
        return _nonmarkov_optimum(window_data(spec, tau, step).end_values(), xi, bx, bp)
    if bath is Bath.MARKOVIAN:
        return _markov_optimum(spec.gamma, spec.thermal_occupation, xi, tau, bx, bp)
    return _markov_optimum(0.0, 0.0, xi, tau, bx, bp)


def window_response(bath: Bath, spec: BathSpec, shape: ForceShape, window_start, tau: float, step: float | None = None):
    bath = Bath(bath)
    if bath is Bath.NONMARKOVIAN:
        return response_vector(shape, window_data(spec, tau, step).green, window_start, tau)
    gamma = spec.gamma if bath is Bath.MARKOVIAN else 0.0
    return markovian_response(shape, gamma, window_start, tau)


def optimize_theta(
    window: tuple[float, float],
    shape: ForceShape,
    bath: Bath,
    r: float,
    spec: BathSpec,
    step: float | None = None,
) -> QfiResult:
    """Best single-window QFI over the squeeze angle.

    ``window`` is (start, length); the probe is prepared at ``start`` and
    measured after ``length``.
    """
    start, tau = window
    if tau == 0:
        return QfiResult(0.0, 0.0)
    xi = SqueezeParams(r).xi
    bx, bp = window_response(bath, spec, shape, start, tau, step)
    h, theta = optimal_window_qfi(bath, spec, tau, xi, bx, bp, step)
    return QfiResult(float(h[0]), float(theta[0]))


def qfi_curve(bath: Bath, spec: BathSpec, shape: ForceShape, r: float, horizon: float, step: float | None = None):
    """Optimal single-measurement QFI at every grid time of [0, horizon].

    Returns (t, h, theta) arrays.
    """
    bath = Bath(bath)
    xi = SqueezeParams(r).xi
    if bath is Bath.NONMARKOVIAN:
        green = green_table(spec, horizon, step)
        kernels = tabulate_kernels(spec, green.step, horizon)
        moments = accumulate_noise_moments(green, kernels)
        bx, bp = response_curve(shape, green)
        ends = (green.g, green.gdot, green.gddot, moments.beta_x, moments.beta_p, moments.beta_xp)
        h, theta = _nonmarkov_optimum(ends, xi, bx, bp)
        t = green.times
    else:
        base = default_step(spec) if step is None else step
        n = math.ceil(horizon / base - 1e-9)
        t = horizon * np.arange(n + 1) / n
        gamma = spec.gamma if bath is Bath.MARKOVIAN else 0.0
        n_thermal = spec.thermal_occupation if bath is Bath.MARKOVIAN else 0.0
        b = np.array([markovian_response(shape, gamma, 0.0, tau) for tau in t])
        h, theta = _markov_optimum(gamma, n_thermal, xi, t, b[:, 0], b[:, 1])
    h = np.where(t == 0, 0.0, h)
    return t, h, theta
