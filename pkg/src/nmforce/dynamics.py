"""Covariance matrix and force-response vector of the probe oscillator.

The probe starts in a squeezed vacuum with squeeze magnitude r and angle
theta (anti-squeezed quadrature at angle theta in phase space).  The bath
enters only through the Green function and the accumulated noise moments
beta_x, beta_p, beta_xp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from nmforce.bath import BathSpec, KernelTable, tabulate_kernels, default_step
from nmforce.volterra import GreenTable, solve_green

__all__ = [
    "SqueezeParams",
    "NoiseMoments",
    "CovarianceState",
    "ForceShape",
    "CONSTANT",
    "RESONANT",
    "WindowData",
    "accumulate_noise_moments",
    "covariance_nonmarkovian",
    "covariance_markovian",
    "response_vector",
    "response_curve",
    "markovian_response",
    "window_data",
    "nonmarkovian_entries",
    "markovian_entries",
]


@dataclass(frozen=True)
class SqueezeParams:
    r: float
    theta: float = 0.0

    def __post_init__(self):
        if not (self.r >= 0 and math.isfinite(self.r)):
            raise ValueError(f"squeeze magnitude r must be finite and >= 0, got {self.r!r}")

    @property
    def xi(self) -> float:
        return math.exp(2.0 * self.r)

    @property
    def energy(self) -> float:
        """Mean energy (xi + 1/xi)/4 of the squeezed vacuum."""
        return 0.5 * math.cosh(2.0 * self.r)


@dataclass(frozen=True, eq=False)
class NoiseMoments:
    """beta_x, beta_p, beta_xp at every grid time of a GreenTable."""

    step: float
    beta_x: np.ndarray
    beta_p: np.ndarray
    beta_xp: np.ndarray


@dataclass(frozen=True)
class CovarianceState:
    """Gaussian state at elapsed time t: covariance entries and response vector b.

    ``det`` holds the determinant computed without cancellation by the
    constructors; it is recomputed from the entries when left as None.
    """

    sxx: float
    sxp: float
    spp: float
    t: float
    params: SqueezeParams
    bx: float = 0.0
    bp: float = 0.0
    det: float | None = None

    def __post_init__(self):
        if self.det is None:
            object.__setattr__(self, "det", self.sxx * self.spp - self.sxp**2)

    @property
    def sigma(self) -> np.ndarray:
        return np.array([[self.sxx, self.sxp], [self.sxp, self.spp]])

    @property
    def b(self) -> np.ndarray:
        return np.array([self.bx, self.bp])

    def with_response(self, bx: float, bp: float) -> "CovarianceState":
        return replace(self, bx=float(bx), bp=float(bp))


@dataclass(frozen=True)
class ForceShape:
    """Known time profile of the force, normalized to max |shape| = 1."""

    tag: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __call__(self, t):
        return self.func(np.asarray(t, dtype=float))

    @classmethod
    def custom(cls, func: Callable[[np.ndarray], np.ndarray], tag: str = "custom") -> "ForceShape":
        return cls(tag, func)


CONSTANT = ForceShape("constant", np.ones_like)
RESONANT = ForceShape("resonant", np.cos)


def _checked_shape(shape: ForceShape, t: np.ndarray) -> np.ndarray:
    vals = np.broadcast_to(shape(t), np.shape(t))
    if np.max(np.abs(vals), initial=0.0) > 1.0 + 1e-12:
        raise ValueError(f"force shape {shape.tag!r} exceeds |value| = 1 on the window")
    return vals


def accumulate_noise_moments(green: GreenTable, kernels: KernelTable) -> NoiseMoments:
    """Trapezoidal double integrals of G G nu, G' G' nu and G G' nu.

    Every grid time is produced at once.  With trapezoid weights the running
    double sum obeys a one-step recursion whose increments are discrete
    convolutions of G (or G') with nu, so the whole series costs O(n^2).
    """
    h = green.step
    if abs(kernels.step - h) > 1e-12 * h:
        raise ValueError(f"grid mismatch: Green step {h!r} vs kernel step {kernels.step!r}")
    n = len(green)
    if len(kernels) < n:
        raise ValueError("kernel table is shorter than the Green table")
    nu = np.asarray(kernels.nu_of_t[:n], dtype=float)
    g, v = green.g, green.gdot
    c = np.ones(n)
    c[0] = 0.5
    # P_m = sum_j c_j G_j nu_{m-j}, Q_m likewise with G'
    P = np.convolve(c * g, nu)[:n]
    Q = np.convolve(c * v, nu)[:n]
    nu0 = nu[0]

    def running(a, pa, b, pb):
        inc = a * pb + b * pa - a * b * nu0
        inc[0] = 0.25 * a[0] * b[0] * nu0
        total = np.cumsum(inc)
        out = total - 0.5 * (a * pb + b * pa) + 0.25 * a * b * nu0
        out[0] = 0.0
        return h * h * out

    return NoiseMoments(
        step=h,
        beta_x=running(g, P, g, P),
        beta_p=running(v, Q, v, Q),
        beta_xp=running(g, P, v, Q),
    )


def nonmarkovian_entries(g, gdot, gddot, beta_x, beta_p, beta_xp, xi, theta):
    """Covariance entries (sxx, sxp, spp, det); broadcasts over theta and inputs."""
    c, s = np.cos(theta), np.sin(theta)
    gx = g * c - gdot * s
    gp = g * s + gdot * c
    gxd = gdot * c - gddot * s
    gpd = gdot * s + gddot * c
    axx = gx * gx / (2 * xi) + gp * gp * xi / 2
    app = gxd * gxd / (2 * xi) + gpd * gpd * xi / 2
    axp = gx * gxd / (2 * xi) + gp * gpd * xi / 2
    # det(A + B) = det A + det B + a11 b22 + a22 b11 - 2 a12 b12, det A exact
    det_a = 0.25 * (gdot * gdot - g * gddot) ** 2
    det_b = beta_x * beta_p - beta_xp**2
    det = det_a + det_b + axx * beta_p + app * beta_x - 2 * axp * beta_xp
    return axx + beta_x, axp + beta_xp, app + beta_p, det


def markovian_entries(gamma, n_thermal, xi, theta, t):
    decay = np.exp(-gamma * t)
    cosh2r = 0.5 * (xi + 1 / xi)
    sinh2r = 0.5 * (xi - 1 / xi)
    thermal = -np.expm1(-gamma * t) * (2 * n_thermal + 1)
    c = decay * cosh2r + thermal
    phase = 2 * (theta - t)
    dr = decay * sinh2r * np.cos(phase)
    di = decay * sinh2r * np.sin(phase)
    # (c - |d|)(c + |d|) with c - |d| formed without cancellation
    lo = decay / xi + thermal
    hi = decay * xi + thermal
    return 0.5 * (c + dr), 0.5 * di, 0.5 * (c - dr), 0.25 * lo * hi


def covariance_nonmarkovian(
    green: GreenTable, moments: NoiseMoments, params: SqueezeParams, t: float
) -> CovarianceState:
    i = green.index(t)
    if len(moments.beta_x) <= i:
        raise ValueError("noise moments do not cover t")
    sxx, sxp, spp, det = nonmarkovian_entries(
        green.g[i], green.gdot[i], green.gddot[i],
        moments.beta_x[i], moments.beta_p[i], moments.beta_xp[i],
        params.xi, params.theta,
    )
    return CovarianceState(float(sxx), float(sxp), float(spp), t=float(t), params=params, det=float(det))


def covariance_markovian(gamma: float, n_thermal: float, params: SqueezeParams, t: float) -> CovarianceState:
    if t < 0:
        raise ValueError("t must be >= 0")
    sxx, sxp, spp, det = markovian_entries(gamma, n_thermal, params.xi, params.theta, t)
    return CovarianceState(float(sxx), float(sxp), float(spp), t=float(t), params=params, det=float(det))


def _trapezoid_weights(m: int, h: float) -> np.ndarray:
    w = np.full(m + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


def response_vector(shape: ForceShape, green: GreenTable, window_start, window_len: float):
    """b = int_0^tau shape(t + tau - s) (G(s), G'(s)) ds by the trapezoid rule.

    ``window_start`` may be an array; the result then has its shape.
    """
    m = green.index(window_len)
    if m == 0:
        zero = np.zeros(np.shape(window_start))
        return (zero, zero.copy()) if zero.ndim else (0.0, 0.0)
    s = green.times[: m + 1]
    start = np.asarray(window_start, dtype=float)
    force = _checked_shape(shape, start[..., None] + window_len - s)
    w = _trapezoid_weights(m, green.step)
    bx = (force * (w * green.g[: m + 1])).sum(axis=-1)
    bp = (force * (w * green.gdot[: m + 1])).sum(axis=-1)
    if bx.ndim == 0:
        return float(bx), float(bp)
    return bx, bp


def response_curve(shape: ForceShape, green: GreenTable):
    """b(0; t_m) for every grid time t_m of a single window starting at 0."""
    n = len(green)
    bx = np.zeros(n)
    bp = np.zeros(n)
    if shape.tag == "constant":
        h = green.step
        bx[1:] = np.cumsum(0.5 * h * (green.g[1:] + green.g[:-1]))
        bp[1:] = np.cumsum(0.5 * h * (green.gdot[1:] + green.gdot[:-1]))
        return bx, bp
    t = green.times
    for m in range(1, n):
        force = _checked_shape(shape, t[m] - t[: m + 1])
        w = _trapezoid_weights(m, green.step)
        bx[m] = np.dot(force * w, green.g[: m + 1])
        bp[m] = np.dot(force * w, green.gdot[: m + 1])
    return bx, bp


def _exp_integral(mu: complex, tau: float) -> complex:
    """int_0^tau exp(mu s) ds, stable as mu -> 0."""
    z = mu * tau
    if abs(z) < 1e-8:
        return tau * (1 + z / 2 + z * z / 6)
    return (np.exp(z) - 1) / mu


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def markovian_response(shape: ForceShape, gamma: float, window_start, window_len: float):
    """b = int_0^tau shape(t + tau - s) exp(-gamma s/2) (sin s, cos s) ds.

    Exact antiderivatives for the constant and resonant shapes, Gauss-Legendre
    quadrature otherwise.  gamma = 0 gives the isolated oscillator.
    """
    tau = float(window_len)
    start = np.asarray(window_start, dtype=float)
    if tau < 0:
        raise ValueError("window length must be >= 0")
    kappa = complex(-gamma / 2, 1.0)
    if shape.tag == "constant":
        z = np.full(start.shape, _exp_integral(kappa, tau), dtype=complex)
    elif shape.tag == "resonant":
        a = start + tau
        z = 0.5 * (np.exp(1j * a) * _exp_integral(kappa - 1j, tau)
                   + np.exp(-1j * a) * _exp_integral(kappa + 1j, tau))
    else:
        panels = max(1, math.ceil(tau / 0.5))
        edges = np.linspace(0.0, tau, panels + 1)
        half = 0.5 * np.diff(edges)
        s = ((edges[:-1] + half)[:, None] + half[:, None] * _GL_NODES).ravel()
        w = (half[:, None] * _GL_WEIGHTS).ravel()
        force = _checked_shape(shape, start[..., None] + tau - s)
        z = (force * (w * np.exp(kappa * s))).sum(axis=-1)
    bx, bp = np.imag(z), np.real(z)
    if np.ndim(bx) == 0:
        return float(bx), float(bp)
    return bx, bp


@dataclass(frozen=True, eq=False)
class WindowData:
    """Green function and noise moments for one window of elapsed length tau."""

    tau: float
    green: GreenTable
    moments: NoiseMoments

    def end_values(self):
        """(G, G', G'', beta_x, beta_p, beta_xp) at t = tau."""
        g, m = self.green, self.moments
        return g.g[-1], g.gdot[-1], g.gddot[-1], m.beta_x[-1], m.beta_p[-1], m.beta_xp[-1]


@lru_cache(maxsize=4096)
def window_data(spec: BathSpec, tau: float, step: float | None = None) -> WindowData:
    """Solve one window on a grid that ends exactly at tau.

    The grid step is the largest h <= min(step, tau/64) dividing tau.
    """
    if not tau > 0:
        raise ValueError(f"window length must be > 0, got {tau!r}")
    base = default_step(spec) if step is None else step
    n = max(64, math.ceil(tau / base - 1e-9))
    h = tau / n
    kernels = tabulate_kernels(spec, h, tau)
    green = solve_green(spec, kernels, tau)
    return WindowData(tau=tau, green=green, moments=accumulate_noise_moments(green, kernels))
