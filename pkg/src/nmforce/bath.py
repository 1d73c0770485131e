"""Regularized Ohmic bath: spectral density, memory kernel and noise kernel.

The spectral density is J(w) = (2 gamma w / pi) exp(-w^2 / cutoff^2).  The
memory kernel has a Gaussian closed form; the symmetrized noise kernel is a
cosine transform that carries the thermal coth factor and is evaluated by
composite Gauss-Legendre quadrature on the frequency axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BathSpec",
    "KernelTable",
    "QuadratureError",
    "memory_kernel",
    "noise_kernel",
    "nu_moments",
    "tabulate_kernels",
    "default_step",
]

# Integrand decays as exp(-w^2/cutoff^2); exp(-36) is below double precision.
_TRUNCATION = 6.0
_REL_TOL = 1e-9
_NODES_HI, _WEIGHTS_HI = np.polynomial.legendre.leggauss(24)
_NODES_LO, _WEIGHTS_LO = np.polynomial.legendre.leggauss(16)
# below this value of w/(2T) the coth factor is replaced by its series
_SERIES_X = 5e-7
_CHUNK = 4096


class QuadratureError(ArithmeticError):
    """Raised when the frequency quadrature misses its tolerance."""

    def __init__(self, message: str, error_estimate: float):
        super().__init__(f"{message} (error estimate {error_estimate:.3e})")
        self.error_estimate = error_estimate


@dataclass(frozen=True)
class BathSpec:
    """Regularized Ohmic bath.

    gamma is the damping strength and cutoff the Gaussian frequency cutoff,
    both in units of the oscillator frequency.  gamma = 0 is allowed and
    describes the isolated (ideal) oscillator.
    """

    gamma: float
    cutoff: float
    temperature: float = 0.0

    def __post_init__(self):
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be a finite number >= 0, got {self.gamma!r}")
        if not (self.cutoff > 0 and math.isfinite(self.cutoff)):
            raise ValueError(f"cutoff must be a finite number > 0, got {self.cutoff!r}")
        if not (self.temperature >= 0 and math.isfinite(self.temperature)):
            raise ValueError(f"temperature must be a finite number >= 0, got {self.temperature!r}")

    def spectral_density(self, w):
        w = np.asarray(w, dtype=float)
        return 2.0 * self.gamma * w * np.exp(-((w / self.cutoff) ** 2)) / np.pi

    @property
    def thermal_occupation(self) -> float:
        """Mean excitation number of the oscillator mode at the bath temperature."""
        if self.temperature == 0:
            return 0.0
        return 1.0 / math.expm1(1.0 / self.temperature)


@dataclass(frozen=True, eq=False)
class KernelTable:
    """gamma(t_i) and nu(t_i) sampled at t_i = i * step, i = 0..n-1."""

    step: float
    gamma_of_t: np.ndarray
    nu_of_t: np.ndarray
    spec: BathSpec | None = field(default=None)

    def __len__(self):
        return len(self.gamma_of_t)

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(len(self.gamma_of_t))


def default_step(spec: BathSpec) -> float:
    return min(0.005, 0.2 / spec.cutoff)


def memory_kernel(spec: BathSpec, t):
    """gamma(t) = int_0^inf J(w) cos(w t) / w dw, closed Gaussian form."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("memory_kernel requires t >= 0")
    lam = spec.cutoff
    out = spec.gamma * lam / math.sqrt(math.pi) * np.exp(-0.25 * (lam * t) ** 2)
    return out if out.ndim else float(out)


def _thermal_weight(w: np.ndarray, temperature: float) -> np.ndarray:
    """w * coth(w / 2T), with the removable w -> 0 limit handled by series."""
    if temperature == 0:
        return w
    x = w / (2.0 * temperature)
    small = x < _SERIES_X
    safe = np.where(small, 1.0, x)
    return np.where(small, 2.0 * temperature * (1.0 + x * x / 3.0), w / np.tanh(safe))


def _panel_edges(spec: BathSpec, t_max: float) -> np.ndarray:
    lam = spec.cutoff
    top = _TRUNCATION * lam
    width = lam / 4.0
    if t_max > 0:
        # at most half an oscillation of cos(w t_max) per panel
        width = min(width, math.pi / t_max)
    breaks = [0.0, lam, top]
    segments = []
    T = spec.temperature
    if 0 < T and 20.0 * T < lam:
        # coth has poles at distance 2 pi T from the real axis
        segments.append((0.0, 20.0 * T, min(width, math.pi * T)))
        breaks[0] = 20.0 * T
    segments.extend((a, b, width) for a, b in zip(breaks[:-1], breaks[1:]))
    edges = [0.0]
    for a, b, w in segments:
        n = max(1, math.ceil((b - a) / w))
        edges.extend(np.linspace(a, b, n + 1)[1:])
    return np.asarray(edges)


def _rule(edges: np.ndarray, nodes: np.ndarray, weights: np.ndarray):
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    w = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    wt = (half[:, None] * weights[None, :]).ravel()
    return w, wt


def _cosine_transform(spec: BathSpec, t: np.ndarray, power: int) -> np.ndarray:
    """(gamma/pi) int_0^inf w^power [w coth(w/2T)] exp(-w^2/cutoff^2) cos(w t) dw."""
    if spec.gamma == 0:
        return np.zeros_like(t)
    t_max = float(t.max()) if t.size else 0.0
    edges = _panel_edges(spec, t_max)
    results = []
    scale = 0.0
    for nodes, weights in ((_NODES_HI, _WEIGHTS_HI), (_NODES_LO, _WEIGHTS_LO)):
        w, wt = _rule(edges, nodes, weights)
        amp = wt * w**power * _thermal_weight(w, spec.temperature) * np.exp(-((w / spec.cutoff) ** 2))
        amp *= spec.gamma / math.pi
        # L1 norm of the integrand bounds |result| at every t
        scale = max(scale, float(np.sum(np.abs(amp))))
        out = np.empty_like(t)
        for start in range(0, t.size, _CHUNK):
            chunk = t[start:start + _CHUNK]
            out[start:start + _CHUNK] = np.cos(np.outer(chunk, w)) @ amp
        results.append(out)
    hi, lo = results
    err = float(np.max(np.abs(hi - lo))) if hi.size else 0.0
    if err > _REL_TOL * scale + 1e-300:
        raise QuadratureError("noise kernel quadrature did not converge", err)
    return hi


def noise_kernel(spec: BathSpec, t):
    """Symmetrized bath-force autocorrelation nu(t), by quadrature."""
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(arr < 0):
        raise ValueError("noise_kernel requires t >= 0")
    out = _cosine_transform(spec, arr, 0)
    return out.reshape(np.shape(t)) if np.ndim(t) else float(out[0])


def nu_moments(spec: BathSpec) -> tuple[float, float]:
    """(nu0, nu2): value and curvature of nu(t) at t = 0."""
    zero = np.zeros(1)
    nu0 = float(_cosine_transform(spec, zero, 0)[0])
    nu2 = -float(_cosine_transform(spec, zero, 2)[0])
    return nu0, nu2


def tabulate_kernels(spec: BathSpec, step: float, horizon: float) -> KernelTable:
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step!r}")
    if not horizon > 0:
        raise ValueError(f"horizon must be > 0, got {horizon!r}")
    n = math.ceil(horizon / step - 1e-9) + 1
    t = step * np.arange(n)
    return KernelTable(step=step, gamma_of_t=memory_kernel(spec, t), nu_of_t=noise_kernel(spec, t), spec=spec)
