"""Sequential measurement strategy: split t_tot into N re-prepared windows.

Windows are independent repetitions, so their QFIs add and each squeeze
angle is optimized on its own.  This module scans N, fits the large-energy
scaling laws and evaluates the fast-measurement asymptotics.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from nmforce.bath import BathSpec, nu_moments
from nmforce.dynamics import CONSTANT, ForceShape, SqueezeParams
from nmforce.qfi import Bath, optimal_window_qfi, window_response

__all__ = [
    "DEFAULT_SPEC",
    "ProtocolConfig",
    "ProtocolResult",
    "ProtocolScan",
    "FitResult",
    "sequential_qfi",
    "optimize_protocol",
    "default_n_max",
    "candidate_ns",
    "asymptotic_qfi",
    "shape_power",
    "fit_scaling",
    "total_energy_view",
    "r_sweep",
    "SweepPoint",
]

DEFAULT_SPEC = BathSpec(gamma=0.1, cutoff=10.0, temperature=0.0)
EXACT_SCAN_LIMIT = 256
GEOMETRIC_STRIDE = 1.1


@dataclass(frozen=True)
class ProtocolConfig:
    r: float
    bath: Bath = Bath.NONMARKOVIAN
    shape: ForceShape = CONSTANT
    t_tot: float = math.pi / 2
    spec: BathSpec = DEFAULT_SPEC
    n_max: int | None = None
    step: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "bath", Bath(self.bath))
        if not self.t_tot > 0:
            raise ValueError(f"t_tot must be > 0, got {self.t_tot!r}")
        if self.n_max is not None and self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max!r}")
        SqueezeParams(self.r)

    @property
    def xi(self) -> float:
        return math.exp(2.0 * self.r)

    @property
    def energy(self) -> float:
        return SqueezeParams(self.r).energy


@dataclass(frozen=True, eq=False)
class ProtocolResult:
    n: int
    thetas: np.ndarray
    h_per_step: np.ndarray

    @property
    def h_total(self) -> float:
        return float(np.sum(self.h_per_step))

    @property
    def sensitivity(self) -> float:
        return 1.0 / self.h_total


@dataclass(frozen=True, eq=False)
class ProtocolScan:
    n_opt: int
    best: ProtocolResult
    n_values: np.ndarray
    h_values: np.ndarray
    at_boundary: bool

    @property
    def h_opt(self) -> float:
        return self.best.h_total


def sequential_qfi(config: ProtocolConfig, n: int) -> ProtocolResult:
    if n < 1:
        raise ValueError(f"measurement count must be >= 1, got {n!r}")
    tau = config.t_tot / n
    starts = tau * np.arange(n)
    bx, bp = window_response(config.bath, config.spec, config.shape, starts, tau, config.step)
    h, theta = optimal_window_qfi(config.bath, config.spec, tau, config.xi, bx, bp, config.step)
    return ProtocolResult(n=n, thetas=np.asarray(theta), h_per_step=np.asarray(h))


def default_n_max(config: ProtocolConfig) -> int:
    nu0, _ = nu_moments(config.spec)
    return max(8, math.ceil(4.0 * config.t_tot * math.sqrt(2.0 * nu0 * config.xi)))


def candidate_ns(n_max: int) -> list[int]:
    """Every N up to the exact-scan limit, then a geometric stride."""
    ns = list(range(1, min(n_max, EXACT_SCAN_LIMIT) + 1))
    n = float(ns[-1])
    while ns[-1] < n_max:
        n *= GEOMETRIC_STRIDE
        ns.append(min(n_max, int(round(n))))
    return ns


def optimize_protocol(config: ProtocolConfig, n_values=None) -> ProtocolScan:
    """Scan N, refine around the coarse optimum and return the best strategy."""
    n_max = config.n_max or default_n_max(config)
    ns = sorted(set(int(n) for n in n_values)) if n_values is not None else candidate_ns(n_max)
    results = {n: sequential_qfi(config, n).h_total for n in ns}
    if n_values is None:
        coarse = max(results, key=results.get)
        i = ns.index(coarse)
        lo = ns[max(i - 1, 0)]
        hi = ns[min(i + 1, len(ns) - 1)]
        for n in range(lo, hi + 1):
            if n not in results:
                results[n] = sequential_qfi(config, n).h_total
    n_sorted = np.array(sorted(results))
    h_sorted = np.array([results[n] for n in n_sorted])
    n_opt = int(n_sorted[np.argmax(h_sorted)])
    at_boundary = bool(n_opt == n_sorted[-1] and len(n_sorted) > 1)
    if at_boundary:
        warnings.warn(f"optimal N={n_opt} sits on the scan boundary; widen n_max", RuntimeWarning, stacklevel=2)
    return ProtocolScan(
        n_opt=n_opt,
        best=sequential_qfi(config, n_opt),
        n_values=n_sorted,
        h_values=h_sorted,
        at_boundary=at_boundary,
    )


def shape_power(shape: ForceShape, t_tot: float) -> float:
    """int_0^t_tot shape(t)^2 dt."""
    if shape.tag == "constant":
        return t_tot
    if shape.tag == "resonant":
        return t_tot / 2 + math.sin(2 * t_tot) / 4
    value, _ = integrate.quad(lambda t: float(shape(t)) ** 2, 0.0, t_tot, limit=200)
    return value


def asymptotic_qfi(config: ProtocolConfig, xi: float | None = None, nu0: float | None = None):
    """Fast-measurement closed forms (N_opt, H_opt) for the non-Markovian bath.

    Valid when the optimal window is much shorter than every time scale of
    the problem; a RuntimeWarning is issued otherwise.
    """
    xi = config.xi if xi is None else xi
    if nu0 is None:
        nu0, _ = nu_moments(config.spec)
    if nu0 <= 0:
        raise ValueError("asymptotics need a noisy bath (nu0 > 0)")
    n_opt = config.t_tot * math.sqrt(2.0 * nu0 * xi)
    h_opt = math.sqrt(xi / (2.0 * nu0)) * shape_power(config.shape, config.t_tot)
    tau_opt = 1.0 / math.sqrt(2.0 * nu0 * xi)
    scales = [1.0, 1.0 / config.spec.cutoff]
    if config.spec.gamma > 0:
        scales.append(1.0 / config.spec.gamma)
    if config.shape.tag == "resonant":
        scales.append(1.0)
    if tau_opt > 0.5 * min(scales):
        warnings.warn(
            f"optimal window {tau_opt:.3g} is not short compared with the system time scales",
            RuntimeWarning,
            stacklevel=2,
        )
    return n_opt, h_opt


@dataclass(frozen=True)
class FitResult:
    model: str
    coefficients: tuple[float, ...]
    exponent: float
    rms: float
    residuals: tuple[float, ...] = field(repr=False, default=())


def fit_scaling(energies, values, model: str = "power", exponent: float | None = None) -> FitResult:
    """Least-squares fit of value = a E^p ("power") or c1 - c2 E^p ("shifted").

    With ``exponent=None`` the power law exponent is fitted in log space;
    the shifted model defaults to p = -2/3.
    """
    e = np.asarray(energies, dtype=float)
    y = np.asarray(values, dtype=float)
    if e.shape != y.shape or e.ndim != 1:
        raise ValueError("energies and values must be 1-D arrays of equal length")
    if e.size < 6:
        raise ValueError(f"need at least 6 samples for a scaling fit, got {e.size}")
    if model == "power":
        if exponent is None:
            design = np.column_stack([np.ones_like(e), np.log(e)])
            target = np.log(y)
        else:
            design = (e**exponent)[:, None]
            target = y
    elif model == "shifted":
        exponent = -2.0 / 3.0 if exponent is None else exponent
        design = np.column_stack([np.ones_like(e), -(e**exponent)])
        target = y
    else:
        raise ValueError(f"unknown model {model!r}")
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        raise np.linalg.LinAlgError("scaling fit is rank deficient")
    if model == "power" and exponent is None:
        exponent = float(coef[1])
        coef = np.array([math.exp(coef[0])])
        predicted = coef[0] * e**exponent
    else:
        predicted = design @ coef
    resid = y - predicted
    return FitResult(
        model=model,
        coefficients=tuple(float(c) for c in coef),
        exponent=float(exponent),
        rms=float(np.sqrt(np.mean(resid**2))),
        residuals=tuple(float(x) for x in resid),
    )


def total_energy_view(d0: float, d1: float, c0: float, c1: float, c2: float) -> dict[str, float]:
    """Coefficients of H_opt/t_tot against the total probe energy E_tot/t_tot."""
    return {
        "d1_prime": d1 * (d0 * math.pi**2 / 4) ** (-1.0 / 3.0),
        "c1_prime": 2.0 * c1 / math.pi,
        "c2_prime": c2 * math.sqrt(8.0 * c0 / math.pi**3),
    }


@dataclass(frozen=True)
class SweepPoint:
    r: float
    energy: float
    n_opt: int
    h_opt: float
    at_boundary: bool

    @property
    def total_energy(self) -> float:
        return self.n_opt * self.energy


def r_sweep(base: ProtocolConfig, r_values) -> list[SweepPoint]:
    points = []
    for r in r_values:
        cfg = replace(base, r=float(r))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            scan = optimize_protocol(cfg)
        points.append(SweepPoint(float(r), cfg.energy, scan.n_opt, scan.h_opt, scan.at_boundary))
    return points
