"""Retarded Green function of the oscillator with a memory-friction term.

Solves  G'' + int_0^t gamma(t - s) G'(s) ds + G = 0,  G(0) = 0, G'(0) = 1
as the first-order system (G, G') with the trapezoidal rule in time and in
the convolution.  The diagonal convolution weight is treated implicitly so
the scheme stays stable for sharply peaked kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nmforce.bath import BathSpec, KernelTable, default_step, tabulate_kernels

__all__ = ["GreenTable", "SolverError", "solve_green", "green_table", "series_coefficients"]


class SolverError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class GreenTable:
    """G, G' and G'' on the grid t_i = i * step."""

    step: float
    g: np.ndarray
    gdot: np.ndarray
    gddot: np.ndarray
    spec: BathSpec

    def __len__(self):
        return len(self.g)

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(len(self.g))

    @property
    def horizon(self) -> float:
        return self.step * (len(self.g) - 1)

    def index(self, t: float) -> int:
        """Grid index of t; t must lie on the grid."""
        i = int(round(t / self.step))
        if abs(i * self.step - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t!r} is not on the grid of step {self.step!r}")
        if not 0 <= i < len(self.g):
            raise ValueError(f"t={t!r} is outside the tabulated horizon {self.horizon!r}")
        return i


def solve_green(spec: BathSpec, kernels: KernelTable, horizon: float) -> GreenTable:
    h = kernels.step
    n = math.ceil(horizon / h - 1e-9)
    if n + 1 > len(kernels):
        raise ValueError(
            f"horizon {horizon!r} exceeds the kernel table ({len(kernels)} samples of step {h!r})"
        )
    gam = np.asarray(kernels.gamma_of_t[: n + 1], dtype=float)
    g = np.zeros(n + 1)
    v = np.zeros(n + 1)
    a = np.zeros(n + 1)
    v[0] = 1.0
    # a = G'' = -G - conv; conv(0) = 0 so a[0] = 0
    denom = 1.0 + 0.25 * h * h * (1.0 + gam[0])
    for k in range(n):
        # trapezoid conv at t_{k+1} without the implicit j = k+1 term
        if k == 0:
            known = 0.5 * h * gam[1] * v[0]
        else:
            known = h * (0.5 * gam[k + 1] * v[0] + np.dot(gam[k:0:-1], v[1:k + 1]))
        rhs = v[k] + 0.5 * h * a[k] - 0.5 * h * (g[k] + 0.5 * h * v[k]) - 0.5 * h * known
        v[k + 1] = rhs / denom
        g[k + 1] = g[k] + 0.5 * h * (v[k] + v[k + 1])
        a[k + 1] = -g[k + 1] - known - 0.5 * h * gam[0] * v[k + 1]
        if not (math.isfinite(g[k + 1]) and math.isfinite(v[k + 1])):
            raise SolverError(f"Green function solve became non-finite at step {k + 1} (t={(k + 1) * h:.6g})")
    return GreenTable(step=h, g=g, gdot=v, gddot=a, spec=spec)


def green_table(spec: BathSpec, horizon: float, step: float | None = None) -> GreenTable:
    """Tabulate kernels and solve on a grid that ends exactly at ``horizon``.

    The step is the largest value <= ``step`` (default: bath default) that
    divides the horizon.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be > 0, got {horizon!r}")
    step = default_step(spec) if step is None else step
    n = math.ceil(horizon / step - 1e-9)
    h = horizon / n
    return solve_green(spec, tabulate_kernels(spec, h, horizon), horizon)


def series_coefficients(table: GreenTable, points: int = 20) -> tuple[float, float]:
    """Estimate G3 in G(t) = t + G3 t^3/3! + O(t^5) from the first grid points.

    A linear term is fitted alongside to absorb the O(h^2) phase error of the
    scheme, and a t^5 term to absorb the next Taylor order.  Returns
    (G3, rms residual).
    """
    if len(table) < points + 1 or points < 10:
        raise ValueError("series_coefficients needs at least 10 grid points beyond t = 0")
    t = table.times[1:points + 1]
    y = table.g[1:points + 1] - t
    design = np.column_stack([t, t**3 / 6.0, t**5 / 120.0])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return float(coef[1]), float(np.sqrt(np.mean(resid**2)))
