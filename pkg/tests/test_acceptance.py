"""Acceptance criteria, one reported PASS/FAIL line each.

Tolerances are the target ones; nothing here is relaxed to make a line
pass.  Lines are echoed at the end of the pytest run.
"""

import math
import time
import warnings
from fractions import Fraction
from functools import lru_cache

import numpy as np
import pytest

from nmforce.bath import BathSpec, nu_moments, tabulate_kernels
from nmforce.dynamics import (
    CONSTANT,
    RESONANT,
    CovarianceState,
    SqueezeParams,
    accumulate_noise_moments,
    covariance_markovian,
    markovian_response,
    nonmarkovian_entries,
)
from nmforce.protocol import ProtocolConfig, asymptotic_qfi, fit_scaling, optimize_protocol, r_sweep, sequential_qfi
from nmforce.qfi import Bath, homodyne_sensitivity, optimize_theta, qfi, qfi_from_fidelity
from nmforce.volterra import green_table

SPEC = BathSpec(0.1, 10.0, 0.0)
HALF_PI = math.pi / 2
SHAPES = {"constant": CONSTANT, "resonant": RESONANT}


def rel(a, b):
    return abs(a - b) / abs(b)


@lru_cache(maxsize=None)
def sweep(bath: str, shape: str, r_lo: float, r_hi: float):
    rs = np.round(np.arange(r_lo, r_hi + 1e-9, 0.1), 10)
    return r_sweep(ProtocolConfig(r=0.0, bath=Bath(bath), shape=SHAPES[shape]), rs)


def fit_window(bath, shape):
    return [p for p in sweep(bath, shape, 2.0 if shape == "constant" else 3.0, 4.5) if p.r >= 3.0 - 1e-9]


# 1
def test_nu0(acceptance_report):
    start = time.perf_counter()
    nu0, _ = nu_moments(SPEC)
    elapsed = time.perf_counter() - start
    ok = abs(nu0 - 1.5915) <= 1e-4 and elapsed < 1.0
    assert acceptance_report("1 nu0 = 1.5915 +- 1e-4, < 1 s", ok, f"nu0={nu0:.6f}, {elapsed:.3f}s")


# 2
def test_ideal_closed_form(acceptance_report):
    start = time.perf_counter()
    r = 5.0
    res = optimize_theta((0.0, HALF_PI), CONSTANT, Bath.NONMARKOVIAN, r, BathSpec(0.0, 10.0))
    elapsed = time.perf_counter() - start
    target = 4 * math.exp(2 * r)
    ok = rel(res.h, target) <= 1e-5 and elapsed < 1.0
    assert acceptance_report(
        "2 ideal H = 4 xi to 1e-5, < 1 s", ok, f"rel err {rel(res.h, target):.2e}, {elapsed:.3f}s"
    )


# 3
def test_markovian_variational_bound(acceptance_report):
    worst = 0.0
    for t in (0.1, 0.5, HALF_PI):
        for r in (1.0, 3.0, 5.0):
            res = optimize_theta((0.0, t), CONSTANT, Bath.MARKOVIAN, r, SPEC)
            b = np.array(markovian_response(CONSTANT, SPEC.gamma, 0.0, t))
            lam_min = np.linalg.eigvalsh(covariance_markovian(SPEC.gamma, 0.0, SqueezeParams(r), t).sigma)[0]
            worst = max(worst, rel(res.h, float(b @ b) / lam_min))
    assert acceptance_report("3 Markovian H = |b|^2/lambda_min to 1e-8", worst <= 1e-8, f"max rel err {worst:.2e}")


# 4
def test_short_time_nonmarkovian(acceptance_report):
    r = 5.0
    xi = math.exp(2 * r)
    ts = np.geomspace(1e-4, 0.02, 12)
    ratios = np.array([optimize_theta((0.0, t), CONSTANT, Bath.NONMARKOVIAN, r, SPEC).h / (2 * xi * t * t) for t in ts])
    ok = bool(np.all((ratios >= 0.95) & (ratios <= 1.05)))
    nu0, _ = nu_moments(SPEC)
    saturation = 1 / (1 + 2 * nu0 * xi * ts**2)
    detail = (
        f"ratio {ratios.min():.4f}..{ratios.max():.4f} over t in [1e-4, 0.02]; "
        f"tracks 1/(1+2 nu0 xi t^2) within {np.max(np.abs(ratios / saturation - 1)):.1%}"
    )
    assert acceptance_report("4a non-Markovian H/(2 xi t^2) in [0.95, 1.05] for t <= 0.02, r=5", ok, detail)


def test_short_time_markovian_linear(acceptance_report):
    r = 5.0
    ts = np.linspace(0.001, 0.02, 20)
    h = np.array([optimize_theta((0.0, t), CONSTANT, Bath.MARKOVIAN, r, SPEC).h for t in ts])
    slope, intercept = np.polyfit(ts, h, 1)
    r2 = 1 - np.sum((h - (slope * ts + intercept)) ** 2) / np.sum((h - h.mean()) ** 2)
    prefactor = h[-1] * SPEC.gamma / ts[-1]
    assert acceptance_report(
        "4b Markovian H linear in t, R^2 > 0.999", r2 > 0.999, f"R^2={r2:.6f}; recorded H*gamma/t at t=0.02: {prefactor:.3f}"
    )


def test_short_time_markovian_inverse_gamma(acceptance_report):
    t, r = 0.02, 5.0
    scaled = [optimize_theta((0.0, t), CONSTANT, Bath.MARKOVIAN, r, BathSpec(g, 10.0)).h * g for g in (0.05, 0.1, 0.2)]
    spread = max(scaled) / min(scaled) - 1
    assert acceptance_report(
        "4c Markovian H ~ 1/gamma (ratio test within 5%)", spread <= 0.05,
        f"H*gamma = {', '.join(f'{s:.4f}' for s in scaled)}; spread {spread:.1%}",
    )


# 5
def local_maxima(h):
    return [i for i in range(1, len(h) - 1) if h[i] > h[i - 1] and h[i] >= h[i + 1]]


def test_crossover(acceptance_report):
    def scan(r, n_max=80):
        cfg = ProtocolConfig(r=r, n_max=n_max)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return optimize_protocol(cfg, n_values=range(1, n_max + 1))

    low = optimize_protocol(ProtocolConfig(r=2.50)).n_opt
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        high = optimize_protocol(ProtocolConfig(r=2.80)).n_opt
    best = None
    for r in np.round(np.arange(2.61, 2.7101, 0.01), 2):
        s = scan(float(r))
        h = s.h_values
        interior = [i for i in local_maxima(h) if s.n_values[i] > 1]
        if not interior or h[0] < h[1]:
            continue
        i = max(interior, key=lambda k: h[k])
        gap = abs(h[i] / h[0] - 1)
        if best is None or gap < best[1]:
            best = (float(r), gap, int(s.n_values[i]))
    ok = low == 1 and high > 1 and best is not None and best[1] < 0.01 and abs(best[2] - 39) <= 3
    detail = f"N_opt(2.50)={low}, N_opt(2.80)={high}"
    if best:
        detail += f"; r={best[0]:.2f}: maxima at N=1 and N={best[2]} differ by {best[1]:.2%}"
    assert acceptance_report("5 crossover: N=1 vs N~39 maxima within 1% near r=2.66", ok, detail)


# 6
def test_scaling_fits(acceptance_report):
    lines = []
    ok = True

    def check(name, value, target, tol):
        nonlocal ok
        good = rel(value, target) <= tol
        ok &= good
        lines.append(f"{name}={value:.3f} ({target} +-{tol:.0%}{'' if good else ' MISS'})")

    d0 = {}
    for shape, d1_target in (("constant", 1.76), ("resonant", 0.88)):
        pts = fit_window("nonmarkovian", shape)
        e = np.array([p.energy for p in pts])
        d0[shape] = fit_scaling(e, np.array([p.n_opt for p in pts], float), "power", 0.5).coefficients[0]
        d1 = fit_scaling(e, np.array([p.h_opt for p in pts]), "power", 0.5).coefficients[0]
        check(f"d0[{shape}]", d0[shape], 5.60, 0.15)
        check(f"d1[{shape}]", d1, d1_target, 0.15)
    shape_gap = rel(d0["resonant"], d0["constant"])
    ok &= shape_gap <= 0.10
    lines.append(f"d0 shape gap {shape_gap:.1%}")
    for shape, (c0t, c1t, c2t) in (("constant", (0.64, 31.41, 47.81)), ("resonant", (0.80, 15.71, 30.11))):
        pts = fit_window("markovian", shape)
        e = np.array([p.energy for p in pts])
        c0 = fit_scaling(e, np.array([p.n_opt for p in pts], float), "power", 1 / 3).coefficients[0]
        c1, c2 = fit_scaling(e, np.array([p.h_opt for p in pts]), "shifted", -2 / 3).coefficients
        check(f"c0[{shape}]", c0, c0t, 0.20)
        check(f"c1[{shape}]", c1, c1t, 0.15)
        check(f"c2[{shape}]", c2, c2t, 0.25)
    assert acceptance_report("6 scaling fits over r in [3.0, 4.5]", ok, "; ".join(lines))


# 7
def test_asymptotic_agreement(acceptance_report):
    ok = True
    lines = []
    for r in (4.0, 4.5):
        h_by_shape = {}
        for shape in ("constant", "resonant"):
            cfg = ProtocolConfig(r=r, shape=SHAPES[shape])
            scan = optimize_protocol(cfg)
            n_asym, h_asym = asymptotic_qfi(cfg)
            h_by_shape[shape] = scan.h_opt
            good = rel(scan.n_opt, n_asym) <= 0.15 and rel(scan.h_opt, h_asym) <= 0.15
            ok &= good
            lines.append(f"r={r} {shape}: N {scan.n_opt} vs {n_asym:.1f}, H {scan.h_opt:.2f} vs {h_asym:.2f}")
        ratio = h_by_shape["resonant"] / h_by_shape["constant"]
        ok &= rel(ratio, 0.5) <= 0.10
        lines.append(f"r={r} resonant/constant={ratio:.4f}")
    assert acceptance_report("7 numeric vs asymptotic (N_opt, H_opt) within 15%, shape ratio 1/2 within 10%", ok, "; ".join(lines))


# 8
def _exact_det_state(sigma, b):
    sxx, sxp, spp = float(sigma[0, 0]), float(sigma[0, 1]), float(sigma[1, 1])
    det = float(Fraction(sxx) * Fraction(spp) - Fraction(sxp) ** 2)
    return CovarianceState(sxx, sxp, spp, t=0.0, params=SqueezeParams(0.0), bx=b[0], bp=b[1], det=det)


def _random_gaussian_instances(rng, count):
    out = []
    while len(out) < count:
        if len(out) % 2 == 0:
            xi = math.exp(rng.uniform(0, 10))
            scale = math.sqrt(4 * rng.uniform(0.25, 100))
            lam = np.array([scale * xi / 2, scale / (2 * xi)])
        else:
            lam = rng.uniform(0.05, 50, size=2)
            if not 0.25 <= lam[0] * lam[1] <= 100:
                continue
        phi = rng.uniform(0, math.pi)
        rot = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
        out.append((rot @ np.diag(lam) @ rot.T, rng.normal(size=2)))
    return out


def test_property_suite(acceptance_report):
    checks = {}
    green = green_table(SPEC, HALF_PI, 0.005)
    mom = accumulate_noise_moments(green, tabulate_kernels(SPEC, green.step, HALF_PI))
    min_det = math.inf
    for r in (0.0, 1.0, 3.0, 5.0):
        for theta in np.linspace(0, math.pi, 17):
            det = nonmarkovian_entries(green.g, green.gdot, green.gddot, mom.beta_x, mom.beta_p, mom.beta_xp, math.exp(2 * r), theta)[3]
            min_det = min(min_det, float(det.min()))
    checks["det >= 1/4"] = min_det >= 0.25 - 1e-12

    fd_err = []
    for n in (320, 640):
        g = green_table(SPEC, HALF_PI, HALF_PI / n)
        m = accumulate_noise_moments(g, tabulate_kernels(SPEC, g.step, HALF_PI))
        sxx, sxp, _, _ = nonmarkovian_entries(g.g, g.gdot, g.gddot, m.beta_x, m.beta_p, m.beta_xp, math.e**2, 0.3)
        fd_err.append(np.max(np.abs((sxx[2:] - sxx[:-2]) / (4 * g.step) - sxp[1:-1])))
    checks["sigma_xp = d sigma_xx/dt / 2 at O(h^2)"] = abs(fd_err[0] / fd_err[1] - 4) < 0.6

    free = green_table(BathSpec(0.0, 10.0), HALF_PI, 0.005)
    checks["G -> sin t"] = float(np.max(np.abs(free.g - np.sin(free.times)))) < 1e-5

    rng = np.random.default_rng(2024)
    worst_fid = 0.0
    for sigma, b in _random_gaussian_instances(rng, 100):
        exact = qfi(_exact_det_state(sigma, b))
        worst_fid = max(worst_fid, rel(qfi_from_fidelity(lambda f: (sigma, f * b)), exact))
    checks["QFI vs fidelity (100 instances)"] = worst_fid <= 1e-4

    worst_hom = 0.0
    for sigma, b in _random_gaussian_instances(rng, 100):
        s = _exact_det_state(sigma, b)
        worst_hom = max(worst_hom, abs(homodyne_sensitivity(s) * qfi(s) - 1))
    checks["homodyne * QFI = 1"] = worst_hom <= 1e-12

    tabs = [green_table(SPEC, HALF_PI, HALF_PI / n) for n in (160, 320, 640)]
    coarse, mid, fine = (t.g[:: 2**k] for k, t in enumerate(tabs))
    d1, d2 = np.abs(coarse - mid), np.abs(mid - fine)
    ratio = d1[d2 > 1e-10] / d2[d2 > 1e-10]
    checks["order-2 self-convergence"] = bool(np.all((ratio > 3.5) & (ratio < 4.5)))

    ok = all(checks.values())
    detail = ", ".join(f"{k}: {'ok' if v else 'FAIL'}" for k, v in checks.items())
    detail += f" (min det {min_det:.6f}, fidelity {worst_fid:.1e}, homodyne {worst_hom:.1e})"
    assert acceptance_report("8 property suite", ok, detail)


# 9
def _divergence_series(bath):
    pts = sweep(bath, "constant", 2.0, 4.5)
    e_tot = np.array([p.total_energy for p in pts])
    per_time = np.array([p.h_opt for p in pts]) / HALF_PI
    return e_tot, per_time


def test_nonmarkovian_keeps_growing(acceptance_report):
    e_tot, y = _divergence_series("nonmarkovian")
    slopes = np.diff(y) / np.diff(e_tot)
    ok = bool(np.all(np.diff(e_tot) > 0) and np.all(slopes > 0))
    assert acceptance_report(
        "9a non-Markovian H_opt/t_tot vs E_tot strictly increasing over r in [2, 4.5]", ok,
        f"min discrete slope {slopes.min():.3e}, H/t_tot {y[0]:.2f} -> {y[-1]:.2f}",
    )


def test_markovian_increments_shrink(acceptance_report):
    e_tot, y = _divergence_series("markovian")
    inc = np.diff(y)
    growing = np.nonzero(np.diff(inc) >= 0)[0]
    plateau = 2 * 31.41 / math.pi  # c1' from the reference c1 = 31.41
    gap = plateau - y
    ok = bool(np.all(inc > 0) and growing.size == 0)
    pts = sweep("markovian", "constant", 2.0, 4.5)
    where = ", ".join(
        f"r={pts[i].r:.1f}..{pts[i + 2].r:.1f} (N_opt {'/'.join(str(pts[i + k].n_opt) for k in range(3))})" for i in growing
    )
    detail = (
        f"H/t_tot {y[0]:.3f} -> {y[-1]:.3f}, plateau c1'={plateau:.2f}; gap shrinks monotonically: "
        f"{bool(np.all(np.diff(gap) < 0))}; increments grow at {where or 'none'}"
    )
    assert acceptance_report("9b Markovian increments shrink monotonically toward the c1' plateau", ok, detail)
