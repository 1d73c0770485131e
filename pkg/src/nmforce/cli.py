"""Command-line front end.

Every command resolves its parameters from built-in defaults, then an
optional ``key = value`` config file, then command-line flags, and writes a
table plus a JSON metadata sidecar.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from nmforce import __version__
from nmforce.bath import BathSpec, QuadratureError, default_step, tabulate_kernels
from nmforce.dynamics import CONSTANT, RESONANT, accumulate_noise_moments
from nmforce.output import write_table
from nmforce.protocol import (
    ProtocolConfig,
    asymptotic_qfi,
    fit_scaling,
    optimize_protocol,
    r_sweep,
)
from nmforce.qfi import Bath, qfi_curve
from nmforce.volterra import SolverError, green_table

SHAPES = {"constant": CONSTANT, "resonant": RESONANT}
FIGURES = ("fig1a", "fig1b", "fig2a", "fig2b")
FIG1B_RS = (2.50, 2.66, 2.80)
FIG1B_N_MAX = 80


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class RunConfig:
    command: str = "qfi-curve"
    gamma: float = 0.1
    cutoff: float = 10.0
    temperature: float = 0.0
    shape: str = "constant"
    bath: str = "nonmarkovian"
    r: float = 5.0
    r_min: float = 3.0
    r_max: float = 4.5
    r_step: float = 0.1
    t_tot: float = math.pi / 2
    step: float | None = None
    n_max: int | None = None
    out: str | None = None
    format: str = "csv"
    figure: str | None = None

    @property
    def spec(self) -> BathSpec:
        return BathSpec(self.gamma, self.cutoff, self.temperature)

    @property
    def force_shape(self):
        return SHAPES[self.shape]

    @property
    def resolved_step(self) -> float:
        return default_step(self.spec) if self.step is None else self.step

    def r_values(self) -> np.ndarray:
        count = int(math.floor((self.r_max - self.r_min) / self.r_step + 1e-9)) + 1
        return np.round(self.r_min + self.r_step * np.arange(count), 12)

    def protocol(self, **overrides) -> ProtocolConfig:
        base = ProtocolConfig(
            r=self.r, bath=Bath(self.bath), shape=self.force_shape, t_tot=self.t_tot,
            spec=self.spec, n_max=self.n_max, step=self.step,
        )
        return replace(base, **overrides)

    def header(self) -> dict[str, Any]:
        """Resolved parameters for the CSV comment line."""
        skip = {"out"}
        return {k: v for k, v in asdict(self).items() if k not in skip and v is not None}


# config-file / flag key -> RunConfig field
_KEYS = {
    "gamma": "gamma",
    "lambda": "cutoff",
    "cutoff": "cutoff",
    "temperature": "temperature",
    "shape": "shape",
    "bath": "bath",
    "r": "r",
    "r_min": "r_min",
    "r_max": "r_max",
    "r_step": "r_step",
    "t_tot": "t_tot",
    "step": "step",
    "n_max": "n_max",
    "out": "out",
    "format": "format",
}
_FLOAT = {"gamma", "cutoff", "temperature", "r", "r_min", "r_max", "r_step", "t_tot", "step"}


def _coerce(key: str, field_name: str, raw: Any) -> Any:
    if field_name in _FLOAT:
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(key, f"expected a number, got {raw!r}") from None
        if not math.isfinite(value):
            raise ConfigError(key, f"expected a finite number, got {raw!r}")
        return value
    if field_name == "n_max":
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise ConfigError(key, f"expected an integer, got {raw!r}") from None
    return str(raw)


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"line {lineno} is not 'key = value': {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        norm = key.replace("-", "_")
        if norm not in _KEYS:
            raise ConfigError(key, f"unknown config key (line {lineno})")
        values[_KEYS[norm]] = _coerce(key, _KEYS[norm], raw)
    return values


def _validate(cfg: RunConfig) -> None:
    checks: list[tuple[str, bool, str]] = [
        ("gamma", cfg.gamma >= 0, "must be >= 0"),
        ("lambda", cfg.cutoff > 0, "must be > 0"),
        ("temperature", cfg.temperature >= 0, "must be >= 0"),
        ("r", cfg.r >= 0, "must be >= 0"),
        ("r-min", cfg.r_min >= 0, "must be >= 0"),
        ("r-step", cfg.r_step > 0, "must be > 0"),
        ("r-max", cfg.r_max >= cfg.r_min, "must be >= r-min"),
        ("t-tot", cfg.t_tot > 0, "must be > 0"),
        ("step", cfg.step is None or cfg.step > 0, "must be > 0"),
        ("n-max", cfg.n_max is None or cfg.n_max >= 1, "must be >= 1"),
        ("shape", cfg.shape in SHAPES, f"must be one of {sorted(SHAPES)}"),
        ("bath", cfg.bath in {b.value for b in Bath}, f"must be one of {[b.value for b in Bath]}"),
        ("format", cfg.format in ("csv", "json"), "must be csv or json"),
    ]
    for key, ok, message in checks:
        if not ok:
            raise ConfigError(key, message)
    if cfg.command == "figure" and cfg.figure not in FIGURES:
        raise ConfigError("figure", f"must be one of {list(FIGURES)}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="key = value file; flags override its values")
    common.add_argument("--gamma", type=str, help="damping strength (default 0.1)")
    common.add_argument("--lambda", dest="cutoff", type=str, help="spectral cutoff (default 10)")
    common.add_argument("--temperature", type=str, help="bath temperature (default 0)")
    common.add_argument("--shape", type=str, help="force shape: constant | resonant")
    common.add_argument("--bath", type=str, help="ideal | markovian | nonmarkovian")
    common.add_argument("--r", type=str, help="squeeze parameter (default 5)")
    common.add_argument("--r-min", dest="r_min", type=str)
    common.add_argument("--r-max", dest="r_max", type=str)
    common.add_argument("--r-step", dest="r_step", type=str)
    common.add_argument("--t-tot", dest="t_tot", type=str, help="total probing time (default pi/2)")
    common.add_argument("--step", type=str, help="time-grid step (default min(0.005, 0.2/lambda))")
    common.add_argument("--n-max", dest="n_max", type=str, help="largest measurement count scanned")
    common.add_argument("--out", type=str, help="output file (directory for 'figure')")
    common.add_argument("--format", type=str, help="csv | json")

    parser = argparse.ArgumentParser(prog="nmforce", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nmforce {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("kernels", parents=[common], help="tabulate gamma(t) and nu(t)")
    sub.add_parser("green", parents=[common], help="Green function and noise moments")
    sub.add_parser("qfi-curve", parents=[common], help="optimal single-measurement QFI versus time")
    sub.add_parser("protocol-scan", parents=[common], help="sequential-strategy QFI versus N")
    sub.add_parser("fit", parents=[common], help="r sweep of (N_opt, H_opt) and scaling fits")
    sub.add_parser("asymptotics", parents=[common], help="fast-measurement closed forms versus r")
    fig = sub.add_parser("figure", parents=[common], help="canned data bundles for the figures")
    fig.add_argument("figure", choices=FIGURES)
    return parser


def resolve_config(argv: list[str] | None = None) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    values: dict[str, Any] = {}
    if "config" in args:
        values.update(read_config_file(args.pop("config")))
    command = args.pop("command")
    figure = args.pop("figure", None)
    flag_names = {v: k for k, v in _KEYS.items()}
    flag_names["cutoff"] = "lambda"
    for name, raw in args.items():
        values[name] = _coerce("--" + flag_names.get(name, name).replace("_", "-"), name, raw)
    if command == "figure":
        values.setdefault("r_min", 1.0)
    known = {f.name for f in fields(RunConfig)}
    cfg = RunConfig(command=command, figure=figure, **{k: v for k, v in values.items() if k in known})
    _validate(cfg)
    return cfg


def _meta(cfg: RunConfig, **extra) -> dict[str, Any]:
    meta = {
        "tool": "nmforce",
        "version": __version__,
        "command": cfg.command,
        "config": cfg.header(),
        "grid": {"step": cfg.resolved_step},
    }
    meta.update(extra)
    return meta


def _default_out(cfg: RunConfig) -> Path:
    return Path(cfg.out) if cfg.out else Path(f"{cfg.command}.{cfg.format}")


def _emit(cfg: RunConfig, path: Path, columns, rows, **extra) -> Path:
    written = write_table(path, columns, rows, cfg.header(), cfg.format, _meta(cfg, **extra))
    print(f"wrote {written}")
    return written


def run_kernels(cfg: RunConfig) -> list[Path]:
    table = tabulate_kernels(cfg.spec, cfg.resolved_step, cfg.t_tot)
    rows = zip(table.times, table.gamma_of_t, table.nu_of_t)
    return [_emit(cfg, _default_out(cfg), ("t", "gamma", "nu"), rows)]


def run_green(cfg: RunConfig) -> list[Path]:
    green = green_table(cfg.spec, cfg.t_tot, cfg.step)
    mom = accumulate_noise_moments(green, tabulate_kernels(cfg.spec, green.step, cfg.t_tot))
    rows = zip(green.times, green.g, green.gdot, green.gddot, mom.beta_x, mom.beta_p, mom.beta_xp)
    columns = ("t", "G", "Gdot", "Gddot", "beta_x", "beta_p", "beta_xp")
    return [_emit(cfg, _default_out(cfg), columns, rows, grid={"step": green.step})]


def qfi_curve_rows(cfg: RunConfig, bath: str | None = None, shape: str | None = None):
    t, h, theta = qfi_curve(Bath(bath or cfg.bath), cfg.spec, SHAPES[shape or cfg.shape], cfg.r, cfg.t_tot, cfg.step)
    return list(zip(t, h, theta))


def run_qfi_curve(cfg: RunConfig) -> list[Path]:
    return [_emit(cfg, _default_out(cfg), ("t", "h_opt", "theta_opt"), qfi_curve_rows(cfg))]


def protocol_scan_rows(cfg: RunConfig, r: float | None = None):
    pcfg = cfg.protocol(r=cfg.r if r is None else r)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        n_values = range(1, cfg.n_max + 1) if cfg.n_max else None
        scan = optimize_protocol(pcfg, n_values=n_values)
    rows = list(zip(scan.n_values.tolist(), scan.h_values))
    return rows, {"n_opt": int(scan.n_opt), "h_opt": float(scan.h_opt), "at_boundary": bool(scan.at_boundary)}


def run_protocol_scan(cfg: RunConfig) -> list[Path]:
    rows, results = protocol_scan_rows(cfg)
    print(f"N_opt = {results['n_opt']}, H_opt = {results['h_opt']:.6g}")
    return [_emit(cfg, _default_out(cfg), ("n", "h"), rows, results=results)]


def sweep_rows(cfg: RunConfig, bath: str | None = None, shape: str | None = None):
    pcfg = cfg.protocol(bath=Bath(bath or cfg.bath), shape=SHAPES[shape or cfg.shape])
    points = r_sweep(pcfg, cfg.r_values())
    return [(p.r, p.energy, p.n_opt, p.h_opt, p.total_energy, p.at_boundary) for p in points]


SWEEP_COLUMNS = ("r", "energy", "n_opt", "h_opt", "total_energy", "at_boundary")


def fit_results(cfg: RunConfig, rows) -> dict[str, Any]:
    energy = np.array([row[1] for row in rows])
    n_opt = np.array([row[2] for row in rows], dtype=float)
    h_opt = np.array([row[3] for row in rows])
    bath = Bath(cfg.bath)
    if bath is Bath.NONMARKOVIAN:
        return {
            "d0": fit_scaling(energy, n_opt, "power", 0.5).coefficients[0],
            "d1": fit_scaling(energy, h_opt, "power", 0.5).coefficients[0],
        }
    if bath is Bath.MARKOVIAN:
        c1, c2 = fit_scaling(energy, h_opt, "shifted", -2.0 / 3.0).coefficients
        return {"c0": fit_scaling(energy, n_opt, "power", 1.0 / 3.0).coefficients[0], "c1": c1, "c2": c2}
    return {"slope": fit_scaling(energy, h_opt, "power", 1.0).coefficients[0]}


def run_fit(cfg: RunConfig) -> list[Path]:
    rows = sweep_rows(cfg)
    results = fit_results(cfg, rows)
    for key, value in results.items():
        print(f"{key} = {value:.6g}")
    return [_emit(cfg, _default_out(cfg), SWEEP_COLUMNS, rows, results=results)]


def run_asymptotics(cfg: RunConfig) -> list[Path]:
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for r in cfg.r_values():
            pcfg = cfg.protocol(r=float(r))
            n_asym, h_asym = asymptotic_qfi(pcfg)
            rows.append((float(r), pcfg.energy, n_asym, h_asym))
    return [_emit(cfg, _default_out(cfg), ("r", "energy", "n_opt_asym", "h_opt_asym"), rows)]


def run_figure(cfg: RunConfig) -> list[Path]:
    outdir = Path(cfg.out) if cfg.out else Path(cfg.figure)
    ext = cfg.format
    written = []
    if cfg.figure == "fig1a":
        for bath in ("nonmarkovian", "markovian"):
            for shape in ("constant", "resonant"):
                rows = qfi_curve_rows(cfg, bath, shape)
                sub = replace(cfg, bath=bath, shape=shape)
                written.append(_emit(sub, outdir / f"fig1a_{bath}_{shape}.{ext}", ("t", "h_opt", "theta_opt"), rows))
    elif cfg.figure == "fig1b":
        n_max = cfg.n_max or FIG1B_N_MAX
        for r in FIG1B_RS:
            sub = replace(cfg, bath="nonmarkovian", shape="constant", r=r, n_max=n_max)
            rows, results = protocol_scan_rows(sub)
            written.append(_emit(sub, outdir / f"fig1b_r{r:.2f}.{ext}", ("n", "h"), rows, results=results))
    elif cfg.figure == "fig2a":
        for bath in ("nonmarkovian", "markovian"):
            sub = replace(cfg, bath=bath, shape="constant")
            rows = [(row[0], row[1], row[2]) for row in sweep_rows(sub)]
            written.append(_emit(sub, outdir / f"fig2a_{bath}.{ext}", ("r", "energy", "n_opt"), rows))
    else:
        for bath in ("ideal", "nonmarkovian", "markovian"):
            sub = replace(cfg, bath=bath, shape="constant")
            rows = [(row[0], row[1], row[3]) for row in sweep_rows(sub)]
            written.append(_emit(sub, outdir / f"fig2b_{bath}.{ext}", ("r", "energy", "h_opt"), rows))
    return written


RUNNERS: dict[str, Callable[[RunConfig], list[Path]]] = {
    "kernels": run_kernels,
    "green": run_green,
    "qfi-curve": run_qfi_curve,
    "protocol-scan": run_protocol_scan,
    "fit": run_fit,
    "asymptotics": run_asymptotics,
    "figure": run_figure,
}


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = resolve_config(argv)
    except ConfigError as exc:
        print(f"nmforce: config error: {exc}", file=sys.stderr)
        return 2
    try:
        RUNNERS[cfg.command](cfg)
    except (QuadratureError, SolverError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"nmforce: numerical failure in {cfg.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
