"""Experiment drivers, configuration, persistence, and report emission.

Every run writes a manifest (atomically, at the end) listing the config
hash, per-check outcomes, and the paths of all emitted files.  CSV output
is RFC 4180 with round-trip float formatting; identical config and seed
reproduce every CSV byte-for-byte regardless of the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from xml.etree import ElementTree

import numpy as np

from . import __version__
from .energies import e1, e2, i1, i2, report_drift, smallness_monitor, trajectory_reports
from .models import (
    EquationParams,
    GaugeParams,
    SolitonParams,
    choose_lambda,
    gauge_transform,
    one_param_carrier,
    plane_wave,
    rescale_data,
    sech,
    soliton_one_param,
    soliton_two_param,
    transformed_params,
    validate,
)
from .multilinear import (
    constant_multiplier,
    delta4_multiplier,
    delta4_values,
    delta6_multiplier,
    hyperplane_identity_residuals,
    lambda_n,
    m2_multiplier,
    sample_gamma4_modes,
    apply_ame,
)
from .solver import StepperConfig, Trajectory, integrate, residual, suggest_dt
from .spectral import (
    Grid,
    MultiplierSymbol,
    SpectralField,
    fractional_derivative,
    i_operator,
    identity_symbol,
    l_operator,
    l_symbol,
    m_symbol,
    make_grid,
    power_integral,
    random_field,
    snap_wavenumber,
    sobolev_norm,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "run_simulate",
    "run_gauge_check",
    "run_energy_scan",
    "run_rescale_check",
    "run_exact_residual",
    "run_verify",
    "compare_delta6_routes",
    "write_snapshot",
    "read_snapshot",
]


class ConfigError(ValueError):
    pass


KINDS = ("simulate", "verify", "gauge-check", "energy-scan", "rescale-check", "exact-residual")
_KIND_ALIASES = {"verify-identities": "verify", "verify-exact": "exact-residual"}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 12345
    workers: int = 1
    out_dir: str = "out"
    equation: EquationParams = field(default_factory=lambda: EquationParams(0.0, 1.0, 0.0, 1.0, 1.0))
    modes: int = 256
    box_length: float = 80.0
    stepper: StepperConfig = field(default_factory=StepperConfig)
    cutoffs: tuple = (4.0, 8.0, 16.0, 32.0)
    sobolev_s: float = 0.3
    initial_data: dict = field(default_factory=lambda: {"type": "sech", "amplitude": 1.2, "width": 1.0})
    gauge: dict = field(default_factory=dict)
    rescale: dict = field(default_factory=lambda: {"c0": 0.5, "cutoff": 16.0})
    normalize_k1: bool = False
    with_e2: bool = False
    plots: bool = True
    snapshots: bool = False
    profile: str = "default"
    mutation: str | None = None

    def canonical(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "workers": self.workers,
            "equation": [self.equation.a, self.equation.b, self.equation.c,
                         self.equation.d, self.equation.e],
            "grid": {"modes": self.modes, "box_length": self.box_length},
            "stepper": {
                "dt": self.stepper.dt,
                "final_time": self.stepper.final_time,
                "dealias_factor": self.stepper.dealias_factor,
                "sample_every": self.stepper.sample_every,
                "tolerance": self.stepper.tolerance,
            },
            "multiplier": {"cutoffs": list(self.cutoffs), "sobolev_s": self.sobolev_s},
            "initial_data": self.initial_data,
            "gauge": self.gauge,
            "rescale": self.rescale,
            "normalize_k1": self.normalize_k1,
            "with_e2": self.with_e2,
            "plots": self.plots,
            "snapshots": self.snapshots,
            "profile": self.profile,
        }

    def config_hash(self) -> str:
        payload = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


_TOP_KEYS = {
    "kind", "seed", "workers", "out_dir", "equation", "grid", "stepper",
    "multiplier", "initial_data", "gauge", "rescale", "normalize_k1",
    "with_e2", "plots", "snapshots", "profile",
}


def config_from_dict(doc: dict, overrides: dict | None = None) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(doc)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("modes", "box_length"):
            merged.setdefault("grid", {})
            merged["grid"] = dict(merged["grid"])
            merged["grid"]["modes" if key == "modes" else "box_length"] = value
        elif key in ("cutoffs", "sobolev_s"):
            merged.setdefault("multiplier", {})
            merged["multiplier"] = dict(merged["multiplier"])
            merged["multiplier"]["cutoffs" if key == "cutoffs" else "sobolev_s"] = value
        else:
            merged[key] = value

    kind = merged.get("kind")
    kind = _KIND_ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    if kind == "energy-scan":
        # scaling experiment defaults: broadband low-regularity data on a
        # box whose top frequency comfortably exceeds the largest cutoff
        merged.setdefault("grid", {"modes": 256, "box_length": 6 * np.pi})
        merged.setdefault("initial_data",
                          {"type": "rough_sech", "amplitude": 1.5, "width": 2.0, "decay": 0.9})
        merged.setdefault("stepper", {"final_time": 1.0, "tolerance": 1e-7})
        merged.setdefault("seed", 2024)
    if kind == "exact-residual":
        merged.setdefault("grid", {"modes": 512, "box_length": 80.0})
        merged.setdefault("equation", {"a": 0.0, "b": 1.0, "c": 0.0, "d": 1.0, "e": 1.0})
    try:
        eq = merged.get("equation", {"a": 0.0, "b": 1.0, "c": 0.0, "d": 1.0, "e": 1.0})
        if isinstance(eq, (list, tuple)):
            params = EquationParams(*[float(v) for v in eq])
        else:
            params = EquationParams(
                a=float(eq.get("a", 0.0)), b=float(eq.get("b", 1.0)),
                c=float(eq.get("c", 0.0)), d=float(eq.get("d", 1.0)),
                e=float(eq.get("e", 1.0)),
            )
        grid_doc = merged.get("grid", {})
        stepper_doc = merged.get("stepper", {})
        stepper = StepperConfig(
            dt=stepper_doc.get("dt"),
            final_time=float(stepper_doc.get("final_time", 1.0)),
            dealias_factor=int(stepper_doc.get("dealias_factor", 2)),
            sample_every=stepper_doc.get("sample_every"),
            tolerance=float(stepper_doc.get("tolerance", 1e-9)),
        )
        mult_doc = merged.get("multiplier", {})
        cutoffs = mult_doc.get("cutoffs", [4.0, 8.0, 16.0, 32.0])
        if isinstance(cutoffs, (int, float)):
            cutoffs = [cutoffs]
        cfg = ExperimentConfig(
            kind=kind,
            seed=int(merged.get("seed", 12345)),
            workers=int(merged.get("workers", 1)),
            out_dir=str(merged.get("out_dir", "out")),
            equation=params,
            modes=int(grid_doc.get("modes", 256)),
            box_length=float(grid_doc.get("box_length", 80.0)),
            stepper=stepper,
            cutoffs=tuple(float(v) for v in cutoffs),
            sobolev_s=float(mult_doc.get("sobolev_s", 0.3)),
            initial_data=dict(merged.get("initial_data",
                                          {"type": "sech", "amplitude": 1.2, "width": 1.0})),
            gauge=dict(merged.get("gauge", {})),
            rescale=dict(merged.get("rescale", {"c0": 0.5, "cutoff": 16.0})),
            normalize_k1=bool(merged.get("normalize_k1", False)),
            with_e2=bool(merged.get("with_e2", False)),
            plots=bool(merged.get("plots", True)),
            snapshots=bool(merged.get("snapshots", False)),
            profile=str(merged.get("profile", "default")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc

    validate(cfg.equation)  # rejects b = 0 early
    if cfg.workers < 1:
        raise ConfigError("workers must be at least 1")
    if cfg.kind == "energy-scan":
        if any(b <= a for a, b in zip(cfg.cutoffs, cfg.cutoffs[1:])):
            raise ConfigError("cutoff list must be strictly increasing for energy-scan")
        if cfg.modes > 256:
            raise ConfigError("energy-scan needs the quartic lattice budget (K <= 256)")
    return cfg


def load_config(path: str, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc, overrides)


# ---------------------------------------------------------------------------
# initial data


def build_initial_data(cfg: ExperimentConfig, grid: Grid, rng: np.random.Generator):
    """Returns (field, sampler, meta); sampler is a closed form (x, t) -> values
    when one exists, else None."""
    doc = dict(cfg.initial_data)
    kind = doc.pop("type", "sech")
    params = cfg.equation
    caps = validate(params)
    meta: dict = {"type": kind}

    if kind == "soliton_two_param":
        if not caps.soliton2p_ok:
            raise ConfigError("two-parameter family needs e = 0, b*d > 0, c = a*d/(3b)")
        carrier, err = snap_wavenumber(grid, float(doc.get("carrier", 0.0)))
        sp = SolitonParams(eta=float(doc.get("eta", 1.0)), carrier=carrier)
        meta.update(carrier=carrier, carrier_snap_error=err, eta=sp.eta)

        def sampler(x, t):
            return soliton_two_param(x, t, params, sp)

        return SpectralField.from_function(grid, sampler), sampler, meta

    if kind == "soliton_one_param":
        if not caps.soliton1p_ok:
            raise ConfigError("one-parameter family needs e != 0 and b*(d+e) > 0")
        sp = SolitonParams(eta=float(doc.get("eta", 1.0)))
        w = one_param_carrier(params)
        _, err = snap_wavenumber(grid, w)
        meta.update(carrier=w, carrier_snap_error=err, eta=sp.eta)

        def sampler(x, t):
            return soliton_one_param(x, t, params, sp)

        return SpectralField.from_function(grid, sampler), sampler, meta

    if kind == "plane_wave":
        if not caps.planewave_ok:
            raise ConfigError("plane wave needs d != e")
        c0 = float(doc.get("phase", 0.0))
        carrier, err = snap_wavenumber(grid, params.c / (params.e - params.d))
        meta.update(carrier=carrier, carrier_snap_error=err)

        def sampler(x, t):
            return plane_wave(x, t, params, c0=c0, carrier=carrier)

        return SpectralField.from_function(grid, sampler), sampler, meta

    if kind == "sech":
        amp = float(doc.get("amplitude", 1.2))
        width = float(doc.get("width", 1.0))
        center = float(doc.get("center", 0.0))
        carrier, err = snap_wavenumber(grid, float(doc.get("carrier", 0.0)))
        meta.update(amplitude=amp, width=width, carrier=carrier, carrier_snap_error=err)

        def profile(x, t):
            return amp * sech((x - center) / width) * np.exp(1j * carrier * x)

        return SpectralField.from_function(grid, profile), None, meta

    if kind == "sech_pair":
        a1 = float(doc.get("amplitude", 1.0))
        w1 = float(doc.get("width", 1.0))
        a2 = float(doc.get("amplitude2", 0.5))
        w2 = float(doc.get("width2", 0.5))
        carrier, err = snap_wavenumber(grid, float(doc.get("carrier2", 0.0)))
        meta.update(carrier2=carrier, carrier_snap_error=err)

        def profile(x, t):
            return a1 * sech(x / w1) + a2 * sech(x / w2) * np.exp(1j * carrier * x)

        return SpectralField.from_function(grid, profile), None, meta

    if kind == "random":
        fieldv = random_field(
            grid, rng,
            amplitude=float(doc.get("amplitude", 1.0)),
            decay=float(doc.get("decay", 2.0)),
            band=doc.get("band"),
        )
        meta.update(amplitude=doc.get("amplitude", 1.0))
        return fieldv, None, meta

    if kind == "rough_sech":
        # sech envelope times a random-phase power-law modulation; the
        # broadband low-regularity data the smoothing machinery targets
        amp = float(doc.get("amplitude", 1.5))
        width = float(doc.get("width", 2.0))
        decay = float(doc.get("decay", 0.9))
        mod = random_field(grid, rng, amplitude=1.0, decay=decay, band=doc.get("band"))
        vals = amp * sech(grid.x / width) * mod.values / np.max(np.abs(mod.values))
        meta.update(amplitude=amp, width=width, decay=decay)
        return SpectralField.from_values(grid, vals), None, meta

    raise ConfigError(f"unknown initial data type {kind!r}")


# ---------------------------------------------------------------------------
# output helpers


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, complex):
        return repr(value)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_manifest(out_dir: Path, cfg: ExperimentConfig, started: float,
                   checks: dict, files: list[str], extra: dict | None = None) -> Path:
    path = out_dir / "manifest.json"
    doc = {
        "config_hash": cfg.config_hash(),
        "version": __version__,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "started_at": started,
        "finished_at": time.time(),
        "checks": checks,
        "files": sorted(files),
    }
    if extra:
        doc.update(extra)
    tmp = path.with_suffix(".json.tmp")
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


_SNAPSHOT_MAGIC = b"AIRYFLD1"
_DTYPE_CODES = {"complex64": 8, "complex128": 16}


def write_snapshot(path: Path, f: SpectralField, t: float, dtype: str = "complex128") -> None:
    """Raw field snapshot: 32-byte little-endian header
    (magic 8s, K uint32, dtype-size uint32, L float64, t float64) followed
    by the physical values as little-endian complex64/complex128."""
    code = _DTYPE_CODES[dtype]
    header = struct.pack("<8sIIdd", _SNAPSHOT_MAGIC, f.grid.K, code, f.grid.L, t)
    data = f.values.astype("<c8" if dtype == "complex64" else "<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data)


def read_snapshot(path: Path) -> tuple[SpectralField, float]:
    with open(path, "rb") as fh:
        header = fh.read(32)
        magic, K, code, L, t = struct.unpack("<8sIIdd", header)
        if magic != _SNAPSHOT_MAGIC:
            raise ValueError(f"{path} is not a field snapshot")
        dtype = "<c8" if code == 8 else "<c16"
        values = np.frombuffer(fh.read(), dtype=dtype).astype(np.complex128)
    return SpectralField.from_values(make_grid(K, L), values), t


def _plot_lines(path: Path, xs, series: dict, xlabel: str, ylabel: str,
                logx: bool = False, logy: bool = False) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, ys in series.items():
        ax.plot(xs, ys, marker="o" if len(xs) < 12 else None, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# runners


def _prepare(cfg: ExperimentConfig):
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = make_grid(cfg.modes, cfg.box_length)
    rng = np.random.default_rng(cfg.seed)
    return out_dir, grid, rng


def run_simulate(cfg: ExperimentConfig) -> tuple[int, dict]:
    started = time.time()
    out_dir, grid, rng = _prepare(cfg)
    u0, sampler, meta = build_initial_data(cfg, grid, rng)
    traj = integrate(u0, cfg.equation, cfg.stepper)

    sym = MultiplierSymbol(N=cfg.cutoffs[0], s=cfg.sobolev_s)
    with_e2 = cfg.with_e2 and grid.K <= 256
    reports = trajectory_reports(traj, sym, cfg.equation, with_e2=with_e2,
                                 normalize_k1=cfg.normalize_k1, workers=cfg.workers)

    header = ["t", "I1", "I2", "E1", "E2", "dE2_fd", "lambda6"]
    rows = [[r.t, r.i1, r.i2, r.e1, r.e2, r.de2_fd, r.lambda6] for r in reports]
    if sampler is not None:
        header.append("err_linf")
        for row, t, fld in zip(rows, traj.times, traj.fields):
            exact = np.asarray(sampler(grid.x, float(t)))
            scale = float(np.max(np.abs(exact)))
            row.append(float(np.max(np.abs(fld.values - exact))) / max(scale, 1e-300))

    files = []
    csv_path = out_dir / "energies.csv"
    write_csv(csv_path, header, rows)
    files.append(str(csv_path))

    if cfg.snapshots:
        snap_dir = out_dir / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for i, (t, fld) in enumerate(zip(traj.times, traj.fields)):
            p = snap_dir / f"field_{i:05d}.bin"
            write_snapshot(p, fld, float(t))
            files.append(str(p))

    if cfg.plots:
        svg = out_dir / "energies.svg"
        series = {"I1": [r.i1 for r in reports], "E1": [r.e1 for r in reports]}
        if reports[0].i2 is not None:
            series["I2"] = [r.i2 for r in reports]
        _plot_lines(svg, [r.t for r in reports], series, "t", "functional value")
        files.append(str(svg))

    checks = {
        "completed": True,
        "i1_drift": report_drift([r.i1 for r in reports]),
    }
    if reports[0].i2 is not None:
        checks["i2_drift"] = report_drift([r.i2 for r in reports])
    if sampler is not None:
        checks["final_err_linf"] = rows[-1][-1]
    extra = {"initial_data": meta, "dt_error_estimate": traj.error_estimate}
    write_manifest(out_dir, cfg, started, checks, files, extra)
    return 0, checks


def _resolve_gauge(cfg: ExperimentConfig, grid: Grid) -> float:
    params = cfg.equation
    mode = cfg.gauge.get("mode", "explicit")
    if mode == "mkdv":
        lam = params.a / (3.0 * params.b)
    elif mode == "c3null":
        if params.b * params.e == 0:
            raise ConfigError("the c3-null gauge needs b*e != 0")
        lam = -params.c3 / (6.0 * params.b * params.e)
    else:
        if "lam" not in cfg.gauge or cfg.gauge["lam"] is None:
            raise ConfigError("gauge-check needs gauge.lam or gauge.mode in {mkdv, c3null}")
        lam = float(cfg.gauge["lam"])
    GaugeParams(lam).assert_commensurate(grid)
    return lam


def run_gauge_check(cfg: ExperimentConfig) -> tuple[int, dict]:
    started = time.time()
    out_dir, grid, rng = _prepare(cfg)
    params = cfg.equation
    lam = _resolve_gauge(cfg, grid)
    gauge = GaugeParams(lam)
    tparams = transformed_params(params, lam)
    tol = float(cfg.gauge.get("tolerance", 1e-6))

    u0, _, meta = build_initial_data(cfg, grid, rng)
    T = cfg.stepper.final_time

    traj_u = integrate(u0, params, cfg.stepper)
    v_from_u = gauge_transform(traj_u.fields[-1], gauge, params, T)
    v0 = gauge_transform(u0, gauge, params, 0.0)
    traj_v = integrate(v0, tparams, cfg.stepper)
    v_direct = traj_v.fields[-1]
    disc = float(np.max(np.abs(v_from_u.values - v_direct.values)))

    rows = [["commuting_square_maxnorm", disc]]
    checks = {"commuting_square_maxnorm": disc, "passed": disc <= tol}

    if cfg.gauge.get("mode") == "c3null":
        drift = report_drift([i2(f, tparams) for f in traj_v.fields])
        rows.append(["i2_drift_transformed", drift])
        checks["i2_drift_transformed"] = drift
        checks["passed"] = bool(checks["passed"] and drift <= 1e-8)

    files = []
    csv_path = out_dir / "gauge.csv"
    write_csv(csv_path, ["check", "value"], rows)
    files.append(str(csv_path))
    extra = {"lambda": lam, "transformed": [tparams.a, tparams.b, tparams.c, tparams.d, tparams.e],
             "initial_data": meta}
    write_manifest(out_dir, cfg, started, checks, files, extra)
    return (0 if checks["passed"] else 1), checks


def _scan_e2_task(args):
    K, L, coeffs, N, s, ptuple, normalize = args
    grid = make_grid(K, L)
    fieldv = SpectralField.from_coeffs(grid, coeffs)
    params = EquationParams(*ptuple)
    sym = MultiplierSymbol(N=N, s=s) if math.isfinite(N) else identity_symbol()
    return e2(fieldv, sym, params, normalize_k1=normalize, workers=1)


def run_energy_scan(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Sup-unit-interval increments of the second smoothed energy against the
    cutoff list, with the fitted log-log slope.

    One trajectory serves every cutoff: the flow does not depend on the
    smoothing symbol, only the energy functional does."""
    started = time.time()
    out_dir, grid, rng = _prepare(cfg)
    params = cfg.equation
    if params.a != 0 or params.c != 0:
        raise ConfigError("the energy scan runs on the certified a = c = 0 path")
    u0, _, meta = build_initial_data(cfg, grid, rng)

    horizon = max(1, int(round(cfg.stepper.final_time)))
    dt_est = cfg.stepper.dt if cfg.stepper.dt is not None else suggest_dt(u0, params, cfg.stepper)
    steps_per_unit = max(1, math.ceil(1.0 / dt_est))
    stepper = StepperConfig(
        dt=1.0 / steps_per_unit,
        final_time=float(horizon),
        dealias_factor=cfg.stepper.dealias_factor,
        sample_every=steps_per_unit,
        tolerance=cfg.stepper.tolerance,
    )
    traj = integrate(u0, params, stepper)
    unit_fields = []
    for j in range(horizon + 1):
        i = int(np.argmin(np.abs(traj.times - j)))
        unit_fields.append(traj.fields[i])

    xi_max = float(np.max(np.abs(grid.xi)))
    tasks = []
    layout = []
    for N in cfg.cutoffs:
        short = N >= xi_max
        layout.append((N, short))
        if not short:
            for fld in unit_fields:
                tasks.append((grid.K, grid.L, fld.coeffs, float(N), cfg.sobolev_s,
                              (params.a, params.b, params.c, params.d, params.e),
                              cfg.normalize_k1))

    if cfg.workers > 1 and tasks:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_scan_e2_task, tasks))
    else:
        results = [_scan_e2_task(t) for t in tasks]

    rows = []
    sup_incs = []
    monitor = {}
    pos = 0
    for N, short in layout:
        if short:
            rows.append([N, 0.0, 0.0, True])
            sup_incs.append(0.0)
            continue
        vals = results[pos : pos + horizon + 1]
        pos += horizon + 1
        sup_inc = max(abs(vals[j + 1] - vals[j]) for j in range(horizon))
        rows.append([N, sup_inc, sup_inc * N**3, False])
        sup_incs.append(sup_inc)
        # iteration monitor: smoothed gradient against twice its initial
        # square; reported only, the claim behind it is asymptotic in N
        sym = MultiplierSymbol(N=float(N), s=cfg.sobolev_s)
        sub = Trajectory(times=np.arange(horizon + 1, dtype=float),
                         fields=unit_fields, params=params, config=stepper)
        monitor[str(N)] = [
            [r.t, r.gradient_sq, r.threshold, r.within]
            for r in smallness_monitor(sub, sym)
        ]

    live = [(N, inc) for (N, _), inc in zip(layout, sup_incs) if inc > 0]
    degenerate = len(live) < 2
    slope = math.nan
    if not degenerate:
        logs = np.log([n for n, _ in live]), np.log([v for _, v in live])
        slope = float(np.polyfit(logs[0], logs[1], 1)[0])
    ratios = [r[2] for r in rows if not r[3] and r[2] > 0]
    spread = (max(ratios) / min(ratios)) if len(ratios) >= 2 else math.nan

    files = []
    csv_path = out_dir / "scan.csv"
    write_csv(csv_path, ["N", "sup_unit_increment", "increment_times_N3", "short_circuit"], rows)
    files.append(str(csv_path))
    if cfg.plots and not degenerate:
        svg = out_dir / "scan.svg"
        _plot_lines(svg, [n for n, _ in live], {"sup |E2 increment|": [v for _, v in live]},
                    "cutoff N", "sup unit-interval increment", logx=True, logy=True)
        files.append(str(svg))

    checks = {"slope": slope, "ratio_spread": spread, "degenerate": degenerate,
              "short_circuit": all(s for _, s in layout)}
    extra = {"initial_data": meta, "horizon": horizon, "dt": stepper.dt,
             "smallness_monitor": monitor}
    write_manifest(out_dir, cfg, started, checks, files, extra)
    return 0, checks


def run_rescale_check(cfg: ExperimentConfig) -> tuple[int, dict]:
    started = time.time()
    out_dir, grid, rng = _prepare(cfg)
    c0 = float(cfg.rescale.get("c0", 0.5))
    N = float(cfg.rescale.get("cutoff", 16.0))
    s = cfg.sobolev_s

    corpus = [
        ("sech", SpectralField.from_function(grid, lambda x, t: 2.0 * sech(x))),
        ("sech_wide", SpectralField.from_function(grid, lambda x, t: 1.5 * sech(0.5 * x))),
        ("random", random_field(grid, rng, amplitude=1.5, decay=1.5)),
    ]
    rows = []
    ok = True
    for lam in (2.0, 3.5, 8.0):
        for name, phi in corpus:
            phil = rescale_data(phi, lam)
            r_l2 = sobolev_norm(phil, 0.0) / sobolev_norm(phi, 0.0)
            r_ds = (sobolev_norm(fractional_derivative(phil, s), 0.0)
                    / sobolev_norm(fractional_derivative(phi, s), 0.0))
            err_l2 = abs(r_l2 - lam ** (-0.5))
            err_ds = abs(r_ds - lam ** (-0.5 - s))
            ok = ok and err_l2 <= 1e-10 and err_ds <= 1e-10
            rows.append([name, lam, r_l2, err_l2, r_ds, err_ds])

    cert_rows = []
    for name, phi in corpus:
        res = choose_lambda(phi, s=s, N=N, c0=c0)
        certified = res.norm_h1 < c0 and res.doublings <= 10
        ok = ok and certified
        cert_rows.append([name, res.lam, res.norm_h1, res.doublings, certified])

    files = []
    p1 = out_dir / "rescale_ratios.csv"
    write_csv(p1, ["data", "lambda", "l2_ratio", "l2_ratio_err", "ds_ratio", "ds_ratio_err"], rows)
    p2 = out_dir / "rescale_certificates.csv"
    write_csv(p2, ["data", "lambda", "smoothed_h1", "doublings", "certified"], cert_rows)
    files += [str(p1), str(p2)]
    checks = {"passed": ok}
    write_manifest(out_dir, cfg, started, checks, files)
    return (0 if ok else 1), checks


def run_exact_residual(cfg: ExperimentConfig) -> tuple[int, dict]:
    started = time.time()
    out_dir, grid, rng = _prepare(cfg)
    params = cfg.equation
    caps = validate(params)
    tol = 1e-10
    draws = int(cfg.initial_data.get("draws", 10)) if cfg.initial_data else 10
    # draw windows keep the profile resolved on the default K=512, L=80 grid:
    # wider envelopes leak through the periodic boundary, narrower ones put
    # dispersion-amplified tails at the top of the spectrum
    rows = []
    worst = 0.0
    for _ in range(draws):
        eta = float(rng.uniform(0.78, 0.88))
        t0 = float(rng.uniform(-0.3, 0.3))
        if caps.soliton2p_ok:
            carrier, _ = snap_wavenumber(grid, float(rng.uniform(-1.0, 1.0)))
            sp = SolitonParams(eta=eta, carrier=carrier)
            r = residual(lambda x, t: soliton_two_param(x, t, params, sp), params, grid, t0)
            rows.append(["two_param", eta, carrier, t0, r])
            worst = max(worst, r)
        if caps.soliton1p_ok:
            sp = SolitonParams(eta=eta)
            r = residual(lambda x, t: soliton_one_param(x, t, params, sp), params, grid, t0)
            rows.append(["one_param", eta, one_param_carrier(params), t0, r])
            worst = max(worst, r)
        if caps.planewave_ok:
            carrier, _ = snap_wavenumber(grid, params.c / (params.e - params.d))
            r = residual(lambda x, t: plane_wave(x, t, params, carrier=carrier),
                         params, grid, t0)
            rows.append(["plane_wave", math.nan, carrier, t0, r])
            worst = max(worst, r)
    ok = worst <= tol and rows
    files = []
    path = out_dir / "residuals.csv"
    write_csv(path, ["family", "eta", "carrier", "t", "residual_l2"], rows)
    files.append(str(path))
    checks = {"passed": bool(ok), "worst_residual": worst}
    write_manifest(out_dir, cfg, started, checks, files)
    return (0 if ok else 1), checks


# ---------------------------------------------------------------------------
# discrepancy report for the two sextic routes


def compare_delta6_routes(fieldv: SpectralField, params: EquationParams,
                          sym: MultiplierSymbol, tol: float = 1e-10,
                          out_dir: Path | None = None, workers: int = 1,
                          printed=None, generated=None) -> dict:
    """Evaluate the sextic functional through the printed multiplier and the
    generated one; on disagreement beyond tol, emit a machine-readable
    discrepancy report (the generated route is the arbiter)."""
    printed = printed if printed is not None else delta6_multiplier(params, sym, route="printed")
    generated = generated if generated is not None else delta6_multiplier(params, sym, route="generated")
    val_printed = lambda_n(printed, fieldv, workers=workers)
    val_generated = lambda_n(generated, fieldv, workers=workers)
    diff = abs(val_printed - val_generated)
    scale = max(abs(val_generated), 1.0)
    agree = diff <= tol * scale
    report = {
        "printed": [val_printed.real, val_printed.imag],
        "generated": [val_generated.real, val_generated.imag],
        "abs_difference": diff,
        "tolerance": tol,
        "agree": bool(agree),
        "arbiter": "generated",
        "grid_modes": fieldv.grid.K,
    }
    if not agree and out_dir is not None:
        path = Path(out_dir) / "delta6_discrepancy.json"
        with open(path, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        report["report_path"] = str(path)
    return report


# ---------------------------------------------------------------------------
# verification suite


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float


def _verify_checks(cfg: ExperimentConfig) -> list[CheckResult]:
    seed = cfg.seed
    workers = cfg.workers
    results: list[CheckResult] = []
    quick = cfg.profile == "quick"

    def d4_mult(params, sym):
        # the sign mutation is a CI self-test hook: it must make the
        # identity-energy oracle fail
        base = delta4_multiplier(params, sym)
        if cfg.mutation == "delta4-sign":
            return -1.0 * base
        return base

    def add(name, value, threshold, exact=False):
        passed = (value == threshold) if exact else (value <= threshold)
        results.append(CheckResult(name, bool(passed), float(value), float(threshold)))

    # transforms and Parseval
    worst_rt, worst_par = 0.0, 0.0
    for i, K in enumerate((8, 64, 256)):
        grid = make_grid(K, 2 * np.pi if K == 8 else 80.0)
        rng = np.random.default_rng([seed, 1, i])
        f = random_field(grid, rng)
        back = SpectralField.from_coeffs(grid, f.coeffs)
        worst_rt = max(worst_rt, float(np.max(np.abs(back.values - f.values)))
                       / max(float(np.max(np.abs(f.values))), 1e-300))
        phys = np.sum(np.abs(f.values) ** 2) * grid.dx
        spec = np.sum(np.abs(f.coeffs) ** 2) * grid.L / grid.K**2
        worst_par = max(worst_par, abs(phys - spec) / phys)
    add("transform-roundtrip", worst_rt, 1e-13)
    add("parseval", worst_par, 1e-13)

    # multiplier operator identity
    sym = MultiplierSymbol(N=4.0, s=0.5)
    add("m-branch-low", abs(float(m_symbol(2.0, sym)) - 1.0), 0.0, exact=True)
    add("m-branch-high", abs(float(m_symbol(16.0, sym)) - 0.5), 0.0, exact=True)
    grid64 = make_grid(64, 2 * np.pi)
    worst_opl = 0.0
    rng = np.random.default_rng([seed, 2])
    n_fields = 50 if quick else 1000
    for _ in range(n_fields):
        f = random_field(grid64, rng)
        lhs = sobolev_norm(i_operator(f, sym), 1.0)
        rhs = sobolev_norm(l_operator(f, sym), 0.5)
        worst_opl = max(worst_opl, abs(lhs - rhs) / max(lhs, 1e-300))
    add("smoothing-norm-identity", worst_opl, 1e-12)

    # l sub-additivity sampling with a range doubling
    rng = np.random.default_rng([seed, 3])
    sups = []
    for R in (1e3, 2e3):
        pairs = rng.uniform(-R, R, size=(2, 200_000 if quick else 1_000_000))
        ratio = l_symbol(pairs[0] + pairs[1], sym) / (l_symbol(pairs[0], sym) + l_symbol(pairs[1], sym))
        sups.append(float(np.max(ratio)))
    add("l-subadditivity-sup", sups[1] / sups[0], 2.0)

    # hyperplane identities, exact integers
    rng = np.random.default_rng([seed, 4])
    k1, k2, k3, k4 = sample_gamma4_modes(rng, 200_000 if quick else 1_000_000, 10_000)
    res = hyperplane_identity_residuals(k1, k2, k3, k4)
    add("hyperplane-identities", float(max(res)), 0.0, exact=True)

    # constant quartic correction in the identity-symbol limit
    params_cert = EquationParams(0.0, 1.0, 0.0, 1.0, 1.0)
    rng = np.random.default_rng([seed, 5])
    t1, t2, t3, t4 = sample_gamma4_modes(rng, 10_000, 40)
    vals = d4_mult(params_cert, identity_symbol())(
        t1.astype(float), t2.astype(float), t3.astype(float), t4.astype(float))
    target = params_cert.e * (params_cert.d + params_cert.e) / 2.0
    add("delta4-identity-constant", float(np.max(np.abs(vals - target))), 0.0, exact=True)

    if quick:
        return results

    # lattice calibration against alias-free power integrals
    worst_cal = 0.0
    grid32 = make_grid(32, 2 * np.pi)
    grid16 = make_grid(16, 2 * np.pi)
    rng = np.random.default_rng([seed, 6])
    for _ in range(10):
        f = random_field(grid32, rng)
        for n in (2, 4):
            lhs = lambda_n(constant_multiplier(n), f, workers=workers).real
            rhs = power_integral(f, n)
            worst_cal = max(worst_cal, abs(lhs - rhs) / abs(rhs))
        f6 = random_field(grid16, rng)
        lhs = lambda_n(constant_multiplier(6), f6, workers=workers).real
        rhs = power_integral(f6, 6)
        worst_cal = max(worst_cal, abs(lhs - rhs) / abs(rhs))
    add("lattice-calibration", worst_cal, 1e-12)

    # identity-limit second energy against the conserved invariant
    grid64b = make_grid(64, 2 * np.pi)
    rng = np.random.default_rng([seed, 7])
    worst_m1 = 0.0
    for _ in range(20):
        f = random_field(grid64b, rng, amplitude=1.2)
        base = e1(f, identity_symbol(), params_cert, check=False)
        corr = lambda_n(d4_mult(params_cert, identity_symbol()), f, workers=workers).real
        val2 = base + corr
        ival = i2(f, params_cert)
        worst_m1 = max(worst_m1, abs(val2 + ival) / abs(ival))
    add("identity-energy-oracle", worst_m1, 1e-10)

    # exact-solution residuals at K=512; the draw windows keep the profiles
    # resolved (see run_exact_residual)
    grid512 = make_grid(512, 80.0)
    rng = np.random.default_rng([seed, 8])
    worst_res = 0.0
    p2 = EquationParams(0.0, 1.0, 0.0, 1.0, 0.0)
    for _ in range(3):
        eta = float(rng.uniform(0.78, 0.88))
        carrier, _ = snap_wavenumber(grid512, float(rng.uniform(-1.0, 1.0)))
        sp = SolitonParams(eta=eta, carrier=carrier)
        worst_res = max(worst_res, residual(
            lambda x, t: soliton_two_param(x, t, p2, sp), p2, grid512,
            float(rng.uniform(-0.3, 0.3))))
    p1 = EquationParams(0.0, 1.0, 0.0, 1.0, 1.0)
    for _ in range(3):
        sp = SolitonParams(eta=float(rng.uniform(0.78, 0.88)))
        worst_res = max(worst_res, residual(
            lambda x, t: soliton_one_param(x, t, p1, sp), p1, grid512,
            float(rng.uniform(-0.3, 0.3))))
    # choose c so the plane-wave carrier falls exactly on the lattice
    carrier, _ = snap_wavenumber(grid512, 1.0)
    ppw = EquationParams(0.0, 1.0, carrier * 1.0, 0.0, 1.0)
    worst_res = max(worst_res, residual(
        lambda x, t: plane_wave(x, t, ppw), ppw, grid512, 0.1))
    add("exact-solution-residuals", worst_res, 1e-10)

    # quick soliton fidelity
    gridf = make_grid(256, 50.0)
    carrier, _ = snap_wavenumber(gridf, 0.5)
    sp = SolitonParams(eta=1.0, carrier=carrier)
    u0 = SpectralField.from_function(gridf, lambda x, t: soliton_two_param(x, t, p2, sp))
    traj = integrate(u0, p2, StepperConfig(final_time=0.25))
    exact = np.asarray(soliton_two_param(gridf.x, traj.times[-1], p2, sp))
    err = float(np.max(np.abs(traj.fields[-1].values - exact))) / float(np.max(np.abs(exact)))
    add("soliton-fidelity-quick", err, 1e-6)

    # conservation drifts
    gridc = make_grid(128, 80.0)
    u0 = SpectralField.from_function(gridc, lambda x, t: 1.2 * sech(0.7 * x))
    trajc = integrate(u0, params_cert, StepperConfig(final_time=0.5, tolerance=1e-10))
    add("mass-drift", report_drift([i1(f) for f in trajc.fields]), 1e-10)
    add("invariant-drift", report_drift([i2(f, params_cert) for f in trajc.fields]), 1e-8)

    # gauge involution and commuting square
    gridg = make_grid(192, 80.0)
    rng = np.random.default_rng([seed, 9])
    f = random_field(gridg, rng, amplitude=1.0, band=30)
    lam = 4 * gridg.dxi
    pg = EquationParams(3.0 * lam, 1.0, 0.5 * lam, 1.0, 0.5)
    v = gauge_transform(f, GaugeParams(lam), pg, 0.37)
    back = gauge_transform(v, GaugeParams(-lam), transformed_params(pg, lam), 0.37)
    inv = float(np.max(np.abs(back.values - f.values))) / float(np.max(np.abs(f.values)))
    add("gauge-involution", inv, 1e-12)

    u0 = SpectralField.from_function(gridg, lambda x, t: 1.0 * sech(0.7 * x))
    stepg = StepperConfig(final_time=0.25, tolerance=1e-10)
    traj_u = integrate(u0, pg, stepg)
    v1 = gauge_transform(traj_u.fields[-1], GaugeParams(lam), pg, 0.25)
    v2 = integrate(gauge_transform(u0, GaugeParams(lam), pg, 0.0),
                   transformed_params(pg, lam), stepg).fields[-1]
    add("gauge-commuting-square", float(np.max(np.abs(v1.values - v2.values))), 1e-6)

    # rescaling identities and the doubling certificate
    gridr = make_grid(256, 80.0)
    phi = SpectralField.from_function(gridr, lambda x, t: 2.0 * sech(x))
    s = 0.3
    worst_scale = 0.0
    for lam_r in (2.0, 3.5, 8.0):
        phil = rescale_data(phi, lam_r)
        worst_scale = max(worst_scale, abs(
            sobolev_norm(phil, 0.0) / sobolev_norm(phi, 0.0) - lam_r**-0.5))
        worst_scale = max(worst_scale, abs(
            sobolev_norm(fractional_derivative(phil, s), 0.0)
            / sobolev_norm(fractional_derivative(phi, s), 0.0) - lam_r ** (-0.5 - s)))
    add("rescale-scaling-identities", worst_scale, 1e-10)
    cert = choose_lambda(phi, s=s, N=16.0, c0=0.5)
    add("rescale-certificate", cert.norm_h1, 0.5)
    add("rescale-doubling-count", float(cert.doublings), 10.0)

    # derivative decomposition against a finite-difference rate
    gridk = make_grid(32, 2 * np.pi)
    rng = np.random.default_rng([seed, 10])
    w0 = random_field(gridk, rng, amplitude=1.2, decay=1.6)
    pk = EquationParams(0.0, 1.0, 0.0, 0.8, 1.0)
    symk = MultiplierSymbol(N=3.0, s=0.4)
    stek = StepperConfig(dt=1e-6, final_time=8e-6, sample_every=2, tolerance=1e-9)
    trk = integrate(w0, pk, stek)
    m2 = m2_multiplier(symk)
    vals = [lambda_n(m2, f, workers=workers).real for f in trk.fields]
    h = trk.times[1] - trk.times[0]
    fd = (vals[0] - 8 * vals[1] + 8 * vals[3] - vals[4]) / (12 * h)
    dec = apply_ame(m2, pk)
    mid = trk.fields[2]
    gen = (lambda_n(dec.boundary, mid, workers=workers)
           + lambda_n(dec.extension_sum(), mid, workers=workers))
    rate_err = abs(fd - gen.real) / max(abs(gen.real), 1e-300)
    add("derivative-decomposition-rate", rate_err, 1e-4)

    # reduction determinism across worker counts
    f = random_field(make_grid(64, 2 * np.pi), np.random.default_rng([seed, 11]))
    a1 = lambda_n(d4_mult(params_cert, MultiplierSymbol(N=3.0, s=0.4)), f, workers=1)
    a2 = lambda_n(d4_mult(params_cert, MultiplierSymbol(N=3.0, s=0.4)), f, workers=max(2, workers))
    add("reduction-determinism", abs(a1 - a2), 0.0, exact=True)

    # printed against generated sextic route
    grid12 = make_grid(12, 2 * np.pi)
    f12 = random_field(grid12, np.random.default_rng([seed, 12]), amplitude=1.0)
    symd = MultiplierSymbol(N=2.0, s=0.45)
    rep = compare_delta6_routes(f12, params_cert, symd, workers=workers)
    add("delta6-route-agreement", rep["abs_difference"] / max(abs(complex(*rep["generated"])), 1.0),
        1e-10)

    return results


def _emit_bound_samples(out_dir: Path, seed: int) -> list[str]:
    # bound-sampling reports: tuple, correction value, ratio against the
    # symbol bound, for both correction multipliers
    params = EquationParams(0.0, 1.0, 0.0, 1.0, 1.0)
    sym = MultiplierSymbol(N=8.0, s=0.3)
    rng = np.random.default_rng([seed, 20])
    k1, k2, k3, k4 = sample_gamma4_modes(rng, 1000, 64)
    vals = delta4_values(k1.astype(float), k2, k3, k4, params, sym)
    ns = np.maximum.reduce([np.abs(k) for k in (k1, k2, k3, k4)]).astype(float)
    ratio = np.abs(vals) / m_symbol(ns, sym) ** 2
    p4 = out_dir / "delta4_bounds.csv"
    write_csv(p4, ["k1", "k2", "k3", "k4", "delta4", "ratio_vs_m2"],
              [[int(a), int(b), int(c), int(d), v, r]
               for a, b, c, d, v, r in zip(k1, k2, k3, k4, vals, ratio)])

    from .multilinear import sample_gamma6_modes

    ks = sample_gamma6_modes(rng, 200, 32)
    printed = delta6_multiplier(params, sym, route="printed")
    vals6 = printed(*[k.astype(float) for k in ks])
    ns6 = np.maximum.reduce([np.abs(k) for k in ks]).astype(float)
    ratio6 = np.abs(vals6) / (ns6 * m_symbol(ns6, sym) ** 2 + 1e-300)
    p6 = out_dir / "delta6_bounds.csv"
    write_csv(p6, ["k1", "k2", "k3", "k4", "k5", "k6", "delta6", "ratio_vs_Nm2"],
              [[*(int(k[i]) for k in ks), vals6[i], ratio6[i]] for i in range(len(vals6))])
    return [str(p4), str(p6)]


def run_verify(cfg: ExperimentConfig) -> tuple[int, dict]:
    started = time.time()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = _verify_checks(cfg)

    files = []
    csv_path = out_dir / "verify.csv"
    write_csv(csv_path, ["check", "passed", "value", "threshold"],
              [[r.name, r.passed, r.value, r.threshold] for r in results])
    files.append(str(csv_path))
    if cfg.profile != "quick":
        files += _emit_bound_samples(out_dir, cfg.seed)

    suite = ElementTree.Element("testsuite", {
        "name": "airynls-verify",
        "tests": str(len(results)),
        "failures": str(sum(not r.passed for r in results)),
    })
    for r in results:
        case = ElementTree.SubElement(suite, "testcase", {"name": r.name})
        if not r.passed:
            ElementTree.SubElement(case, "failure", {
                "message": f"value {r.value!r} exceeds threshold {r.threshold!r}"})
    xml_path = out_dir / "verify.junit.xml"
    ElementTree.ElementTree(suite).write(xml_path, encoding="unicode", xml_declaration=True)
    files.append(str(xml_path))

    ok = all(r.passed for r in results)
    checks = {r.name: r.passed for r in results}
    checks["passed"] = ok
    write_manifest(out_dir, cfg, started, checks, files,
                   extra={"mutation": cfg.mutation, "profile": cfg.profile})
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: value={r.value!r} threshold={r.threshold!r}")
    return (0 if ok else 1), checks


RUNNERS = {
    "simulate": run_simulate,
    "verify": run_verify,
    "gauge-check": run_gauge_check,
    "energy-scan": run_energy_scan,
    "rescale-check": run_rescale_check,
    "exact-residual": run_exact_residual,
}
