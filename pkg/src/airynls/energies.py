"""Conserved and almost-conserved functionals along trajectories.

The quadratic invariant is the plain mass integral; the higher invariant
combines the kinetic, quartic, and momentum terms with the derived
constants c1, c2, c3.  The smoothed energies replace the kinetic term by
its low-pass version and add the quartic correction whose time derivative
is purely sextic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import EquationParams
from .multilinear import (
    LatticeBudgetError,
    delta4_multiplier,
    delta6_multiplier,
    lambda_n,
    m2_multiplier,
    MAX_MODES_QUARTIC,
    MAX_MODES_SEXTIC,
)
from .solver import Trajectory
from .spectral import (
    MultiplierSymbol,
    SpectralField,
    first_derivative,
    i_operator,
    power_integral,
)

__all__ = [
    "EnergyReport",
    "RateReport",
    "EnergyConsistencyError",
    "i1",
    "i2",
    "e1",
    "e2",
    "e2_rate",
    "increment_ledger",
    "trajectory_reports",
]


class EnergyConsistencyError(RuntimeError):
    pass


def i1(u: SpectralField) -> float:
    """Mass: physical-space quadrature of |u|^2."""
    return float(np.sum(np.abs(u.values) ** 2) * u.grid.dx)


def i2(u: SpectralField, params: EquationParams) -> float:
    """c1 * ||u_x||^2 + c2 * integral |u|^4 + c3 * Im integral u conj(u)_x.

    Requires b*e != 0; the derivative term is spectral, the quartic term is
    the alias-free power integral, and the momentum term is the exact
    spectral pairing."""
    if params.b * params.e == 0:
        raise ValueError("the higher invariant needs b*e != 0")
    ux = first_derivative(u)
    kinetic = float(np.sum(np.abs(ux.coeffs) ** 2) * u.grid.L / u.grid.K**2)
    quartic = power_integral(u, 4)
    amp2 = np.abs(u.coeffs) ** 2 / u.grid.K**2
    momentum = -float(np.sum(u.grid.xi * amp2) * u.grid.L)
    return params.c1 * kinetic + params.c2 * quartic + params.c3 * momentum


def _k1(params: EquationParams, normalize_k1: bool) -> float:
    return 1.0 if normalize_k1 else params.k1


def e1(w: SpectralField, sym: MultiplierSymbol, params: EquationParams,
       normalize_k1: bool = False, check: bool = True) -> float:
    """First smoothed energy, -k1 * ||d/dx I w||^2.

    Evaluated both directly and through the quadratic lattice functional;
    disagreement beyond 1e-12 relative is a defect."""
    k1 = _k1(params, normalize_k1)
    diw = first_derivative(i_operator(w, sym))
    direct = -k1 * float(np.sum(np.abs(diw.coeffs) ** 2) * w.grid.L / w.grid.K**2)
    if check:
        pairing = k1 * lambda_n(m2_multiplier(sym), w).real
        if abs(direct - pairing) > 1e-12 * max(1.0, abs(direct)):
            raise EnergyConsistencyError(
                f"quadratic energy mismatch: direct={direct!r} pairing={pairing!r}"
            )
    return direct


def e2(w: SpectralField, sym: MultiplierSymbol, params: EquationParams,
       normalize_k1: bool = False, workers: int = 1) -> float:
    """Second smoothed energy: e1 plus the quartic correction functional."""
    if w.grid.K > MAX_MODES_QUARTIC:
        raise LatticeBudgetError(
            f"second smoothed energy needs the quartic lattice sum (K <= {MAX_MODES_QUARTIC})"
        )
    base = e1(w, sym, params, normalize_k1=normalize_k1, check=False)
    corr = lambda_n(delta4_multiplier(params, sym), w, workers=workers)
    scale = max(1.0, abs(corr.real))
    if abs(corr.imag) > 1e-10 * scale:
        raise EnergyConsistencyError(f"quartic correction is not real: {corr!r}")
    k1 = _k1(params, normalize_k1)
    # the correction multiplier carries k1 = 3be internally; rescale if the
    # normalized convention was requested
    factor = 1.0 if not normalize_k1 else 1.0 / params.k1
    return base + factor * corr.real


@dataclass(frozen=True)
class RateReport:
    t: float
    de2_fd: float
    lambda6: complex | None


def e2_rate(traj: Trajectory, sym: MultiplierSymbol, params: EquationParams,
            normalize_k1: bool = False, workers: int = 1,
            route: str = "generated") -> RateReport:
    """Centered 4th-order finite-difference rate of the second smoothed
    energy over five consecutive uniform samples, plus the direct sextic
    functional at the center when the lattice budget allows."""
    times = np.asarray(traj.times)
    if len(times) < 5:
        raise ValueError("need at least 5 consecutive samples for the rate stencil")
    mid = len(times) // 2
    lo = min(max(mid - 2, 0), len(times) - 5)
    window = slice(lo, lo + 5)
    tw = times[window]
    h = tw[1] - tw[0]
    if np.max(np.abs(np.diff(tw) - h)) > 1e-9 * max(h, 1e-300):
        raise ValueError("rate stencil needs uniformly spaced samples")
    ew = [
        e2(traj.fields[i], sym, params, normalize_k1=normalize_k1, workers=workers)
        for i in range(lo, lo + 5)
    ]
    de2 = (ew[0] - 8.0 * ew[1] + 8.0 * ew[3] - ew[4]) / (12.0 * h)

    center = traj.fields[lo + 2]
    lam6: complex | None = None
    if center.grid.K <= MAX_MODES_SEXTIC:
        mult = delta6_multiplier(params, sym, route=route)
        lam6 = lambda_n(mult, center, workers=workers)
        if normalize_k1:
            lam6 = lam6 / params.k1
    return RateReport(t=float(tw[2]), de2_fd=float(de2), lambda6=lam6)


@dataclass(frozen=True)
class LedgerRow:
    interval: int
    e2_start: float
    e2_end: float
    increment: float


def increment_ledger(traj: Trajectory, sym: MultiplierSymbol, params: EquationParams,
                     normalize_k1: bool = False, workers: int = 1) -> list[LedgerRow]:
    """Per-unit-interval increments of the second smoothed energy.

    The trajectory must contain samples at the integer times 0, 1, ..., T;
    the cumulative sum telescopes to E2(T) - E2(0) by construction and the
    harness re-checks the reconciliation to 1e-10."""
    times = np.asarray(traj.times)
    horizon = int(round(times[-1]))
    if horizon < 1 or abs(times[-1] - horizon) > 1e-9:
        raise ValueError("trajectory must span an integer number of unit intervals")
    idx = []
    for j in range(horizon + 1):
        i = int(np.argmin(np.abs(times - j)))
        if abs(times[i] - j) > 1e-9:
            raise ValueError(f"no sample at integer time {j}")
        idx.append(i)
    values = [
        e2(traj.fields[i], sym, params, normalize_k1=normalize_k1, workers=workers)
        for i in idx
    ]
    return [
        LedgerRow(interval=j, e2_start=values[j - 1], e2_end=values[j],
                  increment=values[j] - values[j - 1])
        for j in range(1, horizon + 1)
    ]


@dataclass(frozen=True)
class EnergyReport:
    """Time-stamped record of the invariants and smoothed energies."""

    t: float
    i1: float
    i2: float | None
    e1: float
    e2: float | None
    de2_fd: float | None = None
    lambda6: complex | None = None


def trajectory_reports(traj: Trajectory, sym: MultiplierSymbol, params: EquationParams,
                       with_e2: bool = False, normalize_k1: bool = False,
                       workers: int = 1) -> list[EnergyReport]:
    has_i2 = params.b * params.e != 0
    out = []
    for t, field in zip(traj.times, traj.fields):
        val_e2 = None
        if with_e2 and field.grid.K <= MAX_MODES_QUARTIC:
            val_e2 = e2(field, sym, params, normalize_k1=normalize_k1, workers=workers)
        out.append(
            EnergyReport(
                t=float(t),
                i1=i1(field),
                i2=i2(field, params) if has_i2 else None,
                e1=e1(field, sym, params, normalize_k1=normalize_k1),
                e2=val_e2,
            )
        )
    return out


def report_drift(values) -> float:
    """Max relative drift of a series against its initial value."""
    arr = np.asarray([v for v in values if v is not None], dtype=float)
    if arr.size == 0:
        return math.nan
    ref = max(abs(arr[0]), 1e-300)
    return float(np.max(np.abs(arr - arr[0])) / ref)


@dataclass(frozen=True)
class SmallnessRow:
    t: float
    gradient_sq: float
    threshold: float
    within: bool


def smallness_monitor(traj: Trajectory, sym: MultiplierSymbol,
                      eps0: float | None = None) -> list[SmallnessRow]:
    """Iteration monitor: ||d/dx I u(t)||^2 against 2*eps0^2 at each sample.

    eps0 defaults to the initial smoothed gradient norm.  The comparison is
    reported, never asserted; the underlying claim is asymptotic in the
    cutoff, not a per-run guarantee."""
    rows = []
    for t, fieldv in zip(traj.times, traj.fields):
        diw = first_derivative(i_operator(fieldv, sym))
        g2 = float(np.sum(np.abs(diw.coeffs) ** 2) * fieldv.grid.L / fieldv.grid.K**2)
        if eps0 is None:
            eps0 = math.sqrt(g2)
        thr = 2.0 * eps0 * eps0
        rows.append(SmallnessRow(t=float(t), gradient_sq=g2, threshold=thr,
                                 within=g2 <= thr))
    return rows
