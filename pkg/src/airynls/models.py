"""Equation parameters, gauge transformations, rescaling, and the closed-form
solution families used as solver oracles.

The evolution equation is

    u_t + i*a*u_xx + b*u_xxx + i*c*|u|^2 u + d*|u|^2 u_x + e*u^2 conj(u)_x = 0

with real coefficients (a, b, c, d, e), b != 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    Grid,
    MultiplierSymbol,
    SpectralField,
    i_operator,
    make_grid,
    sobolev_norm,
    fractional_derivative,
)

__all__ = [
    "EquationParams",
    "Capabilities",
    "GaugeParams",
    "SolitonParams",
    "GaugeError",
    "validate",
    "transformed_params",
    "gauge_transform",
    "soliton_two_param",
    "soliton_one_param",
    "plane_wave",
    "phase_rotate",
    "rescale_data",
    "choose_lambda",
    "RescaleResult",
    "sech",
]


@dataclass(frozen=True)
class EquationParams:
    """The five real coefficients plus the derived constants of the
    quadratic energy functional:

        c1 = 3*b*e,  c2 = -e*(e + d)/2,  c3 = 3*b*c - a*(e + d),  k1 = 3*b*e.
    """

    a: float
    b: float
    c: float
    d: float
    e: float

    @property
    def c1(self) -> float:
        return 3.0 * self.b * self.e

    @property
    def c2(self) -> float:
        return -self.e * (self.e + self.d) / 2.0

    @property
    def c3(self) -> float:
        return 3.0 * self.b * self.c - self.a * (self.e + self.d)

    @property
    def k1(self) -> float:
        return 3.0 * self.b * self.e


@dataclass(frozen=True)
class Capabilities:
    has_i2: bool
    mkdv_reducible: bool
    soliton2p_ok: bool
    soliton1p_ok: bool
    planewave_ok: bool


def _close(x: float, y: float, tol: float = 1e-12) -> bool:
    return abs(x - y) <= tol * max(1.0, abs(x), abs(y))


def validate(params: EquationParams) -> Capabilities:
    """Check preconditions and report which code paths the parameters enable."""
    if params.b == 0:
        raise ValueError("third-order coefficient b must be nonzero")
    a, b, c, d, e = params.a, params.b, params.c, params.d, params.e
    return Capabilities(
        has_i2=(b * e != 0),
        mkdv_reducible=_close(c, (d - e) * a / (3.0 * b)),
        soliton2p_ok=(e == 0 and b * d > 0 and _close(c, a * d / (3.0 * b))),
        soliton1p_ok=(e != 0 and b * (d + e) > 0),
        planewave_ok=(d != e),
    )


def transformed_params(params: EquationParams, lam: float) -> EquationParams:
    """Coefficients of the equation satisfied by the gauged field:
    a -> a - 3*lam*b and c -> c - lam*(d - e); b, d, e unchanged."""
    return EquationParams(
        a=params.a - 3.0 * lam * params.b,
        b=params.b,
        c=params.c - lam * (params.d - params.e),
        d=params.d,
        e=params.e,
    )


class GaugeError(ValueError):
    pass


@dataclass(frozen=True)
class GaugeParams:
    """Gauge frequency; must sit on the wavenumber lattice of the grid the
    transform acts on, so the modulation stays periodic."""

    lam: float

    def assert_commensurate(self, grid: Grid) -> None:
        ratio = self.lam * grid.L / (2.0 * np.pi)
        if abs(ratio - round(ratio)) > 1e-9:
            raise GaugeError(
                f"gauge frequency {self.lam} is not a lattice wavenumber "
                f"(lambda*L/2pi = {ratio})"
            )


def gauge_transform(
    u: SpectralField, gauge: GaugeParams, params: EquationParams, t: float
) -> SpectralField:
    """Modulation-plus-translation gauge at time t:

        v(x) = exp(i*lam*x + i*(a*lam^2 - 2*b*lam^3)*t) * u(x + (2*a*lam - 3*b*lam^2)*t)

    The spatial shift is a spectral phase (exact on the grid); the
    modulation is a pointwise multiplication.  The inverse is the same map
    with -lam applied under ``transformed_params(params, lam)``.
    """
    gauge.assert_commensurate(u.grid)
    lam = gauge.lam
    a, b = params.a, params.b
    shift = (2.0 * a * lam - 3.0 * b * lam**2) * t
    shifted = SpectralField.from_coeffs(u.grid, u.coeffs * np.exp(1j * u.grid.xi * shift))
    phase = np.exp(1j * (lam * u.grid.x + (a * lam**2 - 2.0 * b * lam**3) * t))
    return SpectralField.from_values(u.grid, shifted.values * phase)


def sech(z):
    """Overflow-safe 1/cosh for real arguments."""
    ez = np.exp(-np.abs(z))
    return 2.0 * ez / (1.0 + ez * ez)


@dataclass(frozen=True)
class SolitonParams:
    """Scale parameter eta > 0 and carrier wavenumber (snap the carrier to
    the grid lattice before sampling on a periodic grid)."""

    eta: float
    carrier: float = 0.0

    def __post_init__(self) -> None:
        if not (self.eta > 0):
            raise ValueError(f"scale parameter must be positive, got eta={self.eta}")


def _envelope_speed(params: EquationParams, eta: float, carrier: float) -> float:
    # psi = 2*a*N + 3*b*N^2 - eta^2*b
    return 2.0 * params.a * carrier + 3.0 * params.b * carrier**2 - eta**2 * params.b


def _phase_speed(params: EquationParams, eta: float, carrier: float) -> float:
    # phi = a*N^2 + b*N^3 - 3*eta^2*b*N - a*eta^2
    return (
        params.a * carrier**2
        + params.b * carrier**3
        - 3.0 * eta**2 * params.b * carrier
        - params.a * eta**2
    )


def soliton_two_param(x, t: float, params: EquationParams, sp: SolitonParams):
    """Two-parameter travelling envelope for e = 0, b*d > 0, c = a*d/(3b):

        u(x, t) = eta/A * sech(eta*(x + psi*t)) * exp(i*(N*x + phi*t)),
        A = sqrt(d/(6b)).
    """
    caps = validate(params)
    if not caps.soliton2p_ok:
        raise ValueError("two-parameter family needs e = 0, b*d > 0, c = a*d/(3b)")
    A = np.sqrt(params.d / (6.0 * params.b))
    eta, N = sp.eta, sp.carrier
    psi = _envelope_speed(params, eta, N)
    phi = _phase_speed(params, eta, N)
    envelope = (eta / A) * sech(eta * (np.asarray(x) + psi * t))
    return envelope * np.exp(1j * (N * np.asarray(x) + phi * t))


def soliton_one_param(x, t: float, params: EquationParams, sp: SolitonParams):
    """One-parameter family for e != 0, b*(d+e) > 0.  The carrier is fixed
    by the coefficients, w = (c - 2*a*A^2)/(2e) with A = sqrt((e+d)/(6b));
    envelope and phase speeds reuse the two-parameter formulas with the
    carrier in place of the free wavenumber.
    """
    caps = validate(params)
    if not caps.soliton1p_ok:
        raise ValueError("one-parameter family needs e != 0 and b*(d+e) > 0")
    A = np.sqrt((params.e + params.d) / (6.0 * params.b))
    w = (params.c - 2.0 * params.a * A**2) / (2.0 * params.e)
    eta = sp.eta
    psi = _envelope_speed(params, eta, w)
    phi = _phase_speed(params, eta, w)
    envelope = (eta / A) * sech(eta * (np.asarray(x) + psi * t))
    return envelope * np.exp(1j * (w * np.asarray(x) + phi * t))


def one_param_carrier(params: EquationParams) -> float:
    A2 = (params.e + params.d) / (6.0 * params.b)
    return (params.c - 2.0 * params.a * A2) / (2.0 * params.e)


def plane_wave(x, t: float, params: EquationParams, c0: float = 0.0, carrier: float | None = None):
    """exp(i*(C*x + D*t + c0)) with C = c/(e - d) and D = a*C^2 + b*C^3.

    Passing ``carrier`` overrides C (use a snapped lattice value on a grid;
    the snap error is then the caller's to report).
    """
    if carrier is None:
        if params.d == params.e:
            raise ValueError("plane wave needs d != e")
        carrier = params.c / (params.e - params.d)
    D = params.a * carrier**2 + params.b * carrier**3
    return np.exp(1j * (carrier * np.asarray(x) + D * t + c0))


def phase_rotate(u: SpectralField, alpha: complex) -> SpectralField:
    """Multiply by a unimodular constant; solutions map to solutions."""
    if abs(abs(alpha) - 1.0) > 1e-12:
        raise ValueError(f"phase factor must be unimodular, got |alpha|={abs(alpha)}")
    return u.scaled(alpha)


def rescale_data(phi: SpectralField, lam: float) -> SpectralField:
    """phi_lam(x) = phi(x/lam)/lam on a box of length lam*L.

    The grid points of the stretched box coincide with the stretched grid
    points, so the resampling is exact: values divide by lam, coefficients
    divide by lam, wavenumbers divide by lam.
    """
    if lam < 1.0 - 1e-12:
        raise ValueError(f"rescaling factor must be >= 1, got {lam}")
    grid = make_grid(phi.grid.K, phi.grid.L * lam)
    return SpectralField.from_values(grid, phi.values / lam)


@dataclass(frozen=True)
class RescaleResult:
    lam: float
    norm_h1: float
    doublings: int
    lam_initial: float


def choose_lambda(
    phi: SpectralField, s: float, N: float, c0: float, max_doublings: int = 60
) -> RescaleResult:
    """Doubling search for a rescaling factor that certifies
    ||I phi_lam||_{H^1} < c0.

    Starts from lam = N^(2(1-s)/(1+2s)) * (||D^s phi|| / c0)^(2/(1+2s)),
    clamped at 1, and doubles until the measured smoothed norm is below
    the target.  Requires N > (||phi|| / c0)^(2s/(1-s)).
    """
    if not (0.25 < s < 1.0):
        raise ValueError(f"regularity must lie in (1/4, 1), got s={s}")
    if not (0.0 < c0 < 1.0):
        raise ValueError(f"target must lie in (0, 1), got c0={c0}")
    l2 = sobolev_norm(phi, 0.0)
    lower = (l2 / c0) ** (2.0 * s / (1.0 - s))
    if not (N > lower):
        raise ValueError(f"cutoff N={N} is below its lower bound {lower:.6g}")
    sym = MultiplierSymbol(N=N, s=s)

    def smoothed_h1(field: SpectralField) -> float:
        return sobolev_norm(i_operator(field, sym), 1.0)

    if smoothed_h1(phi) < c0:
        return RescaleResult(lam=1.0, norm_h1=smoothed_h1(phi), doublings=0, lam_initial=1.0)

    ds_norm = sobolev_norm(fractional_derivative(phi, s), 0.0)
    lam0 = N ** (2.0 * (1.0 - s) / (1.0 + 2.0 * s)) * (ds_norm / c0) ** (2.0 / (1.0 + 2.0 * s))
    lam = max(1.0, lam0)
    for doublings in range(max_doublings + 1):
        achieved = smoothed_h1(rescale_data(phi, lam))
        if achieved < c0:
            return RescaleResult(lam=lam, norm_h1=achieved, doublings=doublings, lam_initial=lam0)
        lam *= 2.0
    raise RuntimeError(f"doubling search did not certify the target in {max_doublings} steps")
