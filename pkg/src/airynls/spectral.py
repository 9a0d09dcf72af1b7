"""Periodic pseudospectral grid, complex fields, Sobolev norms, and the
low-pass smoothing multiplier with its associated operators.

Conventions (fixed once; the calibration tests in the suite pin them down):

* forward transform carries no 1/K factor, the inverse carries 1/K,
* spectral coefficients are stored in increasing-wavenumber order,
* the box integral of |u|^2 equals (L/K^2) * sum |c_k|^2,
* angle brackets mean <xi> = (1 + xi^2)^(1/2).

All operations are pure functions over value types and are safe to call
concurrently on distinct fields (numpy's pocketfft is reentrant).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "SpectralField",
    "MultiplierSymbol",
    "make_grid",
    "snap_wavenumber",
    "fractional_derivative",
    "first_derivative",
    "sobolev_norm",
    "m_symbol",
    "l_symbol",
    "i_operator",
    "l_operator",
    "resample",
    "power_integral",
    "random_field",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with K modes on a box of length L.

    Wavenumbers are stored in increasing order, xi_k = 2*pi*k/L for
    k = -K/2 .. K/2-1.  The single unpaired mode -K/2 carries no usable
    odd-derivative information; derivative and product operators keep it
    at zero (the "active band" is |k| <= K/2 - 1).
    """

    K: int
    L: float

    def __post_init__(self) -> None:
        k = np.arange(-self.K // 2, self.K // 2)
        dx = self.L / self.K
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "xi", 2.0 * np.pi * k / self.L)
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dxi", 2.0 * np.pi / self.L)
        object.__setattr__(self, "x", -0.5 * self.L + dx * np.arange(self.K))


def make_grid(K: int, L: float) -> Grid:
    """Build a grid, rejecting odd or tiny K and non-positive L."""
    if K % 2 != 0:
        raise ValueError(f"mode count must be even, got K={K}")
    if K < 8:
        raise ValueError(f"mode count must be at least 8, got K={K}")
    if L <= 0:
        raise ValueError(f"box length must be positive, got L={L}")
    return Grid(K=K, L=float(L))


def snap_wavenumber(grid: Grid, target: float) -> tuple[float, float]:
    """Snap a carrier wavenumber to the grid lattice; returns (snapped, error)."""
    n = round(target / grid.dxi)
    snapped = n * grid.dxi
    return snapped, abs(snapped - target)


@dataclass
class SpectralField:
    """Complex field on a periodic grid with synchronized physical and
    spectral representations.

    ``coeffs`` is aligned with ``grid.xi`` (increasing wavenumber); the
    round trip values -> coeffs -> values is exact to rounding.
    """

    grid: Grid
    values: np.ndarray
    coeffs: np.ndarray

    @classmethod
    def from_values(cls, grid: Grid, values) -> "SpectralField":
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != (grid.K,):
            raise ValueError(f"expected {grid.K} samples, got shape {values.shape}")
        coeffs = np.fft.fftshift(np.fft.fft(values))
        return cls(grid, values, coeffs)

    @classmethod
    def from_coeffs(cls, grid: Grid, coeffs) -> "SpectralField":
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != (grid.K,):
            raise ValueError(f"expected {grid.K} coefficients, got shape {coeffs.shape}")
        values = np.fft.ifft(np.fft.ifftshift(coeffs))
        return cls(grid, values, coeffs)

    @classmethod
    def from_function(cls, grid: Grid, fn, t: float = 0.0) -> "SpectralField":
        return cls.from_values(grid, np.asarray(fn(grid.x, t), dtype=np.complex128))

    def l2_norm(self) -> float:
        """Physical-space quadrature of the L2 norm."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.dx))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, self.values + other.values, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, self.values - other.values, self.coeffs - other.coeffs)

    def scaled(self, factor: complex) -> "SpectralField":
        return SpectralField(self.grid, self.values * factor, self.coeffs * factor)


@dataclass(frozen=True)
class MultiplierSymbol:
    """Low-pass smoothing symbol: identity up to the cutoff N, then the
    power-law decay (N/|xi|)^(1-s).  N = inf gives the identity symbol.
    """

    N: float
    s: float

    def __post_init__(self) -> None:
        if not (self.N > 0):
            raise ValueError(f"cutoff must be positive, got N={self.N}")
        if not (0.25 < self.s < 1.0):
            raise ValueError(f"regularity must lie in (1/4, 1), got s={self.s}")


IDENTITY_SYMBOL_S = 0.5  # any admissible s; with N = inf the symbol is 1


def identity_symbol() -> MultiplierSymbol:
    return MultiplierSymbol(N=np.inf, s=IDENTITY_SYMBOL_S)


def m_symbol(xi, sym: MultiplierSymbol):
    """Evaluate the smoothing symbol m(xi) = min(1, (N/|xi|)^(1-s))."""
    xi = np.asarray(xi, dtype=np.float64)
    if np.isinf(sym.N):
        return np.ones_like(xi)
    a = np.maximum(np.abs(xi), 1e-300)
    return np.minimum(1.0, (sym.N / a) ** (1.0 - sym.s))


def l_symbol(xi, sym: MultiplierSymbol):
    """m(xi) * <xi>^(1-s); satisfies l(0) = 1 and l ~ N^(1-s) at high frequency."""
    xi = np.asarray(xi, dtype=np.float64)
    return m_symbol(xi, sym) * (1.0 + xi * xi) ** (0.5 * (1.0 - sym.s))


def i_operator(f: SpectralField, sym: MultiplierSymbol) -> SpectralField:
    """Coefficient-wise multiplication by the smoothing symbol."""
    return SpectralField.from_coeffs(f.grid, f.coeffs * m_symbol(f.grid.xi, sym))


def l_operator(f: SpectralField, sym: MultiplierSymbol) -> SpectralField:
    """Coefficient-wise multiplication by l(xi) = m(xi)<xi>^(1-s).

    The norm identity ||I f||_{H^1} = ||L f||_{H^s} holds mode by mode.
    """
    return SpectralField.from_coeffs(f.grid, f.coeffs * l_symbol(f.grid.xi, sym))


def fractional_derivative(f: SpectralField, sigma: float) -> SpectralField:
    """Multiply coefficients by |xi|^sigma; the zero mode always maps to 0."""
    if sigma < 0:
        raise ValueError(f"derivative order must be nonnegative, got {sigma}")
    xi = f.grid.xi
    weight = np.where(xi == 0.0, 0.0, np.abs(xi) ** sigma)
    return SpectralField.from_coeffs(f.grid, f.coeffs * weight)


def first_derivative(f: SpectralField) -> SpectralField:
    """Spectral d/dx with the unpaired Nyquist mode zeroed."""
    sym = 1j * f.grid.xi.copy()
    sym[0] = 0.0
    return SpectralField.from_coeffs(f.grid, f.coeffs * sym)


def sobolev_norm(f: SpectralField, sigma: float) -> float:
    """(sum <xi>^(2 sigma) |f_hat|^2 * L / K^2)^(1/2)."""
    w = (1.0 + f.grid.xi**2) ** sigma
    total = np.sum(w * np.abs(f.coeffs) ** 2) * f.grid.L / f.grid.K**2
    return float(np.sqrt(total))


def resample(f: SpectralField, M: int) -> np.ndarray:
    """Values of the trigonometric interpolant on an M-point grid (M >= K)."""
    K = f.grid.K
    if M < K:
        raise ValueError("resample target must be at least as fine as the source")
    if M == K:
        return f.values.copy()
    padded = np.zeros(M, dtype=np.complex128)
    lo = (M - K) // 2
    padded[lo : lo + K] = f.coeffs
    return np.fft.ifft(np.fft.ifftshift(padded)) * (M / K)


def power_integral(f: SpectralField, power: int) -> float:
    """Alias-free box integral of |f|^power (power even).

    The interpolant is upsampled far enough that the quadrature of the
    product is exact, so the result agrees with the hyperplane-sum route
    to rounding.
    """
    if power % 2 != 0 or power < 2:
        raise ValueError(f"power must be a positive even integer, got {power}")
    M = f.grid.K * power
    fine = resample(f, M)
    return float(np.sum(np.abs(fine) ** power) * (f.grid.L / M))


def random_field(
    grid: Grid,
    rng: np.random.Generator,
    amplitude: float = 1.0,
    decay: float = 2.0,
    band: int | None = None,
) -> SpectralField:
    """Random band-limited field with a <xi>^(-decay) spectral envelope.

    The unpaired Nyquist mode is kept at zero so the field lies in the
    active band shared by the derivative and product operators.
    """
    K = grid.K
    bound = K // 2 - 1 if band is None else min(band, K // 2 - 1)
    coeffs = np.zeros(K, dtype=np.complex128)
    k = np.arange(-bound, bound + 1)
    envelope = (1.0 + (k * grid.dxi) ** 2) ** (-decay / 2.0)
    noise = rng.standard_normal(k.size) + 1j * rng.standard_normal(k.size)
    idx = k + K // 2
    coeffs[idx] = amplitude * envelope * noise * K / np.sqrt(2.0 * k.size)
    return SpectralField.from_coeffs(grid, coeffs)
