"""Periodic fields on the unit torus and the pseudo-spectral operator toolbox.

The domain is the flat torus [0,1)^2 sampled on an n-by-n lattice with
spacing h = 1/n.  Axis 0 of every array is the x1 coordinate, axis 1 is x2.
Spectral coefficients follow the convention

    f(x) = sum_k  c_k  exp(2*pi*i k.x),

with integer wavevectors k laid out as in ``numpy.fft.fftfreq``.  All
derivative multipliers zero the Nyquist row/column (k_i = -n/2) so that
derivatives of real fields stay real and skew-symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

MEAN_TOL = 1e-10


class FieldError(ValueError):
    """Raised on violated field preconditions (shape, mean, divergence)."""


@dataclass(frozen=True)
class Grid:
    """Uniform n-by-n lattice on the unit torus, n even and at least 16."""

    n: int

    def __post_init__(self):
        if self.n < 16 or self.n % 2 != 0:
            raise FieldError(f"grid size must be even and >= 16, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid (X1, X2) of node coordinates, shape (n, n) each."""
        x = np.arange(self.n) * self.h
        return np.meshgrid(x, x, indexing="ij")


@lru_cache(maxsize=16)
def _wavenumbers(n: int):
    """Integer wavevector grids and derived multiplier arrays for size n.

    Returns (kz1, kz2, ksq, d1, d2): kz_i are integer wavenumbers with the
    Nyquist mode (k_i = -n/2) zeroed, d_i = 2*pi*i*kz_i, and ksq = |k|^2
    with ksq[0,0] set to 1 to allow division.
    """
    k = np.fft.fftfreq(n, d=1.0 / n)  # integers: 0, 1, ..., -n/2, ..., -1
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    ksq = k1**2 + k2**2
    ksq[0, 0] = 1.0
    kd = k.copy()
    kd[n // 2] = 0.0  # Nyquist zeroed in differentiation
    kz1, kz2 = np.meshgrid(kd, kd, indexing="ij")
    d1 = 2j * np.pi * kz1
    d2 = 2j * np.pi * kz2
    for a in (kz1, kz2, ksq, d1, d2):
        a.setflags(write=False)
    return kz1, kz2, ksq, d1, d2


@dataclass
class ScalarField:
    """Real periodic function sampled at grid nodes."""

    grid: Grid
    values: np.ndarray
    zero_mean: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n, self.grid.n):
            raise FieldError(
                f"values shape {self.values.shape} does not match grid n={self.grid.n}"
            )
        if not np.all(np.isfinite(self.values)):
            raise FieldError("field contains non-finite entries")
        if self.zero_mean and abs(self.values.mean()) > 1e-12:
            raise FieldError(f"zero-mean flag set but mean = {self.values.mean():.3e}")

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass
class VectorField:
    """Pair of scalar components (u1, u2) on a shared grid."""

    grid: Grid
    u1: np.ndarray
    u2: np.ndarray
    solenoidal: bool = False

    def __post_init__(self):
        self.u1 = np.asarray(self.u1, dtype=float)
        self.u2 = np.asarray(self.u2, dtype=float)
        for a in (self.u1, self.u2):
            if a.shape != (self.grid.n, self.grid.n):
                raise FieldError("component shape does not match grid")
        if self.solenoidal:
            d = divergence(self)
            if np.max(np.abs(d.values)) > 1e-10:
                raise FieldError("solenoidal flag set but spectral divergence exceeds 1e-10")

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u1, self.u2)


@dataclass
class SpectralField:
    """Normalized complex Fourier coefficients, fftfreq layout."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (self.grid.n, self.grid.n):
            raise FieldError("coefficient shape does not match grid")

    def hermitian_defect(self) -> float:
        """Max modulus of c(k) - conj(c(-k)); zero for real physical fields."""
        flipped = np.conj(np.roll(self.coeffs[::-1, ::-1], (1, 1), axis=(0, 1)))
        return float(np.max(np.abs(self.coeffs - flipped)))


@dataclass(frozen=True)
class TorusPoint:
    """A point of the torus with coordinates reduced mod 1."""

    x1: float
    x2: float

    def __post_init__(self):
        object.__setattr__(self, "x1", self.x1 % 1.0)
        object.__setattr__(self, "x2", self.x2 % 1.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2])


# ---------------------------------------------------------------------------
# transforms and differential operators
# ---------------------------------------------------------------------------

def to_spectral(f: ScalarField) -> SpectralField:
    """Forward transform to normalized Fourier coefficients."""
    return SpectralField(f.grid, np.fft.fft2(f.values) / f.grid.n**2)


def from_spectral(F: SpectralField) -> ScalarField:
    """Inverse transform; the imaginary residue of the ifft is dropped."""
    vals = np.fft.ifft2(F.coeffs * F.grid.n**2).real
    return ScalarField(F.grid, vals)


def dealias(f: ScalarField) -> ScalarField:
    """2/3-rule truncation: zero all modes with max(|k1|,|k2|) > n/3."""
    n = f.grid.n
    k1, k2, _, _, _ = _wavenumbers(n)
    cut = n / 3.0
    keep = (np.abs(k1) <= cut) & (np.abs(k2) <= cut)
    F = np.fft.fft2(f.values)
    F[~keep] = 0.0
    return ScalarField(f.grid, np.fft.ifft2(F).real)


def biot_savart(xi: ScalarField) -> VectorField:
    """Velocity with curl u = xi, div u = 0 and zero mean.

    Fourier multiplier -i k_perp / (2 pi |k|^2) with k_perp = (-k2, k1);
    the sign is fixed by the round-trip requirement curl(biot_savart(xi)) = xi
    for curl u = d1 u2 - d2 u1.  Input must be zero-mean.
    """
    if abs(xi.values.mean()) > MEAN_TOL:
        raise FieldError(
            f"biot_savart requires zero-mean vorticity, got mean {xi.values.mean():.3e}"
        )
    n = xi.grid.n
    k1, k2, ksq, _, _ = _wavenumbers(n)
    F = np.fft.fft2(xi.values)
    F[0, 0] = 0.0
    mult = -1j / (2.0 * np.pi * ksq)
    u1 = np.fft.ifft2(mult * (-k2) * F).real
    u2 = np.fft.ifft2(mult * k1 * F).real
    return VectorField(xi.grid, u1, u2, solenoidal=True)


def curl(u: VectorField) -> ScalarField:
    """Spectral curl d1 u2 - d2 u1."""
    _, _, _, d1, d2 = _wavenumbers(u.grid.n)
    F = d1 * np.fft.fft2(u.u2) - d2 * np.fft.fft2(u.u1)
    return ScalarField(u.grid, np.fft.ifft2(F).real)


def divergence(u: VectorField) -> ScalarField:
    """Spectral divergence d1 u1 + d2 u2."""
    _, _, _, d1, d2 = _wavenumbers(u.grid.n)
    F = d1 * np.fft.fft2(u.u1) + d2 * np.fft.fft2(u.u2)
    return ScalarField(u.grid, np.fft.ifft2(F).real)


def gradient(f: ScalarField) -> VectorField:
    """Spectral gradient (d1 f, d2 f)."""
    _, _, _, d1, d2 = _wavenumbers(f.grid.n)
    F = np.fft.fft2(f.values)
    g1 = np.fft.ifft2(d1 * F).real
    g2 = np.fft.ifft2(d2 * F).real
    return VectorField(f.grid, g1, g2)


def lp_norm(f, p) -> float:
    """L^p norm, p in {1, 2, inf}, by Riemann quadrature with weight h^2.

    Vector fields use the pointwise Euclidean magnitude.
    """
    if isinstance(f, VectorField):
        a = f.magnitude()
        h2 = f.grid.h**2
    else:
        a = np.abs(f.values)
        h2 = f.grid.h**2
    if p == 1:
        return float(np.sum(a) * h2)
    if p == 2:
        return float(np.sqrt(np.sum(a**2) * h2))
    if p in (np.inf, "inf"):
        return float(np.max(a))
    raise FieldError(f"unsupported norm order {p!r}")


def geodesic_distance(a, b) -> float:
    """Geodesic distance on the flat torus; values lie in [0, sqrt(2)/2]."""
    pa = a.as_array() if isinstance(a, TorusPoint) else np.asarray(a, dtype=float)
    pb = b.as_array() if isinstance(b, TorusPoint) else np.asarray(b, dtype=float)
    d = np.abs(pa - pb) % 1.0
    d = np.minimum(d, 1.0 - d)
    return float(np.hypot(d[0], d[1]))


def geodesic_distance_points(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized torus distance for arrays of points with shape (N, 2)."""
    d = np.abs(a - b) % 1.0
    d = np.minimum(d, 1.0 - d)
    return np.hypot(d[:, 0], d[:, 1])
