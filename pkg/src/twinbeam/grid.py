"""Sampling grids, physical constants, and Gaussian source fields.

Everything downstream works on a single square grid: coordinates are
cell-centered, x_j = (j - n/2) dx, so index n/2 sits exactly on the
optical axis and reflection through the origin is an exact index map.
Fields follow the exp(-i omega t) convention, i.e. a beam converging
toward a focus a distance d downstream carries phase exp(ik rho^2/(2q))
with Re(1/q) < 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhysicalSetup:
    """Experiment constants: wavelengths, geometry, detection.

    Defaults describe the modeled bench: a 325 nm pump focused to
    w_pump at the detection plane 0.9 m away, degenerate 650 nm
    down-converted pairs, a 632.8 nm calibration laser focused to w0
    at the same plane, a 5 mm crystal, and a 50 um vertical slit.

    Attributes
    ----------
    lambda_pump : float
        Pump wavelength [m].
    lambda_down : float
        Down-converted (signal/idler) wavelength [m]; must equal
        2 * lambda_pump within 1% (degenerate phase matching).
    lambda_cal : float
        Calibration-laser wavelength [m].
    path_length : float
        Turbulence-cell-to-detector propagation distance L [m].
    w0 : float
        Calibration-beam waist radius at the detection plane [m].
    w_pump : float
        Pump waist radius at the detection plane [m].
    tau : float
        Crystal thickness [m].
    slit_width : float
        Detection slit width (narrow dimension, along x) [m].
    """

    lambda_pump: float = 325e-9
    lambda_down: float = 650e-9
    lambda_cal: float = 632.8e-9
    path_length: float = 0.9
    w0: float = 59e-6
    w_pump: float = 60e-6
    tau: float = 5e-3
    slit_width: float = 50e-6

    def __post_init__(self):
        for name in ("lambda_pump", "lambda_down", "lambda_cal",
                     "path_length", "w0", "w_pump", "tau", "slit_width"):
            if not getattr(self, name) > 0:
                raise GridError(f"PhysicalSetup.{name} must be positive")
        if abs(self.lambda_down - 2.0 * self.lambda_pump) > 0.01 * self.lambda_down:
            raise GridError(
                "degenerate pairs require lambda_down = 2 * lambda_pump within 1% "
                f"(got {self.lambda_down!r} vs 2 * {self.lambda_pump!r})")

    @property
    def k_pump(self) -> float:
        return TWO_PI / self.lambda_pump

    @property
    def k_down(self) -> float:
        return TWO_PI / self.lambda_down

    @property
    def k_cal(self) -> float:
        return TWO_PI / self.lambda_cal

    @property
    def beta(self) -> float:
        """Crystal kernel area tau / (4 k_pump) [m^2]."""
        return self.tau / (4.0 * self.k_pump)


@dataclass(frozen=True)
class Grid2D:
    """Square n x n sampling grid with pitch dx [m].

    Arrays indexed [iy, ix]; coordinate of index j along either axis is
    (j - n/2) * dx.
    """

    n: int
    dx: float

    def __post_init__(self):
        if self.n < 32 or (self.n & (self.n - 1)) != 0:
            raise GridError(f"grid size must be a power of two >= 32, got {self.n}")
        if not self.dx > 0:
            raise GridError(f"grid pitch must be positive, got {self.dx}")

    @property
    def extent(self) -> float:
        return self.n * self.dx

    @property
    def axis(self) -> np.ndarray:
        """1-D cell-centered coordinates, axis[n/2] == 0 exactly."""
        return (np.arange(self.n) - self.n // 2) * self.dx

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) coordinate arrays, X varying along the last index."""
        c = self.axis
        return np.meshgrid(c, c, indexing="xy")

    def rsq(self) -> np.ndarray:
        c = self.axis
        return c[None, :] ** 2 + c[:, None] ** 2

    def freq_axis(self) -> np.ndarray:
        """FFT-ordered spatial frequencies [cycles/m]."""
        return np.fft.fftfreq(self.n, self.dx)

    def fsq(self) -> np.ndarray:
        f = self.freq_axis()
        return f[None, :] ** 2 + f[:, None] ** 2


def make_grid(n: int, extent: float) -> Grid2D:
    """Build an n x n grid spanning `extent` meters per side."""
    if not extent > 0:
        raise GridError(f"grid extent must be positive, got {extent}")
    return Grid2D(n=n, dx=extent / n)


@dataclass
class ComplexField:
    """Scalar field sampled on a Grid2D at a single wavenumber.

    samples[iy, ix] is the complex amplitude at (x[ix], y[iy]).
    """

    grid: Grid2D
    k: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.k > 0:
            raise GridError(f"field wavenumber must be positive, got {self.k}")
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.shape != (self.grid.n, self.grid.n):
            raise GridError(
                f"field samples shape {self.samples.shape} does not match "
                f"grid ({self.grid.n}, {self.grid.n})")

    @property
    def wavelength(self) -> float:
        return TWO_PI / self.k

    def energy(self) -> float:
        """Discrete energy sum(|E|^2) dx^2."""
        s = self.samples
        return float(np.sum(s.real ** 2 + s.imag ** 2) * self.grid.dx ** 2)

    def intensity(self) -> np.ndarray:
        s = self.samples
        return s.real ** 2 + s.imag ** 2

    def copy(self) -> "ComplexField":
        return ComplexField(grid=self.grid, k=self.k, samples=self.samples.copy())


def rayleigh_range(k: float, waist: float) -> float:
    """z_R = k w^2 / 2."""
    return 0.5 * k * waist ** 2


def gaussian_width_from_q(q: complex, k: float) -> float:
    """1/e^2-intensity radius of exp(ik rho^2 / (2q)).

    Im(1/q) = -2/(k w^2) for a beam of radius w.
    """
    im = (1.0 / q).imag
    if im >= 0:
        raise GridError(f"q parameter {q!r} does not describe a finite beam")
    return math.sqrt(-2.0 / (k * im))


def converging_gaussian(grid: Grid2D, k: float, waist_at_target: float,
                        distance_to_target: float) -> ComplexField:
    """Gaussian beam that focuses to `waist_at_target` a distance
    `distance_to_target` downstream of the grid plane.

    Built from the complex beam parameter q(z) = q0 + z with the waist
    at z = distance_to_target, i.e. q0 = -d - i z_R. Normalized to unit
    discrete energy.

    Parameters
    ----------
    grid : Grid2D
    k : float
        Wavenumber [rad/m].
    waist_at_target : float
        1/e^2 intensity radius at the focus [m].
    distance_to_target : float
        Distance from this plane to the focus [m]; 0 places the waist
        here (flat phase).

    Raises
    ------
    GridError
        If the target waist is unresolvable (< 2 dx) or the beam at the
        source plane fills too much of the grid (radius > extent/4,
        aliasing risk on propagation).
    """
    if not waist_at_target > 0 or distance_to_target < 0:
        raise GridError("waist must be positive and distance non-negative")
    if waist_at_target < 2.0 * grid.dx:
        raise GridError(
            f"target waist {waist_at_target:g} m below 2 dx = {2 * grid.dx:g} m; "
            "refine the grid")
    z_r = rayleigh_range(k, waist_at_target)
    w_src = waist_at_target * math.sqrt(1.0 + (distance_to_target / z_r) ** 2)
    if w_src > grid.extent / 4.0:
        raise GridError(
            f"source-plane beam radius {w_src:g} m exceeds extent/4 = "
            f"{grid.extent / 4:g} m; enlarge the grid extent")
    q0 = complex(-distance_to_target, -z_r)
    samples = np.exp((0.5j * k / q0) * grid.rsq())
    out = ComplexField(grid=grid, k=k, samples=samples)
    out.samples /= math.sqrt(out.energy())
    return out


def fresnel_ratio(setup: PhysicalSetup) -> float:
    """Dimensionless far-field parameter Lambda = 2 L / (k_cal w0^2).

    Equals (L / z_R) of the calibration beam; the long-term-width
    relation's sensitivity coefficient is 0.982 * Lambda^(5/6).
    """
    return 2.0 * setup.path_length / (setup.k_cal * setup.w0 ** 2)
