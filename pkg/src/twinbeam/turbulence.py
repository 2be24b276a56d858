"""Thin-turbulence realizations: difference kernels and phase screens.

Two representations cover every model in the package:

* ``KernelAberration`` holds a phase ``phi(u)`` of the *difference*
  coordinate u = rho' - rho. Propagation through it is a convolution,
  so it describes aberrations that act uniformly across the aperture
  (wavefront tilt, low-order polynomials).
* ``PhaseScreen`` holds a phase ``phi(xi)`` of the *transverse*
  coordinate at a fixed plane along the path. It describes localized
  turbulence (the Kolmogorov chamber model) and is applied by
  split-step propagation.

Both carry the wavenumber ``k_ref`` their phase was drawn at; phase is
proportional to wavenumber for a fixed refractive-index perturbation,
so rescaling to another color is an exact multiplication
(``scale_to_wavenumber``).

Phase normalization is a contract of the sampling functions, not of
the dataclasses: tilt/polynomial kernels are exactly zero at u = 0 by
construction and Kolmogorov screens have their grid mean removed.
Keeping the constructors free of silent renormalization makes
``scale_to_wavenumber`` and ``even_part`` exact, bit-reproducible
array arithmetic.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
import scipy.fft as sfft

from .errors import GridError
from .grid import Grid2D

# Kolmogorov phase PSD in cyclic-frequency units [rad^2 m^2]:
# Phi(f) = KOLMOGOROV_PSD_COEFF * r0^(-5/3) * f^(-11/3).
# Equivalent to 0.49 r0^(-5/3) kappa^(-11/3) in angular frequency and
# consistent with the structure function 6.88 (r/r0)^(5/3).
KOLMOGOROV_PSD_COEFF = 0.023
STRUCTURE_FUNCTION_COEFF = 6.88

# Spectral weights for the frequency cells nearest DC, where f^(-11/3)
# varies too steeply for point sampling. A single coefficient per cell
# cannot reproduce both the cell's variance and its structure-function
# contribution; these match the latter, the statistic the screens are
# validated against: for lags r << 1/f the contribution goes as
# f^2 Phi(f), so each weight is the integral of (x^2+y^2)^(-5/6) over a
# unit cell centered at (1,0) resp. (1,1) (high-precision quadrature),
# in units of the point value at (1,0). Point sampling (1.0 and
# 2^(-11/6) = 0.2806) leaves D(r) 7-22% low over the usable lag range;
# variance-matched weights overshoot it by 3-9%.
_CELL_WEIGHT_EDGE = 1.115676572620876
_CELL_WEIGHT_CORNER = 0.6012164625372589


@dataclass
class KernelAberration:
    """Aperture-uniform aberration phase phi(u) on the difference grid.

    phase[iy, ix] is phi at u = (x[ix], y[iy]); phi(0) == 0 for
    sampler-produced kernels (piston carries no physics here).
    """

    grid: Grid2D
    k_ref: float
    phase: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.k_ref > 0:
            raise GridError(f"kernel k_ref must be positive, got {self.k_ref}")
        self.phase = np.asarray(self.phase, dtype=np.float64)
        if self.phase.shape != (self.grid.n, self.grid.n):
            raise GridError(
                f"kernel phase shape {self.phase.shape} does not match grid "
                f"({self.grid.n}, {self.grid.n})")


@dataclass
class PhaseScreen:
    """Thin-screen turbulence phase at one plane along the path.

    z_screen is the screen's distance from the source plane; None means
    "midpoint of whatever path this screen is used on".
    """

    grid: Grid2D
    k_ref: float
    phase: np.ndarray = field(repr=False)
    z_screen: float | None = None

    def __post_init__(self):
        if not self.k_ref > 0:
            raise GridError(f"screen k_ref must be positive, got {self.k_ref}")
        if self.z_screen is not None and not self.z_screen > 0:
            raise GridError(f"screen position must be positive, got {self.z_screen}")
        self.phase = np.asarray(self.phase, dtype=np.float64)
        if self.phase.shape != (self.grid.n, self.grid.n):
            raise GridError(
                f"screen phase shape {self.phase.shape} does not match grid "
                f"({self.grid.n}, {self.grid.n})")


Realization = Union[KernelAberration, PhaseScreen]


def scale_to_wavenumber(obj: Realization, k_new: float) -> Realization:
    """Re-express a realization at another wavenumber.

    Phase from a fixed index perturbation is linear in k, so this is
    exactly ``phase * (k_new / k_ref)``; scaling k -> 2k doubles every
    sample bit-exactly.
    """
    if not k_new > 0:
        raise GridError(f"target wavenumber must be positive, got {k_new}")
    ratio = k_new / obj.k_ref
    return replace(obj, k_ref=k_new, phase=obj.phase * ratio)


def _reflected(phase: np.ndarray, axis: str) -> np.ndarray:
    # Index map i -> (n - i) mod n realizes u -> -u exactly on the
    # cell-centered grid (index n/2 is the origin; index 0 self-maps).
    if axis in ("x", "both"):
        phase = np.roll(phase[:, ::-1], 1, axis=1)
    if axis in ("y", "both"):
        phase = np.roll(phase[::-1, :], 1, axis=0)
    return phase


def even_part(obj: Realization, axis: str = "both") -> Realization:
    """Project a realization's phase onto its even component.

    axis='x' symmetrizes u_x -> -u_x only (a vertical-slit experiment
    inverting the horizontal coordinate), 'y' the converse, 'both' full
    point reflection through u = 0. Idempotent to the bit: applying
    even_part twice returns the same array as applying it once.
    """
    if axis not in ("x", "y", "both"):
        raise ValueError(f"axis must be 'x', 'y', or 'both', got {axis!r}")
    sym = 0.5 * (obj.phase + _reflected(obj.phase, axis))
    return replace(obj, phase=sym)


def odd_part(obj: Realization, axis: str = "both") -> Realization:
    """Complement of :func:`even_part` (phase minus its even component)."""
    if axis not in ("x", "y", "both"):
        raise ValueError(f"axis must be 'x', 'y', or 'both', got {axis!r}")
    anti = 0.5 * (obj.phase - _reflected(obj.phase, axis))
    return replace(obj, phase=anti)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_tilt_kernel(grid: Grid2D, sigma_theta: float, k: float,
                       seed, axis: str = "both") -> KernelAberration:
    """Random wavefront tilt, phi(u) = k (theta_x u_x + theta_y u_y).

    theta_x, theta_y ~ N(0, sigma_theta^2) are the tilt angles; pushed
    through the focusing geometry this displaces the zero-turbulence
    detector image rigidly by L*theta, i.e. sigma_theta is the rms
    deflection angle per axis. axis='x' (or 'y') restricts the tilt to
    one axis; both angles are drawn either way, so a given seed maps to
    the same (theta_x, theta_y) pair under every axis choice.
    """
    if sigma_theta < 0:
        raise ValueError(f"sigma_theta must be non-negative, got {sigma_theta}")
    if axis not in ("x", "y", "both"):
        raise ValueError(f"axis must be 'x', 'y', or 'both', got {axis!r}")
    rng = _as_rng(seed)
    theta = rng.normal(0.0, sigma_theta, size=2) if sigma_theta > 0 else np.zeros(2)
    x = grid.axis
    phase = np.zeros((grid.n, grid.n))
    if axis in ("x", "both"):
        phase = phase + k * theta[0] * x[None, :]
    if axis in ("y", "both"):
        phase = phase + k * theta[1] * x[:, None]
    return KernelAberration(grid=grid, k_ref=k, phase=phase)


def sample_polynomial_kernel(grid: Grid2D, coeffs: Sequence[float], u_scale: float,
                             k: float, seed, axis: str = "x") -> KernelAberration:
    """Random polynomial aberration of the difference coordinate.

    phi(u) = sum_n a_n (u_x / u_scale)^n for n = 1..len(coeffs), with
    a_n ~ N(0, coeffs[n-1]^2) [rad]. axis='y' builds the same in u_y,
    'both' draws independent coefficient sets for x then y. The
    constant (n = 0) term is excluded: a global piston is unobservable.
    """
    if axis not in ("x", "y", "both"):
        raise ValueError(f"axis must be 'x', 'y', or 'both', got {axis!r}")
    if not u_scale > 0:
        raise ValueError(f"u_scale must be positive, got {u_scale}")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 1 or coeffs.size == 0:
        raise ValueError("coeffs must be a non-empty 1-D sequence")
    rng = _as_rng(seed)
    orders = np.arange(1, coeffs.size + 1)
    x = grid.axis / u_scale
    powers = x[None, :] ** orders[:, None]          # (m, n)
    phase = np.zeros((grid.n, grid.n))
    for ax in ("x", "y"):
        if axis not in (ax, "both"):
            continue
        a = rng.normal(0.0, np.abs(coeffs))
        profile = powers.T @ a                       # (n,)
        phase = phase + (profile[None, :] if ax == "x" else profile[:, None])
    return KernelAberration(grid=grid, k_ref=k, phase=phase)


def make_kolmogorov_screen(grid: Grid2D, r0: float, k: float, seed,
                           subharmonic_levels: int = 3,
                           z_screen: float | None = None) -> PhaseScreen:
    """Kolmogorov phase screen by FFT spectral synthesis.

    Draws complex circular-Gaussian spectral coefficients with variance
    Phi(f) df^2, Phi(f) = 0.023 r0^(-5/3) f^(-11/3), and inverse
    transforms; r0 is Fried's coherence length at wavenumber k. The
    DC cell cannot be represented on the FFT grid, so the low-frequency
    content (which dominates a -11/3 spectrum and carries beam wander)
    is restored by `subharmonic_levels` nested 3x3 coefficient grids at
    spacing df/3^p. Each level zeroes its own center cell, which the
    next level refines, so no frequency cell is double-counted; the
    residual unsampled cell at df/(2*3^levels) holds only piston. The
    grid mean is removed from the result.

    Parameters
    ----------
    grid : Grid2D
    r0 : float
        Fried parameter [m] at wavenumber k; may be ``inf`` for an
        exactly zero screen. Must exceed 2 dx to be resolvable. Grid
        extents below ~10 r0 under-sample the inertial range near r0;
        that bias is absorbed by operating the chamber calibration and
        the channels on the same grid.
    k : float
        Wavenumber [rad/m] the phase is expressed at.
    seed : int | numpy.random.Generator
    subharmonic_levels : int
        Nested low-frequency refinement levels (0 disables).
    z_screen : float, optional
        Screen plane position for split-step use.
    """
    if not r0 > 2.0 * grid.dx:
        raise GridError(
            f"r0 = {r0:g} m must exceed 2 dx = {2 * grid.dx:g} m")
    if subharmonic_levels < 0:
        raise ValueError("subharmonic_levels must be >= 0")
    rng = _as_rng(seed)
    n = grid.n
    df = 1.0 / grid.extent
    strength = r0 ** (-5.0 / 3.0)   # inf -> 0.0 exactly

    with np.errstate(divide="ignore"):
        psd = KOLMOGOROV_PSD_COEFF * strength * grid.fsq() ** (-11.0 / 6.0)
    psd[0, 0] = 0.0
    # Cell-averaged weights for the eight cells around DC (see
    # _CELL_WEIGHT_*); further out, point sampling is accurate.
    scale_near = KOLMOGOROV_PSD_COEFF * strength * df ** (-11.0 / 3.0)
    for i, j, w in ((0, 1, _CELL_WEIGHT_EDGE), (0, n - 1, _CELL_WEIGHT_EDGE),
                    (1, 0, _CELL_WEIGHT_EDGE), (n - 1, 0, _CELL_WEIGHT_EDGE),
                    (1, 1, _CELL_WEIGHT_CORNER), (1, n - 1, _CELL_WEIGHT_CORNER),
                    (n - 1, 1, _CELL_WEIGHT_CORNER),
                    (n - 1, n - 1, _CELL_WEIGHT_CORNER)):
        psd[i, j] = scale_near * w
    draw = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    coeffs = draw * (np.sqrt(psd) * df)
    # ifft2 carries 1/n^2; undo it so screen = Re sum_f c_f e^(2 pi i f.x)
    screen = np.asarray(sfft.ifft2(coeffs).real) * n * n

    if subharmonic_levels > 0:
        x = grid.axis
        offsets = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)]
        for p in range(1, subharmonic_levels + 1):
            dfp = df / 3.0 ** p
            scale_p = KOLMOGOROV_PSD_COEFF * strength * dfp ** (-5.0 / 3.0)
            draws = rng.standard_normal((9, 2))
            cmat = np.zeros((3, 3), dtype=complex)     # [b+1, a+1]
            for (a, b), (re, im) in zip(offsets, draws):
                if a == 0 and b == 0:
                    continue
                w = _CELL_WEIGHT_CORNER if a and b else _CELL_WEIGHT_EDGE
                cmat[b + 1, a + 1] = complex(re, im) * math.sqrt(scale_p * w)
            # screen(x,y) += Re sum_ab c_ab e^(2 pi i dfp (a x + b y)):
            # rank-3 outer-product update, evaluated as two small gemms.
            waves = np.exp((2j * math.pi * dfp) * np.outer([-1.0, 0.0, 1.0], x))
            screen += (waves.T @ cmat @ waves).real

    screen -= screen.mean()
    return PhaseScreen(grid=grid, k_ref=k, phase=screen, z_screen=z_screen)


def screen_checksum(obj: Realization) -> str:
    """Stable content hash of a realization's phase (reproducibility audits)."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(obj.phase).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Structure-function estimation


@dataclass
class StructureFunctionTable:
    """Isotropically binned phase structure function of an ensemble."""

    r: np.ndarray          # separation bin centers [m]
    d_phi: np.ndarray      # ensemble-mean D(r) [rad^2]
    stderr: np.ndarray     # standard error of the ensemble mean
    n_screens: int


def estimate_structure_function(screens: Sequence[PhaseScreen],
                                r_max: float | None = None) -> StructureFunctionTable:
    """Estimate D(r) = <(phi(x+r) - phi(x))^2> from a screen ensemble.

    Uses zero-padded FFT correlations of phi, phi^2, and the support
    mask, so every valid sample pair at every lag contributes with no
    periodic wraparound. Lags are binned by |r| rounded to the nearest
    grid pitch; statistics (mean, standard error) are taken across
    screens of the per-screen binned estimates.

    Requires at least 50 screens on a common grid; r_max defaults to
    extent/8 (estimator variance grows and ensemble piston removal
    biases D at larger separations).
    """
    if len(screens) < 50:
        raise ValueError(f"need at least 50 screens, got {len(screens)}")
    grid = screens[0].grid
    if any(s.grid != grid for s in screens):
        raise GridError("all screens must share one grid")
    n, dx = grid.n, grid.dx
    if r_max is None:
        r_max = grid.extent / 8.0
    r_px = int(math.floor(r_max / dx))
    if r_px < 1:
        raise ValueError(f"r_max = {r_max:g} m is below one grid pitch")
    r_px = min(r_px, n - 1)

    m = sfft.next_fast_len(n + r_px + 1)
    mask = np.zeros((m, m))
    mask[:n, :n] = 1.0
    f_mask = sfft.rfft2(mask)
    counts = sfft.irfft2(f_mask * np.conj(f_mask), s=(m, m))

    offs = np.arange(-r_px, r_px + 1)
    win = np.ix_(offs % m, offs % m)
    counts_win = np.maximum(counts[win], 1.0)
    radius_px = np.hypot(offs[:, None], offs[None, :])
    bin_idx = np.rint(radius_px).astype(int)
    bin_idx[bin_idx > r_px] = 0          # discard lags beyond r_max
    bin_idx[r_px, r_px] = 0              # discard zero lag
    flat_bins = bin_idx.ravel()
    n_bins = r_px + 1
    per_bin_n = np.bincount(flat_bins, minlength=n_bins)[1:]

    valid = per_bin_n > 0
    rows = np.empty((len(screens), int(valid.sum())))
    buf = np.zeros((m, m))
    for i, s in enumerate(screens):
        phi = s.phase
        buf[:n, :n] = phi
        f_phi = sfft.rfft2(buf)
        auto = sfft.irfft2(f_phi * np.conj(f_phi), s=(m, m))
        buf[:n, :n] = phi * phi
        f_sq = sfft.rfft2(buf)
        cross = sfft.irfft2(f_sq * np.conj(f_mask), s=(m, m))
        cw = cross[win]
        d_lag = (cw + cw[::-1, ::-1] - 2.0 * auto[win]) / counts_win
        sums = np.bincount(flat_bins, weights=d_lag.ravel(), minlength=n_bins)[1:]
        rows[i] = (sums[valid] / per_bin_n[valid])
        buf[:n, :n] = 0.0

    mean = rows.mean(axis=0)
    stderr = rows.std(axis=0, ddof=1) / math.sqrt(len(screens))
    r = np.arange(1, n_bins)[valid] * dx
    return StructureFunctionTable(r=r, d_phi=mean, stderr=stderr,
                                  n_screens=len(screens))


def kolmogorov_structure_function(r, r0: float):
    """Theoretical D(r) = 6.88 (r/r0)^(5/3)."""
    return STRUCTURE_FUNCTION_COEFF * (np.asarray(r) / r0) ** (5.0 / 3.0)


def fit_loglog_slope(r: np.ndarray, d: np.ndarray,
                     r_min: float, r_max: float) -> tuple[float, float]:
    """Power-law fit d ~ C r^slope over [r_min, r_max]; returns (slope, log C)."""
    r = np.asarray(r, dtype=float)
    d = np.asarray(d, dtype=float)
    sel = (r >= r_min) & (r <= r_max) & (d > 0)
    if sel.sum() < 2:
        raise ValueError("fewer than two usable points in the fit range")
    slope, intercept = np.polyfit(np.log(r[sel]), np.log(d[sel]), 1)
    return float(slope), float(intercept)


# ---------------------------------------------------------------------------
# Strength-parameterized model families (pipeline glue)


def r0_from_strength(strength: float) -> float:
    """Invert strength := r0^(-5/3); strength 0 -> r0 = inf."""
    if strength < 0:
        raise ValueError(f"strength must be non-negative, got {strength}")
    if strength == 0:
        return math.inf
    return strength ** (-0.6)


def strength_from_r0(r0: float) -> float:
    if not r0 > 0:
        raise ValueError(f"r0 must be positive, got {r0}")
    return r0 ** (-5.0 / 3.0)


@dataclass(frozen=True)
class TiltModel:
    """Pure random-tilt turbulence; strength = rms deflection angle [rad].

    axis='x' models a chamber that only deflects horizontally (the
    aberration a horizontal-inversion channel cancels exactly);
    'both' draws independent tilts per axis.
    """

    axis: str = "both"
    representation = "kernel"
    name = "tilt"

    def realize(self, grid: Grid2D, strength: float, k: float, seed) -> KernelAberration:
        if strength == 0:
            return KernelAberration(grid=grid, k_ref=k,
                                    phase=np.zeros((grid.n, grid.n)))
        return sample_tilt_kernel(grid, strength, k, seed, axis=self.axis)


@dataclass(frozen=True)
class KolmogorovModel:
    """Kolmogorov screen turbulence; strength = r0^(-5/3) at the drawn k."""

    subharmonic_levels: int = 3
    z_screen: float | None = None
    representation = "screen"
    name = "kolmogorov"

    def realize(self, grid: Grid2D, strength: float, k: float, seed) -> PhaseScreen:
        if strength == 0:
            return PhaseScreen(grid=grid, k_ref=k,
                               phase=np.zeros((grid.n, grid.n)),
                               z_screen=self.z_screen)
        return make_kolmogorov_screen(grid, r0_from_strength(strength), k, seed,
                                      subharmonic_levels=self.subharmonic_levels,
                                      z_screen=self.z_screen)


@dataclass(frozen=True)
class PolynomialModel:
    """Polynomial difference-kernel turbulence.

    strength multiplies the base rms coefficient vector, so the ladder
    scales all orders together.
    """

    coeffs: tuple[float, ...]
    u_scale: float
    axis: str = "x"
    representation = "kernel"
    name = "polynomial"

    def realize(self, grid: Grid2D, strength: float, k: float, seed) -> KernelAberration:
        if strength == 0:
            return KernelAberration(grid=grid, k_ref=k,
                                    phase=np.zeros((grid.n, grid.n)))
        scaled = tuple(strength * c for c in self.coeffs)
        return sample_polynomial_kernel(grid, scaled, self.u_scale, k, seed,
                                        axis=self.axis)


TurbulenceModel = Union[TiltModel, KolmogorovModel, PolynomialModel]
