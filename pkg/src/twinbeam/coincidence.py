"""Two-photon coincidence amplitudes through thin turbulence.

Degenerate collinear pairs at wavenumber k = k_pump/2 share the pump
profile: with a thin crystal both photons leave from the same source
point, each acquiring the Fresnel chirp exp(ik|rho'-rho_i|^2 / 2L) and
a turbulence factor exp(i phi) on the way to its detector.

Detecting both photons at the same slit point rho sums the two chirps
into a single pump-wavenumber chirp and doubles the turbulence phase:
the pair behaves like the pump beam with turbulence applied twice
("direct" mode). Inverting one photon's transverse momentum at the
source and detecting at mirrored points (rho, -rho) flips the sign of
that photon's difference coordinate instead, replacing 2 phi(u) with
phi(u) + phi(-u): every odd-order aberration component cancels
identically, at any turbulence strength. Inverting only the x
component symmetrizes u_x alone, which is all a vertical slit needs.

The fast path expresses this with the parity filter from
:mod:`.turbulence`: mode selection is `even_part` (or not) followed by
exact rescaling of the phase to the pump wavenumber, after which
direct and inverted modes run through one propagation routine. A
brute-force Riemann quadrature and a finite-crystal 1-D model provide
independent checks on that collapse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import GridError
from .grid import ComplexField, Grid2D
from .propagation import kernel_convolve, split_step_through_screen
from .turbulence import (KernelAberration, PhaseScreen, Realization, even_part,
                         scale_to_wavenumber)


class CoincidenceMode(str, Enum):
    """Detection arrangement for the photon pair."""

    DIRECT = "direct"             # both photons at the same point
    INVERTED_X = "inverted_x"     # photon 2 x-inverted, detectors mirrored in x
    INVERTED_XY = "inverted_xy"   # full point inversion of photon 2

    @property
    def parity_axis(self) -> str | None:
        if self is CoincidenceMode.DIRECT:
            return None
        return "x" if self is CoincidenceMode.INVERTED_X else "both"


@dataclass(frozen=True)
class CrystalModel:
    """Phase-matching model: 'delta' (thin crystal) or 'sinc' with kernel
    area beta = tau / (4 k_pump) [m^2]."""

    kind: str
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("delta", "sinc"):
            raise ValueError(f"crystal kind must be 'delta' or 'sinc', got {self.kind!r}")
        if self.kind == "sinc" and not self.beta > 0:
            raise ValueError(f"sinc crystal needs beta > 0, got {self.beta}")

    @classmethod
    def delta(cls) -> "CrystalModel":
        return cls(kind="delta")

    @classmethod
    def from_thickness(cls, tau: float, k_pump: float) -> "CrystalModel":
        return cls(kind="sinc", beta=tau / (4.0 * k_pump))


def _check_pair_wavenumber(pump_k: float, k_ref: float) -> None:
    if abs(k_ref - 0.5 * pump_k) > 0.01 * 0.5 * pump_k:
        raise GridError(
            f"turbulence drawn at k = {k_ref:g} but degenerate pairs need "
            f"k_pump/2 = {0.5 * pump_k:g} within 1%")


def coincidence_fast(pump: ComplexField, turbulence: Realization,
                     mode: CoincidenceMode, total_distance: float) -> ComplexField:
    """Coincidence amplitude on the detector grid, thin-crystal limit.

    The turbulence realization must be drawn at the down-converted
    wavenumber (k_pump/2 within 1%). Mode handling is exact parity
    algebra: inverted modes replace the phase by its even part, then
    the rescale to k_pump doubles it, yielding 2 phi(u) (direct) or
    phi(u) + phi(-u) (inverted) in one code path. Kernels propagate by
    convolution, screens by split-step.
    """
    mode = CoincidenceMode(mode)
    if turbulence.grid != pump.grid:
        raise GridError("turbulence and pump must share one grid")
    _check_pair_wavenumber(pump.k, turbulence.k_ref)
    axis = mode.parity_axis
    eff = turbulence if axis is None else even_part(turbulence, axis)
    if isinstance(eff, KernelAberration):
        eff = scale_to_wavenumber(eff, pump.k)
        return kernel_convolve(pump, eff, total_distance)
    # split-step rescales the screen phase to the field wavenumber itself
    return split_step_through_screen(pump, eff, total_distance)


def coincidence_quadrature(pump: ComplexField, kernel: KernelAberration,
                           mode: CoincidenceMode, total_distance: float,
                           detector_points: Sequence[tuple[float, float]]) -> np.ndarray:
    """Direct Riemann summation of the coincidence integral (oracle).

    Evaluates sum_j E_p(rho_j) exp(i k_p |rho_j - rho|^2 / 2L + i Psi)
    dx^2 k_p/(2 pi i L) at each requested detector point, with Psi the
    mode's turbulence phase built sample-by-sample from the kernel
    array (no FFTs, no circular wraparound; source samples whose
    difference coordinate falls off the kernel grid are omitted, which
    the source's edge-decay precondition makes negligible).

    Detector points must lie on grid nodes within the central quarter
    (|x|, |y| <= extent/4). Intended for small grids; refuses n > 256.
    """
    mode = CoincidenceMode(mode)
    if not isinstance(kernel, KernelAberration):
        raise TypeError("quadrature oracle handles difference kernels only")
    if kernel.grid != pump.grid:
        raise GridError("kernel and pump must share one grid")
    grid = pump.grid
    if grid.n > 256:
        raise GridError(f"quadrature oracle limited to n <= 256, got n = {grid.n}")
    if not total_distance > 0:
        raise GridError("propagation distance must be positive")
    _check_pair_wavenumber(pump.k, kernel.k_ref)
    ratio = pump.k / kernel.k_ref

    n = grid.n
    c = n // 2
    x = grid.axis
    phi = kernel.phase
    prefactor = pump.k / (2.0j * math.pi * total_distance) * grid.dx ** 2
    half_chirp = 0.5 * pump.k / total_distance

    out = np.empty(len(detector_points), dtype=np.complex128)
    for p, (px, py) in enumerate(detector_points):
        ix = int(round(px / grid.dx)) + c
        iy = int(round(py / grid.dx)) + c
        if not (0 <= ix < n and 0 <= iy < n) or \
                abs(x[ix] - px) > 1e-6 * grid.dx or abs(x[iy] - py) > 1e-6 * grid.dx:
            raise GridError(f"detector point {(px, py)} is not a grid node")
        if abs(x[ix]) > grid.extent / 4 or abs(x[iy]) > grid.extent / 4:
            raise GridError(f"detector point {(px, py)} outside the central quarter")

        ux_idx = np.arange(n) - ix + c          # index of u_x = x_j - px
        uy_idx = np.arange(n) - iy + c
        vx = ux_idx[(ux_idx >= 0) & (ux_idx < n)]
        vy = uy_idx[(uy_idx >= 0) & (uy_idx < n)]
        jx = vx + ix - c                        # valid source columns
        jy = vy + iy - c
        phi_win = phi[np.ix_(vy, vx)]
        if mode is CoincidenceMode.DIRECT:
            psi = ratio * phi_win
        else:
            rx = (n - vx) % n
            ry = (n - vy) % n if mode is CoincidenceMode.INVERTED_XY else vy
            psi = 0.5 * ratio * (phi_win + phi[np.ix_(ry, rx)])
        du2 = (x[jx] - px)[None, :] ** 2 + (x[jy] - py)[:, None] ** 2
        integrand = pump.samples[np.ix_(jy, jx)] * np.exp(1j * (half_chirp * du2 + psi))
        out[p] = integrand.sum()
    return out * prefactor


# ---------------------------------------------------------------------------
# 1-D finite-crystal model


@dataclass
class Field1D:
    """One-dimensional complex field, cell-centered like Grid2D."""

    n: int
    dx: float
    k: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (self.n >= 32 and self.dx > 0 and self.k > 0):
            raise GridError("Field1D needs n >= 32, dx > 0, k > 0")
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.shape != (self.n,):
            raise GridError(f"samples shape {self.samples.shape} != ({self.n},)")

    @property
    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dx


def gaussian_1d(n: int, dx: float, k: float, waist_at_target: float,
                distance_to_target: float) -> Field1D:
    """1-D analogue of :func:`twinbeam.grid.converging_gaussian`."""
    if waist_at_target < 2.0 * dx:
        raise GridError("target waist below 2 dx")
    z_r = 0.5 * k * waist_at_target ** 2
    q0 = complex(-distance_to_target, -z_r)
    xs = (np.arange(n) - n // 2) * dx
    samples = np.exp((0.5j * k / q0) * xs ** 2)
    norm = math.sqrt(float(np.sum(np.abs(samples) ** 2) * dx))
    return Field1D(n=n, dx=dx, k=k, samples=samples / norm)


PhaseFn = Callable[[np.ndarray], np.ndarray]


def _mode_phases(phase_fn: PhaseFn | None, u1: np.ndarray, u2: np.ndarray,
                 mode: CoincidenceMode) -> tuple[np.ndarray, np.ndarray]:
    """Per-photon turbulence phases for 1-D detection geometry."""
    if phase_fn is None:
        zero = np.zeros_like(u1)
        return zero, zero
    first = phase_fn(u1)
    second = phase_fn(-u2) if mode is not CoincidenceMode.DIRECT else phase_fn(u2)
    return first, second


def crystal_kernel_1d(beta: float, dx: float, n_lags: int) -> np.ndarray:
    """Cell-averaged Fourier transform of sinc(beta q^2) on lag grid.

    Returns S_bar[j] for v = (j - (n_lags-1)) * dx, j = 0..2*n_lags-2,
    where S_bar(v) = (1/dx) * integral of S over the width-dx cell at v
    and S(v) = (1/2pi) int sinc(beta q^2) e^(iqv) dq. Cell-averaging
    band-limits the kernel so that sum_j S_bar[j] dx = 1 for any beta
    and the beta -> 0 limit collapses exactly onto a one-cell spike of
    height 1/dx: the thin-crystal limit of the double sum reproduces
    the delta quadrature term by term.

    Computed by sampling G(q) = sinc(beta q^2) * sinc(q dx / 2) on a
    fine q grid and folding into one DFT period; the 1/q^3 decay of G
    bounds the truncation error at <= 1e-4 of the kernel peak.
    """
    if not (beta > 0 and dx > 0 and n_lags >= 2):
        raise ValueError("crystal_kernel_1d needs beta > 0, dx > 0, n_lags >= 2")
    n_period = 4 * n_lags
    dq = 2.0 * math.pi / (n_period * dx)
    q_tail = 100.0 / math.sqrt(beta)           # 1/(beta dx q^2) <= 1e-4/dx
    q_box = 40.0 * math.pi / dx                # past 20 box-sinc zeros
    m_max = int(math.ceil(max(q_tail, q_box) / dq))
    q = dq * np.arange(m_max + 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.sinc(beta * q * q / math.pi) * np.sinc(q * dx / (2.0 * math.pi))
    g[0] = 1.0
    folded = np.zeros(n_period)
    np.add.at(folded, np.arange(m_max + 1) % n_period, g)
    spectrum = np.fft.ifft(folded) * n_period
    line = (dq / (2.0 * math.pi)) * (2.0 * spectrum.real - g[0])
    j = np.arange(-(n_lags - 1), n_lags)
    return line[j % n_period]


def spdc_sinc_amplitude(pump: Field1D, crystal: CrystalModel,
                        phase_fn: PhaseFn | None, mode: CoincidenceMode,
                        total_distance: float,
                        detector_x: np.ndarray) -> np.ndarray:
    """Finite-crystal 1-D coincidence amplitude at mirrored detectors.

    Evaluates the double source integral

        sum_ij E_p((x_i+x_j)/2) S(x_i-x_j)
               exp[ik((x_i-rho)^2 + (x_j-rho)^2) / 2L]
               exp[i(phi(x_i-rho) + phi(+/-(x_j-rho)))] dx^2 k/(2 pi i L)

    with k = k_pump/2, sign '+' for direct detection at (rho, rho) and
    '-' for inverted detection at (rho, -rho) (x-only inversion is
    identical in one dimension). E_p at half-grid points comes from
    exact band-limited 2x upsampling; S is the cell-averaged crystal
    kernel (:func:`crystal_kernel_1d`), or the exact one-cell spike for
    a delta crystal. phase_fn is the difference-coordinate turbulence
    phase [rad at k], a vectorized callable (None for vacuum).

    The sum factorizes as A^T M B with M[i,j] = E_half[i+j] S[i-j], so
    the per-detector cost is one matrix-vector product.
    """
    mode = CoincidenceMode(mode)
    if not total_distance > 0:
        raise GridError("propagation distance must be positive")
    n, dx = pump.n, pump.dx
    if crystal.kind == "sinc":
        width = math.sqrt(crystal.beta)
        if width < 0.05 * dx:
            # even the cell average degenerates to the delta limit here
            crystal = CrystalModel.delta()
    if crystal.kind == "sinc":
        s_line = crystal_kernel_1d(crystal.beta, dx, n)
    else:
        s_line = np.zeros(2 * n - 1)
        s_line[n - 1] = 1.0 / dx

    spec = np.fft.fft(pump.samples)
    fine = np.zeros(2 * n, dtype=np.complex128)
    h = n // 2
    fine[:h] = spec[:h]
    fine[h] = 0.5 * spec[h]
    fine[2 * n - h] = 0.5 * spec[h]
    fine[2 * n - h + 1:] = spec[h + 1:]
    e_half = np.fft.ifft(fine) * 2.0
    e_half = e_half[:2 * n - 1]

    idx = np.arange(n)
    m = e_half[idx[:, None] + idx[None, :]] * s_line[idx[:, None] - idx[None, :] + n - 1]

    k = 0.5 * pump.k
    xs = pump.axis
    detector_x = np.asarray(detector_x, dtype=float)
    out = np.empty(detector_x.shape, dtype=np.complex128)
    half_chirp = 0.5 * k / total_distance
    for p, rho in enumerate(detector_x.ravel()):
        u = xs - rho
        t1, t2 = _mode_phases(phase_fn, u, u, mode)
        a = np.exp(1j * (half_chirp * u * u + t1))
        b = np.exp(1j * (half_chirp * u * u + t2))
        out.ravel()[p] = a @ (m @ b)
    prefactor = k / (2.0j * math.pi * total_distance) * dx * dx
    return out * prefactor


def coincidence_delta_1d(pump: Field1D, phase_fn: PhaseFn | None,
                         mode: CoincidenceMode, total_distance: float,
                         detector_x: np.ndarray) -> np.ndarray:
    """Thin-crystal 1-D coincidence amplitude (single-sum quadrature).

    The exact beta -> 0 limit of :func:`spdc_sinc_amplitude`:
    sum_i E_p(x_i) exp[ik_p (x_i-rho)^2 / 2L + i(phi(u) + phi(+/-u))]
    dx k/(2 pi i L), with the same prefactor convention so the two can
    be compared without renormalization.
    """
    mode = CoincidenceMode(mode)
    if not total_distance > 0:
        raise GridError("propagation distance must be positive")
    k = 0.5 * pump.k
    xs = pump.axis
    detector_x = np.asarray(detector_x, dtype=float)
    out = np.empty(detector_x.shape, dtype=np.complex128)
    half_chirp = 0.5 * pump.k / total_distance   # two photon chirps collapse
    for p, rho in enumerate(detector_x.ravel()):
        u = xs - rho
        t1, t2 = _mode_phases(phase_fn, u, u, mode)
        out.ravel()[p] = np.sum(
            pump.samples * np.exp(1j * (half_chirp * u * u + t1 + t2)))
    prefactor = k / (2.0j * math.pi * total_distance) * pump.dx
    return out * prefactor
