"""Virtual slit-and-chamber experiment.

The measurement chain mirrors a bench experiment: a focused beam (or a
photon-pair amplitude) crosses a turbulence chamber, a vertical slit at
the focal plane collects the transmitted flux, and turbulence strength
is swept to record transmission-vs-strength curves.  Calibration maps
the chamber's raw strength knob to the Rytov-like variance sigma_R^2
through long-term beam widening; channel sensitivity is summarized by
the single parameter alpha of an erf transmission model.

Three channels share each chamber realization:

* ``laser_calibration``: classical beam at the calibration wavelength.
* ``coincidence_direct``: photon-pair amplitude, both photons detected
  on the same side (turbulence phase enters doubled).
* ``coincidence_inverted_x``: pair amplitude with one photon's
  horizontal coordinate inverted, which cancels the odd-in-x part of
  the turbulence phase.

All channels are read out by the same slit-flux estimator and
normalized to their own zero-turbulence flux through the identical
code path, so a zero-strength sample gives a ratio of exactly 1.0.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import least_squares, minimize_scalar
from scipy.special import erf

from .coincidence import CoincidenceMode, coincidence_fast
from .errors import CalibrationError, FitError, GridError
from .grid import ComplexField, Grid2D, PhysicalSetup, converging_gaussian
from .propagation import kernel_convolve, split_step_through_screen
from .turbulence import (KernelAberration, PhaseScreen, Realization,
                         TurbulenceModel, scale_to_wavenumber)

CHANNELS = ("laser_calibration", "coincidence_direct", "coincidence_inverted_x")

# Widening coefficients: long-term width model
# w_lt^2 = w0^2 (1 + coef * Lambda^(5/6) * sigma_R^2), Lambda = 2L/(k w0^2).
TURBULENCE_COEFFICIENTS: Mapping[str, float] = {
    "chamber": 0.982,
    "open_atmosphere": 1.33,
}

# Seed-domain tags keep calibration draws and channel-sweep draws from
# ever colliding for one master seed.
_SEED_DOMAIN_CALIBRATE = 1
_SEED_DOMAIN_SWEEP = 2


@dataclass(frozen=True)
class CalibrationRow:
    """One chamber set point: strength knob, measured long-term width,
    and the sigma_R^2 it implies."""

    strength: float
    w_lt: float
    sigma_R2: float


@dataclass(frozen=True)
class DataPoint:
    """Normalized slit transmission at one turbulence set point."""

    sigma_R2: float
    mean: float
    std_error: float
    n_samples: int

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError(
                f"a data point needs n_samples >= 2, got {self.n_samples}")
        if self.std_error < 0:
            raise ValueError(f"std_error must be >= 0, got {self.std_error}")


@dataclass(frozen=True)
class FitResult:
    """Turbulence-sensitivity fit y = erf(a/w_lt(alpha)) / erf(a/w0)."""

    alpha: float
    ci: float               # one-sigma half width from chi^2 curvature
    residual_rms: float
    n_points: int

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


def slit_flux_of_intensity(intensity: np.ndarray, grid: Grid2D,
                           slit_width: float) -> float:
    """Flux of an intensity map through a vertical slit |x| <= slit_width/2.

    All y is collected; across x the column profile P(x) = sum_y I dx
    is integrated over the slit window through a cubic-spline
    reconstruction, which handles partial edge coverage exactly and
    keeps the quadrature error fourth order in dx (a plain
    fractional-pixel sum is first order at the slit edges, a several
    percent bias for a 50 um slit on a ~20 um grid).  The slit must
    span at least two grid cells to be resolvable.
    """
    intensity = np.asarray(intensity)
    if intensity.shape != (grid.n, grid.n):
        raise GridError(
            f"intensity shape {intensity.shape} does not match grid "
            f"({grid.n}, {grid.n})")
    if not slit_width >= 2.0 * grid.dx:
        raise GridError(
            f"slit width {slit_width:g} m is below 2 dx = {2 * grid.dx:g} m; "
            "refine the grid or widen the slit")
    half = 0.5 * slit_width
    profile = intensity.sum(axis=0) * grid.dx
    spline = CubicSpline(grid.axis, profile)
    lo = max(-half, float(grid.axis[0]))
    hi = min(half, float(grid.axis[-1]))
    return float(spline.integrate(lo, hi))


def slit_flux(field: ComplexField, slit_width: float) -> float:
    """Flux of |field|^2 through a centered vertical slit (see
    :func:`slit_flux_of_intensity`)."""
    return slit_flux_of_intensity(field.intensity(), field.grid, slit_width)


def _moment_width(intensity: np.ndarray, grid: Grid2D):
    total = intensity.sum()
    if not total > 0:
        raise FitError("intensity has no power; cannot measure a width")
    x = grid.axis
    px = intensity.sum(axis=0)
    py = intensity.sum(axis=1)
    x0 = float(px @ x) / total
    y0 = float(py @ x) / total
    var_x = float(px @ (x - x0) ** 2) / total
    var_y = float(py @ (x - y0) ** 2) / total
    # For I ~ exp(-2 r^2 / w^2) each axis has variance w^2/4.
    w = math.sqrt(2.0 * max(var_x + var_y, 0.0))
    return w, x0, y0


def measure_long_term_width(intensity: np.ndarray, grid: Grid2D) -> float:
    """1/e^2 radius of a beam profile from a symmetric-Gaussian fit.

    A moment estimate seeds a least-squares fit of
    A exp(-2((x-x0)^2 + (y-y0)^2)/w^2) restricted to a window around
    the beam (3x the moment width), which keeps far-tail pixels from
    dominating the fit of a profile that is only centrally Gaussian.
    If the fit fails to converge the moment estimate is returned with
    a warning.
    """
    intensity = np.asarray(intensity, dtype=np.float64)
    if intensity.shape != (grid.n, grid.n):
        raise GridError(
            f"intensity shape {intensity.shape} does not match grid "
            f"({grid.n}, {grid.n})")
    w_mom, x0, y0 = _moment_width(intensity, grid)
    if not w_mom > 0:
        raise FitError("degenerate intensity profile; moment width is zero")
    xg, yg = grid.mesh()
    rsq = (xg - x0) ** 2 + (yg - y0) ** 2
    window = rsq <= (3.0 * w_mom) ** 2
    if window.sum() < 16:
        window = rsq <= (3.0 * w_mom + 4.0 * grid.dx) ** 2
    sel_x = xg[window]
    sel_y = yg[window]
    sel_i = intensity[window]
    amp0 = float(sel_i.max())

    def residuals(p):
        log_a, cx, cy, w = p
        model = np.exp(log_a - 2.0 * ((sel_x - cx) ** 2 + (sel_y - cy) ** 2)
                       / (w * w))
        return model - sel_i

    try:
        fit = least_squares(
            residuals, x0=[math.log(amp0), x0, y0, w_mom],
            bounds=([-np.inf, grid.axis[0], grid.axis[0], 0.25 * grid.dx],
                    [np.inf, grid.axis[-1], grid.axis[-1], 2.0 * grid.extent]),
            xtol=1e-12, ftol=1e-12, gtol=1e-12)
        ok = fit.success and np.isfinite(fit.x).all()
    except Exception:
        ok = False
    if not ok:
        warnings.warn("Gaussian width fit did not converge; "
                      "falling back to the moment estimate", RuntimeWarning)
        return w_mom
    return float(fit.x[3])


def erf_transmission_model(sigma_R2, alpha: float, w0: float,
                           slit_width: float):
    """Slit transmission of a Gaussian widened to w0 sqrt(1 + alpha sigma_R^2).

    T = erf(a / w_lt) / erf(a / w0) with a = slit_width / sqrt(2): the
    fraction of a symmetric Gaussian passing |x| <= slit_width/2,
    normalized to the zero-turbulence fraction.  Accepts scalar or
    array sigma_R2 (and alpha broadcastable against it).
    """
    if w0 <= 0 or slit_width <= 0:
        raise ValueError("w0 and slit_width must be positive")
    sigma_R2 = np.asarray(sigma_R2, dtype=float)
    if np.any(sigma_R2 < 0):
        raise ValueError("sigma_R2 must be non-negative")
    a = slit_width / math.sqrt(2.0)
    w_lt = w0 * np.sqrt(1.0 + np.asarray(alpha, dtype=float) * sigma_R2)
    out = erf(a / w_lt) / erf(a / w0)
    return float(out) if out.ndim == 0 else out


def widening_scale(setup: PhysicalSetup, coefficient="chamber") -> float:
    """Coefficient times Lambda^(5/6) with Lambda = 2L/(k_cal w0^2).

    This is the alpha the classical calibration beam itself should
    exhibit: sigma_R^2 enters the long-term width as
    w_lt^2 = w0^2 (1 + widening_scale * sigma_R^2).
    """
    coef = _coefficient_value(coefficient)
    lam = 2.0 * setup.path_length / (setup.k_cal * setup.w0 ** 2)
    return coef * lam ** (5.0 / 6.0)


def _coefficient_value(coefficient) -> float:
    if isinstance(coefficient, str):
        try:
            return TURBULENCE_COEFFICIENTS[coefficient]
        except KeyError:
            raise CalibrationError(
                f"unknown widening coefficient {coefficient!r}; "
                f"choose from {sorted(TURBULENCE_COEFFICIENTS)}") from None
    coef = float(coefficient)
    if not coef > 0:
        raise CalibrationError(f"widening coefficient must be positive, got {coef}")
    return coef


def _propagate_channel(source: ComplexField, realization: Realization,
                       distance: float) -> ComplexField:
    if isinstance(realization, PhaseScreen):
        return split_step_through_screen(source, realization, distance)
    return kernel_convolve(source, realization, distance)


def _sample_seed(master_seed: int, domain: int, point_index: int,
                 sample_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence((int(master_seed), domain, point_index,
                                 sample_index))
    return np.random.default_rng(ss)


def calibrate(grid: Grid2D, setup: PhysicalSetup, model: TurbulenceModel,
              strengths: Sequence[float], n_samples: int, seed: int,
              coefficient="chamber") -> list[CalibrationRow]:
    """Map chamber strength set points to sigma_R^2 via beam widening.

    For each strength the calibration beam (waist ``setup.w0`` focused
    at the slit plane, wavelength ``setup.lambda_cal``) crosses
    n_samples independent chamber realizations; the long-term width
    w_lt is fit to the mean intensity, and

        sigma_R^2 = ((w_lt / w0)^2 - 1) / (coef * Lambda^(5/6)),

    with w0 and Lambda = 2L/(k w0^2) taken from the *measured*
    zero-strength width so grid-level bias cancels.  A zero-strength
    row is always included (sigma_R^2 exactly 0).  Rows are returned
    sorted by strength.
    """
    if n_samples < 50:
        raise CalibrationError(
            f"calibration needs n_samples >= 50 for a stable mean width, "
            f"got {n_samples}")
    strengths = sorted(float(s) for s in strengths)
    if strengths and strengths[0] < 0:
        raise CalibrationError(f"strengths must be non-negative, got {strengths[0]}")
    coef = _coefficient_value(coefficient)
    k = setup.k_cal
    length = setup.path_length
    source = converging_gaussian(grid, k, setup.w0, length)

    zero = model.realize(grid, 0.0, k, 0)
    base_intensity = _propagate_channel(source, zero, length).intensity()
    w0_meas = measure_long_term_width(base_intensity, grid)
    lam = 2.0 * length / (k * w0_meas ** 2)
    scale = coef * lam ** (5.0 / 6.0)

    rows = [CalibrationRow(strength=0.0, w_lt=w0_meas, sigma_R2=0.0)]
    for j, strength in enumerate(strengths):
        if strength == 0.0:
            continue
        mean_intensity = np.zeros((grid.n, grid.n))
        for i in range(n_samples):
            rng = _sample_seed(seed, _SEED_DOMAIN_CALIBRATE, j, i)
            realization = model.realize(grid, strength, k, rng)
            mean_intensity += _propagate_channel(source, realization,
                                                 length).intensity()
        mean_intensity /= n_samples
        w_lt = measure_long_term_width(mean_intensity, grid)
        rel = (w_lt / w0_meas) ** 2 - 1.0
        if rel < -0.01:
            raise CalibrationError(
                f"measured long-term width {w_lt:g} m at strength {strength:g} "
                f"is below the zero-turbulence width {w0_meas:g} m; the "
                "chamber model is not widening the beam")
        sigma_r2 = max(rel, 0.0) / scale
        rows.append(CalibrationRow(strength=strength, w_lt=w_lt,
                                   sigma_R2=sigma_r2))
    return rows


def strength_for_sigma(rows: Sequence[CalibrationRow]):
    """Monotone interpolant sigma_R^2 -> strength from a calibration table.

    Requires at least two rows with strictly increasing sigma_R^2
    (shape-preserving piecewise cubic, so interpolated strengths stay
    within the calibrated range).  The returned callable raises
    :class:`CalibrationError` outside [min sigma, max sigma].
    """
    rows = sorted(rows, key=lambda r: r.strength)
    sig = np.array([r.sigma_R2 for r in rows])
    strg = np.array([r.strength for r in rows])
    if len(rows) < 2:
        raise CalibrationError("need at least two calibration rows to interpolate")
    if not np.all(np.diff(sig) > 0):
        raise CalibrationError(
            "calibration table sigma_R^2 is not strictly increasing with "
            "strength; re-run calibration with better-separated set points")
    interp = PchipInterpolator(sig, strg)
    lo, hi = float(sig[0]), float(sig[-1])

    def mapping(sigma_r2: float) -> float:
        if not lo <= sigma_r2 <= hi:
            raise CalibrationError(
                f"sigma_R^2 = {sigma_r2:g} outside calibrated range "
                f"[{lo:g}, {hi:g}]")
        return float(interp(sigma_r2))

    return mapping


def _channel_flux(channel: str, realization: Realization,
                  laser: ComplexField, pump: ComplexField,
                  setup: PhysicalSetup) -> float:
    length = setup.path_length
    if channel == "laser_calibration":
        out = _propagate_channel(laser, realization, length)
        return slit_flux(out, setup.slit_width)
    pair = scale_to_wavenumber(realization, setup.k_down)
    mode = (CoincidenceMode.DIRECT if channel == "coincidence_direct"
            else CoincidenceMode.INVERTED_X)
    amp = coincidence_fast(pump, pair, mode, length)
    return slit_flux(amp, setup.slit_width)


def run_monte_carlo(grid: Grid2D, setup: PhysicalSetup, model: TurbulenceModel,
                    calibration: Sequence[CalibrationRow],
                    sigma_targets: Sequence[float],
                    channels: Sequence[str], n_samples: int, seed: int,
                    n_threads: int = 1,
                    poisson_mean: float | None = None
                    ) -> dict[str, list[DataPoint]]:
    """Normalized slit transmission versus sigma_R^2 for each channel.

    ``channels`` may be a single channel name (returning that channel's
    list of points) or a sequence of names (returning a dict); either
    way the chamber realizations depend only on (seed, target, sample),
    so per-channel calls see the same frozen chambers as a joint call.

    Every (target, sample) pair draws one chamber realization at the
    calibration wavelength from a seed derived as
    SeedSequence((seed, sweep-domain, target index, sample index)); all
    requested channels then see that same frozen chamber, scaled to
    their own wavenumber.  Fluxes are divided by the channel's
    zero-turbulence flux evaluated through the identical code path, so
    a sigma_R^2 = 0 target yields samples of exactly 1.0.

    Accumulation is indexed by sample, so results are bit-identical for
    any n_threads.  poisson_mean, when set, models shot noise by
    replacing each ratio r with Poisson(poisson_mean * r)/poisson_mean
    (drawn from the same per-sample generator).
    """
    single = isinstance(channels, str)
    if single:
        channels = [channels]
    bad = [c for c in channels if c not in CHANNELS]
    if bad:
        raise ValueError(f"unknown channels {bad}; valid: {list(CHANNELS)}")
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    if n_threads < 1:
        raise ValueError(f"n_threads must be >= 1, got {n_threads}")
    channels = list(dict.fromkeys(channels))
    to_strength = strength_for_sigma(calibration)
    targets = [float(t) for t in sigma_targets]
    strengths = [to_strength(t) for t in targets]

    k_cal = setup.k_cal
    length = setup.path_length
    laser = converging_gaussian(grid, k_cal, setup.w0, length)
    pump = converging_gaussian(grid, setup.k_pump, setup.w_pump, length)

    zero = model.realize(grid, 0.0, k_cal, 0)
    base = {c: _channel_flux(c, zero, laser, pump, setup) for c in channels}
    for c, flux in base.items():
        if not flux > 0:
            raise CalibrationError(f"zero-turbulence flux vanished for {c}")

    def one_sample(t_idx: int, s_idx: int) -> list[float]:
        rng = _sample_seed(seed, _SEED_DOMAIN_SWEEP, t_idx, s_idx)
        realization = model.realize(grid, strengths[t_idx], k_cal, rng)
        ratios = [
            _channel_flux(c, realization, laser, pump, setup) / base[c]
            for c in channels
        ]
        if poisson_mean is not None:
            ratios = [rng.poisson(poisson_mean * max(r, 0.0)) / poisson_mean
                      for r in ratios]
        return ratios

    results = np.empty((len(targets), n_samples, len(channels)))
    jobs = [(t, i) for t in range(len(targets)) for i in range(n_samples)]
    if n_threads == 1:
        for t, i in jobs:
            results[t, i] = one_sample(t, i)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            for (t, i), ratios in zip(jobs,
                                      pool.map(lambda ti: one_sample(*ti), jobs)):
                results[t, i] = ratios

    out: dict[str, list[DataPoint]] = {}
    for ci, c in enumerate(channels):
        points = []
        for t, target in enumerate(targets):
            samples = results[t, :, ci]
            mean = float(samples.mean())
            std_error = float(samples.std(ddof=1) / math.sqrt(n_samples))
            points.append(DataPoint(sigma_R2=target, mean=mean,
                                    std_error=std_error, n_samples=n_samples))
        out[c] = points
    return out[channels[0]] if single else out


def fit_alpha(points: Sequence[DataPoint], setup: PhysicalSetup,
              coefficient="chamber") -> FitResult:
    """Fit the sensitivity alpha of the erf transmission model.

    Minimizes chi^2(alpha) = sum ((mean_i - T(sigma_i; alpha))/s_i)^2
    over alpha in [0, 10 * alpha_cal], where alpha_cal is the classical
    calibration-beam value (``widening_scale``).  Weights s_i are the
    point standard errors; exact-zero errors (deterministic points)
    are replaced by the smallest positive error present, or by 1e-3
    when every error is zero.  The confidence half-width is the
    one-sigma curvature estimate sqrt(2 / chi'').

    Needs at least 4 points; a transmission drop of less than 10%
    across the points leaves alpha weakly constrained (warned), and no
    drop at all is unfittable (raised, with alpha bounded below by 0
    only).
    """
    points = sorted(points, key=lambda p: p.sigma_R2)
    if len(points) < 4:
        raise FitError(f"need at least 4 data points to fit alpha, got {len(points)}")
    sig = np.array([p.sigma_R2 for p in points])
    y = np.array([p.mean for p in points])
    se = np.array([p.std_error for p in points])
    if not (np.isfinite(sig).all() and np.isfinite(y).all()
            and np.isfinite(se).all()):
        raise FitError("data points contain non-finite values")
    if np.any(sig < 0):
        raise FitError("sigma_R2 must be non-negative")

    drop = 1.0 - y.min() / y.max() if y.max() > 0 else 0.0
    if drop <= 1e-12:
        raise FitError(
            "transmission never drops across the data; alpha is "
            "ill-conditioned (only a lower bound of 0 is supported)")
    if drop < 0.10:
        warnings.warn(
            f"transmission drops only {100 * drop:.1f}% across the data; "
            "alpha is weakly constrained", RuntimeWarning)

    positive = se[se > 0]
    floor = float(positive.min()) if positive.size else 1e-3
    weights = 1.0 / np.where(se > 0, se, floor)

    alpha_cal = widening_scale(setup, coefficient)
    hi = 10.0 * alpha_cal
    w0, s = setup.w0, setup.slit_width

    def chi2(alpha: float) -> float:
        model = erf_transmission_model(sig, alpha, w0, s)
        return float(np.sum(((y - model) * weights) ** 2))

    res = minimize_scalar(chi2, bounds=(0.0, hi), method="bounded",
                          options={"xatol": 1e-6 * alpha_cal})
    alpha_hat = float(res.x)
    if alpha_hat > hi - 2e-6 * alpha_cal:
        warnings.warn(
            f"fitted alpha {alpha_hat:g} sits at the search bound "
            f"{hi:g}; the model cannot explain the data", RuntimeWarning)

    h = max(1e-4 * alpha_cal, 1e-9)
    c0, cp, cm = chi2(alpha_hat), chi2(alpha_hat + h), chi2(max(alpha_hat - h, 0.0))
    curvature = (cp + cm - 2.0 * c0) / (h * h)
    ci = math.sqrt(2.0 / curvature) if curvature > 0 else math.inf

    model = erf_transmission_model(sig, alpha_hat, w0, s)
    residual_rms = float(np.sqrt(np.mean((y - model) ** 2)))
    return FitResult(alpha=max(alpha_hat, 0.0), ci=ci,
                     residual_rms=residual_rms, n_points=len(points))
