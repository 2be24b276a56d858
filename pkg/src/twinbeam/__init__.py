"""Monte Carlo scalar-wave model of photon pairs crossing thin turbulence.

A focused classical beam and a photon-pair coincidence amplitude cross
the same simulated turbulence and are read out by the same slit; the
package measures how much less the pair channel suffers when one
photon's transverse coordinate is inverted, which cancels every
odd-order aberration in the two-photon amplitude.
"""

from .coincidence import (CoincidenceMode, CrystalModel, Field1D,
                          coincidence_delta_1d, coincidence_fast,
                          coincidence_quadrature, crystal_kernel_1d,
                          gaussian_1d, spdc_sinc_amplitude)
from .config import (RunConfig, canonical_float, config_hash, parse_config)
from .errors import (CalibrationError, ConfigError, FitError, GridError,
                     NyquistError, TwinbeamError)
from .experiment import (CHANNELS, CalibrationRow, DataPoint, FitResult,
                         calibrate, erf_transmission_model, fit_alpha,
                         measure_long_term_width, run_monte_carlo, slit_flux,
                         slit_flux_of_intensity, strength_for_sigma,
                         widening_scale)
from .grid import (ComplexField, Grid2D, PhysicalSetup, converging_gaussian,
                   fresnel_ratio, gaussian_width_from_q, make_grid,
                   rayleigh_range)
from .pipeline import (run_calibrate, run_fit, run_pipeline, run_report,
                       run_screens_stats, run_sweep)
from .propagation import (fresnel_propagate, kernel_convolve,
                          split_step_through_screen)
from .report import ResultRecord, atomic_write_text
from .turbulence import (KernelAberration, KolmogorovModel, PhaseScreen,
                         PolynomialModel, StructureFunctionTable, TiltModel,
                         estimate_structure_function, even_part,
                         fit_loglog_slope, kolmogorov_structure_function,
                         make_kolmogorov_screen, odd_part, r0_from_strength,
                         sample_polynomial_kernel, sample_tilt_kernel,
                         scale_to_wavenumber, screen_checksum,
                         strength_from_r0)

__version__ = "0.1.0"

__all__ = [
    "CHANNELS", "CalibrationError", "CalibrationRow", "CoincidenceMode",
    "ComplexField", "ConfigError", "CrystalModel", "DataPoint", "Field1D",
    "FitError", "FitResult", "Grid2D", "GridError", "KernelAberration",
    "KolmogorovModel", "NyquistError", "PhaseScreen", "PhysicalSetup",
    "PolynomialModel", "ResultRecord", "RunConfig", "StructureFunctionTable",
    "TiltModel", "TwinbeamError", "atomic_write_text", "calibrate",
    "canonical_float", "coincidence_delta_1d", "coincidence_fast",
    "coincidence_quadrature", "config_hash", "converging_gaussian",
    "crystal_kernel_1d", "erf_transmission_model",
    "estimate_structure_function", "even_part", "fit_alpha",
    "fit_loglog_slope", "fresnel_propagate", "fresnel_ratio", "gaussian_1d",
    "gaussian_width_from_q", "kernel_convolve",
    "kolmogorov_structure_function", "make_grid", "make_kolmogorov_screen",
    "measure_long_term_width", "odd_part", "parse_config", "r0_from_strength",
    "rayleigh_range", "run_calibrate", "run_fit", "run_monte_carlo",
    "run_pipeline", "run_report", "run_screens_stats", "run_sweep",
    "sample_polynomial_kernel", "sample_tilt_kernel", "scale_to_wavenumber",
    "screen_checksum", "slit_flux", "slit_flux_of_intensity",
    "spdc_sinc_amplitude",
    "split_step_through_screen", "strength_for_sigma", "strength_from_r0",
    "widening_scale", "__version__",
]
