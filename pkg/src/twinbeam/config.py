"""Run configuration: INI parsing, defaults, canonical hashing.

An empty file (or missing sections) reproduces the reference bench
configuration: 325 nm pump focused to 60 um, 632.8 nm calibration beam
focused to 59 um, 0.90 m path, 50 um slit, 5 mm crystal, Kolmogorov
chamber at mid-path, Table-grid sigma_R^2 targets, 100 samples per
point.  Every key is validated; unknown sections or keys are errors
rather than silent typos.

Lengths accept unit suffixes (nm, um/µm, mm, cm, m); bare numbers are
SI.  ``config_hash`` digests the fully resolved configuration (defaults
applied, floats in shortest round-trip form) so any two runs with equal
hashes computed the same physics.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
import re
from dataclasses import dataclass, fields
from typing import Sequence

from .errors import ConfigError
from .grid import Grid2D, PhysicalSetup, make_grid, rayleigh_range
from .turbulence import (KolmogorovModel, PolynomialModel, TiltModel,
                         TurbulenceModel)

# Chamber set points (model strength units) and the sigma_R^2 targets
# swept by default; the target grid matches the bench calibration table.
DEFAULT_SIGMA_TARGETS = (0.0, 5.0e-4, 3.7e-3, 1.7e-2, 4.4e-2, 9.8e-2, 0.17, 0.26)
DEFAULT_KOLMOGOROV_STRENGTHS = (0.0, 150.0, 1000.0, 5000.0, 15000.0,
                                35000.0, 65000.0, 95000.0)
DEFAULT_TILT_STRENGTHS = (0.0, 4.0e-6, 1.2e-5, 2.4e-5, 4.0e-5,
                          6.0e-5, 8.0e-5, 1.0e-4)
DEFAULT_POLY_STRENGTHS = (0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0)

_LENGTH_UNITS = {
    "nm": 1e-9, "um": 1e-6, "µm": 1e-6, "mm": 1e-3, "cm": 1e-2, "m": 1.0,
}
_NUMBER_RE = re.compile(r"^\s*([-+]?[0-9.]+(?:[eE][-+]?[0-9]+)?)\s*([a-zµ]*)\s*$")


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run parameters (defaults already applied)."""

    setup: PhysicalSetup
    grid_n: int
    grid_extent: float | None          # None: derived from beam sizes
    model_name: str
    subharmonic_levels: int
    tilt_axis: str
    poly_coeffs: tuple[float, ...]
    poly_u_scale: float
    poly_axis: str
    coefficient: str
    cal_strengths: tuple[float, ...]
    cal_samples: int
    sigma_targets: tuple[float, ...]
    channels: tuple[str, ...]
    n_samples: int
    seed: int
    threads: int
    poisson_mean: float | None
    out_dir: str

    def resolved_extent(self) -> float:
        """Grid extent, derived when not set explicitly.

        Large enough for the launched beams (7x the largest source
        radius, which also keeps the focusing chirp comfortably inside
        the propagation sampling guard) and for the widest long-term
        profile expected across the sigma_R^2 targets (8x, with a 1.5
        safety factor on the classical widening law).
        """
        if self.grid_extent is not None:
            return self.grid_extent
        s = self.setup
        w_src_cal = s.w0 * math.hypot(
            1.0, s.path_length / rayleigh_range(s.k_cal, s.w0))
        w_src_pump = s.w_pump * math.hypot(
            1.0, s.path_length / rayleigh_range(s.k_pump, s.w_pump))
        lam = 2.0 * s.path_length / (s.k_cal * s.w0 ** 2)
        alpha_cal = 0.982 * lam ** (5.0 / 6.0)
        sigma_max = max(self.sigma_targets, default=0.0)
        w_lt_max = s.w0 * math.sqrt(1.0 + 1.5 * alpha_cal * sigma_max)
        return max(8.0 * w_lt_max, 7.0 * w_src_cal, 7.0 * w_src_pump)

    def make_grid(self) -> Grid2D:
        return make_grid(self.grid_n, self.resolved_extent())

    def make_model(self) -> TurbulenceModel:
        if self.model_name == "kolmogorov":
            return KolmogorovModel(subharmonic_levels=self.subharmonic_levels)
        if self.model_name == "tilt":
            return TiltModel(axis=self.tilt_axis)
        if self.model_name == "polynomial":
            return PolynomialModel(coeffs=self.poly_coeffs,
                                   u_scale=self.poly_u_scale,
                                   axis=self.poly_axis)
        raise ConfigError(f"unknown turbulence model {self.model_name!r}")


_SCHEMA: dict[str, tuple[str, ...]] = {
    "setup": ("lambda_pump", "lambda_down", "lambda_cal", "path_length",
              "w0", "w_pump", "tau", "slit_width"),
    "grid": ("n", "extent"),
    "turbulence": ("model", "subharmonic_levels", "coefficient",
                   "strengths", "cal_samples", "tilt_axis", "poly_coeffs",
                   "poly_u_scale", "poly_axis"),
    "run": ("channels", "sigma_targets", "n_samples", "seed", "threads",
            "poisson_mean"),
    "output": ("out_dir",),
}

_SETUP_DEFAULTS = {
    "lambda_pump": 325e-9,
    "lambda_down": 650e-9,
    "lambda_cal": 632.8e-9,
    "path_length": 0.90,
    "w0": 59e-6,
    "w_pump": 60e-6,
    "tau": 5e-3,
    "slit_width": 50e-6,
}

_VALID_CHANNELS = ("laser_calibration", "coincidence_direct",
                   "coincidence_inverted_x")


def _parse_length(section: str, key: str, raw: str) -> float:
    m = _NUMBER_RE.match(raw)
    if not m or (m.group(2) and m.group(2) not in _LENGTH_UNITS):
        raise ConfigError(
            f"{section}.{key}: cannot parse length {raw!r} "
            f"(use a number with optional unit {sorted(_LENGTH_UNITS)})")
    try:
        value = float(m.group(1))
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse number {raw!r}") from None
    return value * _LENGTH_UNITS.get(m.group(2), 1.0)


def _positive_length(section: str, key: str, raw: str) -> float:
    value = _parse_length(section, key, raw)
    if not value > 0:
        raise ConfigError(
            f"{section}.{key}: must be a positive length, got {value:g} m")
    return value


def _parse_float(section: str, key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse number {raw!r}") from None


def _parse_int(section: str, key: str, raw: str,
               minimum: int | None = None) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse integer {raw!r}") from None
    if minimum is not None and value < minimum:
        raise ConfigError(f"{section}.{key}: must be >= {minimum}, got {value}")
    return value


def _parse_float_list(section: str, key: str, raw: str) -> tuple[float, ...]:
    items = [s for s in re.split(r"[,\s]+", raw.strip()) if s]
    if not items:
        raise ConfigError(f"{section}.{key}: empty list")
    return tuple(_parse_float(section, key, s) for s in items)


def parse_config(source) -> RunConfig:
    """Build a :class:`RunConfig` from an INI file path, text, or file object.

    Unknown sections or keys raise :class:`ConfigError` naming them;
    so does any value violating its constraint (the message names the
    field and the constraint).  An empty input yields the reference
    configuration.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        if hasattr(source, "read") and callable(source.read):
            parser.read_file(source)
        else:
            text = str(source)
            if "\n" in text or "=" in text or text.strip() == "":
                parser.read_string(text)
            else:
                with open(text, "r", encoding="utf-8") as fh:
                    parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(
                f"unknown config section [{section}]; "
                f"valid sections: {sorted(_SCHEMA)}")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"unknown key {section}.{key}; "
                    f"valid keys: {sorted(_SCHEMA[section])}")

    def get(section: str, key: str) -> str | None:
        if parser.has_section(section) and key in parser[section]:
            return parser[section][key]
        return None

    setup_kwargs = {}
    for key, default in _SETUP_DEFAULTS.items():
        raw = get("setup", key)
        setup_kwargs[key] = default if raw is None else _positive_length(
            "setup", key, raw)
    try:
        setup = PhysicalSetup(**setup_kwargs)
    except Exception as exc:
        raise ConfigError(f"setup: {exc}") from exc

    raw = get("grid", "n")
    grid_n = 1024 if raw is None else _parse_int("grid", "n", raw, minimum=32)
    if grid_n & (grid_n - 1):
        raise ConfigError(f"grid.n: must be a power of two, got {grid_n}")
    raw = get("grid", "extent")
    grid_extent = None
    if raw is not None and raw.strip().lower() not in ("", "auto"):
        grid_extent = _positive_length("grid", "extent", raw)

    raw = get("turbulence", "model")
    model_name = "kolmogorov" if raw is None else raw.strip().lower()
    if model_name not in ("kolmogorov", "tilt", "polynomial"):
        raise ConfigError(
            f"turbulence.model: unknown model {model_name!r} "
            "(choose kolmogorov, tilt, or polynomial)")

    raw = get("turbulence", "subharmonic_levels")
    subharmonic_levels = 3 if raw is None else _parse_int(
        "turbulence", "subharmonic_levels", raw, minimum=0)

    raw = get("turbulence", "coefficient")
    coefficient = "chamber" if raw is None else raw.strip().lower()
    if coefficient not in ("chamber", "open_atmosphere"):
        raise ConfigError(
            f"turbulence.coefficient: unknown choice {coefficient!r} "
            "(choose chamber or open_atmosphere)")

    raw = get("turbulence", "strengths")
    if raw is None:
        cal_strengths = {
            "kolmogorov": DEFAULT_KOLMOGOROV_STRENGTHS,
            "tilt": DEFAULT_TILT_STRENGTHS,
            "polynomial": DEFAULT_POLY_STRENGTHS,
        }[model_name]
    else:
        cal_strengths = _parse_float_list("turbulence", "strengths", raw)
        if any(s < 0 for s in cal_strengths):
            raise ConfigError("turbulence.strengths: must be non-negative")
        cal_strengths = tuple(sorted(set(cal_strengths)))

    raw = get("turbulence", "cal_samples")
    cal_samples = 100 if raw is None else _parse_int(
        "turbulence", "cal_samples", raw, minimum=50)

    raw = get("turbulence", "tilt_axis")
    tilt_axis = "both" if raw is None else raw.strip().lower()
    if tilt_axis not in ("x", "y", "both"):
        raise ConfigError(
            f"turbulence.tilt_axis: must be x, y, or both, got {tilt_axis!r}")

    raw = get("turbulence", "poly_coeffs")
    poly_coeffs = ((1.0, 1.0, 1.0, 1.0) if raw is None
                   else _parse_float_list("turbulence", "poly_coeffs", raw))
    raw = get("turbulence", "poly_u_scale")
    poly_u_scale = 1e-3 if raw is None else _positive_length(
        "turbulence", "poly_u_scale", raw)
    raw = get("turbulence", "poly_axis")
    poly_axis = "x" if raw is None else raw.strip().lower()
    if poly_axis not in ("x", "y", "both"):
        raise ConfigError(
            f"turbulence.poly_axis: must be x, y, or both, got {poly_axis!r}")

    raw = get("run", "channels")
    if raw is None:
        channels = _VALID_CHANNELS
    else:
        channels = tuple(s for s in re.split(r"[,\s]+", raw.strip()) if s)
        bad = [c for c in channels if c not in _VALID_CHANNELS]
        if bad:
            raise ConfigError(
                f"run.channels: unknown channels {bad}; "
                f"valid: {list(_VALID_CHANNELS)}")
        channels = tuple(dict.fromkeys(channels))

    raw = get("run", "sigma_targets")
    if raw is None:
        sigma_targets = DEFAULT_SIGMA_TARGETS
    else:
        sigma_targets = _parse_float_list("run", "sigma_targets", raw)
        if any(t < 0 for t in sigma_targets):
            raise ConfigError("run.sigma_targets: must be non-negative")
        sigma_targets = tuple(sorted(set(sigma_targets)))

    raw = get("run", "n_samples")
    n_samples = 100 if raw is None else _parse_int("run", "n_samples", raw,
                                                   minimum=2)
    raw = get("run", "seed")
    seed = 0 if raw is None else _parse_int("run", "seed", raw, minimum=0)
    raw = get("run", "threads")
    threads = 1 if raw is None else _parse_int("run", "threads", raw, minimum=1)

    raw = get("run", "poisson_mean")
    poisson_mean = None
    if raw is not None and raw.strip() != "":
        poisson_mean = _parse_float("run", "poisson_mean", raw)
        if not poisson_mean > 0:
            raise ConfigError(
                f"run.poisson_mean: must be positive, got {poisson_mean:g}")

    raw = get("output", "out_dir")
    out_dir = "out" if raw is None else raw.strip()

    return RunConfig(
        setup=setup, grid_n=grid_n, grid_extent=grid_extent,
        model_name=model_name, subharmonic_levels=subharmonic_levels,
        tilt_axis=tilt_axis, poly_coeffs=poly_coeffs, poly_u_scale=poly_u_scale,
        poly_axis=poly_axis, coefficient=coefficient,
        cal_strengths=cal_strengths, cal_samples=cal_samples,
        sigma_targets=sigma_targets, channels=channels,
        n_samples=n_samples, seed=seed, threads=threads,
        poisson_mean=poisson_mean, out_dir=out_dir,
    )


def canonical_float(x: float) -> str:
    """Shortest decimal that round-trips, with a compact exponent.

    Integral values print without a fraction ("1", "0"); others use
    Python's shortest round-trip repr with 'e-05' normalized to 'e-5'.
    """
    xf = float(x)
    if math.isfinite(xf) and xf == int(xf) and abs(xf) < 1e16:
        return str(int(xf))
    s = repr(xf)
    s = re.sub(r"e([+-]?)0*(\d)", lambda m: "e" + ("-" if m.group(1) == "-" else "") + m.group(2), s)
    return s


def canonical_config_text(cfg: RunConfig) -> str:
    """Deterministic key=value rendering of a resolved configuration."""

    def render(value) -> str:
        if value is None:
            return ""
        if isinstance(value, bool):
            return str(value).lower()
        if isinstance(value, float):
            return canonical_float(value)
        if isinstance(value, int):
            return str(value)
        if isinstance(value, str):
            return value
        if isinstance(value, (tuple, list)):
            return ",".join(render(v) for v in value)
        return repr(value)

    lines = []
    s = cfg.setup
    for key in _SETUP_DEFAULTS:
        lines.append(f"setup.{key}={canonical_float(getattr(s, key))}")
    for f in fields(cfg):
        if f.name == "setup":
            continue
        lines.append(f"{f.name}={render(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    """sha256 of the canonical configuration text."""
    return hashlib.sha256(canonical_config_text(cfg).encode("utf-8")).hexdigest()
