"""Serialization of calibration tables, transmission curves, and fits.

Output files are deterministic down to the byte: floats are rendered
in shortest round-trip form, JSON keys are sorted, no timestamps are
written (wall-clock metadata lives only on the in-memory record), and
every file is written atomically (temp file + rename) so a crashed run
never leaves a half-written table.

Fixed column contracts:

* calibration CSV: ``strength,w_lt_m,sigma_R2``
* curve CSV:       ``sigma_R2,mean,stderr,n``
* fits CSV:        ``channel,alpha,residual_rms,ci``

Each CSV has a JSON twin carrying the same rows plus the config hash
and master seed, which lets downstream stages refuse to mix files
produced under different configurations.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .config import RunConfig, canonical_float, config_hash
from .errors import ConfigError
from .experiment import CalibrationRow, DataPoint, FitResult

CALIBRATION_COLUMNS = ("strength", "w_lt_m", "sigma_R2")
CURVE_COLUMNS = ("sigma_R2", "mean", "stderr", "n")
FIT_COLUMNS = ("channel", "alpha", "residual_rms", "ci")


@dataclass
class ResultRecord:
    """Everything one pipeline run produced, plus provenance."""

    config: RunConfig
    seed: int
    calibration: list[CalibrationRow] = field(default_factory=list)
    curves: dict[str, list[DataPoint]] = field(default_factory=dict)
    fits: dict[str, FitResult] = field(default_factory=dict)
    wall_clock_seconds: float = 0.0     # in-memory only, never serialized

    @property
    def hash(self) -> str:
        return config_hash(self.config)

    def content_checksum(self) -> str:
        """Content-addressed id of the serialized results (git-style:
        digest over a type/length header plus the canonical payload)."""
        payload = json.dumps(self._payload(), sort_keys=True,
                             separators=(",", ":")).encode("utf-8")
        h = hashlib.sha256()
        h.update(b"record %d\0" % len(payload))
        h.update(payload)
        return h.hexdigest()

    def _payload(self) -> dict:
        return {
            "config_hash": self.hash,
            "seed": self.seed,
            "calibration": [calibration_row_dict(r) for r in self.calibration],
            "curves": {c: [data_point_dict(p) for p in pts]
                       for c, pts in sorted(self.curves.items())},
            "fits": {c: fit_dict(c, f)
                     for c, f in sorted(self.fits.items())},
        }


def calibration_row_dict(row: CalibrationRow) -> dict:
    return {"strength": row.strength, "w_lt_m": row.w_lt,
            "sigma_R2": row.sigma_R2}


def data_point_dict(p: DataPoint) -> dict:
    return {"sigma_R2": p.sigma_R2, "mean": p.mean, "stderr": p.std_error,
            "n": p.n_samples}


def fit_dict(channel: str, f: FitResult) -> dict:
    return {"channel": channel, "alpha": f.alpha,
            "residual_rms": f.residual_rms, "ci": f.ci}


def atomic_write_text(path: str, text: str) -> None:
    """Write text to path via a same-directory temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _csv(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    def cell(v) -> str:
        if isinstance(v, bool):
            return str(v).lower()
        if isinstance(v, (int,)):
            return str(v)
        if isinstance(v, float):
            return canonical_float(v)
        return str(v)

    lines = [",".join(columns)]
    lines.extend(",".join(cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def emit_calibration_csv(rows: Sequence[CalibrationRow]) -> str:
    return _csv(CALIBRATION_COLUMNS,
                [(r.strength, r.w_lt, r.sigma_R2) for r in rows])


def emit_curve_csv(points: Sequence[DataPoint]) -> str:
    return _csv(CURVE_COLUMNS,
                [(p.sigma_R2, p.mean, p.std_error, p.n_samples)
                 for p in points])


def emit_fits_csv(fits: Mapping[str, FitResult]) -> str:
    return _csv(FIT_COLUMNS,
                [(c, f.alpha, f.residual_rms, f.ci)
                 for c, f in sorted(fits.items())])


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def emit_calibration_json(record: ResultRecord) -> str:
    return _json_text({
        "kind": "calibration",
        "config_hash": record.hash,
        "seed": record.seed,
        "rows": [calibration_row_dict(r) for r in record.calibration],
    })


def emit_curve_json(record: ResultRecord, channel: str) -> str:
    return _json_text({
        "kind": "curve",
        "channel": channel,
        "config_hash": record.hash,
        "seed": record.seed,
        "points": [data_point_dict(p) for p in record.curves[channel]],
    })


def emit_fits_json(record: ResultRecord) -> str:
    return _json_text({
        "kind": "fits",
        "config_hash": record.hash,
        "seed": record.seed,
        "fits": [fit_dict(c, f) for c, f in sorted(record.fits.items())],
    })


def load_json(path: str, kind: str, expect_hash: str | None = None) -> dict:
    """Read one emitted JSON file, checking its kind and config hash."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if data.get("kind") != kind:
        raise ConfigError(
            f"{path}: expected a {kind!r} file, found {data.get('kind')!r}")
    if expect_hash is not None and data.get("config_hash") != expect_hash:
        raise ConfigError(
            f"{path}: config hash {data.get('config_hash')!r} does not match "
            f"the current configuration {expect_hash!r}; "
            "refusing to mix results from different configurations")
    return data


# ---------------------------------------------------------------------------
# Output-directory layout


def calibration_paths(out_dir: str) -> tuple[str, str]:
    return (os.path.join(out_dir, "calibration.csv"),
            os.path.join(out_dir, "calibration.json"))


def curve_paths(out_dir: str, channel: str) -> tuple[str, str]:
    return (os.path.join(out_dir, f"curve_{channel}.csv"),
            os.path.join(out_dir, f"curve_{channel}.json"))


def fits_paths(out_dir: str) -> tuple[str, str]:
    return (os.path.join(out_dir, "fits.csv"),
            os.path.join(out_dir, "fits.json"))


def write_calibration(record: ResultRecord, out_dir: str) -> list[str]:
    csv_path, json_path = calibration_paths(out_dir)
    atomic_write_text(csv_path, emit_calibration_csv(record.calibration))
    atomic_write_text(json_path, emit_calibration_json(record))
    return [csv_path, json_path]


def write_curves(record: ResultRecord, out_dir: str) -> list[str]:
    written = []
    for channel in sorted(record.curves):
        csv_path, json_path = curve_paths(out_dir, channel)
        atomic_write_text(csv_path, emit_curve_csv(record.curves[channel]))
        atomic_write_text(json_path, emit_curve_json(record, channel))
        written.extend([csv_path, json_path])
    return written


def write_fits(record: ResultRecord, out_dir: str) -> list[str]:
    csv_path, json_path = fits_paths(out_dir)
    atomic_write_text(csv_path, emit_fits_csv(record.fits))
    atomic_write_text(json_path, emit_fits_json(record))
    return [csv_path, json_path]


# ---------------------------------------------------------------------------
# Combined report


_GNUPLOT_TEMPLATE = """\
# Transmission vs turbulence strength, one curve per channel, with the
# fitted erf model. Render with: gnuplot report.gnuplot
set datafile separator ","
set terminal svg size 720,540 dynamic
set output "report.svg"
set xlabel "sigma_R^2"
set ylabel "normalized counts"
set yrange [0:1.1]
set key bottom left
plot \\
{plot_lines}
"""


def report_paths(out_dir: str) -> dict[str, str]:
    return {
        "json": os.path.join(out_dir, "report.json"),
        "csv": os.path.join(out_dir, "report.csv"),
        "models": os.path.join(out_dir, "report_models.csv"),
        "script": os.path.join(out_dir, "report.gnuplot"),
    }


def write_report(record: ResultRecord, out_dir: str,
                 model_curves: Mapping[str, Sequence[tuple[float, float]]]
                 ) -> list[str]:
    """Emit the combined dataset: measured curves, fitted parameters,
    dense fitted-model curves, and a gnuplot script that draws them."""
    paths = report_paths(out_dir)

    rows = []
    for channel in sorted(record.curves):
        for p in record.curves[channel]:
            rows.append((channel, p.sigma_R2, p.mean, p.std_error,
                         p.n_samples))
    atomic_write_text(paths["csv"], _csv(
        ("channel",) + CURVE_COLUMNS, rows))

    model_rows = []
    for channel in sorted(model_curves):
        for sigma, value in model_curves[channel]:
            model_rows.append((channel, sigma, value))
    atomic_write_text(paths["models"],
                      _csv(("channel", "sigma_R2", "model"), model_rows))

    payload = record._payload()
    payload["kind"] = "report"
    payload["content_checksum"] = record.content_checksum()
    payload["model_curves"] = {
        c: [{"sigma_R2": s, "model": v} for s, v in pts]
        for c, pts in sorted(model_curves.items())
    }
    atomic_write_text(paths["json"], _json_text(payload))

    elements = []
    for channel in sorted(record.curves):
        cond = f'(strcol(1) eq "{channel}")'
        elements.append(
            f'"report.csv" using ($2):({cond} ? $3 : 1/0):4 '
            f'with yerrorbars title "{channel}"')
        elements.append(
            f'"report_models.csv" using ($2):({cond} ? $3 : 1/0) '
            f'with lines notitle')
    script = _GNUPLOT_TEMPLATE.format(
        plot_lines=", \\\n".join("  " + e for e in elements))
    atomic_write_text(paths["script"], script)
    return [paths["csv"], paths["models"], paths["json"], paths["script"]]
