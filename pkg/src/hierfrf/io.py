"""CSV and JSON readers/writers.

FRF files: header ``freq_hz,real[,imag][,temperature_c]``; time series:
``time_s,value``. Numbers are written with 17 significant digits so a
write/read round trip reproduces doubles exactly. Files are UTF-8 with LF
line endings.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .modal import TWO_PI
from .sampler import Trace, format_float
from .signal import FrfObservations, TimeSeries


class DataFormatError(ValueError):
    """A data file is missing, malformed, or has the wrong columns."""


FRF_COLUMNS = ("freq_hz", "real", "imag", "temperature_c")


def _read_table(path) -> tuple[list, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    try:
        values = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise DataFormatError(f"{path}: non-numeric entry ({exc})") from None
    if values.size == 0:
        values = np.empty((0, len(header)))
    if values.shape[1] != len(header):
        raise DataFormatError(f"{path}: rows do not match the header")
    return header, values


def _write_table(path, header, columns):
    path = Path(path)
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(format_float(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_frf_csv(path, freq_hz, real, imag=None, temperature=None):
    freq_hz = np.asarray(freq_hz, dtype=float)
    header, cols = ["freq_hz", "real"], [freq_hz, np.asarray(real, dtype=float)]
    if imag is not None:
        header.append("imag")
        cols.append(np.asarray(imag, dtype=float))
    if temperature is not None:
        header.append("temperature_c")
        cols.append(np.full(freq_hz.shape, float(temperature)))
    _write_table(path, header, cols)


def read_frf_csv(path, require_temperature: bool = False) -> FrfObservations:
    """FRF file as observations in rad/s (complex value when ``imag`` exists)."""
    header, values = _read_table(path)
    if header[:2] != ["freq_hz", "real"] or not set(header) <= set(FRF_COLUMNS):
        raise DataFormatError(f"{path}: expected header freq_hz,real[,imag][,temperature_c]")
    col = {h: values[:, i] for i, h in enumerate(header)}
    if len(values) == 0:
        raise DataFormatError(f"{path}: no rows")
    value = col["real"] + 1j * col["imag"] if "imag" in col else col["real"].copy()
    temperature = None
    if "temperature_c" in col:
        temps = np.unique(col["temperature_c"])
        if temps.size != 1:
            raise DataFormatError(f"{path}: one temperature per file is expected")
        temperature = float(temps[0])
    elif require_temperature:
        raise DataFormatError(f"{path}: missing temperature_c column")
    if not np.all(np.isfinite(col["freq_hz"])) or np.any(col["freq_hz"] < 0):
        raise DataFormatError(f"{path}: frequencies must be finite and non-negative")
    return FrfObservations(TWO_PI * col["freq_hz"], value, temperature=temperature,
                           name=Path(path).stem)


def write_time_series_csv(path, series: TimeSeries):
    _write_table(path, ["time_s", "value"], [series.time, series.samples])


def read_time_series_csv(path) -> TimeSeries:
    header, values = _read_table(path)
    if header != ["time_s", "value"]:
        raise DataFormatError(f"{path}: expected header time_s,value")
    if len(values) < 2:
        raise DataFormatError(f"{path}: need at least two samples")
    dt = np.diff(values[:, 0])
    if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-6, atol=0):
        raise DataFormatError(f"{path}: samples must be evenly spaced in time")
    return TimeSeries(values[:, 1], 1.0 / float(np.mean(dt)))


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"{path}: no such file")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc})") from None


def read_trace_csv(path) -> Trace:
    """Trace written by :meth:`Trace.write_csv` (constrained values only)."""
    header, values = _read_table(path)
    if header[:4] != ["chain", "draw", "divergent", "energy"]:
        raise DataFormatError(f"{path}: not a trace file")
    chains = values[:, 0].astype(int)
    ids = np.unique(chains)
    n = np.sum(chains == ids[0])
    if values.shape[0] != n * ids.size:
        raise DataFormatError(f"{path}: chains have unequal lengths")
    order = np.lexsort((values[:, 1], chains))
    v = values[order].reshape(ids.size, n, -1)
    return Trace.from_constrained(header[4:], v[:, :, 4:], divergent=v[:, :, 2] > 0,
                                  energy=v[:, :, 3])


def ensure_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataFormatError(f"cannot create output directory {path}: {exc}") from None
    probe = path / ".write_probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise DataFormatError(f"output directory {path} is not writable: {exc}") from None
    return path


def frequencies_hz(obs: FrfObservations) -> np.ndarray:
    return obs.frequency / TWO_PI


def training_mask(test: FrfObservations, train: Optional[FrfObservations],
                  rtol: float = 1e-12) -> np.ndarray:
    """True for test lines that do not coincide with a training line."""
    if train is None:
        return np.ones(len(test), dtype=bool)
    f_test = test.frequency
    hit = np.zeros(len(test), dtype=bool)
    for f in train.frequency:
        hit |= np.isclose(f_test, f, rtol=rtol, atol=0.0)
    return ~hit
