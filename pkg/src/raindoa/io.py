"""File formats for covariances, snapshots, histograms, spectra, and records.

Every text artifact starts with ``#``-prefixed comment lines holding a
JSON metadata object (the generating configuration), so a result file
is self-describing and reruns can be compared byte for byte.  Nothing
here writes timestamps or absolute paths.

Formats
-------
covariance CSV   one matrix row per line, each complex cell as adjacent
                 ``re,im`` columns (2M numbers per line)
snapshot binary  little-endian header ``<QQQ`` = (M, T, seed) followed by
                 M*T*2 little-endian float64 (re, im interleaved,
                 row-major)
snapshot CSV     one snapshot per line, columns ``e<k>_re, e<k>_im``
histogram CSV    ``bin_center, density``
spectrum CSV     ``angle_deg, pseudo_spectrum_db``
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .arrays import SnapshotSet
from .distortion import Histogram
from .estimators import SpectrumResult

__all__ = [
    "metadata_lines",
    "read_metadata",
    "write_covariance_csv",
    "read_covariance_csv",
    "write_snapshots",
    "read_snapshots",
    "write_snapshots_csv",
    "write_histogram_csv",
    "write_spectrum_csv",
    "write_json",
]

_SNAPSHOT_HEADER = struct.Struct("<QQQ")


def _float_cell(value: float) -> str:
    return format(float(value), ".17g")


def metadata_lines(metadata: dict | None) -> str:
    """Comment block encoding ``metadata`` as one JSON object."""
    if not metadata:
        return ""
    return "# " + json.dumps(metadata, sort_keys=True) + "\n"


def read_metadata(path) -> dict | None:
    """Metadata object from the leading comment line, if present."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    if first.startswith("# "):
        return json.loads(first[2:])
    return None


def write_covariance_csv(path, matrix, metadata: dict | None = None) -> None:
    a = np.asarray(matrix, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(metadata_lines(metadata))
        for row in a:
            cells = []
            for value in row:
                cells.append(_float_cell(value.real))
                cells.append(_float_cell(value.imag))
            fh.write(",".join(cells) + "\n")


def read_covariance_csv(path) -> np.ndarray:
    raw = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    n = raw.shape[0]
    if raw.shape[1] != 2 * n:
        raise ValueError(
            f"covariance file is {raw.shape[0]} x {raw.shape[1]}; expected N x 2N re,im pairs"
        )
    return raw[:, 0::2] + 1j * raw[:, 1::2]


def write_snapshots(path, snapshots: SnapshotSet) -> None:
    m, t = snapshots.data.shape
    interleaved = np.empty((m, t, 2))
    interleaved[:, :, 0] = snapshots.data.real
    interleaved[:, :, 1] = snapshots.data.imag
    with open(path, "wb") as fh:
        fh.write(_SNAPSHOT_HEADER.pack(m, t, int(snapshots.seed)))
        fh.write(interleaved.astype("<f8").tobytes())


def read_snapshots(path) -> SnapshotSet:
    raw = Path(path).read_bytes()
    m, t, seed = _SNAPSHOT_HEADER.unpack_from(raw)
    expected = _SNAPSHOT_HEADER.size + m * t * 2 * 8
    if len(raw) != expected:
        raise ValueError(f"snapshot file is {len(raw)} bytes; header implies {expected}")
    flat = np.frombuffer(raw, dtype="<f8", offset=_SNAPSHOT_HEADER.size)
    interleaved = flat.reshape(m, t, 2)
    return SnapshotSet(data=interleaved[:, :, 0] + 1j * interleaved[:, :, 1], seed=seed)


def write_snapshots_csv(path, snapshots: SnapshotSet, metadata: dict | None = None) -> None:
    m, t = snapshots.data.shape
    columns = ",".join(f"e{k}_re,e{k}_im" for k in range(m))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(metadata_lines(metadata))
        fh.write("# " + columns + "\n")
        for snap in range(t):
            cells = []
            for k in range(m):
                cells.append(_float_cell(snapshots.data[k, snap].real))
                cells.append(_float_cell(snapshots.data[k, snap].imag))
            fh.write(",".join(cells) + "\n")


def write_histogram_csv(path, histogram: Histogram, metadata: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(metadata_lines(metadata))
        fh.write("# bin_center,density\n")
        for center, density in zip(histogram.centers, histogram.density):
            fh.write(f"{_float_cell(center)},{_float_cell(density)}\n")


def write_spectrum_csv(path, spectrum: SpectrumResult, metadata: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(metadata_lines(metadata))
        fh.write("# angle_deg,pseudo_spectrum_db\n")
        for angle, value in zip(spectrum.angles_deg, spectrum.spectrum_db):
            fh.write(f"{_float_cell(angle)},{_float_cell(value)}\n")


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
