"""Subspace direction-of-arrival estimators: spectral MUSIC and root-MUSIC.

Both operate on an M x M Hermitian covariance (raw, distorted, or the
unit-modulus phase matrix produced by calibration) and the noise
subspace of its eigendecomposition.  Spectral MUSIC scans a dense angle
grid; root-MUSIC factors the same quadratic form into a polynomial and
reads angles off its roots, which avoids grid quantization on uniform
linear arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

__all__ = [
    "SubspaceDecomposition",
    "SpectrumResult",
    "RootMusicEstimate",
    "subspace",
    "default_angle_grid",
    "music_spectrum",
    "root_music",
    "peak_prominence",
]

# Pseudo-spectrum denominators below this are clamped (exact-orthogonality
# case of a noiseless on-grid source).
DENOMINATOR_FLOOR = 1e-15

# Eigenvalue gap, relative to the largest eigenvalue, below which the
# signal/noise split is flagged as degenerate.
GAP_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SubspaceDecomposition:
    """Eigendecomposition split into signal and noise subspaces."""

    eigenvalues: np.ndarray  # descending
    noise_subspace: np.ndarray  # M x (M - n_sources), orthonormal columns
    n_sources: int
    degenerate_gap: bool


@dataclass(frozen=True)
class SpectrumResult:
    """Pseudo-spectrum on a grid, normalized so the maximum sits at 0 dB."""

    angles_deg: np.ndarray
    spectrum_db: np.ndarray
    peak_angles_deg: np.ndarray  # local maxima, strongest first

    def __post_init__(self):
        if np.any(np.diff(self.angles_deg) <= 0):
            raise ValueError("angle grid must be strictly increasing")
        if not np.all(np.isfinite(self.spectrum_db)):
            raise ValueError("spectrum contains non-finite values")


@dataclass(frozen=True)
class RootMusicEstimate:
    """One root-MUSIC angle; invalid when the root phase maps outside +-90 deg."""

    theta_deg: float
    valid: bool
    root: complex


def _hermitian_part(matrix) -> np.ndarray:
    a = np.asarray(matrix, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return 0.5 * (a + a.conj().T)


def subspace(covariance, n_sources: int) -> SubspaceDecomposition:
    """Split a Hermitian matrix into signal and noise eigenspaces.

    The noise subspace spans the eigenvectors of the M - n_sources
    smallest eigenvalues.  When the eigenvalue gap at the split is
    smaller than ``GAP_TOLERANCE`` times the spectral radius the
    decomposition is still returned (ordering is deterministic) but
    flagged degenerate.
    """
    a = _hermitian_part(covariance)
    m = a.shape[0]
    if not isinstance(n_sources, int) or not 1 <= n_sources < m:
        raise ValueError(f"n_sources must satisfy 1 <= K < {m}, got {n_sources!r}")
    w, v = np.linalg.eigh(a)  # ascending
    eigenvalues = w[::-1]
    noise = v[:, : m - n_sources]
    scale = max(float(np.max(np.abs(w))), 1.0)
    gap = eigenvalues[n_sources - 1] - eigenvalues[n_sources]
    return SubspaceDecomposition(
        eigenvalues=eigenvalues,
        noise_subspace=noise,
        n_sources=n_sources,
        degenerate_gap=bool(gap < GAP_TOLERANCE * scale),
    )


def default_angle_grid(step_deg: float = 0.1, margin_deg: float = 0.1) -> np.ndarray:
    """Uniform grid over (-90, 90) exclusive, endpoints inset by ``margin_deg``."""
    half = 90.0 - margin_deg
    n = int(round(2 * half / step_deg)) + 1
    return np.linspace(-half, half, n)


def music_spectrum(covariance, n_sources: int, spacing: float = 0.5,
                   grid_deg: np.ndarray | None = None) -> SpectrumResult:
    """MUSIC pseudo-spectrum ``1 / ||En^H a(theta)||^2`` over an angle grid.

    Values are converted to dB and max-normalized to 0 dB.  Peaks are the
    strict local maxima of the spectrum, strongest first; if the spectrum
    is monotone (no interior maximum) the global argmax is reported.
    """
    grid = default_angle_grid() if grid_deg is None else np.asarray(grid_deg, dtype=float)
    dec = subspace(covariance, n_sources)
    m = dec.noise_subspace.shape[0]
    steering = np.exp(
        2j * np.pi * spacing * np.arange(m)[:, None] * np.sin(np.deg2rad(grid))[None, :]
    )
    projection = dec.noise_subspace.conj().T @ steering
    denom = np.maximum(np.sum(np.abs(projection) ** 2, axis=0), DENOMINATOR_FLOOR)
    power = 1.0 / denom
    spectrum_db = 10.0 * np.log10(power / power.max())
    peak_idx, _ = find_peaks(spectrum_db)
    if peak_idx.size == 0:
        peak_idx = np.array([int(np.argmax(spectrum_db))])
    order = np.argsort(spectrum_db[peak_idx])[::-1]
    return SpectrumResult(
        angles_deg=grid,
        spectrum_db=spectrum_db,
        peak_angles_deg=grid[peak_idx[order]],
    )


def _root_polynomial(noise_subspace: np.ndarray) -> np.ndarray:
    """Coefficients (highest degree first) of z^(M-1) a^H(1/z*) C a(z)."""
    c = noise_subspace @ noise_subspace.conj().T
    m = c.shape[0]
    diag_sums = np.array([np.diagonal(c, k).sum() for k in range(-(m - 1), m)])
    return diag_sums[::-1]


def root_music(covariance, n_sources: int, spacing: float = 0.5) -> list[RootMusicEstimate]:
    """Root-MUSIC angle estimates for a uniform linear array.

    Forms the degree 2(M-1) polynomial from the noise-subspace projector's
    diagonal sums, roots it (companion-matrix eigenvalues via
    ``numpy.roots``), keeps the ``n_sources`` roots inside the unit circle
    that lie closest to it, and maps each root phase ``omega`` to
    ``theta = arcsin(omega / (2 pi spacing))``.  A root whose phase cannot
    be mapped (possible when spacing < 0.5 under severe distortion) is
    returned with ``valid=False``.
    """
    if not (math.isfinite(spacing) and spacing > 0):
        raise ValueError(f"spacing must be positive, got {spacing!r}")
    dec = subspace(covariance, n_sources)
    roots = np.roots(_root_polynomial(dec.noise_subspace))
    inside = roots[np.abs(roots) < 1.0]
    outside = roots[np.abs(roots) >= 1.0]
    ordered = np.concatenate([
        inside[np.argsort(1.0 - np.abs(inside))],
        outside[np.argsort(np.abs(outside) - 1.0)],
    ])
    estimates = []
    for root in ordered[:n_sources]:
        sin_theta = np.angle(root) / (2.0 * np.pi * spacing)
        if abs(sin_theta) <= 1.0 + 1e-12:
            theta = float(np.degrees(np.arcsin(np.clip(sin_theta, -1.0, 1.0))))
            estimates.append(RootMusicEstimate(theta, True, complex(root)))
        else:
            estimates.append(RootMusicEstimate(float("nan"), False, complex(root)))
    return estimates


def peak_prominence(spectrum: SpectrumResult) -> float:
    """dB gap between the main peak and the highest secondary local maximum.

    Infinite when the spectrum has no secondary local maximum.
    """
    peak_idx, _ = find_peaks(spectrum.spectrum_db)
    main = float(np.max(spectrum.spectrum_db))
    secondary = [float(v) for v in spectrum.spectrum_db[peak_idx] if v < main - 1e-12]
    if not secondary:
        return float("inf")
    return main - max(secondary)
