"""Uniform linear array snapshot model and covariance construction.

A single narrowband source at angle theta illuminates an M-element ULA.
Each snapshot is

    y(t) = [a(theta) * b(t)] s(t) + n(t)        (elementwise product)

with steering vector ``a_m = exp(j 2 pi m spacing sin(theta))``, source
amplitude ``s(t)``, additive noise ``n(t)``, and an optional rain gain
vector ``b(t)`` redrawn independently per snapshot.  The ensemble
covariance is the Hadamard product

    R = sigma_s^2 a a^H  *  E[b b^H]  +  sigma_n^2 I,

which :func:`analytic_covariance` evaluates exactly; it is the
infinite-snapshot oracle for everything downstream.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distortion import (
    DistortionCovariance,
    ModelValidityWarning,
    RainScenario,
    sample_distortion,
)
from .seeding import (
    NOISE_STREAM,
    SIGNAL_STREAM,
    block_ranges,
    generator,
    standard_cscg,
)

__all__ = [
    "ArrayConfig",
    "SourceConfig",
    "SnapshotSet",
    "steering_vector",
    "synthesize_snapshots",
    "sample_covariance",
    "analytic_covariance",
]

# Aperture (in wavelengths) beyond which the distortion model is not trusted.
MAX_VALID_APERTURE = 8.0


@dataclass(frozen=True)
class ArrayConfig:
    """ULA geometry: element count, normalized spacing, carrier wavelength."""

    n_elements: int
    spacing: float  # element spacing over wavelength
    wavelength_m: float

    def __post_init__(self):
        if not isinstance(self.n_elements, int) or self.n_elements < 2:
            raise ValueError(f"n_elements must be an integer >= 2, got {self.n_elements!r}")
        if not (math.isfinite(self.spacing) and self.spacing > 0):
            raise ValueError(f"spacing must be positive, got {self.spacing!r}")
        if not (math.isfinite(self.wavelength_m) and self.wavelength_m > 0):
            raise ValueError(f"wavelength_m must be positive, got {self.wavelength_m!r}")
        if self.aperture_wavelengths > MAX_VALID_APERTURE:
            warnings.warn(
                f"aperture of {self.aperture_wavelengths:g} wavelengths exceeds the "
                f"{MAX_VALID_APERTURE:g}-wavelength validity limit of the distortion model",
                ModelValidityWarning,
                stacklevel=2,
            )
        if self.spacing > 0.5:
            warnings.warn(
                f"spacing {self.spacing:g} > 0.5 wavelengths aliases spatially; "
                "root polynomial angles are no longer unique",
                ModelValidityWarning,
                stacklevel=2,
            )

    @property
    def aperture_wavelengths(self) -> float:
        return (self.n_elements - 1) * self.spacing


@dataclass(frozen=True)
class SourceConfig:
    """Single far-field source: direction, signal power, and noise power."""

    theta_deg: float
    signal_power: float = 1.0
    noise_power: float = 0.0

    def __post_init__(self):
        if not (-90.0 < self.theta_deg < 90.0):
            raise ValueError(f"theta_deg must lie in (-90, 90), got {self.theta_deg!r}")
        if not (math.isfinite(self.signal_power) and self.signal_power > 0):
            raise ValueError(f"signal_power must be positive, got {self.signal_power!r}")
        if not (math.isfinite(self.noise_power) and self.noise_power >= 0):
            raise ValueError(f"noise_power must be nonnegative, got {self.noise_power!r}")


@dataclass(frozen=True)
class SnapshotSet:
    """Complex M x T measurement block plus the configuration that made it."""

    data: np.ndarray
    seed: int
    array: Optional[ArrayConfig] = None
    source: Optional[SourceConfig] = None
    scenario: Optional[RainScenario] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[1] < 1:
            raise ValueError(f"data must be M x T with T >= 1, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("snapshot data contains non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def n_elements(self) -> int:
        return self.data.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.data.shape[1]


def steering_vector(array: ArrayConfig, theta_deg: float) -> np.ndarray:
    """Unit-modulus phase progression of a plane wave from ``theta_deg``.

    Element 0 is the phase reference; broadside is 0 degrees.
    """
    if not (-90.0 < theta_deg < 90.0):
        raise ValueError(f"theta_deg must lie in (-90, 90), got {theta_deg!r}")
    phase = 2.0 * np.pi * array.spacing * np.sin(np.deg2rad(theta_deg))
    return np.exp(1j * phase * np.arange(array.n_elements))


def synthesize_snapshots(array: ArrayConfig, source: SourceConfig,
                         distortion: Optional[DistortionCovariance],
                         n_snapshots: int, seed,
                         scenario: Optional[RainScenario] = None) -> SnapshotSet:
    """Generate ``n_snapshots`` measurements of the (optionally rained-on) ULA.

    Source amplitudes and noise are i.i.d. circularly symmetric complex
    Gaussian; the gain vector is drawn from ``distortion`` per snapshot,
    or all ones when ``distortion`` is None.  Signal, distortion, and
    noise use separate derived streams, so two calls with the same seed
    and different ``distortion`` share the exact same signal and noise
    realizations.
    """
    if n_snapshots < 1:
        raise ValueError(f"n_snapshots must be >= 1, got {n_snapshots!r}")
    if distortion is not None and distortion.n_elements != array.n_elements:
        raise ValueError(
            f"distortion covariance is {distortion.n_elements}-element, "
            f"array has {array.n_elements}"
        )
    m, t = array.n_elements, int(n_snapshots)
    a = steering_vector(array, source.theta_deg)

    signal = np.empty(t, dtype=complex)
    noise = np.empty((m, t), dtype=complex)
    for index, start, stop in block_ranges(t):
        n_cols = stop - start
        rng_s = generator(seed, SIGNAL_STREAM, index)
        signal[start:stop] = np.sqrt(source.signal_power) * standard_cscg(rng_s, n_cols)
        rng_n = generator(seed, NOISE_STREAM, index)
        noise[:, start:stop] = np.sqrt(source.noise_power) * standard_cscg(rng_n, (m, n_cols))

    gains = sample_distortion(distortion, t, seed) if distortion is not None else 1.0
    data = (a[:, None] * gains) * signal[None, :] + noise
    master = seed.entropy if isinstance(seed, np.random.SeedSequence) else int(seed)
    return SnapshotSet(data=data, seed=master, array=array, source=source,
                       scenario=scenario)


def sample_covariance(snapshots) -> np.ndarray:
    """Hermitian sample covariance ``(1/T) sum_t y(t) y(t)^H``.

    Accepts a :class:`SnapshotSet` or a raw complex M x T array.  The
    accumulated matrix is symmetrized as ``(A + A^H)/2`` to scrub rounding
    asymmetry.
    """
    data = snapshots.data if isinstance(snapshots, SnapshotSet) else np.asarray(snapshots)
    if data.ndim != 2 or data.shape[1] < 1:
        raise ValueError("need an M x T snapshot block with T >= 1")
    cov = (data @ data.conj().T) / data.shape[1]
    return 0.5 * (cov + cov.conj().T)


def analytic_covariance(array: ArrayConfig, source: SourceConfig,
                        distortion: Optional[DistortionCovariance] = None) -> np.ndarray:
    """Exact ensemble covariance of the snapshot model.

    ``sigma_s^2 a a^H`` Hadamard the gain covariance (when present), plus
    ``sigma_n^2 I``.
    """
    a = steering_vector(array, source.theta_deg)
    cov = source.signal_power * np.outer(a, a.conj())
    if distortion is not None:
        if distortion.n_elements != array.n_elements:
            raise ValueError(
                f"distortion covariance is {distortion.n_elements}-element, "
                f"array has {array.n_elements}"
            )
        cov = cov * distortion.matrix
    return cov + source.noise_power * np.eye(array.n_elements)
