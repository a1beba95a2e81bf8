"""Statistical model of rain-induced phase/amplitude distortion.

A plane wave crossing a rain volume picks up a random complex gain at
every point of the wavefront.  Two points separated by a distance ``d``
see gains ``b1``, ``b2`` that are zero-mean, jointly circularly
symmetric complex Gaussian with

    E[|b1|^2] = E[|b2|^2] = 2*lambda11,      E[b1 conj(b2)] = 2*lambda13,

so the pair is fully described by the decorrelation parameter
``alpha = lambda13 / lambda11`` in (0, 1].  An empirical model gives
alpha as a function of the propagation range ``R``, the separation in
wavelengths ``d/lambda0``, and three rain-rate-dependent coefficients
``a1, a2, a3``:

    alpha = exp(-a1 * (R / (a2*R + 1)) * ((d/l0) / (a3*(d/l0) + 1)))

This module provides the alpha model, a least-squares fit of its
coefficients from measured anchors, construction of the resulting
real symmetric Toeplitz gain covariance across an array, exact sampling
of correlated gain vectors, and empirical phase-difference /
magnitude-ratio statistics of a gain pair.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import toeplitz
from scipy.optimize import least_squares

from .seeding import DISTORTION_STREAM, block_ranges, generator, standard_cscg

if TYPE_CHECKING:
    from .arrays import ArrayConfig

__all__ = [
    "ModelValidityWarning",
    "CoefficientFitError",
    "AlphaCoeffs",
    "RainScenario",
    "AlphaFit",
    "AnchorObservation",
    "DECORRELATION_ANCHORS",
    "DistortionCovariance",
    "Histogram",
    "FieldPairStats",
    "alpha_empirical",
    "fit_alpha_coeffs",
    "reference_coeffs",
    "build_distortion_covariance",
    "sample_distortion",
    "empirical_pair_pdfs",
    "scenario_to_dict",
    "scenario_from_dict",
]

# Validity window of the empirical alpha model.
MAX_VALID_RANGE_M = 500.0
SEPARATION_VALIDITY = (0.1, 8.0)

# Eigenvalues of a covariance may dip this far below zero before the
# matrix is rejected as indefinite.
PSD_TOLERANCE = 1e-10


class ModelValidityWarning(UserWarning):
    """Inputs are outside the window where the empirical model is trusted."""


class CoefficientFitError(RuntimeError):
    """The alpha-coefficient fit is underdetermined or did not converge."""


@dataclass(frozen=True)
class AlphaCoeffs:
    """Coefficients of the empirical decorrelation model."""

    a1: float
    a2: float
    a3: float

    def __post_init__(self):
        for name in ("a1", "a2", "a3"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite real, got {value!r}")


@dataclass(frozen=True)
class RainScenario:
    """Propagation scenario that fixes the distortion strength.

    Parameters
    ----------
    rain_rate_mm_hr : float
        Rain rate in mm/hr.  Enters only through the fitted coefficients;
        carried for bookkeeping and output headers.
    range_m : float
        Propagation range R through the rain volume, in meters.
    coeffs : AlphaCoeffs
        Empirical model coefficients for this rain rate and carrier.
    wavelength_m : float
        Carrier wavelength lambda0 in meters.
    """

    rain_rate_mm_hr: float
    range_m: float
    coeffs: AlphaCoeffs
    wavelength_m: float

    def __post_init__(self):
        if not (math.isfinite(self.rain_rate_mm_hr) and self.rain_rate_mm_hr > 0):
            raise ValueError(f"rain_rate_mm_hr must be positive, got {self.rain_rate_mm_hr!r}")
        if not (math.isfinite(self.range_m) and self.range_m > 0):
            raise ValueError(f"range_m must be positive, got {self.range_m!r}")
        if not (math.isfinite(self.wavelength_m) and self.wavelength_m > 0):
            raise ValueError(f"wavelength_m must be positive, got {self.wavelength_m!r}")


@dataclass(frozen=True)
class AlphaFit:
    """Result of a coefficient fit: coefficients plus the log-residual norm."""

    coeffs: AlphaCoeffs
    residual: float
    n_observations: int


@dataclass(frozen=True)
class AnchorObservation:
    """One measured decorrelation value at a known geometry and rain rate."""

    label: str
    rain_rate_mm_hr: float
    range_m: float
    d_over_lambda0: float
    alpha: float

    @property
    def observation(self) -> tuple:
        """``(range_m, d_over_lambda0, alpha)`` triple for the fitter."""
        return (self.range_m, self.d_over_lambda0, self.alpha)


#: Measured decorrelation anchors used by the bundled reference profiles.
#: Cases (i)-(iii) vary range and separation at 25 mm/hr; case (iv) doubles
#: the rain rate at the reference geometry.
DECORRELATION_ANCHORS = (
    AnchorObservation("i", 25.0, 200.0, 4.0, 0.6470),
    AnchorObservation("ii", 25.0, 400.0, 4.0, 0.6217),
    AnchorObservation("iii", 25.0, 200.0, 8.0, 0.5598),
    AnchorObservation("iv", 50.0, 200.0, 4.0, 0.4994),
)


def alpha_empirical(scenario: RainScenario, separation_m: float) -> float:
    """Decorrelation parameter of two wavefront points ``separation_m`` apart.

    Strictly decreasing in both range and separation; approaches 1 as the
    range or separation goes to zero.  A :class:`ModelValidityWarning` is
    issued when the range exceeds 500 m or the separation in wavelengths
    falls outside [0.1, 8].

    Parameters
    ----------
    scenario : RainScenario
    separation_m : float
        Wavefront point separation d > 0 in meters.

    Returns
    -------
    float
        alpha in (0, 1].
    """
    if not (math.isfinite(separation_m) and separation_m > 0):
        raise ValueError(f"separation must be positive, got {separation_m!r}")
    u = separation_m / scenario.wavelength_m
    if scenario.range_m > MAX_VALID_RANGE_M or not (
        SEPARATION_VALIDITY[0] <= u <= SEPARATION_VALIDITY[1]
    ):
        warnings.warn(
            f"alpha model evaluated outside its validity window "
            f"(range {scenario.range_m:g} m, separation {u:g} wavelengths); "
            f"valid for range <= {MAX_VALID_RANGE_M:g} m and separation in "
            f"[{SEPARATION_VALIDITY[0]:g}, {SEPARATION_VALIDITY[1]:g}]",
            ModelValidityWarning,
            stacklevel=2,
        )
    c = scenario.coeffs
    range_term = scenario.range_m / (c.a2 * scenario.range_m + 1.0)
    sep_term = u / (c.a3 * u + 1.0)
    return float(np.exp(-c.a1 * range_term * sep_term))


def _fit_design(observations):
    obs = [(float(r), float(u), float(a)) for r, u, a in observations]
    for r, u, a in obs:
        if not (math.isfinite(r) and r > 0 and math.isfinite(u) and u > 0):
            raise ValueError(f"observations need positive range and separation, got ({r}, {u})")
        if not (0.0 < a < 1.0):
            raise ValueError(f"alpha targets must lie in (0, 1), got {a}")
    if len({(r, u) for r, u, _ in obs}) != len(obs):
        raise ValueError("observations must have distinct (range, separation) pairs")
    ranges = np.array([r for r, _, _ in obs])
    seps = np.array([u for _, u, _ in obs])
    targets = -np.log([a for _, _, a in obs])
    return ranges, seps, targets


def fit_alpha_coeffs(observations, fix_a2: float | None = None,
                     fix_a3: float | None = None) -> AlphaFit:
    """Fit ``(a1, a2, a3)`` to measured ``(range_m, d/lambda0, alpha)`` triples.

    Minimizes the squared residual of log(alpha).  For a consistent,
    exactly determined observation set the residual vanishes to solver
    precision.  ``a2`` and/or ``a3`` may be pinned to known values, which
    lowers the number of observations required accordingly; this is how a
    coefficient triple for a new rain rate is derived from a single anchor
    under the approximation that ``a2``/``a3`` do not change with rate.

    Raises
    ------
    CoefficientFitError
        If the set is underdetermined (too few observations, or no
        variation in range/separation for a free coefficient) or the
        solver fails to converge to finite positive coefficients.
    """
    ranges, seps, targets = _fit_design(observations)
    n_free = 1 + (fix_a2 is None) + (fix_a3 is None)
    if len(targets) < n_free:
        raise CoefficientFitError(
            f"{len(targets)} observation(s) cannot determine {n_free} free coefficient(s)"
        )
    if fix_a2 is None and np.unique(ranges).size < 2:
        raise CoefficientFitError("a2 is free but all observations share one range")
    if fix_a3 is None and np.unique(seps).size < 2:
        raise CoefficientFitError("a3 is free but all observations share one separation")

    def residuals(a2, a3):
        w = (ranges / (a2 * ranges + 1.0)) * (seps / (a3 * seps + 1.0))
        a1 = float(np.dot(w, targets) / np.dot(w, w))
        return a1 * w - targets, a1

    if fix_a2 is not None and fix_a3 is not None:
        res, a1 = residuals(fix_a2, fix_a3)
        best = (float(np.linalg.norm(res)), a1, fix_a2, fix_a3)
    else:
        # a1 is eliminated analytically; search the remaining one or two
        # coefficients from a log-spaced grid of starts.
        def pack(x):
            i = 0
            if fix_a2 is None:
                a2 = x[i]
                i += 1
            else:
                a2 = fix_a2
            a3 = x[i] if fix_a3 is None else fix_a3
            return a2, a3

        def fun(x):
            return residuals(*pack(x))[0]

        starts_a2 = np.logspace(-5, 0, 6) if fix_a2 is None else [None]
        starts_a3 = np.logspace(-4, 1, 6) if fix_a3 is None else [None]
        best = None
        for s2 in starts_a2:
            for s3 in starts_a3:
                x0 = [v for v in (s2, s3) if v is not None]
                try:
                    sol = least_squares(
                        fun, x0, bounds=(1e-14, np.inf),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15,
                    )
                except ValueError:
                    continue
                res, a1 = residuals(*pack(sol.x))
                cand = (float(np.linalg.norm(res)), a1, *pack(sol.x))
                if best is None or cand[0] < best[0]:
                    best = cand
        if best is None:
            raise CoefficientFitError("coefficient search failed from every start")

    norm, a1, a2, a3 = best
    if not all(math.isfinite(v) and v > 0 for v in (a1, a2, a3)):
        raise CoefficientFitError(f"fit produced invalid coefficients ({a1}, {a2}, {a3})")
    return AlphaFit(AlphaCoeffs(a1, a2, a3), residual=norm, n_observations=len(targets))


def reference_coeffs(rain_rate_mm_hr: float) -> AlphaCoeffs:
    """Coefficient triple fitted from the bundled anchors.

    25 mm/hr uses the three independent anchors directly.  50 mm/hr refits
    ``a1`` on its single anchor while sharing ``a2``/``a3`` with the
    25 mm/hr fit; the shared terms are an approximation, documented here,
    that is required because only one anchor exists at that rate.
    """
    anchors25 = [a.observation for a in DECORRELATION_ANCHORS if a.rain_rate_mm_hr == 25.0]
    base = fit_alpha_coeffs(anchors25).coeffs
    if rain_rate_mm_hr == 25.0:
        return base
    if rain_rate_mm_hr == 50.0:
        anchors = [a.observation for a in DECORRELATION_ANCHORS if a.rain_rate_mm_hr == 50.0]
        return fit_alpha_coeffs(anchors, fix_a2=base.a2, fix_a3=base.a3).coeffs
    raise ValueError(
        f"no bundled anchors at {rain_rate_mm_hr!r} mm/hr; supply explicit coefficients"
    )


@dataclass(frozen=True)
class DistortionCovariance:
    """Real symmetric Toeplitz covariance of the gain vector across an array.

    ``first_row[0]`` is the per-element gain variance ``2*lambda11``;
    ``first_row[k]`` is the cross-covariance ``2*alpha_k*lambda11`` of
    elements ``k`` lags apart.
    """

    first_row: np.ndarray
    lambda11: float = field(default=None)  # inferred from first_row when omitted

    def __post_init__(self):
        row = np.asarray(self.first_row, dtype=float)
        if row.ndim != 1 or row.size < 1:
            raise ValueError("first_row must be a nonempty 1-d real vector")
        if not np.all(np.isfinite(row)):
            raise ValueError("first_row contains non-finite values")
        object.__setattr__(self, "first_row", row)
        lam = self.lambda11 if self.lambda11 is not None else row[0] / 2.0
        object.__setattr__(self, "lambda11", float(lam))
        if not (self.lambda11 > 0):
            raise ValueError(f"lambda11 must be positive, got {self.lambda11!r}")
        if not math.isclose(row[0], 2.0 * self.lambda11, rel_tol=1e-9, abs_tol=0.0):
            raise ValueError(
                f"diagonal {row[0]!r} is inconsistent with 2*lambda11 = {2 * self.lambda11!r}"
            )
        if np.any(np.abs(row[1:]) > row[0] * (1 + 1e-12)):
            raise ValueError("off-diagonal covariances exceed the variance")
        eigs = np.linalg.eigvalsh(self.matrix)
        tol = PSD_TOLERANCE * max(1.0, float(eigs[-1]))
        if eigs[0] < -tol:
            raise ValueError(f"covariance is not positive semidefinite (min eigenvalue {eigs[0]:g})")

    @property
    def n_elements(self) -> int:
        return self.first_row.size

    @property
    def matrix(self) -> np.ndarray:
        return toeplitz(self.first_row)

    @property
    def alphas(self) -> np.ndarray:
        """Normalized correlations ``first_row[1:] / first_row[0]``."""
        return self.first_row[1:] / self.first_row[0]


def build_distortion_covariance(scenario: RainScenario, array: "ArrayConfig",
                                lambda11: float = 0.5) -> DistortionCovariance:
    """Gain covariance across a uniform linear array under ``scenario``.

    Lag ``k`` sits at separation ``k * spacing * wavelength`` meters.  The
    default ``lambda11 = 1/2`` makes the per-element gain variance 1.
    """
    if array.wavelength_m != scenario.wavelength_m:
        raise ValueError(
            f"array wavelength {array.wavelength_m!r} differs from scenario "
            f"wavelength {scenario.wavelength_m!r}"
        )
    m = array.n_elements
    row = np.empty(m)
    row[0] = 2.0 * lambda11
    for k in range(1, m):
        sep = k * array.spacing * array.wavelength_m
        row[k] = 2.0 * lambda11 * alpha_empirical(scenario, sep)
    return DistortionCovariance(row, lambda11)


def _coloring_factor(matrix: np.ndarray) -> np.ndarray:
    """A with A @ A^H = matrix; Cholesky, or eigen square root when singular."""
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(matrix)
        tol = PSD_TOLERANCE * max(1.0, float(w[-1]))
        if w[0] < -tol:
            raise ValueError(
                f"covariance is not positive semidefinite (min eigenvalue {w[0]:g})"
            ) from None
        return v * np.sqrt(np.clip(w, 0.0, None))


def sample_distortion(cov: DistortionCovariance, n_snapshots: int, seed) -> np.ndarray:
    """Draw ``n_snapshots`` independent gain vectors with covariance ``cov``.

    Columns are i.i.d. circularly symmetric complex Gaussian with
    ``E[b b^H] = cov.matrix`` and ``E[b b^T] = 0``.  Deterministic in
    ``seed``; the sample stream is blocked so the result does not depend
    on how columns are partitioned across workers.

    Returns
    -------
    ndarray, shape (M, n_snapshots), complex
    """
    if n_snapshots < 1:
        raise ValueError(f"n_snapshots must be >= 1, got {n_snapshots!r}")
    factor = _coloring_factor(cov.matrix)
    m = cov.n_elements
    out = np.empty((m, n_snapshots), dtype=complex)
    for index, start, stop in block_ranges(n_snapshots):
        rng = generator(seed, DISTORTION_STREAM, index)
        out[:, start:stop] = factor @ standard_cscg(rng, (m, stop - start))
    return out


@dataclass(frozen=True)
class Histogram:
    """Uniform-bin density estimate; integrates to 1 over its edges."""

    edges: np.ndarray
    density: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def integral(self) -> float:
        return float(np.sum(self.density * np.diff(self.edges)))


@dataclass(frozen=True)
class FieldPairStats:
    """Empirical statistics of a correlated gain pair ``(b1, b2)``."""

    alpha: float
    n_samples: int
    phase_diff_histogram: Histogram  # angle(b1) - angle(b2), degrees in (-180, 180]
    magnitude_ratio_histogram: Histogram  # |b1/b2|, truncated support
    phase_mean_deg: float
    log_ratio_mean: float


def _density(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    counts, _ = np.histogram(values, bins=edges)
    total = counts.sum()
    if total == 0:
        raise ValueError("no samples fall inside the histogram support")
    return counts / (total * np.diff(edges))


def empirical_pair_pdfs(alpha: float, n_samples: int, n_bins: int = 181, seed=0,
                        ratio_bins: int = 200, ratio_max: float = 5.0) -> FieldPairStats:
    """Monte Carlo densities of the phase difference and magnitude ratio.

    Draws ``(b1, b2)`` jointly circularly symmetric complex Gaussian with
    unit variances and real cross-correlation ``alpha``, then histograms
    the wrapped phase difference over (-180, 180] degrees and the
    magnitude ratio over (0, ratio_max].  Ratio samples beyond
    ``ratio_max`` are discarded and the ratio density renormalized over
    the retained ones, so both histograms integrate to 1 exactly.

    Parameters
    ----------
    alpha : float
        Cross-correlation, strictly inside (0, 1).
    n_samples : int
        Number of pair draws, at least 10**4.
    n_bins : int
        Phase-difference bins; odd counts center a bin on 0 degrees.
    seed : int or numpy.random.SeedSequence
    ratio_bins, ratio_max : int, float
        Magnitude-ratio binning.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie strictly inside (0, 1), got {alpha!r}")
    if n_samples < 10_000:
        raise ValueError(f"n_samples must be at least 10^4, got {n_samples!r}")
    if n_bins < 3 or ratio_bins < 3:
        raise ValueError("histograms need at least 3 bins")

    pair_cov = DistortionCovariance(np.array([1.0, alpha]), lambda11=0.5)
    b = sample_distortion(pair_cov, n_samples, seed)
    b1, b2 = b[0], b[1]

    phase_deg = np.degrees(np.angle(b1 * np.conj(b2)))
    phase_edges = np.linspace(-180.0, 180.0, n_bins + 1)
    phase_hist = Histogram(phase_edges, _density(phase_deg, phase_edges))

    ratio = np.abs(b1 / b2)
    ratio_edges = np.linspace(0.0, ratio_max, ratio_bins + 1)
    ratio_hist = Histogram(ratio_edges, _density(ratio[ratio <= ratio_max], ratio_edges))

    return FieldPairStats(
        alpha=float(alpha),
        n_samples=int(n_samples),
        phase_diff_histogram=phase_hist,
        magnitude_ratio_histogram=ratio_hist,
        phase_mean_deg=float(phase_deg.mean()),
        log_ratio_mean=float(np.log(ratio).mean()),
    )


def scenario_to_dict(scenario: RainScenario) -> dict:
    """Flat key-value form used by scenario config files."""
    return {
        "rain_rate_mm_hr": scenario.rain_rate_mm_hr,
        "range_m": scenario.range_m,
        "a1": scenario.coeffs.a1,
        "a2": scenario.coeffs.a2,
        "a3": scenario.coeffs.a3,
        "wavelength_m": scenario.wavelength_m,
    }


def scenario_from_dict(data: dict) -> RainScenario:
    return RainScenario(
        rain_rate_mm_hr=float(data["rain_rate_mm_hr"]),
        range_m=float(data["range_m"]),
        coeffs=AlphaCoeffs(float(data["a1"]), float(data["a2"]), float(data["a3"])),
        wavelength_m=float(data["wavelength_m"]),
    )
