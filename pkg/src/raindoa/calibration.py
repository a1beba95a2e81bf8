"""Hermitian-Toeplitz least-squares calibration of a distorted covariance.

An M x M Hermitian Toeplitz (HT) matrix is determined by 2M-1 real
coefficients in the orthogonal basis

    Sigma_0 = I,
    Sigma_m        (1 <= m <= M-1): ones on subdiagonals +m and -m,
    Sigma_{m+M-1}  (1 <= m <= M-1): +j on subdiagonal +m, -j on -m.

The calibration pipeline least-squares-projects a sample covariance onto
that span, reconstructs the fitted HT matrix, and splits it elementwise
into a unit-modulus phase matrix (which carries the direction
information and feeds the DoA estimators) and a nonnegative real
Toeplitz magnitude matrix (the distortion covariance estimate).

Because the basis is orthogonal with known Frobenius norms, the LS
solution reduces to per-subdiagonal averages of the real and imaginary
parts of the (Hermitian-symmetrized) input; that closed form is the
production path.  :func:`ht_project_dense` keeps the textbook route,
stacking vectorized basis matrices and applying a pseudo-inverse, as an
independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

__all__ = [
    "HTBasis",
    "ht_basis",
    "ht_project",
    "ht_project_dense",
    "reconstruct_ht",
    "decouple",
    "calibrate",
    "CalibrationOutput",
]


class HTBasis:
    """Orthogonal basis of M x M Hermitian Toeplitz matrices.

    Matrices are generated on demand; nothing is materialized until
    :meth:`matrix` or :meth:`stacked` is called.
    """

    def __init__(self, n_elements: int):
        if not isinstance(n_elements, int) or n_elements < 2:
            raise ValueError(f"basis needs n_elements >= 2, got {n_elements!r}")
        self.n_elements = n_elements

    @property
    def n_coefficients(self) -> int:
        return 2 * self.n_elements - 1

    def matrix(self, index: int) -> np.ndarray:
        """Basis matrix ``Sigma_index``."""
        m = self.n_elements
        if not 0 <= index < self.n_coefficients:
            raise ValueError(f"basis index {index} out of range [0, {self.n_coefficients})")
        if index == 0:
            return np.eye(m, dtype=complex)
        if index < m:
            lag = index
            fill_upper = 1.0
        else:
            lag = index - m + 1
            fill_upper = 1.0j
        out = np.zeros((m, m), dtype=complex)
        idx = np.arange(m - lag)
        out[idx, idx + lag] = fill_upper
        out[idx + lag, idx] = np.conj(fill_upper)
        return out

    def __iter__(self):
        return (self.matrix(i) for i in range(self.n_coefficients))

    def norms_squared(self) -> np.ndarray:
        """Frobenius norms squared: M for the identity, 2(M-lag) otherwise."""
        m = self.n_elements
        lag_norms = 2.0 * (m - np.arange(1, m))
        return np.concatenate(([float(m)], lag_norms, lag_norms))

    def stacked(self) -> np.ndarray:
        """Column-stacked ``vec`` matrix of the whole basis, M^2 x (2M-1)."""
        return np.column_stack([sigma.reshape(-1, order="F") for sigma in self])


def ht_basis(n_elements: int) -> HTBasis:
    """Construct the Hermitian-Toeplitz basis for ``n_elements``."""
    return HTBasis(n_elements)


def _as_square(matrix) -> np.ndarray:
    out = np.asarray(matrix, dtype=complex)
    if out.ndim != 2 or out.shape[0] != out.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {out.shape}")
    return out


def ht_project(matrix) -> tuple[np.ndarray, float]:
    """Least-squares coefficients of the nearest Hermitian Toeplitz matrix.

    Coefficient ``k`` (1 <= k <= M-1) is the mean of the real parts of the
    k-th superdiagonal of the Hermitian-symmetrized input; coefficient
    ``k + M - 1`` the mean of the imaginary parts; coefficient 0 the mean
    real diagonal.  Non-Hermitian input is symmetrized first, which is
    equivalent to keeping the real part of the complex LS solution.

    Returns
    -------
    coefficients : ndarray, shape (2M-1,)
    residual : float
        Frobenius distance from the input to its projection.
    """
    a = _as_square(matrix)
    m = a.shape[0]
    sym = 0.5 * (a + a.conj().T)
    coeffs = np.empty(2 * m - 1)
    coeffs[0] = np.diag(sym).real.mean()
    for lag in range(1, m):
        diag = np.diagonal(sym, lag)
        coeffs[lag] = diag.real.mean()
        coeffs[lag + m - 1] = diag.imag.mean()
    residual = float(np.linalg.norm(a - reconstruct_ht(coeffs)))
    return coeffs, residual


def ht_project_dense(matrix) -> tuple[np.ndarray, float]:
    """Reference projection through the explicit stacked-basis pseudo-inverse.

    Mathematically identical to :func:`ht_project`; kept as an
    independent O(M^4) oracle for it.
    """
    a = _as_square(matrix)
    v = HTBasis(a.shape[0]).stacked()
    vec = a.reshape(-1, order="F")
    coeffs = (np.linalg.pinv(v) @ vec).real
    residual = float(np.linalg.norm(vec - v @ coeffs))
    return coeffs, residual


def reconstruct_ht(coefficients) -> np.ndarray:
    """Hermitian Toeplitz matrix with the given basis coefficients.

    First-row entry ``k >= 1`` is ``c_k + j c_{k+M-1}``; the diagonal is
    ``c_0``.
    """
    c = np.asarray(coefficients, dtype=float)
    if c.ndim != 1 or c.size < 3 or c.size % 2 == 0:
        raise ValueError(f"expected 2M-1 real coefficients with M >= 2, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("coefficients contain non-finite values")
    m = (c.size + 1) // 2
    first_row = np.empty(m, dtype=complex)
    first_row[0] = c[0]
    first_row[1:] = c[1:m] + 1j * c[m:]
    return toeplitz(first_row.conj(), first_row)


@dataclass(frozen=True)
class CalibrationOutput:
    """Fitted HT matrix and its phase/magnitude split.

    ``phase_matrix * magnitude_matrix == toeplitz_matrix`` elementwise by
    construction (polar factorization); the phase matrix has unit-modulus
    entries and is what the DoA estimators consume, the magnitude matrix
    is the distortion covariance estimate (its diagonal also absorbs any
    additive white noise power).
    """

    toeplitz_matrix: np.ndarray
    phase_matrix: np.ndarray
    magnitude_matrix: np.ndarray
    residual: float
    coefficients: np.ndarray


def decouple(toeplitz_matrix) -> CalibrationOutput:
    """Split a Hermitian Toeplitz matrix into phase and magnitude factors.

    Entries of exactly zero magnitude get phase 0, so the phase matrix
    stays unit modulus everywhere and the output is always finite.  The
    ``residual`` field is 0 here; :func:`calibrate` fills in the actual
    projection residual.
    """
    a = _as_square(toeplitz_matrix)
    phase = np.exp(1j * np.angle(a))
    magnitude = np.abs(a)
    return CalibrationOutput(
        toeplitz_matrix=a,
        phase_matrix=phase,
        magnitude_matrix=magnitude,
        residual=0.0,
        coefficients=ht_project(a)[0],
    )


def calibrate(covariance, clip_psd: bool = False) -> CalibrationOutput:
    """Full calibration: HT projection, reconstruction, phase/magnitude split.

    Parameters
    ----------
    covariance : array_like, Hermitian M x M
        Sample (or analytic) covariance of the distorted array output.
    clip_psd : bool
        When True, negative eigenvalues of the fitted HT matrix are
        clipped to zero before decoupling.  Off by default; the plain
        pipeline does not enforce semidefiniteness.
    """
    coeffs, residual = ht_project(covariance)
    fitted = reconstruct_ht(coeffs)
    if clip_psd:
        w, v = np.linalg.eigh(fitted)
        fitted = (v * np.clip(w, 0.0, None)) @ v.conj().T
    out = decouple(fitted)
    return CalibrationOutput(
        toeplitz_matrix=out.toeplitz_matrix,
        phase_matrix=out.phase_matrix,
        magnitude_matrix=out.magnitude_matrix,
        residual=residual,
        coefficients=coeffs,
    )
