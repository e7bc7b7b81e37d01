"""Rectangular IRS layout and its sinc spatial-correlation kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Eigenvalues of the sinc kernel in [-PSD_CLIP_TOL, 0) are rounding noise.
PSD_CLIP_TOL = 1e-8


class IndefiniteMatrixError(ValueError):
    """Raised when a correlation matrix has an eigenvalue below -PSD_CLIP_TOL."""


@dataclass(frozen=True)
class IrsGeometry:
    n_h: int
    n_v: int
    d_h: float
    d_v: float
    wavelength: float

    def __post_init__(self):
        if self.n_h < 1 or self.n_v < 1:
            raise ValueError(f"grid must have at least one element, got {self.n_h}x{self.n_v}")
        if self.d_h <= 0 or self.d_v <= 0:
            raise ValueError("element sizes must be positive")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")

    @property
    def n_elements(self) -> int:
        return self.n_h * self.n_v

    @property
    def element_area(self) -> float:
        return self.d_h * self.d_v

    @classmethod
    def square(cls, side: int, wavelength: float, spacing: float | None = None) -> "IrsGeometry":
        """side x side grid; element size defaults to half a wavelength."""
        d = wavelength / 2 if spacing is None else spacing
        return cls(side, side, d, d, wavelength)


@dataclass(frozen=True)
class CorrelationMatrix:
    """Unit-diagonal kernel plus the scalar path-gain scale ``kappa``.

    The scaled covariance is ``kappa * entries``; keeping the scale separate
    lets traces be evaluated as ``kappa_i * kappa_j * trace(kernel)``.
    """

    entries: np.ndarray
    kappa: float = 1.0

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def scaled(self) -> np.ndarray:
        return self.kappa * self.entries


def element_positions(geom: IrsGeometry) -> np.ndarray:
    """Element centres, shape (N, 3), element alpha at [0, mod(a-1, N_H) d_H, floor((a-1)/N_H) d_V]."""
    idx = np.arange(geom.n_elements)
    pos = np.zeros((geom.n_elements, 3))
    pos[:, 1] = (idx % geom.n_h) * geom.d_h
    pos[:, 2] = (idx // geom.n_h) * geom.d_v
    return pos


def spatial_correlation(geom: IrsGeometry) -> CorrelationMatrix:
    pos = element_positions(geom)
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    # np.sinc is the normalized sinc sin(pi x)/(pi x)
    R = np.sinc(2.0 * dist / geom.wavelength)
    np.fill_diagonal(R, 1.0)
    return CorrelationMatrix(R, 1.0)


def scale_correlation(R: CorrelationMatrix, beta: float, geom: IrsGeometry) -> CorrelationMatrix:
    if beta <= 0:
        raise ValueError(f"path gain must be positive, got {beta}")
    return CorrelationMatrix(R.entries, beta * geom.d_h * geom.d_v)


def clipped_eigh(A: np.ndarray, tol: float = PSD_CLIP_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric PSD matrix with rounding-level negatives set to 0."""
    w, V = np.linalg.eigh(A)
    if w.size and w[0] < -tol:
        raise IndefiniteMatrixError(f"smallest eigenvalue {w[0]:.3e} is below -{tol:g}")
    return np.where(w < 0.0, 0.0, w), V
