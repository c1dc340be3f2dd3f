"""Fractional powers of the symmetric positive semi-definite Jacobian."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotPSD

__all__ = [
    "ZERO_TOL",
    "SpectralForm",
    "spectral_decompose",
    "fractional_power",
    "apply_fractional_laplacian",
]

log = logging.getLogger(__name__)

#: eigenvalues with ``|lambda| <= ZERO_TOL * max(1, max|lambda|)`` are treated as zero
ZERO_TOL = 1e-9


@dataclass
class SpectralForm:
    """``L = P.T @ diag(eigenvalues) @ P`` with eigenvalues descending.

    Rows of ``P`` are orthonormal eigenvectors.  ``zero`` marks eigenvalues
    clamped to zero; those are raised to ``0`` under every power.
    """

    eigenvalues: np.ndarray
    P: np.ndarray
    zero: np.ndarray

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    @property
    def scale(self) -> float:
        return float(np.abs(self.eigenvalues).max()) if self.size else 0.0

    @property
    def rank(self) -> int:
        return int((~self.zero).sum())

    @property
    def lambda_min_positive(self) -> float:
        pos = self.eigenvalues[~self.zero]
        return float(pos.min()) if pos.size else 0.0

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0]) if self.size else 0.0

    def kernel_basis(self) -> np.ndarray:
        return self.P[self.zero]


def spectral_decompose(L, zero_tol=ZERO_TOL, sym_tol=1e-8) -> SpectralForm:
    """Eigendecomposition with the zero clamp.

    Raises
    ------
    NotPSD
        If an eigenvalue is below ``-zero_tol * max(1, scale)``.
    ValueError
        If ``L`` is not symmetric to ``sym_tol`` (relative).
    """
    L = np.asarray(getattr(L, "matrix", L), dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise DimensionMismatch("L must be square")
    if L.size and np.abs(L - L.T).max() > sym_tol * max(1.0, np.abs(L).max()):
        raise ValueError("L is not symmetric")
    lam, Q = np.linalg.eigh(0.5 * (L + L.T))
    lam, Q = lam[::-1], Q[:, ::-1]
    # entries of L are angle derivatives, so 1 is the natural absolute floor
    scale = max(1.0, float(np.abs(lam).max())) if lam.size else 1.0
    thresh = zero_tol * scale
    if lam.size and lam[-1] < -thresh:
        raise NotPSD(f"eigenvalue {lam[-1]:.3e} below -{thresh:.3e}")
    zero = np.abs(lam) <= thresh
    lam = np.where(zero, 0.0, lam)
    return SpectralForm(lam, Q.T.copy(), zero)


def fractional_power(spectrum: SpectralForm, s: float) -> np.ndarray:
    """``P.T diag(lambda^s) P`` with ``0^s = 0`` for every real ``s``."""
    lam = spectrum.eigenvalues
    powered = np.zeros_like(lam)
    nz = ~spectrum.zero
    powered[nz] = lam[nz] ** s
    if s < 0 and nz.any():
        cond = (lam[nz].max() / lam[nz].min()) ** abs(s)
        if cond > 1e8:
            log.debug("L^%g condition number %.3e", s, cond)
    M = (spectrum.P.T * powered) @ spectrum.P
    return 0.5 * (M + M.T)


def apply_fractional_laplacian(spectrum: SpectralForm, s: float, x) -> np.ndarray:
    """``Delta^s x = -L^s x`` computed in the eigenbasis."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spectrum.size,):
        raise DimensionMismatch(f"vector of length {x.shape} for a {spectrum.size}x{spectrum.size} operator")
    lam = spectrum.eigenvalues
    powered = np.zeros_like(lam)
    nz = ~spectrum.zero
    powered[nz] = lam[nz] ** s
    return -(spectrum.P.T @ (powered * (spectrum.P @ x)))
