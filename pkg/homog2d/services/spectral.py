"""
FFT/DST inverses of the 5-point Laplacian, used as direct solvers and preconditioners.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as fft


def periodic_symbol(n: int, h: float) -> np.ndarray:
    """Eigenvalues of −Δ_h on the n×n torus, indexed like fft2 output."""
    k = np.arange(n)
    s = np.sin(np.pi * k / n) ** 2
    return (4.0 / h**2) * (s[:, None] + s[None, :])


def periodic_inverse_laplacian(rhs: np.ndarray, h: float) -> np.ndarray:
    """Mean-zero u with (−Δ_h) u = rhs − mean(rhs), over the last two axes."""
    n = rhs.shape[-1]
    symbol = periodic_symbol(n, h)
    symbol[0, 0] = 1.0
    coefficients = fft.fft2(rhs, axes=(-2, -1)) / symbol
    coefficients[..., 0, 0] = 0.0
    return np.real(fft.ifft2(coefficients, axes=(-2, -1)))


def dirichlet_symbol(size: int, h: float) -> np.ndarray:
    """Eigenvalues of −Δ_h with homogeneous Dirichlet data on size×size interior nodes."""
    p = np.arange(1, size + 1)
    s = np.sin(np.pi * p / (2 * (size + 1))) ** 2
    return (4.0 / h**2) * (s[:, None] + s[None, :])


def dirichlet_solve(rhs: np.ndarray, h: float, *, diffusion: float = 1.0, shift: float = 0.0) -> np.ndarray:
    """(diffusion·(−Δ_h) + shift)⁻¹ rhs on the last two axes."""
    symbol = diffusion * dirichlet_symbol(rhs.shape[-1], h) + shift
    coefficients = fft.dstn(rhs, type=1, axes=(-2, -1), norm="ortho")
    return fft.idstn(coefficients / symbol, type=1, axes=(-2, -1), norm="ortho")
