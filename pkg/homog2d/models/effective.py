"""
Constant homogenized tensors and their conversion back into a coefficient set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from homog2d.models.coefficients import CoefficientSet, FourierEntry, format_key


@dataclass(frozen=True)
class EffectiveTensors:
    """Â (2,2,m,m), V̂ (2,m,m), B̂ (2,m,m), ĉ (m,m) plus the λ of the source set."""

    A_hat: np.ndarray
    V_hat: np.ndarray
    B_hat: np.ndarray
    c_hat: np.ndarray
    lam: float
    quadrature_N: int
    source: str = "custom"

    @property
    def m(self) -> int:
        return self.c_hat.shape[0]

    def legendre_matrix(self) -> np.ndarray:
        """Â as the 2m×2m matrix indexed [(i,α),(k,β)]."""
        m = self.m
        return np.transpose(self.A_hat, (0, 2, 1, 3)).reshape(2 * m, 2 * m)

    def ellipticity(self) -> tuple[float, float]:
        """(smallest eigenvalue of the symmetric part, spectral norm)."""
        matrix = self.legendre_matrix()
        lowest = float(np.linalg.eigvalsh(0.5 * (matrix + matrix.T))[0])
        return lowest, float(np.linalg.norm(matrix, 2))

    def to_coefficient_set(self) -> CoefficientSet:
        """Constant-coefficient set so L₀ shares the L_ε assembly path."""

        def entries(array: np.ndarray) -> dict[str, FourierEntry]:
            return {
                format_key(index): FourierEntry(constant=float(value))
                for index, value in np.ndenumerate(array)
                if value != 0.0
            }

        lowest, norm = self.ellipticity()
        mu = min(1.0, lowest, 1.0 / norm) if lowest > 0 else 1e-12
        kappa = float(max(np.abs(self.V_hat).max(), np.abs(self.B_hat).max(), np.abs(self.c_hat).max()))
        A = entries(self.A_hat) or {"1.1.1.1": FourierEntry()}
        return CoefficientSet(
            name=f"{self.source}-homogenized",
            m=self.m,
            A=A,
            V=entries(self.V_hat),
            B=entries(self.B_hat),
            c=entries(self.c_hat),
            lam=self.lam,
            mu=max(mu, 1e-12),
            kappa=kappa,
        )
