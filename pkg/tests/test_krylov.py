from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from homog2d.core.config import Settings
from homog2d.core.errors import SolverError
from homog2d.services.krylov import krylov_solve, relative_residual


def _laplacian(n: int, drift: float = 0.0) -> sp.csr_matrix:
    h = 1.0 / (n + 1)
    main = np.full(n, 2.0 / h**2 + 1.0)
    lower = np.full(n - 1, -1.0 / h**2 - drift / (2 * h))
    upper = np.full(n - 1, -1.0 / h**2 + drift / (2 * h))
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr")


@pytest.mark.parametrize("symmetric", [True, False])
@pytest.mark.parametrize("tol", [1e-6, 1e-10])
def test_accepted_residual_is_within_tol(symmetric, tol):
    matrix = _laplacian(400, drift=0.0 if symmetric else 5.0)
    rhs = np.sin(np.linspace(0.0, 7.0, 400)) + 0.1
    result = krylov_solve(matrix, rhs, symmetric=symmetric, tol=tol, settings=Settings())
    assert result.residual <= tol
    assert relative_residual(matrix, result.solution, rhs) == result.residual
    assert result.history[-1] == (result.iterations, result.residual)


def test_iteration_cap_raises_with_history():
    matrix = _laplacian(400)
    rhs = np.ones(400)
    with pytest.raises(SolverError) as excinfo:
        krylov_solve(matrix, rhs, symmetric=True, tol=1e-12, label="capped", settings=Settings(max_iterations=3))
    assert "iteration cap" in str(excinfo.value)
    assert excinfo.value.details["residual_history"][-1][1] > 1e-12


def test_zero_rhs_short_circuits():
    result = krylov_solve(_laplacian(8), np.zeros(8), symmetric=True)
    assert result.iterations == 0 and not np.any(result.solution)
