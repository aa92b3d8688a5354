"""
Thin wrapper around scipy's Krylov solvers with residual bookkeeping.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from homog2d.core.config import Settings, get_settings
from homog2d.core.errors import SolverError

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class KrylovResult:
    solution: np.ndarray
    residual: float
    iterations: int
    history: list[tuple[int, float]] = field(default_factory=list)


def relative_residual(operator, x: np.ndarray, rhs: np.ndarray) -> float:
    norm = float(np.linalg.norm(rhs))
    if norm == 0.0:
        return float(np.linalg.norm(operator @ x))
    return float(np.linalg.norm(rhs - operator @ x)) / norm


def krylov_solve(
    operator,
    rhs: np.ndarray,
    *,
    symmetric: bool,
    preconditioner=None,
    tol: float = 1e-10,
    label: str = "solve",
    settings: Settings | None = None,
) -> KrylovResult:
    """
    CG for symmetric operators, BiCGStab otherwise; x0 = 0.

    Accepted only when the true relative residual ‖rhs − Ax‖/‖rhs‖ is at most tol; while it
    is not, the solve restarts from the current iterate, at most settings.krylov_restarts times.
    """
    settings = settings or get_settings()
    if not np.any(rhs):
        return KrylovResult(solution=np.zeros_like(rhs), residual=0.0, iterations=0)

    history: list[tuple[int, float]] = []
    iterations = 0

    def callback(xk: np.ndarray) -> None:
        nonlocal iterations
        iterations += 1
        if iterations % settings.residual_log_every == 0:
            history.append((iterations, relative_residual(operator, xk, rhs)))

    method = spla.cg if symmetric else spla.bicgstab
    x = np.zeros_like(rhs)
    for attempt in range(settings.krylov_restarts + 1):
        x, info = method(
            operator,
            rhs,
            x0=x,
            rtol=tol,
            atol=0.0,
            maxiter=settings.max_iterations,
            M=preconditioner,
            callback=callback,
        )
        residual = relative_residual(operator, x, rhs)
        history.append((iterations, residual))
        if info != 0 or not np.isfinite(residual) or residual <= tol:
            break
        logger.debug(f"{label}: true residual {residual:.2e} above {tol:.0e}, restart {attempt + 1}")
    if info != 0 or not np.isfinite(residual) or residual > tol:
        reason = "hit the iteration cap" if info > 0 else "stagnated"
        raise SolverError(
            f"{label}: {method.__name__} {reason} after {iterations} iterations (residual {residual:.3e})",
            details={"label": label, "info": int(info), "iterations": iterations, "residual_history": history},
        )
    logger.debug(f"{label}: {method.__name__} converged in {iterations} iterations, residual {residual:.2e}")
    return KrylovResult(solution=x, residual=residual, iterations=iterations, history=history)
