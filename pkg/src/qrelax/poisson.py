"""Zero-mean periodic Poisson solves ``-Lap V = rho - g``."""
from __future__ import annotations

import numpy as np

from .errors import CompatibilityError
from .grid import PeriodicGrid

COMPAT_TOL = 1e-10


def solve_poisson(grid: PeriodicGrid, rho, g, tol: float = COMPAT_TOL):
    """Invert the Laplacian mode by mode; the zero mode of ``V`` is set to 0.

    Works on stacks of densities (leading batch axes).
    """
    source = np.asarray(rho) - np.asarray(g)
    bias = np.max(np.abs(grid.mean(source)))
    if bias > tol:
        raise CompatibilityError(
            f"mean(rho - g) = {bias:.3e} exceeds {tol:.1e}; project the doping profile first")
    return grid.ifft(grid.fft(source) * grid.inv_k2)


def poisson_residual(grid: PeriodicGrid, V, rho, g) -> float:
    """``|| -Lap V - (rho - g) ||_L2``."""
    r = -grid.laplacian(V) - (np.asarray(rho) - np.asarray(g))
    return grid.norm(r, "L2")
