"""1D forward solvers for (gamma(u) a(x) u')' = 0 on (0,1).

The exact path uses the closed-form representation
u(x) = Ginv(c1 * A(x)) with A(x) the cumulative integral of 1/a and
c1 = G(lambda)/c_a, where G is the antiderivative of gamma.  The Neumann
data at x=1 is phi(lambda) = G(lambda)/c_a, which is the identity the whole
inverse problem rests on.  A Picard/finite-difference solver serves as an
independent oracle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.linalg import solve_banded

from .coeffspace import GammaGrid, antiderivative, eval_gamma, inverse_antiderivative
from .errors import ConvergenceError, PreconditionError, RangeError


@dataclass(frozen=True)
class Coefficient1D:
    """Sampled positive coefficient a(x) on a uniform grid over [0,1],
    interpolated piecewise-linearly between samples."""

    samples: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", vals)
        if vals.ndim != 1 or vals.size < 3:
            raise PreconditionError("need at least 3 samples of a(x)")
        if np.any(vals <= 0):
            raise PreconditionError("a(x) samples must be strictly positive")
        vals.setflags(write=False)

    @classmethod
    def from_callable(cls, fn, n=1001):
        x = np.linspace(0.0, 1.0, n)
        return cls(np.asarray([fn(xi) for xi in x], dtype=float))

    @classmethod
    def constant(cls, value, n=3):
        return cls(np.full(n, float(value)))

    @property
    def x_grid(self):
        return np.linspace(0.0, 1.0, self.samples.size)

    @cached_property
    def cumulative_inverse(self):
        """Cumulative Simpson integral of 1/a at the sample points."""
        return np.concatenate(
            ([0.0], cumulative_simpson(1.0 / self.samples, x=self.x_grid))
        )

    @property
    def c_a(self):
        return float(self.cumulative_inverse[-1])

    def __call__(self, x):
        return np.interp(x, self.x_grid, self.samples)

    def inv_integral(self, x):
        """A(x) = integral of 1/a from 0 to x."""
        return np.interp(x, self.x_grid, self.cumulative_inverse)


@dataclass(frozen=True)
class Solution1D:
    x_grid: np.ndarray
    u: np.ndarray
    flux: float
    lam: float


def compute_ca(a: Coefficient1D) -> float:
    """Composite-Simpson quadrature of 1/a over [0,1]."""
    return a.c_a


def _check_lambda(g: GammaGrid, lam):
    if lam < 0.0 or lam > g.s_hi + 1e-12:
        raise RangeError(f"lambda={lam} outside [0, {g.s_hi}]")
    if g.values.min() < g.floor:
        raise PreconditionError("gamma must stay above its positivity floor")


def solve_forward_exact(g: GammaGrid, a: Coefficient1D, lam: float, x_grid=None) -> Solution1D:
    """Closed-form solution via the antiderivative of gamma; the flux
    c1 = G(lambda)/c_a is constant in x by construction."""
    _check_lambda(g, lam)
    if x_grid is None:
        x_grid = a.x_grid
    x_grid = np.asarray(x_grid, dtype=float)
    c1 = antiderivative(g, lam) / a.c_a
    t = c1 * a.inv_integral(x_grid)
    u = inverse_antiderivative(g, t) if lam > 0 else np.zeros_like(x_grid)
    return Solution1D(x_grid=x_grid, u=np.asarray(u, dtype=float), flux=float(c1), lam=float(lam))


def neumann_exact(g: GammaGrid, a: Coefficient1D, lam: float) -> float:
    """phi(lambda) = G(lambda)/c_a, the flux measured at x=1."""
    _check_lambda(g, lam)
    return float(antiderivative(g, lam) / a.c_a)


def solve_forward_fd(g: GammaGrid, a: Coefficient1D, lam: float, n_cells: int,
                     tol=1e-12, max_iter=5000) -> Solution1D:
    """Independent oracle: nonlinear three-point finite differences solved by
    Picard iteration (freeze gamma(u), solve the tridiagonal system, repeat),
    with adaptive under-relaxation when the fixed-point map oscillates."""
    _check_lambda(g, lam)
    if n_cells < 4:
        raise PreconditionError("need n_cells >= 4")
    x = np.linspace(0.0, 1.0, n_cells + 1)
    dx = 1.0 / n_cells
    x_mid = 0.5 * (x[:-1] + x[1:])
    a_mid = a(x_mid)
    u = lam * x  # linear initial guess
    last_diff = np.inf
    omega = 1.0
    for _ in range(max_iter):
        u_mid = 0.5 * (u[:-1] + u[1:])
        c_mid = eval_gamma(g, u_mid) * a_mid  # frozen coefficient
        # interior rows: c_{i-1/2} u_{i-1} - (c_{i-1/2}+c_{i+1/2}) u_i + c_{i+1/2} u_{i+1} = 0
        n_int = n_cells - 1
        ab = np.zeros((3, n_int))
        ab[0, 1:] = c_mid[1:-1]
        ab[1, :] = -(c_mid[:-1] + c_mid[1:])
        ab[2, :-1] = c_mid[1:-1]
        rhs = np.zeros(n_int)
        rhs[-1] -= c_mid[-1] * lam
        u_new = np.concatenate(([0.0], solve_banded((1, 1), ab, rhs), [lam]))
        diff = float(np.max(np.abs(u_new - u)))
        if diff >= last_diff:
            omega = max(0.5 * omega, 0.05)
        else:
            omega = min(1.05 * omega, 1.0)
        last_diff = diff
        u = u + omega * (u_new - u)
        if diff < tol:
            break
    else:
        raise ConvergenceError(
            f"Picard did not converge in {max_iter} iterations (last diff {last_diff:.3e})",
            residuals=[last_diff],
        )
    u_mid = 0.5 * (u[:-1] + u[1:])
    fluxes = eval_gamma(g, u_mid) * a_mid * np.diff(u) / dx
    return Solution1D(x_grid=x, u=u, flux=float(fluxes[-1]), lam=float(lam))


def cell_fluxes(sol: Solution1D, g: GammaGrid, a: Coefficient1D):
    """Discrete flux per cell (constant for a converged solve)."""
    x_mid = 0.5 * (sol.x_grid[:-1] + sol.x_grid[1:])
    u_mid = 0.5 * (sol.u[:-1] + sol.u[1:])
    return eval_gamma(g, u_mid) * a(x_mid) * np.diff(sol.u) / np.diff(sol.x_grid)


def phi_table_to_csv(lambdas, phis, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "phi"])
        for lam, phi in zip(lambdas, phis):
            writer.writerow([repr(float(lam)), repr(float(phi))])


def profile_to_csv(sol: Solution1D, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "u"])
        for x, u in zip(sol.x_grid, sol.u):
            writer.writerow([repr(float(x)), repr(float(u))])
