import math

import numpy as np
import pytest

from quasilin.coeffspace import GammaGrid, antiderivative
from quasilin.errors import PreconditionError, RangeError
from quasilin.solver1d import (
    Coefficient1D,
    cell_fluxes,
    compute_ca,
    neumann_exact,
    solve_forward_exact,
    solve_forward_fd,
)


class TestCoefficient:
    def test_ca_unit(self):
        assert compute_ca(Coefficient1D.constant(1.0)) == pytest.approx(1.0, abs=1e-14)

    def test_ca_half(self):
        assert compute_ca(Coefficient1D.constant(2.0)) == pytest.approx(0.5, abs=1e-14)

    def test_ca_rational(self):
        a = Coefficient1D.from_callable(lambda x: 1.0 / (1.0 + x))
        assert compute_ca(a) == pytest.approx(1.5, abs=1e-10)

    def test_positive_required(self):
        with pytest.raises(PreconditionError):
            Coefficient1D(np.array([1.0, -1.0, 1.0]))
        with pytest.raises(PreconditionError):
            Coefficient1D(np.array([1.0, 2.0]))


class TestExactSolve:
    def test_laplace(self):
        g = GammaGrid.constant(1.0, 0.0, 1.0, 11)
        sol = solve_forward_exact(g, Coefficient1D.constant(1.0), 0.8)
        assert np.allclose(sol.u, 0.8 * sol.x_grid, atol=1e-13)
        assert sol.flux == pytest.approx(0.8, abs=1e-13)

    def test_rational_a(self):
        g = GammaGrid.constant(1.0, 0.0, 1.0, 11)
        a = Coefficient1D.from_callable(lambda x: 1.0 / (1.0 + x))
        sol = solve_forward_exact(g, a, 1.0)
        expect = (2.0 / 3.0) * (sol.x_grid + sol.x_grid**2 / 2)
        assert np.max(np.abs(sol.u - expect)) < 1e-9
        assert sol.flux == pytest.approx(2.0 / 3.0, abs=1e-9)

    def test_exponential_midpoint(self):
        g = GammaGrid.from_callable(0.0, 1.0, 2001, lambda s: math.exp(-s))
        sol = solve_forward_exact(g, Coefficient1D.constant(1.0), 1.0,
                                  x_grid=np.array([0.0, 0.5, 1.0]))
        expect = -math.log(1 - 0.5 * (1 - math.exp(-1)))
        assert sol.u[1] == pytest.approx(expect, abs=1e-6)
        assert expect == pytest.approx(0.379885, abs=1e-6)

    def test_boundary_and_monotone(self):
        g = GammaGrid.from_callable(0.0, 1.0, 101, lambda s: 1 + 0.5 * s)
        sol = solve_forward_exact(g, Coefficient1D.constant(1.0), 0.9)
        assert sol.u[0] == pytest.approx(0.0, abs=1e-12)
        assert sol.u[-1] == pytest.approx(0.9, abs=1e-12)
        assert np.all(np.diff(sol.u) >= -1e-14)

    def test_max_principle(self):
        g = GammaGrid.from_callable(0.0, 1.0, 101, lambda s: 0.5 + s * s)
        for lam in (0.0, 0.25, 1.0):
            sol = solve_forward_exact(g, Coefficient1D.constant(1.0), lam)
            assert np.all(sol.u >= -1e-12) and np.all(sol.u <= lam + 1e-12)

    def test_lambda_out_of_range(self):
        g = GammaGrid.constant(1.0, 0.0, 1.0, 5)
        with pytest.raises(RangeError):
            solve_forward_exact(g, Coefficient1D.constant(1.0), 1.5)
        with pytest.raises(RangeError):
            solve_forward_exact(g, Coefficient1D.constant(1.0), -0.1)

    def test_gamma_below_floor(self):
        g = GammaGrid(0.0, 1.0, np.array([1e-9, 1.0]))
        with pytest.raises(PreconditionError):
            solve_forward_exact(g, Coefficient1D.constant(1.0), 0.5)


class TestNeumann:
    def test_identity_gamma(self):
        g = GammaGrid.constant(1.0, 0.0, 1.0, 5)
        a = Coefficient1D.constant(1.0)
        for lam in (0.2, 0.7):
            assert neumann_exact(g, a, lam) == pytest.approx(lam, abs=1e-14)

    def test_exponential(self):
        g = GammaGrid.from_callable(0.0, 1.0, 2001, lambda s: math.exp(-s))
        a = Coefficient1D.constant(1.0)
        assert neumann_exact(g, a, 0.6) == pytest.approx(1 - math.exp(-0.6), abs=1e-7)

    def test_rational_a(self):
        g = GammaGrid.constant(1.0, 0.0, 1.0, 5)
        a = Coefficient1D.from_callable(lambda x: 1.0 / (1.0 + x))
        assert neumann_exact(g, a, 0.9) == pytest.approx(0.6, abs=1e-9)

    def test_flux_identity_by_construction(self):
        rng = np.random.default_rng(11)
        a = Coefficient1D.from_callable(lambda x: 1.0 + 0.5 * math.sin(3 * x))
        for _ in range(10):
            g = GammaGrid(0.0, 1.0, rng.uniform(0.2, 2.0, 9))
            for lam in (0.1, 0.5, 1.0):
                lhs = antiderivative(g, lam)
                rhs = a.c_a * neumann_exact(g, a, lam)
                assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)

    def test_monotone_in_lambda(self):
        g = GammaGrid.from_callable(0.0, 1.0, 51, lambda s: 0.3 + s)
        a = Coefficient1D.constant(1.0)
        phis = [neumann_exact(g, a, lam) for lam in np.linspace(0, 1, 21)]
        assert np.all(np.diff(phis) >= 0)


class TestFdOracle:
    def test_linear_exact(self):
        g = GammaGrid.constant(1.0, 0.0, 1.0, 5)
        sol = solve_forward_fd(g, Coefficient1D.constant(1.0), 1.0, 16)
        assert np.max(np.abs(sol.u - sol.x_grid)) < 1e-12

    def test_convergence_order(self):
        g = GammaGrid.from_callable(0.0, 1.0, 4001, lambda s: math.exp(-s))
        a = Coefficient1D.constant(1.0)
        errs = []
        for n in (64, 128):
            fd = solve_forward_fd(g, a, 1.0, n)
            exact = solve_forward_exact(g, a, 1.0, x_grid=fd.x_grid)
            errs.append(np.max(np.abs(fd.u - exact.u)))
        order = math.log2(errs[0] / errs[1])
        assert order > 1.9

    def test_flux_constancy(self):
        g = GammaGrid.constant(1.0, 0.0, 1.0, 5)
        a = Coefficient1D.constant(1.0)
        sol = solve_forward_fd(g, a, 1.0, 32)
        fluxes = cell_fluxes(sol, g, a)
        assert np.max(np.abs(fluxes - fluxes[0])) < 1e-10

    def test_flux_matches_neumann(self):
        g = GammaGrid.from_callable(0.0, 1.0, 2001, lambda s: 1 + 0.3 * s)
        a = Coefficient1D.from_callable(lambda x: 1.0 / (1.0 + x))
        fd = solve_forward_fd(g, a, 0.8, 256)
        assert fd.flux == pytest.approx(neumann_exact(g, a, 0.8), abs=5e-4)

    def test_small_mesh_rejected(self):
        g = GammaGrid.constant(1.0, 0.0, 1.0, 5)
        with pytest.raises(PreconditionError):
            solve_forward_fd(g, Coefficient1D.constant(1.0), 0.5, 2)

    def test_max_principle(self):
        g = GammaGrid.from_callable(0.0, 1.0, 101, lambda s: 0.4 + s)
        sol = solve_forward_fd(g, Coefficient1D.constant(1.0), 0.7, 64)
        assert np.all(sol.u >= -1e-12) and np.all(sol.u <= 0.7 + 1e-12)
