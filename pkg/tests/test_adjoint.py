import math

import numpy as np
import pytest

from quasilin.adjoint import (
    full_gradient,
    gradient_1d,
    gradient_2d,
    gradient_2d_exact,
    hat_integral_matrix,
    informed_nodes,
    misfit,
    misfit_1d,
    resolve_mask,
    solve_adjoint,
)
from quasilin.coeffspace import GammaGrid, eval_gamma
from quasilin.errors import InvalidArgumentError
from quasilin.solver1d import Coefficient1D
from quasilin.solver2d import (
    BoundaryTrace,
    DirichletWorkspace,
    MatrixField,
    build_disk_mesh,
    dirichlet_g,
    solve_forward_kirchhoff,
)


def quad_gamma(s):
    return 0.3 * s * s + 0.2 * s + 0.25


@pytest.fixture(scope="module")
def mesh3():
    return build_disk_mesh(3)


@pytest.fixture(scope="module")
def ident():
    return MatrixField.identity()


@pytest.fixture(scope="module")
def ws3(mesh3, ident):
    return DirichletWorkspace(mesh3, ident)


class TestMask:
    def test_none_is_full(self, mesh3):
        mask = resolve_mask(mesh3, None)
        assert mask.dtype == bool and mask.all()
        assert mask.size == mesh3.boundary.size

    def test_boolean_passthrough(self, mesh3):
        m = np.zeros(mesh3.boundary.size, dtype=bool)
        m[::2] = True
        assert np.array_equal(resolve_mask(mesh3, m), m)

    def test_wrong_length_rejected(self, mesh3):
        with pytest.raises(InvalidArgumentError):
            resolve_mask(mesh3, np.ones(3, dtype=bool))

    def test_theta_interval(self, mesh3):
        mask = resolve_mask(mesh3, (0.0, np.pi / 2))
        th = mesh3.boundary_theta
        assert np.array_equal(mask, (th >= 0.0) & (th <= np.pi / 2))
        assert 0 < mask.sum() < mask.size


class TestHatIntegrals:
    def test_matches_quadrature(self):
        g = GammaGrid.from_callable(-0.2, 1.8, 9, quad_gamma)
        lambdas = np.array([-0.15, 0.0, 0.3, 0.77, 1.8])
        B = hat_integral_matrix(g, lambdas)
        t = np.linspace(-0.2, 1.8, 200001)
        for k in range(g.n_nodes):
            e = np.zeros(g.n_nodes)
            e[k] = 1.0
            hat = eval_gamma(g.with_values(e), t)
            F = np.concatenate([[0.0], np.cumsum(0.5 * (hat[1:] + hat[:-1]) * np.diff(t))])
            for i, lam in enumerate(lambdas):
                lo = np.interp(g.anchor, t, F)
                hi = np.interp(lam, t, F)
                assert B[i, k] == pytest.approx(hi - lo, abs=5e-9)

    def test_rows_sum_to_signed_length(self):
        g = GammaGrid.constant(1.0, -0.2, 1.8, 21)
        lambdas = np.array([-0.2, -0.05, 0.6, 1.8])
        B = hat_integral_matrix(g, lambdas)
        # hats are a partition of unity, so each row integrates the constant 1
        assert np.allclose(B.sum(axis=1), lambdas - g.anchor, atol=1e-12)


class Test1D:
    def setup_method(self):
        self.a = Coefficient1D.constant(1.0)
        self.lambdas = 0.05 * np.arange(1, 20)
        truth = GammaGrid.from_callable(0.0, 1.0, 2001, lambda s: math.exp(-s))
        from quasilin.coeffspace import antiderivative

        self.v_data = antiderivative(truth, self.lambdas) / self.a.c_a
        self.g = GammaGrid.from_callable(0.0, 1.0, 31, lambda s: 0.8 + 0.3 * s)

    def test_self_data_zero(self):
        from quasilin.coeffspace import antiderivative

        v_self = antiderivative(self.g, self.lambdas) / self.a.c_a
        assert misfit_1d(self.g, self.a, self.lambdas, v_self) == 0.0
        grad = gradient_1d(self.g, self.a, self.lambdas, v_self)
        assert np.max(np.abs(grad)) < 1e-15

    def test_gradient_matches_fd(self):
        grad = gradient_1d(self.g, self.a, self.lambdas, self.v_data)
        h = 1e-6
        for k in range(self.g.n_nodes):
            e = np.zeros(self.g.n_nodes)
            e[k] = h
            jp = misfit_1d(self.g.with_values(self.g.values + e), self.a,
                           self.lambdas, self.v_data)
            jm = misfit_1d(self.g.with_values(self.g.values - e), self.a,
                           self.lambdas, self.v_data)
            assert grad[k] == pytest.approx((jp - jm) / (2 * h), rel=1e-6, abs=1e-10)

    def test_scalar_ca_equivalent(self):
        g1 = gradient_1d(self.g, self.a, self.lambdas, self.v_data)
        g2 = gradient_1d(self.g, self.a.c_a, self.lambdas, self.v_data)
        assert np.array_equal(g1, g2)

    def test_precomputed_hat_matrix(self):
        hat_B = hat_integral_matrix(self.g, self.lambdas)
        g1 = gradient_1d(self.g, self.a, self.lambdas, self.v_data, hat_B=hat_B)
        g2 = gradient_1d(self.g, self.a, self.lambdas, self.v_data)
        assert np.array_equal(g1, g2)


@pytest.fixture(scope="module")
def setup(mesh3, ident, ws3):
    truth = GammaGrid.from_callable(-0.2, 1.8, 101, quad_gamma)
    bc = BoundaryTrace.from_function(mesh3, lambda th: dirichlet_g(1.5, th))
    _, v = solve_forward_kirchhoff(mesh3, ident, truth, bc, workspace=ws3)
    v_data = ws3.trace(v)
    g = GammaGrid.from_callable(-0.2, 1.8, 21, lambda s: 0.5 * s + 0.5)
    return bc, v_data, g


class Test2D:
    def test_self_data_zero(self, mesh3, ident, ws3, setup):
        bc, _, _ = setup
        truth = GammaGrid.from_callable(-0.2, 1.8, 101, quad_gamma)
        _, v = solve_forward_kirchhoff(mesh3, ident, truth, bc, workspace=ws3)
        v_self = ws3.trace(v)
        state = misfit(mesh3, ident, truth, bc, v_self, workspace=ws3)
        assert state.j0 < 1e-24
        grad = gradient_2d_exact(mesh3, ident, truth, bc, state.residual,
                                 workspace=ws3)
        assert np.max(np.abs(grad)) < 1e-12

    def test_misfit_positive_off_truth(self, mesh3, ident, ws3, setup):
        bc, v_data, g = setup
        state = misfit(mesh3, ident, g, bc, v_data, workspace=ws3)
        assert state.j0 > 1e-6

    def test_workspace_matches_direct(self, mesh3, ident, ws3, setup):
        bc, v_data, g = setup
        with_ws = misfit(mesh3, ident, g, bc, v_data, workspace=ws3)
        without = misfit(mesh3, ident, g, bc, v_data)
        assert with_ws.j0 == pytest.approx(without.j0, rel=1e-10)

    def test_exact_gradient_matches_fd(self, mesh3, ident, ws3, setup):
        bc, v_data, g = setup
        state = misfit(mesh3, ident, g, bc, v_data, workspace=ws3)
        grad = gradient_2d_exact(mesh3, ident, g, bc, state.residual, workspace=ws3)
        h = 1e-6
        fd = np.zeros(g.n_nodes)
        for k in range(g.n_nodes):
            e = np.zeros(g.n_nodes)
            e[k] = h
            jp = misfit(mesh3, ident, g.with_values(g.values + e), bc, v_data,
                        workspace=ws3).j0
            jm = misfit(mesh3, ident, g.with_values(g.values - e), bc, v_data,
                        workspace=ws3).j0
            fd[k] = (jp - jm) / (2 * h)
        scale = np.max(np.abs(fd))
        assert np.max(np.abs(grad - fd)) / scale < 1e-6

    def test_volume_gradient_consistent(self, ident, setup):
        # the quadrature-based volume form converges to the exact discrete
        # gradient as the mesh refines
        bc3, _, _ = setup
        truth = GammaGrid.from_callable(-0.2, 1.8, 101, quad_gamma)
        g = GammaGrid.from_callable(-0.2, 1.8, 21, lambda s: 0.5 * s + 0.5)
        diffs = []
        for nr in (3, 4):
            mesh = build_disk_mesh(nr)
            ws = DirichletWorkspace(mesh, ident)
            bc = BoundaryTrace.from_function(mesh, lambda th: dirichlet_g(1.5, th))
            _, vt = solve_forward_kirchhoff(mesh, ident, truth, bc, workspace=ws)
            v_data = ws.trace(vt)
            state = misfit(mesh, ident, g, bc, v_data, workspace=ws)
            z = solve_adjoint(mesh, ident, state.residual, workspace=ws)
            vol = gradient_2d(mesh, ident, state.u, z, g)
            exact = gradient_2d_exact(mesh, ident, g, bc, state.residual,
                                      workspace=ws)
            diffs.append(np.max(np.abs(vol - exact)) / np.max(np.abs(exact)))
        assert diffs[1] < diffs[0]
        assert diffs[0] < 0.1

    def test_adjoint_linearity(self, mesh3, ident, ws3):
        r1 = BoundaryTrace.from_function(mesh3, math.sin)
        r2 = BoundaryTrace.from_function(mesh3, lambda th: math.cos(2 * th))
        z1 = solve_adjoint(mesh3, ident, r1, workspace=ws3)
        z2 = solve_adjoint(mesh3, ident, r2, workspace=ws3)
        combo = BoundaryTrace(mesh3, 2.0 * r1.values - 0.5 * r2.values)
        zc = solve_adjoint(mesh3, ident, combo, workspace=ws3)
        assert np.max(np.abs(zc.values - 2.0 * z1.values + 0.5 * z2.values)) < 1e-10

    def test_informed_nodes(self, mesh3, ident, ws3, setup):
        bc, v_data, g = setup
        state = misfit(mesh3, ident, g, bc, v_data, workspace=ws3)
        mask = informed_nodes(mesh3, state.u, g)
        assert mask.dtype == bool and mask.any() and not mask.all()


class TestFullGradient:
    def test_zero_beta_is_data_part(self):
        g = GammaGrid(0.0, 1.0, np.array([0.5, 1.0, 1.5]))
        data = np.array([0.1, -0.2, 0.3])
        gv = full_gradient(data, g, 0.0)
        assert np.array_equal(gv.total, data)

    def test_reg_part_matches_fd(self):
        from quasilin.coeffspace import h1_seminorm_sq

        rng = np.random.default_rng(5)
        g = GammaGrid(0.0, 1.0, rng.uniform(0.5, 2.0, 7))
        beta = 0.37
        gv = full_gradient(np.zeros(7), g, beta)
        h = 1e-6
        for k in range(7):
            e = np.zeros(7)
            e[k] = h
            fd = (h1_seminorm_sq(g.with_values(g.values + e))
                  - h1_seminorm_sq(g.with_values(g.values - e))) / (2 * h)
            assert gv.total[k] == pytest.approx(0.5 * beta * fd, rel=1e-7, abs=1e-9)
