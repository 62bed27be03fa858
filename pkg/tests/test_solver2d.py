import math

import numpy as np
import pytest

from quasilin.coeffspace import GammaGrid
from quasilin.errors import DataError, PreconditionError
from quasilin.solver2d import (
    BoundaryTrace,
    DirichletWorkspace,
    MatrixField,
    NodalField,
    assemble_stiffness,
    build_disk_mesh,
    check_max_principle,
    conormal_trace,
    dirichlet_g,
    local_stiffness,
    solve_dirichlet,
    solve_forward_kirchhoff,
    solve_forward_picard,
)


def quad_gamma(s):
    return 0.3 * s * s + 0.2 * s + 0.25


@pytest.fixture(scope="module")
def mesh3():
    return build_disk_mesh(3)


@pytest.fixture(scope="module")
def ident():
    return MatrixField.identity()


class TestMesh:
    def test_boundary_on_circle(self):
        for nr in (0, 2, 4):
            mesh = build_disk_mesh(nr)
            radii = np.linalg.norm(mesh.vertices[mesh.boundary], axis=1)
            assert np.max(np.abs(radii - 1.0)) < 1e-12

    def test_positive_areas_and_angles(self, mesh3):
        assert np.all(mesh3.areas > 0)
        assert mesh3.min_angle_deg() >= 20.0

    def test_boundary_loop_closed(self, mesh3):
        counts = {}
        for a, b in mesh3.boundary_edges:
            counts[a] = counts.get(a, 0) + 1
            counts[b] = counts.get(b, 0) + 1
        assert set(counts) == set(mesh3.boundary.tolist())
        assert all(c == 2 for c in counts.values())

    def test_area_convergence_order(self):
        errs, hs = [], []
        for nr in (2, 3, 4):
            mesh = build_disk_mesh(nr)
            errs.append(abs(np.pi - mesh.areas.sum()))
            hs.append(mesh.h_max)
        order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert order >= 1.9

    def test_arc_weights_sum(self):
        for nr in (1, 3, 5):
            mesh = build_disk_mesh(nr)
            total = mesh.arc_weights.sum()
            assert abs(total - 2 * np.pi) <= 1e-10 * 2 * np.pi
            assert np.all(mesh.arc_weights > 0)

    def test_vertex_growth(self):
        n = [len(build_disk_mesh(nr).vertices) for nr in (2, 3, 4)]
        assert 3.5 < n[1] / n[0] < 4.5 and 3.5 < n[2] / n[1] < 4.5


class TestAssembly:
    def test_reference_triangle(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

        class Tiny:
            vertices = verts
            triangles = np.array([[0, 1, 2]])

        from quasilin.solver2d import DiskMesh

        tiny = DiskMesh(vertices=verts, triangles=np.array([[0, 1, 2]]),
                        boundary=np.array([0, 1, 2]),
                        boundary_edges=np.array([[0, 1], [1, 2], [2, 0]]),
                        n_refine=0)
        loc = local_stiffness(tiny, MatrixField.identity())[0]
        expect = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
        assert np.max(np.abs(loc - expect)) < 1e-14

    def test_kernel_and_symmetry(self, mesh3, ident):
        K = assemble_stiffness(mesh3, ident)
        ones = np.ones(len(mesh3.vertices))
        assert np.max(np.abs(K @ ones)) < 1e-10
        assert abs(K - K.T).max() < 1e-14

    def test_asymmetric_matrix_rejected(self, mesh3):
        bad = MatrixField(sampler=lambda p: np.array([[1.0, 0.3], [0.0, 1.0]]))
        with pytest.raises(DataError):
            assemble_stiffness(mesh3, bad)

    def test_ellipticity_enforced(self, mesh3):
        bad = MatrixField(sampler=lambda p: np.diag([1.0, -0.5]),
                          ellipticity_floor=0.1)
        with pytest.raises(DataError):
            assemble_stiffness(mesh3, bad)


class TestDirichlet:
    def test_constant_exact(self, mesh3, ident):
        bc = BoundaryTrace.from_function(mesh3, lambda th: 1.0)
        field = solve_dirichlet(mesh3, ident, bc)
        assert np.max(np.abs(field.values - 1.0)) < 1e-11

    def test_harmonic_linear(self, mesh3, ident):
        bc = BoundaryTrace.from_function(mesh3, math.cos)
        field = solve_dirichlet(mesh3, ident, bc)
        assert np.max(np.abs(field.values - mesh3.vertices[:, 0])) < 1e-10

    def test_harmonic_quadratic_order(self, ident):
        errs, hs = [], []
        for nr in (3, 4, 5):
            mesh = build_disk_mesh(nr)
            bc = BoundaryTrace.from_function(mesh, lambda th: math.cos(2 * th))
            field = solve_dirichlet(mesh, ident, bc)
            exact = mesh.vertices[:, 0] ** 2 - mesh.vertices[:, 1] ** 2
            errs.append(np.max(np.abs(field.values - exact)))
            hs.append(mesh.h_max)
        order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert order >= 1.9

    def test_workspace_matches_pcg(self, mesh3, ident):
        bc = BoundaryTrace.from_function(mesh3, lambda th: math.sin(th) + 0.2)
        direct = solve_dirichlet(mesh3, ident, bc)
        ws = DirichletWorkspace(mesh3, ident)
        cached = ws.solve(bc.values)
        assert np.max(np.abs(direct.values - cached.values)) < 1e-10


class TestConormalTrace:
    def test_constant_zero(self, mesh3, ident):
        field = NodalField(mesh3, np.ones(len(mesh3.vertices)))
        q = conormal_trace(mesh3, ident, field)
        assert np.max(np.abs(q.values)) < 1e-10

    def test_linear_harmonic(self, ident):
        errs = []
        for nr in (3, 4):
            mesh = build_disk_mesh(nr)
            bc = BoundaryTrace.from_function(mesh, math.cos)
            field = solve_dirichlet(mesh, ident, bc)
            q = conormal_trace(mesh, ident, field)
            errs.append(np.max(np.abs(q.values - np.cos(q.theta))))
        assert errs[0] < 5e-6 and errs[1] < errs[0]

    def test_quadratic_harmonic_order(self, ident):
        errs, hs = [], []
        for nr in (3, 4, 5):
            mesh = build_disk_mesh(nr)
            bc = BoundaryTrace.from_function(mesh, lambda th: math.cos(2 * th))
            field = solve_dirichlet(mesh, ident, bc)
            q = conormal_trace(mesh, ident, field)
            errs.append(np.max(np.abs(q.values - 2 * np.cos(2 * q.theta))))
            hs.append(mesh.h_max)
        order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert order >= 1.9

    def test_conservation(self, mesh3, ident):
        bc = BoundaryTrace.from_function(mesh3, lambda th: dirichlet_g(1.5, th))
        field = solve_dirichlet(mesh3, ident, bc)
        q = conormal_trace(mesh3, ident, field)
        assert abs(np.sum(q.values * mesh3.arc_weights)) < 1e-8

    def test_nonsolution_rejected(self, mesh3, ident):
        rng = np.random.default_rng(0)
        field = NodalField(mesh3, rng.normal(size=len(mesh3.vertices)))
        with pytest.raises(PreconditionError):
            conormal_trace(mesh3, ident, field)


class TestDirichletG:
    def test_values(self):
        assert dirichlet_g(1.0, 0.0) == pytest.approx(0.9, abs=1e-14)
        assert dirichlet_g(2.0, 0.0) == pytest.approx(1.8, abs=1e-14)
        assert dirichlet_g(1.1, -np.pi) == pytest.approx(
            1.1 * (math.exp(-np.pi**2) - 0.1), abs=1e-12)


class TestKirchhoff:
    def test_identity_gamma(self, mesh3, ident):
        g = GammaGrid.constant(1.0, -1.2, 1.2, 5)
        bc = BoundaryTrace.from_function(mesh3, math.cos)
        u, v = solve_forward_kirchhoff(mesh3, ident, g, bc)
        assert np.max(np.abs(u.values - v.values)) < 1e-12
        linear = solve_dirichlet(mesh3, ident, bc)
        assert np.max(np.abs(u.values - linear.values)) < 1e-10

    def test_constant_gamma_scaling(self, mesh3, ident):
        bc = BoundaryTrace.from_function(mesh3, lambda th: dirichlet_g(1.5, th))
        g1 = GammaGrid.constant(1.0, -0.2, 1.8, 5)
        gc = GammaGrid.constant(2.5, -0.2, 1.8, 5)
        u1, v1 = solve_forward_kirchhoff(mesh3, ident, g1, bc)
        uc, vc = solve_forward_kirchhoff(mesh3, ident, gc, bc)
        assert np.max(np.abs(u1.values - uc.values)) < 1e-11
        assert np.max(np.abs(vc.values - 2.5 * v1.values)) < 1e-11

    def test_max_principle(self, mesh3, ident):
        g = GammaGrid.from_callable(-0.2, 1.8, 101, quad_gamma)
        for k in (1.1, 1.6, 2.0):
            bc = BoundaryTrace.from_function(mesh3, lambda th: dirichlet_g(k, th))
            u, _ = solve_forward_kirchhoff(mesh3, ident, g, bc)
            assert check_max_principle(u.values, bc.values)

    def test_picard_gap_shrinks_quadratically(self, ident):
        g = GammaGrid.from_callable(-0.2, 1.8, 101, quad_gamma)
        gaps, hs = [], []
        for nr in (3, 4):
            mesh = build_disk_mesh(nr)
            bc = BoundaryTrace.from_function(mesh, lambda th: dirichlet_g(2.0, th))
            u, _ = solve_forward_kirchhoff(mesh, ident, g, bc)
            up = solve_forward_picard(mesh, ident, g, bc)
            gaps.append(np.max(np.abs(u.values - up.values)))
            hs.append(mesh.h_max)
        order = math.log(gaps[0] / gaps[1]) / math.log(hs[0] / hs[1])
        assert gaps[1] < gaps[0]
        assert order >= 1.5  # the two discretizations differ at O(h^2)

    def test_picard_identity_one_iteration(self, mesh3, ident):
        g = GammaGrid.constant(1.0, -1.2, 1.2, 5)
        bc = BoundaryTrace.from_function(mesh3, math.cos)
        _, iters = solve_forward_picard(mesh3, ident, g, bc, return_iterations=True)
        assert iters <= 2

    def test_picard_iterations_mesh_insensitive(self, ident):
        g = GammaGrid.from_callable(-0.2, 1.8, 101, quad_gamma)
        counts = []
        for nr in (2, 3):
            mesh = build_disk_mesh(nr)
            bc = BoundaryTrace.from_function(mesh, lambda th: dirichlet_g(1.1, th))
            _, iters = solve_forward_picard(mesh, ident, g, bc, return_iterations=True)
            counts.append(iters)
        assert abs(counts[0] - counts[1]) <= 3

    def test_gamma_below_floor_rejected(self, mesh3, ident):
        g = GammaGrid(-0.2, 1.8, np.array([1e-9, 1.0]))
        bc = BoundaryTrace.from_function(mesh3, lambda th: dirichlet_g(1.1, th))
        with pytest.raises(PreconditionError):
            solve_forward_kirchhoff(mesh3, ident, g, bc)
