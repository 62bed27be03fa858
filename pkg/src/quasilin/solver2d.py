"""P1 finite elements on the unit disk.

The forward problem div(gamma(u) A grad u) = 0 is solved through the
substitution v = G(u) (G the antiderivative of gamma), which turns it into a
single linear solve div(A grad v) = 0 followed by two nodewise compositions.
A Picard iteration on the original quasilinear form is kept as an independent
oracle.  Boundary fluxes are recovered variationally: the stiffness residual
on boundary rows equals the weak conormal derivative, and a 1D boundary mass
solve turns it into nodal values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu, spsolve

from .coeffspace import GammaGrid, antiderivative, eval_gamma, inverse_antiderivative
from .errors import ConvergenceError, DataError, PreconditionError, RangeError

MAX_PRINCIPLE_SLACK = 1e-10


# ---------------------------------------------------------------------------
# mesh
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiskMesh:
    """Triangulation of the unit disk.

    ``boundary`` lists boundary vertex indices ordered by angle in [-pi, pi);
    ``arc_weights`` are lumped boundary quadrature weights built from angular
    gaps, so they sum to 2*pi exactly up to rounding.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    boundary_edges: np.ndarray
    n_refine: int

    @cached_property
    def areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def grads(self):
        """P1 shape-function gradients, shape (n_tri, 2, 3)."""
        p = self.vertices[self.triangles]
        x, y = p[..., 0], p[..., 1]
        g = np.empty((len(self.triangles), 2, 3))
        g[:, 0, 0] = y[:, 1] - y[:, 2]
        g[:, 0, 1] = y[:, 2] - y[:, 0]
        g[:, 0, 2] = y[:, 0] - y[:, 1]
        g[:, 1, 0] = x[:, 2] - x[:, 1]
        g[:, 1, 1] = x[:, 0] - x[:, 2]
        g[:, 1, 2] = x[:, 1] - x[:, 0]
        return g / (2.0 * self.areas)[:, None, None]

    @cached_property
    def barycenters(self):
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def h_max(self):
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        return float(np.sqrt((e**2).sum(axis=-1)).max())

    @cached_property
    def boundary_theta(self):
        th = np.arctan2(self.vertices[self.boundary, 1], self.vertices[self.boundary, 0])
        return np.where(th >= np.pi - 1e-14, th - 2.0 * np.pi, th)

    @cached_property
    def arc_lengths(self):
        """Angular gap of each boundary element (vertex i to i+1, cyclic)."""
        th = self.boundary_theta
        gaps = np.diff(np.concatenate([th, [th[0] + 2.0 * np.pi]]))
        return gaps

    @cached_property
    def arc_weights(self):
        gaps = self.arc_lengths
        return 0.5 * (gaps + np.roll(gaps, 1))

    @cached_property
    def boundary_mass(self):
        """Cyclic 1D P1 mass matrix on the boundary loop (arc-length metric)."""
        n = len(self.boundary)
        L = self.arc_lengths
        diag = (L + np.roll(L, 1)) / 3.0
        rows = np.concatenate([np.arange(n), np.arange(n), (np.arange(n) + 1) % n])
        cols = np.concatenate([np.arange(n), (np.arange(n) + 1) % n, np.arange(n)])
        data = np.concatenate([diag, L / 6.0, L / 6.0])
        return sp.csc_matrix((data, (rows, cols)), shape=(n, n))

    @cached_property
    def interior(self):
        mask = np.ones(len(self.vertices), dtype=bool)
        mask[self.boundary] = False
        return np.nonzero(mask)[0]

    def min_angle_deg(self):
        p = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosang = (a * b).sum(-1) / (np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1))
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return float(np.min(angles))


def build_disk_mesh(n_refine: int) -> DiskMesh:
    """Structured mesh: a fan of 8 triangles around the origin, refined
    ``n_refine`` times with boundary midpoints projected radially onto the
    unit circle, then Laplacian-smoothed away from the boundary layer."""
    if n_refine < 0:
        raise PreconditionError("n_refine must be >= 0")
    thetas = -np.pi + np.arange(8) * (np.pi / 4.0)
    verts = [np.zeros(2)] + [np.array([np.cos(t), np.sin(t)]) for t in thetas]
    tris = [(0, 1 + i, 1 + (i + 1) % 8) for i in range(8)]
    bedges = [(1 + i, 1 + (i + 1) % 8) for i in range(8)]
    for _ in range(n_refine):
        verts, tris, bedges = _refine_once(verts, tris, bedges)
    vertices = _smooth_core(np.asarray(verts), np.asarray(tris, dtype=int))
    bset = sorted({i for e in bedges for i in e})
    th = np.arctan2(vertices[bset, 1], vertices[bset, 0])
    th = np.where(th >= np.pi - 1e-14, th - 2.0 * np.pi, th)
    order = np.argsort(th)
    boundary = np.asarray(bset)[order]
    return DiskMesh(
        vertices=vertices,
        triangles=np.asarray(tris, dtype=int),
        boundary=boundary,
        boundary_edges=np.asarray(bedges, dtype=int),
        n_refine=n_refine,
    )


def _smooth_core(vertices, triangles, n_pass=30, r_keep=0.7):
    """Relax interior vertices with ``r < r_keep`` toward their neighbor
    averages.  The refinement fan concentrates angular distortion near the
    mid-radius; relaxing the core removes it while the untouched outer band
    keeps the exact boundary-edge geometry that the flux recovery relies on."""
    n = len(vertices)
    rows, cols = [], []
    for a, b, c in triangles:
        for i, j in ((a, b), (b, c), (c, a)):
            rows += [i, j]
            cols += [j, i]
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    adj = (adj > 0).astype(float)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    out = vertices.copy()
    mask = np.linalg.norm(out, axis=1) < r_keep
    for _ in range(n_pass):
        out[mask] = ((adj @ out) / deg[:, None])[mask]
    return out


def _refine_once(verts, tris, bedges):
    verts = list(verts)
    bedge_set = {frozenset(e) for e in bedges}
    midpoint = {}

    def mid(a, b):
        key = frozenset((a, b))
        if key not in midpoint:
            pt = 0.5 * (verts[a] + verts[b])
            if key in bedge_set:
                pt = pt / np.linalg.norm(pt)
            verts.append(pt)
            midpoint[key] = len(verts) - 1
        return midpoint[key]

    new_tris = []
    for a, b, c in tris:
        mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
        new_tris += [(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)]
    new_bedges = []
    for a, b in bedges:
        m = midpoint[frozenset((a, b))]
        new_bedges += [(a, m), (m, b)]
    return verts, new_tris, new_bedges


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatrixField:
    """Symmetric elliptic coefficient tensor A(x), sampled pointwise."""

    sampler: object
    ellipticity_floor: float = 1e-10

    @classmethod
    def identity(cls):
        eye = np.eye(2)
        return cls(sampler=lambda p: eye, ellipticity_floor=1.0)

    def at_points(self, pts):
        mats = np.asarray([np.asarray(self.sampler(p), dtype=float) for p in pts])
        if np.max(np.abs(mats - mats.transpose(0, 2, 1))) > 1e-14:
            raise DataError("coefficient matrix is not symmetric")
        tr = mats[:, 0, 0] + mats[:, 1, 1]
        det = mats[:, 0, 0] * mats[:, 1, 1] - mats[:, 0, 1] * mats[:, 1, 0]
        lam_min = 0.5 * (tr - np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0)))
        bad = np.nonzero(lam_min < self.ellipticity_floor - 1e-14)[0]
        if bad.size:
            raise DataError(f"ellipticity floor violated at sample {bad[0]}")
        return mats


@dataclass(frozen=True)
class NodalField:
    mesh: DiskMesh
    values: np.ndarray


@dataclass(frozen=True)
class BoundaryTrace:
    """Per-boundary-vertex values, ordered like ``mesh.boundary``."""

    mesh: DiskMesh
    values: np.ndarray

    @classmethod
    def from_function(cls, mesh, fn):
        return cls(mesh, np.asarray([fn(t) for t in mesh.boundary_theta], dtype=float))

    @property
    def arc_weights(self):
        return self.mesh.arc_weights

    @property
    def theta(self):
        return self.mesh.boundary_theta


def dirichlet_g(k: float, theta):
    """Boundary excitation k*(exp(-theta^2) - 0.1)."""
    return k * (np.exp(-np.asarray(theta, dtype=float) ** 2) - 0.1)


# ---------------------------------------------------------------------------
# assembly and linear solves
# ---------------------------------------------------------------------------

def local_stiffness(mesh: DiskMesh, A: MatrixField):
    """Per-triangle local matrices area * G^T A(bary) G, shape (n_tri, 3, 3)."""
    Am = A.at_points(mesh.barycenters)
    G = mesh.grads
    AG = np.einsum("tij,tjk->tik", Am, G)
    return mesh.areas[:, None, None] * np.einsum("tji,tjk->tik", G, AG)


def assemble_from_local(mesh: DiskMesh, loc, scale=None):
    data = loc if scale is None else scale[:, None, None] * loc
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = len(mesh.vertices)
    return sp.csr_matrix((data.ravel(), (rows, cols)), shape=(n, n))


def assemble_stiffness(mesh: DiskMesh, A: MatrixField, scale=None):
    """Global P1 stiffness with one-point (barycenter) coefficient
    evaluation; optionally scaled per triangle."""
    return assemble_from_local(mesh, local_stiffness(mesh, A), scale)


def pcg(K, b, rtol=1e-12, max_iter=None):
    """Jacobi-preconditioned conjugate gradients; raises on stagnation with
    the residual history attached."""
    n = b.size
    if max_iter is None:
        max_iter = 20 * n + 100
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    Minv = 1.0 / K.diagonal()
    x = np.zeros(n)
    r = b.copy()
    z = Minv * r
    p = z.copy()
    rz = r @ z
    history = [np.linalg.norm(r) / bnorm]
    for _ in range(max_iter):
        Kp = K @ p
        alpha = rz / (p @ Kp)
        x += alpha * p
        r -= alpha * Kp
        res = np.linalg.norm(r) / bnorm
        history.append(res)
        if res < rtol:
            return x
        z = Minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"CG stalled at relative residual {history[-1]:.3e}", residuals=history)


class DirichletWorkspace:
    """Cached assembly + factorization for repeated solves against the same
    operator (the Kirchhoff path reuses one Laplace-type operator for every
    boundary datum and every optimizer iteration)."""

    def __init__(self, mesh: DiskMesh, A: MatrixField):
        self.mesh = mesh
        self.A = A
        self.local = local_stiffness(mesh, A)
        self.K = assemble_from_local(mesh, self.local)
        self.interior = mesh.interior
        self.boundary = mesh.boundary
        self._Kib = self.K[self.interior][:, self.boundary]
        self._lu = splu(self.K[self.interior][:, self.interior].tocsc())
        self._mass_lu = splu(mesh.boundary_mass)

    def solve(self, boundary_values) -> NodalField:
        vals = np.zeros(len(self.mesh.vertices))
        vals[self.boundary] = boundary_values
        vals[self.interior] = self._lu.solve(-(self._Kib @ boundary_values))
        return NodalField(self.mesh, vals)

    def trace(self, field: NodalField) -> BoundaryTrace:
        return conormal_trace(self.mesh, self.A, field, K=self.K, mass_solve=self._mass_lu.solve)


def solve_dirichlet(mesh: DiskMesh, A: MatrixField, g_boundary: BoundaryTrace,
                    K=None, rtol=1e-12) -> NodalField:
    """Linear Dirichlet solve by Jacobi-preconditioned CG on the reduced SPD
    system; boundary values are imposed exactly."""
    if K is None:
        K = assemble_stiffness(mesh, A)
    interior = mesh.interior
    boundary = mesh.boundary
    rhs = -(K[interior][:, boundary] @ np.asarray(g_boundary.values, dtype=float))
    vals = np.zeros(len(mesh.vertices))
    vals[boundary] = g_boundary.values
    vals[interior] = pcg(K[interior][:, interior], rhs, rtol=rtol)
    return NodalField(mesh, vals)


def conormal_trace(mesh: DiskMesh, A: MatrixField, field: NodalField,
                   K=None, mass_solve=None) -> BoundaryTrace:
    """Variationally consistent boundary flux: boundary rows of the stiffness
    residual, mapped through the inverse boundary mass matrix."""
    if K is None:
        K = assemble_stiffness(mesh, A)
    r = K @ field.values
    r_b = r[mesh.boundary]
    scale = max(1.0, float(np.max(np.abs(r_b))) if r_b.size else 1.0)
    r_int = r[mesh.interior]
    if r_int.size and np.max(np.abs(r_int)) > 1e-8 * scale:
        raise PreconditionError(
            f"field is not a discrete solution (interior residual {np.max(np.abs(r_int)):.3e})"
        )
    if mass_solve is None:
        q = spsolve(mesh.boundary_mass, r_b)
    else:
        q = mass_solve(r_b)
    return BoundaryTrace(mesh, np.asarray(q, dtype=float))


# ---------------------------------------------------------------------------
# quasilinear forward solvers
# ---------------------------------------------------------------------------

def _clamp_to_range(values, lo, hi, slack, what):
    below = lo - values.min()
    above = values.max() - hi
    if max(below, above) > slack:
        raise RangeError(
            f"{what} violates the discrete maximum principle by {max(below, above):.3e}"
        )
    return np.clip(values, lo, hi)


def solve_forward_kirchhoff(mesh: DiskMesh, A: MatrixField, g: GammaGrid,
                            bc: BoundaryTrace, workspace: DirichletWorkspace = None):
    """Forward solve via v = G(u): one linear solve with boundary data G(bc),
    then nodewise inversion of the antiderivative.  Returns (u, v)."""
    if g.values.min() < g.floor:
        raise PreconditionError("gamma must stay above its positivity floor")
    gb = np.asarray(bc.values, dtype=float)
    vb = antiderivative(g, gb)
    if workspace is not None:
        v = workspace.solve(vb)
    else:
        v = solve_dirichlet(mesh, A, BoundaryTrace(mesh, vb))
    # tiny max-principle overshoots are clamped so Ginv stays defined
    vvals = _clamp_to_range(v.values, vb.min(), vb.max(), MAX_PRINCIPLE_SLACK,
                            "transformed field")
    u = inverse_antiderivative(g, vvals)
    return NodalField(mesh, u), NodalField(mesh, vvals)


def solve_forward_picard(mesh: DiskMesh, A: MatrixField, g: GammaGrid,
                         bc: BoundaryTrace, tol=1e-12, max_iter=500,
                         return_iterations=False):
    """Independent oracle: frozen-coefficient iteration, reassembling the
    stiffness with gamma evaluated at triangle barycenters of the current
    iterate."""
    if g.values.min() < g.floor:
        raise PreconditionError("gamma must stay above its positivity floor")
    loc = local_stiffness(mesh, A)
    gb = np.asarray(bc.values, dtype=float)
    interior, boundary = mesh.interior, mesh.boundary
    tri = mesh.triangles
    vals = np.zeros(len(mesh.vertices))
    vals[boundary] = gb
    u = vals.copy()  # start from the zero-extension of the boundary data
    diff = np.inf
    for it in range(max_iter):
        s_t = u[tri].mean(axis=1)
        scale = eval_gamma(g, s_t)
        K = assemble_from_local(mesh, loc, scale)
        new = vals.copy()
        new[interior] = spsolve(K[interior][:, interior].tocsc(),
                                -(K[interior][:, boundary] @ gb))
        diff = float(np.max(np.abs(new - u)))
        u = new
        if diff < tol:
            u = _clamp_to_range(u, gb.min(), gb.max(), MAX_PRINCIPLE_SLACK, "Picard iterate")
            field = NodalField(mesh, u)
            return (field, it + 1) if return_iterations else field
    raise ConvergenceError(f"Picard did not converge (last diff {diff:.3e})",
                           residuals=[diff])


def check_max_principle(u_values, bc_values, slack=MAX_PRINCIPLE_SLACK):
    """True iff all nodal values lie within the boundary-data range + slack."""
    return (u_values.min() >= np.min(bc_values) - slack
            and u_values.max() <= np.max(bc_values) + slack)


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def _header_comment(mesh):
    return f"# h_max={mesh.h_max!r} n_refine={mesh.n_refine}"


def mesh_to_csv(mesh: DiskMesh, vertex_path, triangle_path):
    for path, rows, header in (
        (vertex_path, mesh.vertices, ["x", "y"]),
        (triangle_path, mesh.triangles, ["v0", "v1", "v2"]),
    ):
        with open(path, "w", newline="") as fh:
            fh.write(_header_comment(mesh) + "\n")
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow(list(row))


def field_to_csv(field: NodalField, path):
    with open(path, "w", newline="") as fh:
        fh.write(_header_comment(field.mesh) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "value"])
        for (x, y), v in zip(field.mesh.vertices, field.values):
            writer.writerow([repr(float(x)), repr(float(y)), repr(float(v))])


def trace_to_csv(trace: BoundaryTrace, path):
    with open(path, "w", newline="") as fh:
        fh.write(_header_comment(trace.mesh) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["theta", "value"])
        for t, v in zip(trace.theta, trace.values):
            writer.writerow([repr(float(t)), repr(float(v))])
