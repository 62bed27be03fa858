"""Tikhonov objective and its gradient with respect to the nodal gamma values.

2D: the misfit residual is the conormal trace of the transformed field minus
the measured data on the masked boundary set; the adjoint field is its
harmonic extension and the data gradient is the L2 pairing of grad z . A
grad u with the hat functions composed with u, evaluated per triangle with
one-point quadrature.

1D: the flux identity phi(lambda) = G(lambda)/c_a makes the misfit gradient
closed-form through the hat-function integrals of the antiderivative.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .coeffspace import (
    GammaGrid,
    antiderivative,
    eval_gamma,
    hat_at_many,
    seminorm_gradient,
)
from .errors import InvalidArgumentError
from .solver2d import (
    BoundaryTrace,
    DirichletWorkspace,
    DiskMesh,
    MatrixField,
    NodalField,
    conormal_trace,
    solve_dirichlet,
    solve_forward_kirchhoff,
)


@dataclass(frozen=True)
class MisfitState:
    u: NodalField
    v_data: BoundaryTrace
    residual: BoundaryTrace
    j0: float


@dataclass(frozen=True)
class GradientVector:
    data_part: np.ndarray
    reg_part: np.ndarray
    total: np.ndarray
    informed: np.ndarray = None


def resolve_mask(mesh: DiskMesh, s_mask=None):
    """Boundary mask: None (full circle), a boolean array, or a theta
    interval (lo, hi)."""
    th = mesh.boundary_theta
    if s_mask is None:
        return np.ones(th.size, dtype=bool)
    arr = np.asarray(s_mask)
    if arr.dtype == bool:
        if arr.size != th.size:
            raise InvalidArgumentError("mask length must match boundary vertex count")
        return arr
    lo, hi = float(arr[0]), float(arr[1])
    return (th >= lo) & (th <= hi)


def misfit(mesh: DiskMesh, A: MatrixField, g: GammaGrid, bc: BoundaryTrace,
           v_data: BoundaryTrace, s_mask=None,
           workspace: DirichletWorkspace = None) -> MisfitState:
    """Forward solve + masked conormal residual + data-fidelity value."""
    u, v = solve_forward_kirchhoff(mesh, A, g, bc, workspace=workspace)
    if workspace is not None:
        trace = workspace.trace(v)
    else:
        trace = conormal_trace(mesh, A, v)
    mask = resolve_mask(mesh, s_mask)
    res = np.where(mask, trace.values - v_data.values, 0.0)
    j0 = 0.5 * float(np.sum(res * res * mesh.arc_weights))
    return MisfitState(u=u, v_data=v_data, residual=BoundaryTrace(mesh, res), j0=j0)


def solve_adjoint(mesh: DiskMesh, A: MatrixField, residual: BoundaryTrace,
                  workspace: DirichletWorkspace = None) -> NodalField:
    """Harmonic extension of the boundary residual (linear in the residual)."""
    if workspace is not None:
        return workspace.solve(residual.values)
    return solve_dirichlet(mesh, A, residual)


def gradient_2d(mesh: DiskMesh, A: MatrixField, u: NodalField, z: NodalField,
                g: GammaGrid):
    """Data-misfit gradient: scatter area * (grad z . A grad u) per triangle
    into the hat basis at the barycenter value of u."""
    G = mesh.grads
    gu = np.einsum("tij,tj->ti", G, u.values[mesh.triangles])
    gz = np.einsum("tij,tj->ti", G, z.values[mesh.triangles])
    Am = A.at_points(mesh.barycenters)
    w = mesh.areas * np.einsum("ti,tij,tj->t", gz, Am, gu)
    s_t = u.values[mesh.triangles].mean(axis=1)
    k, w_left = hat_at_many(g, s_t)
    out = np.zeros(g.n_nodes)
    np.add.at(out, k, w * w_left)
    np.add.at(out, k + 1, w * (1.0 - w_left))
    return out


def gradient_2d_exact(mesh: DiskMesh, A: MatrixField, g: GammaGrid,
                      bc: BoundaryTrace, residual: BoundaryTrace,
                      workspace: DirichletWorkspace = None, hat_B=None):
    """Exact gradient of the discrete misfit.

    The discrete objective reaches gamma only through the transformed
    boundary values G(bc), so the chain collapses to a boundary pairing: with
    zeta the harmonic extension of M_b^{-1} (W r), the gradient is the
    boundary stiffness residual of zeta contracted with the hat-function
    antiderivative integrals at the boundary data.  Agrees with
    :func:`gradient_2d` up to the quadrature/interpolation error of the
    latter, and with finite differences of the implemented objective to
    rounding.
    """
    from scipy.sparse.linalg import spsolve as _spsolve

    w_r = mesh.arc_weights * residual.values
    if workspace is not None:
        zeta_b = workspace._mass_lu.solve(w_r)
        zeta = workspace.solve(zeta_b)
        K = workspace.K
    else:
        zeta_b = _spsolve(mesh.boundary_mass, w_r)
        zeta = solve_dirichlet(mesh, A, BoundaryTrace(mesh, zeta_b))
        K = None
    if K is None:
        from .solver2d import assemble_stiffness

        K = assemble_stiffness(mesh, A)
    flux_rows = (K @ zeta.values)[mesh.boundary]
    if hat_B is None:
        hat_B = hat_integral_matrix(g, bc.values)
    return flux_rows @ hat_B


def informed_nodes(mesh: DiskMesh, u: NodalField, g: GammaGrid):
    """Nodes whose hat function is touched by some barycenter value of u."""
    s_t = u.values[mesh.triangles].mean(axis=1)
    k, _ = hat_at_many(g, s_t)
    mask = np.zeros(g.n_nodes, dtype=bool)
    mask[k] = True
    mask[k + 1] = True
    return mask


def hat_integral_matrix(g: GammaGrid, lambdas):
    """B[i, k] = integral of the k-th hat function from the grid anchor to
    lambdas[i], in closed form (geometry only, independent of the values)."""
    lambdas = np.asarray(lambdas, dtype=float)
    nodes = g.nodes
    ds = g.ds
    anchor = g.anchor
    B = np.zeros((lambdas.size, g.n_nodes))
    for c in range(g.n_nodes - 1):
        a_node, b_node = nodes[c], nodes[c + 1]
        for lo, hi, sign in ((anchor, lambdas, 1.0),):
            # clip [min(lo,hi), max(lo,hi)] against the cell, orientation-aware
            left = np.minimum(lo, hi)
            right = np.maximum(lo, hi)
            aa = np.maximum(left, a_node)
            bb = np.minimum(right, b_node)
            ln = np.maximum(bb - aa, 0.0)
            # mean of the rising hat over [aa, bb] times length
            mid = 0.5 * (aa + bb)
            rise = ln * (mid - a_node) / ds
            fall = ln - rise
            orient = sign * np.where(lo <= hi, 1.0, -1.0)
            B[:, c] += orient * fall
            B[:, c + 1] += orient * rise
    return B


def _resolve_ca(c_a):
    return float(getattr(c_a, "c_a", c_a))


def gradient_1d(g: GammaGrid, c_a, lambdas, v_data, hat_B=None):
    """Closed-form data gradient of J0 = 1/2 sum (G(lambda)/c_a - v)^2;
    ``c_a`` may be the scalar integral or a Coefficient1D carrying it."""
    c_a = _resolve_ca(c_a)
    lambdas = np.asarray(lambdas, dtype=float)
    res = antiderivative(g, lambdas) / c_a - np.asarray(v_data, dtype=float)
    if hat_B is None:
        hat_B = hat_integral_matrix(g, lambdas)
    return (res / c_a) @ hat_B


def misfit_1d(g: GammaGrid, c_a, lambdas, v_data) -> float:
    c_a = _resolve_ca(c_a)
    res = antiderivative(g, np.asarray(lambdas, dtype=float)) / c_a - np.asarray(v_data, dtype=float)
    return 0.5 * float(np.sum(res * res))


def full_gradient(data_part, g: GammaGrid, beta: float, weighting="uniform",
                  informed=None) -> GradientVector:
    """Total gradient of the regularized objective; the regularizer carries
    beta/2, whose factor 2 from differentiation cancels against it."""
    data_part = np.asarray(data_part, dtype=float)
    reg = seminorm_gradient(g, weighting)
    return GradientVector(
        data_part=data_part,
        reg_part=reg,
        total=data_part + 0.5 * beta * reg,
        informed=informed,
    )


def gradcheck_to_csv(path, adjoint_grad, fd_grad):
    adjoint_grad = np.asarray(adjoint_grad, dtype=float)
    fd_grad = np.asarray(fd_grad, dtype=float)
    denom = np.maximum(np.abs(fd_grad), 1e-300)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_index", "adjoint_grad", "fd_grad", "rel_err"])
        for k, (ag, fg) in enumerate(zip(adjoint_grad, fd_grad)):
            writer.writerow([k, repr(float(ag)), repr(float(fg)),
                             repr(float(abs(ag - fg) / max(abs(fg), 1e-300)))])
