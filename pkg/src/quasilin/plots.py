"""Matplotlib figure rendering for the CLI report path.

Every function writes a PNG next to the CSV artifacts and returns the path.
The Agg backend is forced so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.tri as mtri  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return str(path)


def plot_profile_1d(path, x, u, lam):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(x, u, "b-")
    ax.set_xlabel("x")
    ax.set_ylabel("u(x)")
    ax.set_title(f"forward solution, boundary value {lam:g}")
    return _save(fig, path)


def plot_phi(path, lambdas, phis):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(lambdas, phis, "k.-", ms=3)
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"$\varphi(\lambda)$")
    ax.set_title("Neumann data")
    return _save(fig, path)


def plot_field_2d(path, mesh, values, title="solution"):
    tri = mtri.Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1],
                             mesh.triangles)
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    tc = ax.tricontourf(tri, values, levels=24, cmap="viridis")
    fig.colorbar(tc, ax=ax, shrink=0.85)
    ax.set_aspect("equal")
    ax.set_title(title)
    return _save(fig, path)


def plot_trace(path, theta, values, title="conormal trace"):
    order = np.argsort(theta)
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(np.asarray(theta)[order], np.asarray(values)[order], "b.-", ms=3)
    ax.set_xlabel(r"$\theta$")
    ax.set_ylabel("flux")
    ax.set_title(title)
    return _save(fig, path)


def plot_reconstruction(path, nodes, gamma_hat, gamma_truth=None, gamma_init=None):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    if gamma_truth is not None:
        ax.plot(nodes, gamma_truth, "k-", label="exact")
    if gamma_init is not None:
        ax.plot(nodes, gamma_init, "g--", label="initial")
    ax.plot(nodes, gamma_hat, "r-", label="recovered")
    ax.set_xlabel("s")
    ax.set_ylabel(r"$\gamma(s)$")
    ax.legend()
    return _save(fig, path)


def plot_history(path, iters, j0, l2_error=None):
    fig, axes = plt.subplots(1, 2 if l2_error is not None else 1,
                             figsize=(8 if l2_error is not None else 5, 3.4))
    axes = np.atleast_1d(axes)
    axes[0].semilogy(iters, np.maximum(j0, 1e-300), "b-")
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("data misfit")
    if l2_error is not None:
        axes[1].semilogy(iters, np.maximum(l2_error, 1e-300), "r-")
        axes[1].set_xlabel("iteration")
        axes[1].set_ylabel(r"$L^2$ error")
    return _save(fig, path)


def plot_gradcheck(path, adjoint_grad, fd_grad):
    k = np.arange(len(adjoint_grad))
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(k, fd_grad, "ko", ms=4, label="finite differences")
    ax.plot(k, adjoint_grad, "r.", ms=3, label="adjoint")
    ax.set_xlabel("node index")
    ax.set_ylabel("gradient component")
    ax.legend()
    return _save(fig, path)


def plot_sweep(path, sup_phi, gap, slope, expected):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.loglog(sup_phi, gap, "bo", ms=4, label="pairs")
    anchor = gap[0] / sup_phi[0] ** slope
    ax.loglog(sup_phi, anchor * np.asarray(sup_phi) ** slope, "r--",
              label=f"fit {slope:.4f} (expected {expected:.4f})")
    ax.set_xlabel(r"$\sup|\varphi|$")
    ax.set_ylabel(r"$\|\gamma_1-\gamma_2\|_\infty$")
    ax.legend()
    return _save(fig, path)


def plot_inequality(path, results):
    ps = sorted(results)
    slacks = [results[p]["min_rel_slack"] for p in ps]
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.bar([str(p) for p in ps], slacks, color="steelblue")
    ax.set_xlabel("p")
    ax.set_ylabel("minimum relative slack")
    ax.set_title("lower-bound slack across Monte-Carlo samples")
    return _save(fig, path)
