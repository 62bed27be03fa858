"""Iterative reconstruction drivers: gradient descent and Adam, noise
injection, error tracking, and the 1D/2D experiment presets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import simpson

from .adjoint import (
    full_gradient,
    gradient_1d,
    gradient_2d_exact,
    hat_integral_matrix,
    misfit,
    misfit_1d,
)
from .coeffspace import (
    GammaGrid,
    antiderivative,
    coverage_lengths,
    eval_gamma,
    h1_seminorm_sq,
    project_positive,
)
from .errors import InvalidArgumentError, QuasilinError
from .solver1d import Coefficient1D
from .solver2d import (
    BoundaryTrace,
    DirichletWorkspace,
    MatrixField,
    build_disk_mesh,
    dirichlet_g,
    solve_forward_kirchhoff,
)


@dataclass(frozen=True)
class OptimConfig:
    method: str = "gd"  # "gd" or "adam"
    step: float = 0.1
    beta_reg: float = 1e-3
    max_iter: int = 1000
    batch: int = 1  # measurements per step; clipped to the full set at runtime
    momenta: tuple = (0.9, 0.999)
    positivity_floor: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.step <= 0:
            raise InvalidArgumentError("step must be positive")
        if not all(0.0 <= m < 1.0 for m in self.momenta):
            raise InvalidArgumentError("momenta must lie in [0, 1)")
        if self.batch < 1:
            raise InvalidArgumentError("batch must be >= 1")
        if self.method not in ("gd", "adam"):
            raise InvalidArgumentError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class IterRecord:
    iter: int
    j0: float
    reg: float
    l2_error: float  # NaN when no ground truth is known


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)


@dataclass
class ReconstructionRun:
    gamma: GammaGrid
    history: list
    manifest: dict


def add_noise(v, eps, seed=0):
    """Multiplicative Gaussian noise v * (1 + eps * xi); eps=0 is the
    identity, and a fixed seed is bit-reproducible."""
    v = np.asarray(v, dtype=float)
    if eps < 0:
        raise InvalidArgumentError("noise level must be >= 0")
    if eps == 0.0:
        return v.copy()
    xi = np.random.default_rng(seed).standard_normal(v.shape)
    return v * (1.0 + eps * xi)


def gd_step(gamma: GammaGrid, gradient, step) -> GammaGrid:
    return project_positive(gamma.with_values(gamma.values - step * np.asarray(gradient)))


def adam_step(gamma: GammaGrid, gradient, state: AdamState, config: OptimConfig):
    """Bias-corrected Adam update followed by the positivity projection."""
    b1, b2 = config.momenta
    eps = 1e-8
    grad = np.asarray(gradient, dtype=float)
    t = state.t + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    new_vals = gamma.values - config.step * m_hat / (np.sqrt(v_hat) + eps)
    return project_positive(gamma.with_values(new_vals)), AdamState(m=m, v=v, t=t)


def l2_error(gamma_hat: GammaGrid, gamma_truth, interval=(0.0, 1.0), n=2001) -> float:
    """Composite-Simpson L2 norm of the difference on ``interval``.

    ``gamma_truth`` may be a GammaGrid or a plain callable.
    """
    s = np.linspace(interval[0], interval[1], n)
    a = eval_gamma(gamma_hat, s)
    if isinstance(gamma_truth, GammaGrid):
        b = eval_gamma(gamma_truth, s)
    else:
        b = np.asarray([gamma_truth(si) for si in s], dtype=float)
    return float(math.sqrt(max(simpson((a - b) ** 2, x=s), 0.0)))


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

TRUTH_1D = {
    "nonsmooth": lambda s: 1.0 - np.sign(s - 0.5) * np.sqrt(abs(s - 0.5)),
    "smooth": lambda s: math.exp(-s),
}
TRUTH_2D = lambda s: 0.3 * s * s + 0.2 * s + 0.25  # noqa: E731


@dataclass(frozen=True)
class Preset1D:
    """1D experiment: 100 Dirichlet levels, Adam, H1 penalty 0.1."""

    gamma_name: str = "smooth"
    n_nodes: int = 101
    interval: tuple = (0.0, 1.0)
    lambdas: np.ndarray = field(default_factory=lambda: 0.01 * np.arange(1, 101))
    beta: float = 0.1
    config: OptimConfig = OptimConfig(
        method="adam", step=1.0 / 300.0, beta_reg=0.1, max_iter=5000,
        batch=100, momenta=(0.9, 0.9), positivity_floor=1e-3,
    )
    data_refine: int = 2  # synthetic gamma sampled this much finer

    @property
    def truth(self):
        return TRUTH_1D[self.gamma_name]

    def initial_gamma(self):
        return GammaGrid.from_callable(
            *self.interval, self.n_nodes, lambda s: -0.25 * s + 0.5,
            floor=self.config.positivity_floor,
        )


@dataclass(frozen=True)
class Preset2D:
    """2D experiment on the unit disk: boundary data g_k, gradient descent
    with step 1/|Xi|, H1 penalty 1e-3 in coverage weighting."""

    xi: tuple = tuple(round(1.0 + 0.1 * d, 10) for d in range(1, 11))
    n_nodes: int = 101
    interval: tuple = (-0.2, 1.8)
    beta: float = 1e-3
    n_refine: int = 4
    config: OptimConfig = OptimConfig(
        method="gd", step=0.1, beta_reg=1e-3, max_iter=2000,
        positivity_floor=1e-3,
    )
    data_refine_extra: int = 1  # data mesh is this many refinements finer
    data_refine: int = 2

    @property
    def truth(self):
        return TRUTH_2D

    def initial_gamma(self):
        return GammaGrid.from_callable(
            *self.interval, self.n_nodes, lambda s: 0.5 * s + 0.5,
            floor=self.config.positivity_floor,
        )

    def resolved_config(self):
        return replace(self.config, step=1.0 / len(self.xi), batch=len(self.xi))


def make_preset(name, **overrides):
    if name == "bench-1d":
        return Preset1D(**overrides)
    if name == "bench-2d":
        return Preset2D(**overrides)
    raise InvalidArgumentError(f"unknown preset {name!r}")


# ---------------------------------------------------------------------------
# data generation
# ---------------------------------------------------------------------------

def synth_data_1d(preset: Preset1D, a: Coefficient1D, noise_eps, seed):
    """Neumann data phi(lambda) from the ground truth sampled on a finer
    gamma grid (inverse-crime avoidance), with multiplicative noise."""
    fine_nodes = preset.data_refine * (preset.n_nodes - 1) + 1
    truth = GammaGrid.from_callable(*preset.interval, fine_nodes, preset.truth,
                                    floor=1e-6)
    phi = antiderivative(truth, preset.lambdas) / a.c_a
    return add_noise(phi, noise_eps, seed), truth


def synth_data_2d(preset: Preset2D, A: MatrixField, mesh, noise_eps, seed):
    """Conormal data per measurement from a finer mesh and a finer gamma
    sampling, interpolated in theta onto the inversion boundary."""
    fine_mesh = build_disk_mesh(preset.n_refine + preset.data_refine_extra)
    fine_ws = DirichletWorkspace(fine_mesh, A)
    fine_nodes = preset.data_refine * (preset.n_nodes - 1) + 1
    truth = GammaGrid.from_callable(*preset.interval, fine_nodes, preset.truth,
                                    floor=1e-6)
    th_fine = fine_mesh.boundary_theta
    th_coarse = mesh.boundary_theta
    data = {}
    for i, k in enumerate(preset.xi):
        bc_f = BoundaryTrace(fine_mesh, dirichlet_g(k, th_fine))
        _, v_f = solve_forward_kirchhoff(fine_mesh, A, truth, bc_f, workspace=fine_ws)
        tr_f = fine_ws.trace(v_f)
        # periodic interpolation in theta
        th_pad = np.concatenate([th_fine - 2 * np.pi, th_fine, th_fine + 2 * np.pi])
        v_pad = np.tile(tr_f.values, 3)
        v_coarse = np.interp(th_coarse, th_pad, v_pad)
        data[k] = add_noise(v_coarse, noise_eps, seed + i)
    return data, truth


# ---------------------------------------------------------------------------
# reconstruction drivers
# ---------------------------------------------------------------------------

def _step(gamma, total_grad, config, adam_state):
    if config.method == "adam":
        return adam_step(gamma, total_grad, adam_state, config)
    return gd_step(gamma, total_grad, config.step), adam_state


def run_reconstruction_1d(preset: Preset1D, config: OptimConfig = None,
                          noise_eps=0.0, seed=0, a: Coefficient1D = None,
                          v_data=None, max_iter=None) -> ReconstructionRun:
    config = config or preset.config
    if max_iter is not None:
        config = replace(config, max_iter=max_iter)
    if a is None:
        a = Coefficient1D.constant(1.0)
    gamma = preset.initial_gamma()
    truth = None
    if v_data is None:
        v_data, truth = synth_data_1d(preset, a, noise_eps, seed)
    hat_B = hat_integral_matrix(gamma, preset.lambdas)
    adam_state = AdamState.zeros(gamma.n_nodes)
    n_meas = len(preset.lambdas)
    batch_rng = np.random.default_rng(config.seed + 1)
    history = []
    for it in range(config.max_iter):
        if config.batch < n_meas:
            pick = batch_rng.choice(n_meas, size=config.batch, replace=False)
            data_grad = gradient_1d(gamma, a.c_a, preset.lambdas[pick],
                                    np.asarray(v_data)[pick], hat_B=hat_B[pick])
        else:
            data_grad = gradient_1d(gamma, a.c_a, preset.lambdas, v_data, hat_B=hat_B)
        grad = full_gradient(data_grad, gamma, config.beta_reg)
        j0 = misfit_1d(gamma, a.c_a, preset.lambdas, v_data)
        reg = h1_seminorm_sq(gamma)
        err = l2_error(gamma, truth, preset.interval) if truth is not None else float("nan")
        history.append(IterRecord(iter=it, j0=j0, reg=reg, l2_error=err))
        gamma, adam_state = _step(gamma, grad.total, config, adam_state)
    manifest = {
        "preset": "bench-1d",
        "gamma_name": preset.gamma_name,
        "config": vars_of(config),
        "noise_eps": noise_eps,
        "seed": seed,
        "n_nodes": preset.n_nodes,
        "n_lambdas": int(len(preset.lambdas)),
        "data_refine": preset.data_refine,
    }
    return ReconstructionRun(gamma=gamma, history=history, manifest=manifest)


def run_reconstruction_2d(preset: Preset2D, config: OptimConfig = None,
                          noise_eps=0.0, seed=0, v_data=None,
                          max_iter=None) -> ReconstructionRun:
    config = config or preset.resolved_config()
    if max_iter is not None:
        config = replace(config, max_iter=max_iter)
    A = MatrixField.identity()
    mesh = build_disk_mesh(preset.n_refine)
    ws = DirichletWorkspace(mesh, A)
    gamma = preset.initial_gamma()
    truth = None
    if v_data is None:
        v_data, truth = synth_data_2d(preset, A, mesh, noise_eps, seed)
    th = mesh.boundary_theta
    bcs = {k: BoundaryTrace(mesh, dirichlet_g(k, th)) for k in preset.xi}
    traces = {k: BoundaryTrace(mesh, np.asarray(v_data[k], dtype=float)) for k in preset.xi}
    hat_Bs = {k: hat_integral_matrix(gamma, bcs[k].values) for k in preset.xi}
    # regularizer coverage: boundary-cell sub-intervals of every measurement
    intervals = []
    for k in preset.xi:
        b = bcs[k].values
        intervals += [(b[i], b[(i + 1) % len(b)]) for i in range(len(b))]
    cov = coverage_lengths(gamma, intervals)
    adam_state = AdamState.zeros(gamma.n_nodes)
    batch_rng = np.random.default_rng(config.seed + 1)
    history = []
    aborted = None
    for it in range(config.max_iter):
        if config.batch < len(preset.xi):
            pick = batch_rng.choice(len(preset.xi), size=config.batch, replace=False)
            active = [preset.xi[i] for i in sorted(pick)]
        else:
            active = preset.xi
        data_grad = np.zeros(gamma.n_nodes)
        j0 = 0.0
        try:
            for k in active:
                state = misfit(mesh, A, gamma, bcs[k], traces[k], workspace=ws)
                data_grad += gradient_2d_exact(mesh, A, gamma, bcs[k], state.residual,
                                               workspace=ws, hat_B=hat_Bs[k])
                j0 += state.j0
        except QuasilinError as exc:  # abort mid-run, keep partial history
            aborted = str(exc)
            break
        grad = full_gradient(data_grad, gamma, config.beta_reg, weighting=cov)
        reg = h1_seminorm_sq(gamma, cov)
        err = l2_error(gamma, truth, (0.0, 1.0)) if truth is not None else float("nan")
        history.append(IterRecord(iter=it, j0=j0, reg=reg, l2_error=err))
        gamma, adam_state = _step(gamma, grad.total, config, adam_state)
    manifest = {
        "preset": "bench-2d",
        "xi": list(preset.xi),
        "config": vars_of(config),
        "noise_eps": noise_eps,
        "seed": seed,
        "n_nodes": preset.n_nodes,
        "mesh": {"n_refine": preset.n_refine, "n_vertices": int(len(mesh.vertices)),
                 "h_max": mesh.h_max},
        "data_mesh_refine": preset.n_refine + preset.data_refine_extra,
        "data_refine": preset.data_refine,
    }
    if aborted:
        manifest["aborted"] = aborted
    return ReconstructionRun(gamma=gamma, history=history, manifest=manifest)


def run_reconstruction(preset, **kwargs) -> ReconstructionRun:
    """Dispatch on preset type (1D or 2D)."""
    if isinstance(preset, Preset1D):
        return run_reconstruction_1d(preset, **kwargs)
    if isinstance(preset, Preset2D):
        return run_reconstruction_2d(preset, **kwargs)
    raise InvalidArgumentError(f"unknown preset object {preset!r}")


def vars_of(config: OptimConfig):
    return {
        "method": config.method,
        "step": config.step,
        "beta_reg": config.beta_reg,
        "max_iter": config.max_iter,
        "batch": config.batch,
        "momenta": list(config.momenta),
        "positivity_floor": config.positivity_floor,
        "seed": config.seed,
    }
