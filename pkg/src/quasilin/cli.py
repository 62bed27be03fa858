"""Command-line entry point.

Subcommands: forward1d, forward2d, reconstruct1d, reconstruct2d, gradcheck,
stability-sweep, inequality-check.  Each run owns an output directory and
writes CSV artifacts, rendered PNG figures, and a manifest.json holding the
fully resolved configuration plus content hashes of every artifact.

Configuration can come from a flat key = value file (dotted keys allowed,
e.g. ``optim.max_iter``); command-line flags win over file values.
Exit codes: 0 success, 2 validation failure, 3 solver failure (partial
artifacts are kept).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import plots
from .adjoint import (
    gradcheck_to_csv,
    gradient_1d,
    gradient_2d_exact,
    hat_integral_matrix,
    misfit,
    misfit_1d,
)
from .coeffspace import GammaGrid, grid_to_csv, grid_to_record
from .errors import QuasilinError, RangeError
from .optimize import (
    TRUTH_1D,
    TRUTH_2D,
    make_preset,
    run_reconstruction,
)
from .solver1d import Coefficient1D, neumann_exact, phi_table_to_csv, profile_to_csv, solve_forward_exact
from .solver2d import (
    BoundaryTrace,
    DirichletWorkspace,
    MatrixField,
    build_disk_mesh,
    check_max_principle,
    dirichlet_g,
    field_to_csv,
    solve_forward_kirchhoff,
    trace_to_csv,
)
from .stability import (
    holder_sweep,
    inequality_report_to_csv,
    minimizer_profile,
    monte_carlo_inequality,
    profile_ratio_expected,
    functional_Fp,
    bound_rhs,
    random_admissible,
    sweep_to_csv,
    verify_inequality,
)

GAMMA_PRESETS = {
    "smooth": TRUTH_1D["smooth"],
    "nonsmooth": TRUTH_1D["nonsmooth"],
    "quadratic": TRUTH_2D,
}

A_PRESETS = {
    "unit": lambda x: 1.0,
    "rational": lambda x: 1.0 / (1.0 + x),
}


def parse_range(text):
    """Parse "start:step:stop" (inclusive arithmetic), "lo:log:hi"
    (12 log-spaced points), a comma list, or a single number."""
    text = str(text)
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad range {text!r}: expected a:b:c")
        if parts[1] == "log":
            lo, hi = float(parts[0]), float(parts[2])
            if lo <= 0 or hi <= 0:
                raise ValueError("log range endpoints must be positive")
            return np.logspace(math.log10(lo), math.log10(hi), 12)
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("range step must be positive")
        n = int(round((stop - start) / step)) + 1
        return np.asarray([round(start + i * step, 12) for i in range(n)
                           if start + i * step <= stop + 1e-12 * max(1.0, abs(stop))])
    if "," in text:
        return np.asarray([float(p) for p in text.split(",")])
    return np.asarray([float(text)])


def parse_p(text):
    return math.inf if str(text).lower() in ("inf", "infinity") else float(text)


def load_config_file(path):
    """Flat key = value lines; '#' starts a comment; dotted keys are
    normalized to their last component with '-' mapped to '_'."""
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        key = key.split(".")[-1].replace("-", "_")
        values[key] = val
    return values


def resolve_config(args, parser):
    """Merge defaults < config file < explicit flags into one dict."""
    resolved = vars(args).copy()
    if getattr(args, "config", None):
        file_vals = load_config_file(args.config)
        defaults = vars(parser.parse_args([args.command]))
        for key, val in file_vals.items():
            if key not in resolved:
                raise ValueError(f"unknown config key {key!r}")
            # a flag given on the command line (non-default) wins
            if resolved[key] == defaults.get(key):
                resolved[key] = val
    resolved.pop("config", None)
    resolved.pop("func", None)
    return resolved


def validate(cfg):
    """All precondition diagnostics for a resolved config; empty iff run()
    would pass its own checks."""
    diags = []

    def num(key, default=None):
        val = cfg.get(key, default)
        try:
            return float(val)
        except (TypeError, ValueError):
            diags.append(f"{key} must be numeric, got {val!r}")
            return None

    if "eps" in cfg and cfg["eps"] is not None:
        eps = num("eps")
        if eps is not None and eps < 0:
            diags.append("eps must be >= 0")
    if "beta" in cfg and cfg["beta"] is not None:
        beta = num("beta")
        if beta is not None and beta < 0:
            diags.append("beta_reg must be >= 0")
    if "lam" in cfg and cfg["lam"] is not None:
        lam = num("lam")
        if lam is not None and lam < 0:
            diags.append("lam must be >= 0")
    if "max_iter" in cfg and cfg["max_iter"] is not None:
        if int(cfg["max_iter"]) < 1:
            diags.append("max_iter must be >= 1")
    if "gamma" in cfg and cfg["gamma"] not in GAMMA_PRESETS:
        diags.append(f"unknown gamma preset {cfg['gamma']!r}")
    if "a_profile" in cfg and cfg["a_profile"] not in A_PRESETS:
        diags.append(f"unknown a profile {cfg['a_profile']!r}")
    if "p" in cfg and cfg["p"] is not None:
        try:
            if str(cfg["p"]).lower() in ("inf", "infinity"):
                ps = [math.inf]
            else:
                ps = [float(x) for x in parse_range(cfg["p"])]
        except ValueError as exc:
            diags.append(str(exc))
            ps = []
        for pv in ps:
            if pv <= 1:
                diags.append(f"p={pv} must lie in (1, inf]")
        p = ps[0] if len(ps) == 1 else None
        if p is not None and "S" in cfg and cfg["S"] is not None and p > 1:
            from .stability import admissible_S_cap

            cap = admissible_S_cap(p, float(cfg.get("M", 1.0)))
            try:
                for S in parse_range(cfg["S"]):
                    if not 0 < S < cap:
                        diags.append(
                            f"S={S} outside the admissible range (0, {cap:g}) "
                            f"= (0, 2^(-(2p-1)/p) M^((p-1)/p))")
            except ValueError as exc:
                diags.append(str(exc))
    return diags


# ---------------------------------------------------------------------------
# artifact plumbing
# ---------------------------------------------------------------------------

def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "j0", "reg", "l2_error"])
        for rec in history:
            writer.writerow([rec.iter, repr(rec.j0), repr(rec.reg), repr(rec.l2_error)])


def finish(out, cfg, extra=None, artifacts=None):
    manifest = {
        "config": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                   for k, v in cfg.items()},
        "artifacts": {Path(p).name: _sha256(p) for p in (artifacts or [])},
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


def fail(out, code, message, partial=None):
    record = {"error": message, "exit_code": code, "partial_artifacts": partial or []}
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.json").write_text(json.dumps(record, indent=2))
    print(f"error: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_forward1d(cfg, out):
    g = GammaGrid.from_callable(0.0, 1.5, int(cfg["n_nodes"]), GAMMA_PRESETS[cfg["gamma"]])
    a = Coefficient1D.from_callable(A_PRESETS[cfg["a_profile"]])
    lam = float(cfg["lam"])
    sol = solve_forward_exact(g, a, lam)
    lambdas = np.linspace(0.0, max(lam, 1.0), 101)
    phis = np.asarray([neumann_exact(g, a, lv) for lv in lambdas])
    arts = [out / "profile.csv", out / "phi.csv"]
    profile_to_csv(sol, arts[0])
    phi_table_to_csv(lambdas, phis, arts[1])
    figs = [plots.plot_profile_1d(out / "profile.png", sol.x_grid, sol.u, lam),
            plots.plot_phi(out / "phi.png", lambdas, phis)]
    return finish(out, cfg, {"flux": sol.flux}, arts + figs)


def cmd_forward2d(cfg, out):
    mesh = build_disk_mesh(int(cfg["n_refine"]))
    A = MatrixField.identity()
    g = GammaGrid.from_callable(-0.2, 1.8, int(cfg["n_nodes"]), GAMMA_PRESETS[cfg["gamma"]])
    bc = BoundaryTrace.from_function(mesh, lambda th: dirichlet_g(float(cfg["k"]), th))
    ws = DirichletWorkspace(mesh, A)
    u, v = solve_forward_kirchhoff(mesh, A, g, bc, workspace=ws)
    if not check_max_principle(u.values, bc.values):
        raise RangeError("maximum principle violated by the forward solve")
    trace = ws.trace(v)
    arts = [out / "u.csv", out / "trace.csv"]
    field_to_csv(u, arts[0])
    trace_to_csv(trace, arts[1])
    figs = [plots.plot_field_2d(out / "u.png", mesh, u.values, "forward solution u"),
            plots.plot_trace(out / "trace.png", trace.theta, trace.values)]
    return finish(out, cfg, {"h_max": mesh.h_max}, arts + figs)


def _run_reconstruct(cfg, out, preset):
    run = run_reconstruction(preset, noise_eps=float(cfg["eps"]),
                             seed=int(cfg["seed"]),
                             max_iter=int(cfg["max_iter"]) if cfg["max_iter"] else None)
    arts = [out / "history.csv", out / "gamma_hat.csv", out / "gamma_truth.csv"]
    write_history_csv(run.history, arts[0])
    grid_to_csv(run.gamma, arts[1])
    truth_fn = preset.truth
    truth_vals = np.asarray([truth_fn(s) for s in run.gamma.nodes])
    with open(arts[2], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "gamma"])
        for s, val in zip(run.gamma.nodes, truth_vals):
            writer.writerow([repr(float(s)), repr(float(val))])
    (out / "gamma_hat.json").write_text(grid_to_record(run.gamma))
    init = preset.initial_gamma()
    figs = [
        plots.plot_reconstruction(out / "gamma.png", run.gamma.nodes,
                                  run.gamma.values, truth_vals, init.values),
        plots.plot_history(out / "history.png",
                           [r.iter for r in run.history],
                           [r.j0 for r in run.history],
                           [r.l2_error for r in run.history]),
    ]
    if run.manifest.get("aborted"):
        return fail(out, 3, f"solver aborted: {run.manifest['aborted']}",
                    [str(a) for a in arts])
    extra = {"run": run.manifest,
             "final_l2_error": run.history[-1].l2_error if run.history else None}
    return finish(out, cfg, extra, arts + figs + [out / "gamma_hat.json"])


def cmd_reconstruct1d(cfg, out):
    preset = make_preset("bench-1d", gamma_name=cfg["gamma"])
    return _run_reconstruct(cfg, out, preset)


def cmd_reconstruct2d(cfg, out):
    xi = tuple(float(k) for k in parse_range(cfg["xi"]))
    preset = make_preset("bench-2d", xi=xi, n_refine=int(cfg["n_refine"]))
    return _run_reconstruct(cfg, out, preset)


def cmd_gradcheck(cfg, out):
    h = 1e-6
    if int(cfg["dim"]) == 1:
        g = GammaGrid.from_callable(0.0, 1.0, 101, lambda s: 0.8 + 0.3 * s)
        lambdas = 0.01 * np.arange(1, 101)
        target = GammaGrid.from_callable(0.0, 1.0, 101, TRUTH_1D["smooth"])
        from .coeffspace import antiderivative

        v_data = antiderivative(target, lambdas)
        hat_B = hat_integral_matrix(g, lambdas)
        adj = gradient_1d(g, 1.0, lambdas, v_data, hat_B=hat_B)
        fd = np.empty_like(adj)
        for k in range(g.n_nodes):
            e = np.zeros(g.n_nodes)
            e[k] = h
            fd[k] = (misfit_1d(g.with_values(g.values + e), 1.0, lambdas, v_data)
                     - misfit_1d(g.with_values(g.values - e), 1.0, lambdas, v_data)) / (2 * h)
    else:
        mesh = build_disk_mesh(3)
        A = MatrixField.identity()
        ws = DirichletWorkspace(mesh, A)
        g = GammaGrid.from_callable(-0.2, 1.8, 21, lambda s: 0.6 + 0.2 * s)
        bc = BoundaryTrace.from_function(mesh, lambda th: dirichlet_g(1.5, th))
        target = GammaGrid.from_callable(-0.2, 1.8, 21, TRUTH_2D)
        _, v_t = solve_forward_kirchhoff(mesh, A, target, bc, workspace=ws)
        v_data = ws.trace(v_t)
        state = misfit(mesh, A, g, bc, v_data, workspace=ws)
        adj = gradient_2d_exact(mesh, A, g, bc, state.residual, workspace=ws)
        fd = np.empty_like(adj)
        for k in range(g.n_nodes):
            e = np.zeros(g.n_nodes)
            e[k] = h
            jp = misfit(mesh, A, g.with_values(g.values + e), bc, v_data, workspace=ws).j0
            jm = misfit(mesh, A, g.with_values(g.values - e), bc, v_data, workspace=ws).j0
            fd[k] = (jp - jm) / (2 * h)
    scale = max(float(np.max(np.abs(fd))), 1e-300)
    rel = float(np.max(np.abs(adj - fd))) / scale
    art = out / "gradcheck.csv"
    gradcheck_to_csv(art, adj, fd)
    fig = plots.plot_gradcheck(out / "gradcheck.png", adj, fd)
    return finish(out, cfg, {"max_rel_err": rel}, [art, fig])


def cmd_stability_sweep(cfg, out):
    p = parse_p(cfg["p"])
    S_grid = parse_range(cfg["S"])
    result = holder_sweep(p, S_grid, M=float(cfg["M"]))
    art = out / "sweep.csv"
    sweep_to_csv(result, art)
    fig = plots.plot_sweep(out / "sweep.png", result.sup_phi, result.gap,
                           result.slope, result.expected)
    return finish(out, cfg, {"slope": result.slope, "expected": result.expected},
                  [art, fig])


def cmd_inequality_check(cfg, out):
    p_values = [float(p) for p in parse_range(cfg["p"])]
    n = int(cfg["n_samples"])
    seed = int(cfg["seed"])
    summary = monte_carlo_inequality(p_values, n, seed=seed)
    rng = np.random.default_rng(seed)
    rows = []
    sid = 0
    for p in p_values:
        for _ in range(min(200, n)):
            s, f = random_admissible(rng)
            _, slack = verify_inequality(s, f, p)
            lhs = functional_Fp((s, f), p)
            rows.append((sid, lhs, lhs - slack, slack))
            sid += 1
    art = out / "inequality_report.csv"
    inequality_report_to_csv(rows, art)
    ratios = {}
    for p in p_values:
        prof = minimizer_profile("one-sided", (0.0, 10.0), 1.0, 0.3, p)
        ratios[str(p)] = functional_Fp(prof, p) / bound_rhs(1.0, 0.3, p)
    fig = plots.plot_inequality(out / "inequality.png", summary)
    extra = {
        "summary": {str(p): v for p, v in summary.items()},
        "extremal_ratio": ratios,
        "extremal_ratio_expected": {str(p): profile_ratio_expected(p) for p in p_values},
    }
    return finish(out, cfg, extra, [art, fig])


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="quasilin",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, default_out):
        sp.add_argument("--out", default=default_out, help="output directory")
        sp.add_argument("--config", default=None, help="flat key=value config file")
        sp.add_argument("--seed", default=0, type=int)

    sp = sub.add_parser("forward1d", help="closed-form 1D forward solve")
    common(sp, "runs/forward1d")
    sp.add_argument("--gamma", default="smooth", help="|".join(GAMMA_PRESETS))
    sp.add_argument("--a-profile", dest="a_profile", default="unit",
                    help="|".join(A_PRESETS))
    sp.add_argument("--lam", default=1.0, type=float)
    sp.add_argument("--n-nodes", dest="n_nodes", default=101, type=int)
    sp.set_defaults(func=cmd_forward1d)

    sp = sub.add_parser("forward2d", help="2D Kirchhoff forward solve on the disk")
    common(sp, "runs/forward2d")
    sp.add_argument("--gamma", default="quadratic")
    sp.add_argument("--k", default=2.0, type=float, help="boundary-data parameter")
    sp.add_argument("--n-refine", dest="n_refine", default=4, type=int)
    sp.add_argument("--n-nodes", dest="n_nodes", default=101, type=int)
    sp.set_defaults(func=cmd_forward2d)

    sp = sub.add_parser("reconstruct1d", help="1D Adam reconstruction preset")
    common(sp, "runs/reconstruct1d")
    sp.add_argument("--preset", default="bench-1d")
    sp.add_argument("--gamma", default="smooth", choices=("smooth", "nonsmooth"))
    sp.add_argument("--eps", default=0.0, type=float, help="multiplicative noise level")
    sp.add_argument("--max-iter", dest="max_iter", default=None, type=int)
    sp.set_defaults(func=cmd_reconstruct1d)

    sp = sub.add_parser("reconstruct2d", help="2D gradient-descent reconstruction preset")
    common(sp, "runs/reconstruct2d")
    sp.add_argument("--preset", default="bench-2d")
    sp.add_argument("--xi", default="1.1:0.1:2.0", help="boundary-data parameter set")
    sp.add_argument("--eps", default=0.0, type=float)
    sp.add_argument("--n-refine", dest="n_refine", default=4, type=int)
    sp.add_argument("--max-iter", dest="max_iter", default=None, type=int)
    sp.set_defaults(func=cmd_reconstruct2d)

    sp = sub.add_parser("gradcheck", help="adjoint vs. finite-difference gradient")
    common(sp, "runs/gradcheck")
    sp.add_argument("--dim", default=2, type=int, choices=(1, 2))
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("stability-sweep", help="Holder exponent log-log fit")
    common(sp, "runs/stability_sweep")
    sp.add_argument("--p", default="2")
    sp.add_argument("--S", default="1e-4:log:1e-1")
    sp.add_argument("--M", default=1.0, type=float)
    sp.set_defaults(func=cmd_stability_sweep)

    sp = sub.add_parser("inequality-check", help="Monte-Carlo lower-bound verification")
    common(sp, "runs/inequality_check")
    sp.add_argument("--p", default="1.5,2,3,8")
    sp.add_argument("--n-samples", dest="n_samples", default=10000, type=int)
    sp.set_defaults(func=cmd_inequality_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out)
    try:
        cfg = resolve_config(args, parser)
    except (ValueError, OSError) as exc:
        return fail(out, 2, str(exc))
    cfg.pop("out", None)
    cfg["command"] = args.command
    diags = validate(cfg)
    if diags:
        return fail(out, 2, "; ".join(diags))
    out.mkdir(parents=True, exist_ok=True)
    try:
        return args.func(cfg, out)
    except QuasilinError as exc:
        existing = [p.name for p in out.iterdir() if p.suffix == ".csv"]
        return fail(out, 3, str(exc), existing)


if __name__ == "__main__":
    sys.exit(main())
