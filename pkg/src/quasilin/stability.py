"""Empirical verification of the stability theory.

Four strands: direct 1D inversion of the Neumann data (gamma = c_a * phi'),
the optimal-exponent pair construction with its three closed-form equalities,
log-log exponent sweeps, and the variational lower bound
((p-1)/(2p-1))^{p-1} H^{2p-1} / S^{p-1} <= ||f'||_p^p for admissible bump
profiles, checked both on constructed extremals and by Monte Carlo.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .coeffspace import GammaGrid, antiderivative
from .errors import InvalidArgumentError, PreconditionError


def holder_exponent(p) -> float:
    """(p-1)/(2p-1), with the limit 1/2 at p = infinity."""
    if math.isinf(p):
        return 0.5
    if p <= 1:
        raise InvalidArgumentError("need p > 1")
    return (p - 1.0) / (2.0 * p - 1.0)


def admissible_S_cap(p, M) -> float:
    """Upper bound 2^{-(2p-1)/p} M^{(p-1)/p} on S (exponents -2 and 1 at
    p = infinity)."""
    if math.isinf(p):
        return 0.25 * M
    return 2.0 ** (-(2.0 * p - 1.0) / p) * M ** ((p - 1.0) / p)


# ---------------------------------------------------------------------------
# direct 1D inversion
# ---------------------------------------------------------------------------

def direct_invert_1d(lambdas, phi_samples, c_a: float) -> GammaGrid:
    """Recover gamma on the lambda grid from Neumann data phi via
    gamma = c_a * phi', second-order finite differences (central interior,
    one-sided ends)."""
    lam = np.asarray(lambdas, dtype=float)
    phi = np.asarray(phi_samples, dtype=float)
    if lam.size != phi.size:
        raise InvalidArgumentError("lambda grid and phi samples differ in length")
    if lam.size < 3:
        raise InvalidArgumentError("need at least 3 samples to differentiate")
    d = np.diff(lam)
    dl = d[0]
    if dl <= 0 or not np.allclose(d, dl, rtol=1e-8, atol=1e-14):
        raise InvalidArgumentError("lambda grid must be uniform and increasing")
    g = np.empty_like(phi)
    g[1:-1] = (phi[2:] - phi[:-2]) / (2.0 * dl)
    g[0] = (-3.0 * phi[0] + 4.0 * phi[1] - phi[2]) / (2.0 * dl)
    g[-1] = (3.0 * phi[-1] - 4.0 * phi[-2] + phi[-3]) / (2.0 * dl)
    return GammaGrid(float(lam[0]), float(lam[-1]), c_a * g)


# ---------------------------------------------------------------------------
# optimal-exponent pair
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimalityInstance:
    """The two-piece/constant pair showing the exponent is sharp: gamma2 = 1
    and gamma1 = 1 below s_c, rising linearly by H over [s_c, 1]."""

    p: float
    M: float
    S: float
    H: float
    s_c: float
    gamma1: GammaGrid
    gamma2: GammaGrid

    @property
    def gap_sup(self) -> float:
        """||gamma1 - gamma2||_inf, closed form."""
        return self.H

    @property
    def sup_phi(self) -> float:
        """sup |phi(lambda)| = H(1 - s_c)/2, closed form (equals S)."""
        return 0.5 * self.H * (1.0 - self.s_c)

    @property
    def seminorm_check(self) -> float:
        """||gamma1'||_p^p = H^p/(1-s_c)^{p-1} for finite p; the Lipschitz
        seminorm H/(1-s_c) at p = infinity.  Target (M/2)^{p-1} resp. M/2."""
        if math.isinf(self.p):
            return self.H / (1.0 - self.s_c)
        return self.H**self.p / (1.0 - self.s_c) ** (self.p - 1.0)

    @property
    def seminorm_target(self) -> float:
        if math.isinf(self.p):
            return 0.5 * self.M
        return (0.5 * self.M) ** (self.p - 1.0)

    def gamma1_callable(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= self.s_c, 1.0,
                        1.0 + self.H / (1.0 - self.s_c) * (s - self.s_c))


def build_optimality_pair(p, M, S, n_nodes=10001) -> OptimalityInstance:
    """Construct the sharp-exponent pair: H = (MS)^theta, s_c = 1 - 2S/H."""
    if M <= 0 or S <= 0:
        raise PreconditionError("need M > 0 and S > 0")
    cap = admissible_S_cap(p, M)
    if S >= cap:
        raise PreconditionError(f"S={S} must lie below the admissible cap {cap}")
    theta = holder_exponent(p)
    H = (M * S) ** theta
    s_c = 1.0 - 2.0 * S / H
    if not 0.0 < s_c < 1.0:
        raise PreconditionError(f"derived s_c={s_c} falls outside (0, 1)")
    s = np.linspace(0.0, 1.0, n_nodes)
    vals = np.where(s <= s_c, 1.0, 1.0 + H / (1.0 - s_c) * (s - s_c))
    gamma1 = GammaGrid(0.0, 1.0, vals)
    gamma2 = GammaGrid.constant(1.0, 0.0, 1.0, n_nodes)
    return OptimalityInstance(p=float(p), M=float(M), S=float(S), H=float(H),
                              s_c=float(s_c), gamma1=gamma1, gamma2=gamma2)


def verify_optimality_pair(inst: OptimalityInstance, n_lambda=20001):
    """Measure the three closed-form equalities on the sampled grids;
    returns relative discrepancies (gap, sup_phi, seminorm)."""
    gap = float(np.max(np.abs(inst.gamma1.values - inst.gamma2.values)))
    lam = np.linspace(0.0, 1.0, n_lambda)
    phi = antiderivative(inst.gamma1, lam) - antiderivative(inst.gamma2, lam)
    sup_phi = float(np.max(np.abs(phi)))
    nodes = inst.gamma1.nodes
    if math.isinf(inst.p):
        semi = float(np.max(np.abs(inst.gamma1.slopes)))
    else:
        semi = functional_Fp((nodes, inst.gamma1.values), inst.p)
    return {
        "gap": abs(gap - inst.H) / inst.H,
        "sup_phi": abs(sup_phi - inst.S) / inst.S,
        "seminorm": abs(semi - inst.seminorm_target) / inst.seminorm_target,
    }


@dataclass(frozen=True)
class SweepResult:
    p: float
    S_grid: np.ndarray
    sup_phi: np.ndarray
    gap: np.ndarray
    slope: float
    expected: float


def holder_sweep(p, S_grid, M=1.0, n_nodes=4001) -> SweepResult:
    """Regress log gap against log sup|phi| across optimality pairs; the
    slope recovers the exponent (p-1)/(2p-1)."""
    S_grid = np.asarray(S_grid, dtype=float)
    if S_grid.size < 3:
        raise InvalidArgumentError("need at least 3 S values to fit a slope")
    sups = np.empty(S_grid.size)
    gaps = np.empty(S_grid.size)
    for i, S in enumerate(S_grid):
        inst = build_optimality_pair(p, M, S, n_nodes=n_nodes)
        lam = np.linspace(0.0, 1.0, 2 * n_nodes - 1)
        phi = antiderivative(inst.gamma1, lam) - antiderivative(inst.gamma2, lam)
        sups[i] = np.max(np.abs(phi))
        gaps[i] = np.max(np.abs(inst.gamma1.values - inst.gamma2.values))
    slope = float(np.polyfit(np.log(sups), np.log(gaps), 1)[0])
    return SweepResult(p=float(p), S_grid=S_grid, sup_phi=sups, gap=gaps,
                       slope=slope, expected=holder_exponent(p))


def violating_S(p, q, c, M=1.0):
    """An S for which the pair breaks gap <= c * sup|phi|^q, witnessing that
    no exponent q above (p-1)/(2p-1) can hold (gap/sup^q = M^theta S^{theta-q}
    blows up as S -> 0)."""
    theta = holder_exponent(p)
    if q <= theta:
        raise InvalidArgumentError("need q above the sharp exponent")
    S_star = (M**theta / c) ** (1.0 / (q - theta))
    return 0.5 * min(S_star, admissible_S_cap(p, M))


# ---------------------------------------------------------------------------
# variational lower bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MinimizerProfile:
    """Power-rise/plateau extremal: zero, then c(s - s1p)^{p/(p-1)} rising to
    H, a plateau at H, and (two-sided form only) a mirrored fall back to zero.

    ``form`` is "one-sided" (zero left end, plateau flush with the right end)
    or "two-sided" (both ends zero, support centered).
    """

    interval: tuple
    form: str
    p: float
    H: float
    S: float
    s1p: float
    s2p: float
    s3p: float
    s4p: float = None  # None for the one-sided form
    c: float = 0.0
    b: float = 0.0
    b_tilde: float = 0.0

    @property
    def rise_length(self) -> float:
        return self.s2p - self.s1p

    @property
    def rise_lengths(self):
        if self.s4p is None:
            return [self.rise_length]
        return [self.rise_length, self.s4p - self.s3p]

    def __call__(self, s):
        q = self.p / (self.p - 1.0)
        scalar = np.isscalar(s)
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros_like(s)
        ell = self.rise_length
        if ell > 0:
            on = (s >= self.s1p) & (s < self.s2p)
            out[on] = self.H * ((s[on] - self.s1p) / ell) ** q
        out[(s >= self.s2p) & (s <= self.s3p)] = self.H
        if self.s4p is not None and self.s4p > self.s3p:
            ell2 = self.s4p - self.s3p
            on = (s > self.s3p) & (s <= self.s4p)
            out[on] = self.H * ((self.s4p - s[on]) / ell2) ** q
        return float(out[0]) if scalar else out

    def sample(self, n=1001):
        s = np.linspace(self.interval[0], self.interval[1], n)
        return s, self(s)


def minimizer_profile(form, interval, H, S, p) -> MinimizerProfile:
    """Construct the extremal profile with d = b + s1' = 0.

    The natural rise length is ell* = S(2p-1)/((p-1)H) (pure rise, no
    plateau).  When the rise plus the mass-balancing plateau would overflow
    the interval, the rise is shortened to
    (|I| - S/H)(2p-1)/p  (halved per rise in the two-sided form)
    so that both the L1 mass S and the support fit exactly.
    """
    s1, s2 = float(interval[0]), float(interval[1])
    if not s1 < s2:
        raise InvalidArgumentError("empty interval")
    if H <= 0 or S <= 0:
        raise InvalidArgumentError("need H > 0 and S > 0")
    if math.isinf(p) or p <= 1:
        raise InvalidArgumentError("need finite p > 1")
    length = s2 - s1
    if S >= H * length:
        raise InvalidArgumentError(
            f"infeasible: L1 mass S={S} requires H*|I| > S, got H*|I|={H * length}")
    frac = (p - 1.0) / (2.0 * p - 1.0)  # rise mass fraction of H*ell
    ell_star = S / (frac * H)
    ell_cap = (length - S / H) * (2.0 * p - 1.0) / p
    if form in ("A2", "one-sided"):
        ell = min(ell_star, ell_cap)
        plateau = S / H - ell * frac
        s3p = s2
        s2p = s2 - plateau
        s1p = s2p - ell
        q = p / (p - 1.0)
        return MinimizerProfile(interval=(s1, s2), form="one-sided", p=float(p),
                                H=float(H), S=float(S), s1p=s1p, s2p=s2p,
                                s3p=s3p, s4p=None, c=H / ell**q, b=-s1p,
                                b_tilde=0.0)
    if form in ("A1", "two-sided"):
        ell = min(0.5 * ell_star, 0.5 * ell_cap)
        plateau = S / H - 2.0 * ell * frac
        support = 2.0 * ell + plateau
        margin = 0.5 * (length - support)
        s1p = s1 + margin
        s2p = s1p + ell
        s3p = s2p + plateau
        s4p = s3p + ell
        q = p / (p - 1.0)
        return MinimizerProfile(interval=(s1, s2), form="two-sided", p=float(p),
                                H=float(H), S=float(S), s1p=s1p, s2p=s2p,
                                s3p=s3p, s4p=s4p, c=H / ell**q, b=-s1p,
                                b_tilde=0.0)
    raise InvalidArgumentError(f"unknown form {form!r}")


def functional_Fp(f, p) -> float:
    """||f'||_p^p: closed form for profiles, exact cell sum for sampled
    piecewise-linear functions given as (s_nodes, f_values); max |slope| at
    p = infinity for sampled input."""
    if isinstance(f, MinimizerProfile):
        if p <= 1:
            raise InvalidArgumentError("need p > 1")
        const = (p / (p - 1.0)) ** p * (p - 1.0) / (2.0 * p - 1.0)
        return float(sum(f.H**p / ell ** (p - 1.0) * const
                         for ell in f.rise_lengths if ell > 0))
    s, vals = (np.asarray(v, dtype=float) for v in f)
    if s.size != vals.size or s.size < 2:
        raise InvalidArgumentError("sampled input needs matching arrays, length >= 2")
    ds = np.diff(s)
    if np.any(ds <= 0):
        raise InvalidArgumentError("sample points must be strictly increasing")
    slopes = np.diff(vals) / ds
    if math.isinf(p):
        return float(np.max(np.abs(slopes)))
    if p <= 1:
        raise InvalidArgumentError("need p > 1")
    return float(np.sum(ds * np.abs(slopes) ** p))


def bound_rhs(H, S, p) -> float:
    """((p-1)/(2p-1))^{p-1} H^{2p-1} / S^{p-1}."""
    if p <= 1:
        raise InvalidArgumentError("need p > 1")
    if H <= 0 or S <= 0:
        raise InvalidArgumentError("need H > 0 and S > 0")
    return ((p - 1.0) / (2.0 * p - 1.0)) ** (p - 1.0) * H ** (2.0 * p - 1.0) / S ** (p - 1.0)


def profile_ratio_expected(p) -> float:
    """lhs/rhs achieved by the pure-rise extremal: p^p/((p-1)^{p-1}(2p-1))."""
    return p**p / ((p - 1.0) ** (p - 1.0) * (2.0 * p - 1.0))


_ADMISSIBLE_TOL = 1e-12


def verify_inequality(s_nodes, f_values, p):
    """Check the lower bound on one admissible sampled function.

    Admissibility: f >= 0, f vanishes at (at least) one interval endpoint,
    f not identically zero.  Returns (holds, slack) with
    slack = ||f'||_p^p - bound_rhs(max f, integral f, p).
    """
    s = np.asarray(s_nodes, dtype=float)
    vals = np.asarray(f_values, dtype=float)
    H = float(np.max(vals))
    if np.any(vals < -_ADMISSIBLE_TOL * max(H, 1.0)):
        raise PreconditionError("admissible functions must be nonnegative")
    if min(abs(vals[0]), abs(vals[-1])) > _ADMISSIBLE_TOL * max(H, 1.0):
        raise PreconditionError("one interval endpoint must vanish")
    if H <= 0:
        raise PreconditionError("f must not be identically zero")
    S = float(np.trapezoid(vals, s))  # exact for piecewise-linear f
    lhs = functional_Fp((s, vals), p)
    rhs = bound_rhs(H, S, p)
    slack = lhs - rhs
    holds = lhs + 1e-12 * max(lhs, rhs, 1.0) >= rhs
    return holds, slack


def random_admissible(rng, n_nodes=64):
    """One random admissible piecewise-linear bump: nonnegative values on a
    random sub-interval, one endpoint forced to zero."""
    while True:
        gaps = rng.uniform(0.5, 1.5, n_nodes - 1)
        a = rng.uniform(0.0, 0.5)
        width = rng.uniform(0.2, 1.0)
        s = a + width * np.concatenate(([0.0], np.cumsum(gaps))) / np.sum(gaps)
        vals = np.abs(rng.standard_normal(n_nodes))
        if rng.uniform() < 0.5:
            vals[0] = 0.0
        else:
            vals[-1] = 0.0
        if np.max(vals) > 1e-6:
            return s, vals


def monte_carlo_inequality(p_values, n_samples=10000, seed=0, n_nodes=64):
    """Vectorized Monte-Carlo sweep; returns per-p violation counts and the
    minimum relative slack encountered."""
    rng = np.random.default_rng(seed)
    gaps = rng.uniform(0.5, 1.5, size=(n_samples, n_nodes - 1))
    starts = rng.uniform(0.0, 0.5, size=(n_samples, 1))
    widths = rng.uniform(0.2, 1.0, size=(n_samples, 1))
    cum = np.concatenate([np.zeros((n_samples, 1)), np.cumsum(gaps, axis=1)], axis=1)
    s = starts + widths * cum / cum[:, -1:]
    vals = np.abs(rng.standard_normal((n_samples, n_nodes)))
    left = rng.uniform(size=n_samples) < 0.5
    vals[left, 0] = 0.0
    vals[~left, -1] = 0.0
    vals[np.max(vals, axis=1) < 1e-6, n_nodes // 2] = 1.0  # non-triviality
    ds = np.diff(s, axis=1)
    slopes = np.diff(vals, axis=1) / ds
    H = np.max(vals, axis=1)
    S = np.trapezoid(vals, s, axis=1)
    results = {}
    for p in p_values:
        lhs = np.sum(ds * np.abs(slopes) ** p, axis=1)
        rhs = ((p - 1.0) / (2.0 * p - 1.0)) ** (p - 1.0) * H ** (2.0 * p - 1.0) / S ** (p - 1.0)
        rel_slack = (lhs - rhs) / np.maximum(np.maximum(lhs, rhs), 1.0)
        results[p] = {
            "violations": int(np.count_nonzero(rel_slack < -1e-12)),
            "min_rel_slack": float(np.min(rel_slack)),
            "n_samples": n_samples,
        }
    return results


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def sweep_to_csv(result: SweepResult, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["S", "sup_phi", "gap_inf_norm"])
        for S, sup, gap in zip(result.S_grid, result.sup_phi, result.gap):
            writer.writerow([repr(float(S)), repr(float(sup)), repr(float(gap))])


def inequality_report_to_csv(rows, path):
    """rows: iterable of (sample_id, lhs, rhs, slack)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "lhs", "rhs", "slack"])
        for sid, lhs, rhs, slack in rows:
            writer.writerow([sid, repr(float(lhs)), repr(float(rhs)), repr(float(slack))])


def profile_export_csv(profile: MinimizerProfile, path, n=1001):
    s, f = profile.sample(n)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "f"])
        for si, fi in zip(s, f):
            writer.writerow([repr(float(si)), repr(float(fi))])
