"""Piecewise-linear coefficient functions on an interval.

A :class:`GammaGrid` stores nodal values of a coefficient gamma on an
equidistant grid.  Evaluation is linear interpolation; the antiderivative and
the squared H1 seminorm are closed-form on this class (piecewise quadratic and
a sum of cell terms respectively), so no quadrature error enters anywhere.
The antiderivative is anchored at 0 whenever 0 lies inside the interval,
otherwise at the left endpoint.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidArgumentError, PreconditionError, RangeError

_CLAMP_TOL = 1e-9


class ClampCounter:
    """Mutable tally of out-of-range evaluations clamped to the interval."""

    def __init__(self):
        self.count = 0

    def add(self, n):
        self.count += int(n)


@dataclass(frozen=True)
class HatWeights:
    """The two active hat-basis values at a point: adjacent node indices and
    convex weights summing to one."""

    node_indices: tuple
    weights: tuple


@dataclass(frozen=True)
class GammaGrid:
    """Piecewise-linear coefficient on [s_lo, s_hi] with equidistant nodes.

    ``floor`` is the positivity level enforced by :func:`project_positive`;
    the stored values themselves may dip below it until projected.
    """

    s_lo: float
    s_hi: float
    values: np.ndarray
    floor: float = 1e-3
    clamps: ClampCounter = field(default_factory=ClampCounter, compare=False, repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if not self.s_lo < self.s_hi:
            raise InvalidArgumentError(f"need s_lo < s_hi, got [{self.s_lo}, {self.s_hi}]")
        if vals.ndim != 1 or vals.size < 2:
            raise InvalidArgumentError("need at least 2 nodal values")
        if not np.all(np.isfinite(vals)):
            raise InvalidArgumentError("nodal values must be finite")
        if not (self.floor > 0):
            raise InvalidArgumentError("floor must be positive")
        vals.setflags(write=False)

    @classmethod
    def from_callable(cls, s_lo, s_hi, n_nodes, fn, floor=1e-3):
        s = np.linspace(s_lo, s_hi, n_nodes)
        return cls(s_lo, s_hi, np.asarray([fn(si) for si in s], dtype=float), floor)

    @classmethod
    def constant(cls, value, s_lo=0.0, s_hi=1.0, n_nodes=2, floor=1e-3):
        return cls(s_lo, s_hi, np.full(n_nodes, float(value)), floor)

    @property
    def n_nodes(self):
        return self.values.size

    @property
    def nodes(self):
        return np.linspace(self.s_lo, self.s_hi, self.n_nodes)

    @property
    def ds(self):
        return (self.s_hi - self.s_lo) / (self.n_nodes - 1)

    @property
    def anchor(self):
        """Base point of the antiderivative: 0 if inside the interval."""
        return 0.0 if self.s_lo <= 0.0 <= self.s_hi else self.s_lo

    @cached_property
    def slopes(self):
        return np.diff(self.values) / self.ds

    @cached_property
    def _node_cum(self):
        """Integral of the interpolant from s_lo to each node (trapezoid is
        exact for piecewise-linear integrands)."""
        mids = 0.5 * (self.values[:-1] + self.values[1:]) * self.ds
        return np.concatenate(([0.0], np.cumsum(mids)))

    def with_values(self, values):
        return GammaGrid(self.s_lo, self.s_hi, np.asarray(values, dtype=float), self.floor)

    # -- evaluation ---------------------------------------------------------

    def _clamp(self, s):
        s = np.asarray(s, dtype=float)
        if not np.all(np.isfinite(s)):
            raise InvalidArgumentError("evaluation points must be finite")
        clamped = np.clip(s, self.s_lo, self.s_hi)
        n_out = int(np.count_nonzero(np.abs(clamped - s) > _CLAMP_TOL * max(1.0, self.s_hi - self.s_lo)))
        if n_out:
            self.clamps.add(n_out)
        return clamped

    def _locate(self, s):
        """Cell index and local offset for (already clamped) points."""
        k = np.minimum(((s - self.s_lo) / self.ds).astype(int), self.n_nodes - 2)
        k = np.maximum(k, 0)
        return k, s - (self.s_lo + k * self.ds)

    def __call__(self, s):
        return eval_gamma(self, s)


def eval_gamma(g: GammaGrid, s):
    """Linear interpolation of the nodal values; out-of-range points are
    clamped to the interval (counted on ``g.clamps``)."""
    scalar = np.isscalar(s)
    sc = g._clamp(s)
    k, t = g._locate(np.atleast_1d(sc))
    out = g.values[k] + g.slopes[k] * t
    return float(out[0]) if scalar else out


def antiderivative(g: GammaGrid, s):
    """Exact integral of the interpolant from the anchor point to ``s``."""
    scalar = np.isscalar(s)
    sa = np.atleast_1d(np.asarray(s, dtype=float))
    tol = 1e-12 * max(1.0, g.s_hi - g.s_lo)
    if np.any(sa < g.s_lo - tol) or np.any(sa > g.s_hi + tol):
        raise RangeError(f"point outside [{g.s_lo}, {g.s_hi}]")
    sa = np.clip(sa, g.s_lo, g.s_hi)
    k, t = g._locate(sa)
    cum = g._node_cum[k] + g.values[k] * t + 0.5 * g.slopes[k] * t * t
    out = cum - _cum_at(g, g.anchor)
    return float(out[0]) if scalar else out


def _cum_at(g, s):
    k, t = g._locate(np.atleast_1d(float(s)))
    return float(g._node_cum[k[0]] + g.values[k[0]] * t[0] + 0.5 * g.slopes[k[0]] * t[0] ** 2)


def inverse_antiderivative(g: GammaGrid, t):
    """Inverse of :func:`antiderivative`, solved per cell with the monotone
    branch of the quadratic formula.  Requires min(values) >= floor > 0 so the
    antiderivative is strictly increasing."""
    if g.values.min() < g.floor:
        raise PreconditionError("inverse requires values >= floor > 0")
    scalar = np.isscalar(t)
    ta = np.atleast_1d(np.asarray(t, dtype=float))
    base = _cum_at(g, g.anchor)
    lo = g._node_cum[0] - base
    hi = g._node_cum[-1] - base
    tol = 1e-10 * max(1.0, hi - lo)
    if np.any(ta < lo - tol) or np.any(ta > hi + tol):
        raise RangeError(f"target outside antiderivative range [{lo}, {hi}]")
    ta = np.clip(ta, lo, hi)
    node_vals = g._node_cum - base
    k = np.clip(np.searchsorted(node_vals, ta, side="right") - 1, 0, g.n_nodes - 2)
    q = ta - node_vals[k]
    v = g.values[k]
    m = g.slopes[k]
    # d solves 0.5*m*d^2 + v*d = q; the 2q/(v+sqrt(...)) form is stable as m -> 0
    disc = np.sqrt(np.maximum(v * v + 2.0 * m * q, 0.0))
    d = np.where(np.abs(v + disc) > 0, 2.0 * q / (v + disc), 0.0)
    out = g.s_lo + k * g.ds + d
    return float(out[0]) if scalar else out


def hat_at(g: GammaGrid, s) -> HatWeights:
    """The two active hat-function values at ``s`` (partition of unity)."""
    sc = float(g._clamp(s))
    k, t = g._locate(np.atleast_1d(sc))
    k = int(k[0])
    w1 = float(t[0]) / g.ds
    return HatWeights((k, k + 1), (1.0 - w1, w1))


def hat_at_many(g: GammaGrid, s):
    """Vectorized :func:`hat_at`: arrays of left node indices and left weights."""
    sc = g._clamp(s)
    k, t = g._locate(np.atleast_1d(sc))
    return k, 1.0 - t / g.ds


def _coverage_lengths(g: GammaGrid, intervals):
    """Total covered length per cell; multiply-covered stretches count each
    time.  Interval orientation is ignored."""
    if len(intervals) == 0:
        raise InvalidArgumentError("coverage mode needs at least one sub-interval")
    edges = g.nodes
    lengths = np.zeros(g.n_nodes - 1)
    for a, b in intervals:
        lo, hi = (a, b) if a <= b else (b, a)
        lo = max(lo, g.s_lo)
        hi = min(hi, g.s_hi)
        if hi <= lo:
            continue
        overlap = np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo)
        lengths += np.maximum(overlap, 0.0)
    return lengths


def coverage_lengths(g: GammaGrid, intervals):
    """Public alias so callers can precompute per-cell coverage once."""
    return _coverage_lengths(g, intervals)


def _resolve_weighting(g: GammaGrid, weighting):
    if isinstance(weighting, str):
        if weighting != "uniform":
            raise InvalidArgumentError(f"unknown weighting {weighting!r}")
        return np.full(g.n_nodes - 1, g.ds)
    arr = np.asarray(weighting, dtype=float)
    if arr.ndim == 1 and arr.size == g.n_nodes - 1:
        return arr  # precomputed per-cell lengths
    return _coverage_lengths(g, weighting)


def h1_seminorm_sq(g: GammaGrid, weighting="uniform"):
    """Squared H1 seminorm of the interpolant.

    ``weighting="uniform"`` integrates (gamma')^2 over the whole interval;
    passing a list of (lo, hi) sub-intervals integrates over each of them,
    counting overlaps multiply.  A precomputed per-cell length array (one
    entry per grid cell) is accepted as well.
    """
    lengths = _resolve_weighting(g, weighting)
    return float(np.sum(lengths * g.slopes**2))


def seminorm_gradient(g: GammaGrid, weighting="uniform"):
    """Derivative of :func:`h1_seminorm_sq` with respect to the nodal values
    (the tridiagonal stiffness action, doubled)."""
    lengths = _resolve_weighting(g, weighting)
    cell = 2.0 * lengths * g.slopes / g.ds
    grad = np.zeros(g.n_nodes)
    grad[:-1] -= cell
    grad[1:] += cell
    return grad


def project_positive(g: GammaGrid) -> GammaGrid:
    """Clip the nodal values from below at the floor (idempotent)."""
    if g.values.min() >= g.floor:
        return g
    return g.with_values(np.maximum(g.values, g.floor))


# -- serialization ----------------------------------------------------------

def grid_to_record(g: GammaGrid) -> str:
    """Structured text record {s_lo, s_hi, n_nodes, values[], floor}."""
    return json.dumps(
        {
            "s_lo": g.s_lo,
            "s_hi": g.s_hi,
            "n_nodes": g.n_nodes,
            "values": g.values.tolist(),
            "floor": g.floor,
        }
    )


def grid_from_record(text: str) -> GammaGrid:
    rec = json.loads(text)
    values = np.asarray(rec["values"], dtype=float)
    if values.size != rec["n_nodes"]:
        raise InvalidArgumentError("record n_nodes disagrees with values length")
    return GammaGrid(rec["s_lo"], rec["s_hi"], values, rec["floor"])


def grid_to_csv(g: GammaGrid, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "gamma"])
        for s, v in zip(g.nodes, g.values):
            writer.writerow([repr(float(s)), repr(float(v))])
