"""Boundary-adjusted Weiss energies, their radial derivatives and density limits.

For a homogeneity exponent kappa the energy is

    M(r) = r^(-2 kappa) I(r) - kappa r^(-2 kappa - 1) J(r)

with I the two-phase energy on B_r(x0) and J the trace integral of u^2 on the
circle. For kappa-homogeneous fields the Dirichlet and trace terms cancel and
M equals the weighted measure of the phases, the density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .energy import WeightSpec, weights
from .errors import InvalidExponent, OutOfDomain
from .field import ScalarField, ball_nodes, circle_integral, quadrature_resolution

RATIO = math.sqrt(2.0)
# the phase indicator carries an O(h / r) error, so density limits start at 16 cells
DENSITY_FLOOR_CELLS = 16


def _check_kappa(kappa: float):
    if not (1.0 - 1e-15 <= kappa <= 1.5 + 1e-15):
        raise InvalidExponent(f"exponent {kappa} outside [1, 3/2]")


def _spec(field: ScalarField, spec: WeightSpec | None) -> WeightSpec:
    return spec or WeightSpec(field.x2_0)


@dataclass(frozen=True)
class BallTerms:
    """Phase-resolved integrals over one ball."""

    dirichlet_plus: float
    dirichlet_minus: float
    dirichlet_zero: float
    weight_plus: float
    weight_minus: float
    trace_plus: float
    trace_minus: float

    @property
    def I(self) -> float:  # noqa: E743 - the conventional name
        return self.I_plus + self.I_minus + self.dirichlet_zero

    @property
    def I_plus(self) -> float:
        return self.dirichlet_plus + self.weight_plus

    @property
    def I_minus(self) -> float:
        return self.dirichlet_minus + self.weight_minus

    @property
    def J(self) -> float:
        return self.trace_plus + self.trace_minus


def ball_terms(field: ScalarField, x0, r: float, spec: WeightSpec | None = None) -> BallTerms:
    spec = _spec(field, spec)
    field.require_ball(x0, r)
    nt, ns = quadrature_resolution(r, field.h)
    x, y, w = ball_nodes(x0, r, nt, ns, spec.x2_0)
    L = field.reconstruct(x, y)
    g2 = L.gx ** 2 + L.gy ** 2
    pos = L.value > 0
    neg = L.value < 0
    wp, wm = weights(spec, y)
    tp = circle_integral(lambda a, b: np.maximum(field.reconstruct(a, b).value, 0.0) ** 2, x0, r, field=field)
    tm = circle_integral(lambda a, b: np.minimum(field.reconstruct(a, b).value, 0.0) ** 2, x0, r, field=field)
    return BallTerms(
        dirichlet_plus=float(np.sum(g2 * pos * w)),
        dirichlet_minus=float(np.sum(g2 * neg * w)),
        dirichlet_zero=float(np.sum(g2 * (~pos & ~neg) * w)),
        weight_plus=float(np.sum(wp * pos * w)),
        weight_minus=float(np.sum(wm * neg * w)),
        trace_plus=tp,
        trace_minus=tm,
    )


def weiss_I(field: ScalarField, x0, r: float, spec: WeightSpec | None = None) -> float:
    return ball_terms(field, x0, r, spec).I


def weiss_J(field: ScalarField, x0, r: float) -> float:
    return circle_integral(lambda a, b: field.reconstruct(a, b).value ** 2, x0, r, field=field)


def _M(I: float, J: float, r: float, kappa: float) -> float:
    return r ** (-2 * kappa) * I - kappa * r ** (-2 * kappa - 1) * J


def weiss_M(field: ScalarField, x0, r: float, kappa: float = 1.5, spec: WeightSpec | None = None) -> float:
    _check_kappa(kappa)
    t = ball_terms(field, x0, r, spec)
    return _M(t.I, t.J, r, kappa)


def weiss_M_phases(field: ScalarField, x0, r: float, kappa: float = 1.5,
                   spec: WeightSpec | None = None) -> tuple[float, float, float]:
    """(M, M_plus, M_minus). M - M_plus - M_minus is the Dirichlet energy of the zero set."""
    _check_kappa(kappa)
    t = ball_terms(field, x0, r, spec)
    return (_M(t.I, t.J, r, kappa), _M(t.I_plus, t.trace_plus, r, kappa), _M(t.I_minus, t.trace_minus, r, kappa))


def _k_integral(field: ScalarField, x0, r: float, spec: WeightSpec) -> float:
    t = ball_terms(field, x0, r, spec)
    return t.weight_plus + t.weight_minus


def weiss_K(field: ScalarField, x0, r: float, alpha: float, spec: WeightSpec | None = None) -> float:
    """(3 - 2 alpha) r^(-2 alpha - 1) times the weighted measure of the phases."""
    if not (1.0 < alpha < 1.5):
        raise InvalidExponent(f"alpha {alpha} outside (1, 3/2)")
    spec = _spec(field, spec)
    return (3 - 2 * alpha) * r ** (-2 * alpha - 1) * _k_integral(field, x0, r, spec)


def surface_term(field: ScalarField, x0, r: float, kappa: float) -> float:
    """2 r^(-2 kappa) times the circle integral of the squared homogeneity defects of u^+ and u^-."""

    def f(x, y):
        L = field.reconstruct(x, y)
        nx = (x - x0[0]) / r
        ny = (y - x0[1]) / r
        flux = L.gx * nx + L.gy * ny
        pos = L.value > 0
        neg = L.value < 0
        dp = np.where(pos, flux - kappa * L.value / r, 0.0)
        dm = np.where(neg, flux - kappa * L.value / r, 0.0)
        return dp ** 2 + dm ** 2

    return 2 * r ** (-2 * kappa) * circle_integral(f, x0, r, field=field)


def derivative_formula(field: ScalarField, x0, r: float, kappa: float, spec: WeightSpec | None = None) -> float:
    spec = _spec(field, spec)
    grav = (3 - 2 * kappa) * r ** (-2 * kappa - 1) * _k_integral(field, x0, r, spec) if kappa != 1.5 else 0.0
    return surface_term(field, x0, r, kappa) + grav


@dataclass
class DerivativeCheck:
    radii: np.ndarray
    finite_difference: np.ndarray
    formula: np.ndarray

    @property
    def discrepancy(self) -> np.ndarray:
        return np.abs(self.finite_difference - self.formula)

    @property
    def max_discrepancy(self) -> float:
        return float(self.discrepancy.max())


def weiss_derivative_check(field: ScalarField, x0, kappa: float, window: tuple[float, float],
                           points: int = 5, rel_step: float = 0.05,
                           spec: WeightSpec | None = None) -> DerivativeCheck:
    """Fourth-order centered differences of M against the surface-integral derivative formula.

    The step is ``rel_step * r`` so that the truncation error stays small for
    energies with 1/r behaviour near the center.
    """
    _check_kappa(kappa)
    lo, hi = window
    field.require_ball(x0, hi * (1 + 2 * rel_step))
    if lo <= 0:
        raise OutOfDomain("derivative window must stay away from the center")
    radii = np.linspace(lo, hi, points)
    fd = []
    for r in radii:
        d = rel_step * r
        m = [weiss_M(field, x0, r + k * d, kappa, spec) for k in (-2, -1, 1, 2)]
        fd.append((m[0] - 8 * m[1] + 8 * m[2] - m[3]) / (12 * d))
    fo = np.array([derivative_formula(field, x0, r, kappa, spec) for r in radii])
    return DerivativeCheck(radii, np.array(fd), fo)


# ------------------------------------------------------------------ density


def log_radii(field: ScalarField, x0, r_max: float | None = None, count: int = 12,
              ratio: float = RATIO, r_min: float | None = None) -> np.ndarray:
    """Descending radii ``r_max / ratio^k`` that fit in the lattice and stay above ``r_min``."""
    xa, xb, ya, yb = field.extent
    fit = min(x0[0] - xa, xb - x0[0], x0[1] - ya, yb - x0[1]) * (1 - 1e-9)
    r_max = fit if r_max is None else min(r_max, fit)
    r_min = 8 * field.h if r_min is None else r_min
    radii = r_max / ratio ** np.arange(count)
    return radii[radii >= r_min * (1 - 1e-12)]


@dataclass
class DensityEstimate:
    value: float
    radii: np.ndarray
    values: np.ndarray
    method: str  # richardson | smallest-radius
    order: float | None
    flags: list[str] = dc_field(default_factory=list)

    @property
    def converged(self) -> bool:
        return "no-limit" not in self.flags


def extrapolate(radii: Sequence[float], values: Sequence[float], tol: float = 0.05):
    """Richardson extrapolation on the three smallest radii with an estimated order.

    Returns (value, method, order, flags).
    """
    v = np.asarray(values, dtype=float)
    r = np.asarray(radii, dtype=float)
    flags: list[str] = []
    if len(v) < 3:
        return float(v[-1]), "smallest-radius", None, ["no-extrapolation", "too-few-radii"]
    a, b, c = v[-3:]
    if max(a, b, c) - min(a, b, c) > tol:
        flags.append("no-limit")
    d1, d2 = a - b, b - c
    q = r[-2] / r[-1]
    scale = max(1.0, abs(c))
    if d1 * d2 > 0 and abs(d2) > 1e-12 * scale:
        p = math.log(d1 / d2) / math.log(q)
        if 0.5 <= p <= 3.0:
            return float(c - d2 / (q ** p - 1.0)), "richardson", float(p), flags
    flags.append("no-extrapolation")
    return float(c), "smallest-radius", None, flags


def density_value(field: ScalarField, x0, r: float, kappa: float = 1.5, phase: str = "negative") -> float:
    """Weighted phase measure of the rescaled field on the unit ball.

    ``phase`` is ``negative`` (weight (-x2)^+ on the negative phase),
    ``positive`` (weight x2^+ on the positive phase) or ``both``; heights are
    measured from the center. For kappa = 1 the positive phase carries the
    frozen weight ``x0_2 - x2_0`` instead.
    """
    field.require_ball(x0, r)
    nt, ns = quadrature_resolution(r, field.h)
    x, y, w = ball_nodes(x0, r, nt, ns, x0[1])
    u = field.phase_sign(x, y)
    d = y - x0[1]
    total = 0.0
    if kappa == 1.0:
        gap = x0[1] - field.x2_0
        return float(np.sum(gap * (u > 0) * w)) / r ** 2
    if phase in ("negative", "both"):
        total += float(np.sum(np.maximum(-d, 0.0) * (u < 0) * w))
    if phase in ("positive", "both"):
        total += float(np.sum(np.maximum(d, 0.0) * (u > 0) * w))
    value = total / r ** 3
    if kappa != 1.5:
        value *= r ** (3 - 2 * kappa)
    return value


def density_limit(field: ScalarField, x0, kappa: float = 1.5, radii: Sequence[float] | None = None,
                  phase: str = "negative", tol: float = 0.05) -> DensityEstimate:
    if phase not in ("negative", "positive", "both"):
        raise ValueError(f"unknown phase {phase!r}")
    if radii is None:
        radii = log_radii(field, x0, r_min=DENSITY_FLOOR_CELLS * field.h)
    radii = np.asarray(radii, dtype=float)
    if len(radii) < 4:
        raise OutOfDomain("fewer than four radii fit in the lattice")
    vals = np.array([density_value(field, x0, r, kappa, phase) for r in radii])
    value, method, order, flags = extrapolate(radii, vals, tol)
    return DensityEstimate(value, np.asarray(radii), vals, method, order, flags)


# -------------------------------------------------------------------- report


@dataclass
class WeissReport:
    center: tuple[float, float]
    kappa: float
    radii: np.ndarray
    I: np.ndarray  # noqa: E741
    J: np.ndarray
    M: np.ndarray
    K: np.ndarray
    M_plus: np.ndarray
    M_minus: np.ndarray
    density: DensityEstimate
    monotone_violations: int
    max_violation: float

    @property
    def density_estimate(self) -> float:
        return self.density.value

    def to_csv(self) -> str:
        rows = ["r,I,J,M,K,M_plus,M_minus"]
        for k in range(len(self.radii)):
            rows.append(",".join(format(float(a[k]), ".17g") for a in
                                 (self.radii, self.I, self.J, self.M, self.K, self.M_plus, self.M_minus)))
        return "\n".join(rows) + "\n"

    def summary(self) -> dict:
        return {
            "center_x1": self.center[0], "center_x2": self.center[1], "kappa": self.kappa,
            "density_estimate": self.density.value, "density_method": self.density.method,
            "density_flags": "|".join(self.density.flags) or "none",
            "monotone_violations": self.monotone_violations, "max_violation": self.max_violation,
        }


def weiss_report(field: ScalarField, x0, kappa: float = 1.5, radii: Sequence[float] | None = None,
                 spec: WeightSpec | None = None, phase: str = "negative") -> WeissReport:
    """Per-radius energies with a monotonicity audit and the density limit."""
    _check_kappa(kappa)
    spec = _spec(field, spec)
    radii = log_radii(field, x0) if radii is None else np.sort(np.asarray(radii, dtype=float))[::-1]
    cols = {k: [] for k in ("I", "J", "M", "K", "Mp", "Mm")}
    for r in radii:
        t = ball_terms(field, x0, r, spec)
        cols["I"].append(t.I)
        cols["J"].append(t.J)
        cols["M"].append(_M(t.I, t.J, r, kappa))
        cols["K"].append((3 - 2 * kappa) * r ** (-2 * kappa - 1) * (t.weight_plus + t.weight_minus))
        cols["Mp"].append(_M(t.I_plus, t.trace_plus, r, kappa))
        cols["Mm"].append(_M(t.I_minus, t.trace_minus, r, kappa))
    M = np.array(cols["M"])
    # radii descend, so a nondecreasing M(r) means each value is at most its predecessor
    excess = M[1:] - M[:-1] - 1e-3 * (1 + np.abs(M[:-1]))
    viol = excess[excess > 0]
    coarse = radii[radii >= DENSITY_FLOOR_CELLS * field.h * (1 - 1e-12)]
    dens = density_limit(field, x0, kappa, coarse if len(coarse) >= 4 else radii, phase)
    return WeissReport(
        center=(float(x0[0]), float(x0[1])), kappa=kappa, radii=np.asarray(radii),
        I=np.array(cols["I"]), J=np.array(cols["J"]), M=M, K=np.array(cols["K"]),
        M_plus=np.array(cols["Mp"]), M_minus=np.array(cols["Mm"]), density=dens,
        monotone_violations=int(len(viol)), max_violation=float(viol.max()) if len(viol) else 0.0,
    )
