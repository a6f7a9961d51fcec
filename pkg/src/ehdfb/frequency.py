"""Frequency of the negative phase around a candidate degenerate point.

D(r) is the Rayleigh quotient r * int_{B_r} |grad u^-|^2 / int_{dB_r} (u^-)^2,
V(r) the weighted measure of the dry part of the lower half ball over the same
trace norm, and H = D - V. For a kappa-homogeneous negative phase filling the
region below the datum, D = H = kappa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .errors import DegenerateTrace, OutOfDomain
from .field import ScalarField, ball_nodes, circle_integral, quadrature_resolution
from .weiss import density_limit, extrapolate

TRACE_FLOOR = 1e-14
SIGMA_U_DENSITY = 2.0 / 3.0


@dataclass(frozen=True)
class FrequencyTerms:
    r: float
    dirichlet: float  # int_{B_r} |grad u^-|^2
    dry: float  # int_{B_r} (x2_0 - x2)^+ (1 - chi_{u<0})
    trace: float  # int (u^-)^2 dS
    cross: float  # int u^- d_nu u^- dS
    flux: float  # int (d_nu u^-)^2 dS

    @property
    def D(self) -> float:
        return self.r * self.dirichlet / self.trace

    @property
    def V(self) -> float:
        return self.r * self.dry / self.trace

    @property
    def H(self) -> float:
        return self.D - self.V


def frequency_terms(field: ScalarField, x0, r: float) -> FrequencyTerms:
    field.require_ball(x0, r)
    nt, ns = quadrature_resolution(r, field.h)
    x, y, w = ball_nodes(x0, r, nt, ns, field.x2_0)
    L = field.reconstruct(x, y)
    neg = L.value < 0
    dirichlet = float(np.sum((L.gx ** 2 + L.gy ** 2) * neg * w))
    dry = float(np.sum(np.maximum(field.x2_0 - y, 0.0) * (~neg) * w))

    def parts(a, b):
        S = field.reconstruct(a, b)
        m = S.value < 0
        um = np.where(m, S.value, 0.0)
        dn = np.where(m, (S.gx * (a - x0[0]) + S.gy * (b - x0[1])) / r, 0.0)
        return um, dn

    trace = circle_integral(lambda a, b: parts(a, b)[0] ** 2, x0, r, field=field)
    if trace <= TRACE_FLOOR * 2 * math.pi * r:
        raise DegenerateTrace(f"trace of u^- on the circle of radius {r:g} is {trace:g}", r=r, trace=trace)
    cross = circle_integral(lambda a, b: np.prod(parts(a, b), axis=0), x0, r, field=field)
    flux = circle_integral(lambda a, b: parts(a, b)[1] ** 2, x0, r, field=field)
    return FrequencyTerms(r, dirichlet, dry, trace, cross, flux)


def freq_D(field: ScalarField, x0, r: float) -> float:
    return frequency_terms(field, x0, r).D


def freq_V(field: ScalarField, x0, r: float) -> float:
    return frequency_terms(field, x0, r).V


def nearest_exponent(value: float, max_integer: int = 64) -> float:
    """Closest admissible blowup exponent: 3/2 or an integer at least 2."""
    cands = [1.5] + list(range(2, max_integer + 1))
    return float(min(cands, key=lambda c: abs(c - value)))


def window_radii(window: tuple[float, float], points: int = 6) -> np.ndarray:
    lo, hi = window
    return np.geomspace(hi, lo, points)


@dataclass
class FrequencyReport:
    center: tuple[float, float]
    radii: np.ndarray
    D: np.ndarray
    V: np.ndarray
    H: np.ndarray
    trace_ratio: np.ndarray  # r^-4 int (u^-)^2 dS
    H_limit: float | None
    N0_estimate: float | None
    degenerate: bool
    flags: list[str] = dc_field(default_factory=list)
    monotone_violations: int = 0
    density: float | None = None

    @property
    def sigma_u_candidate(self) -> bool:
        return self.density is not None and abs(self.density - SIGMA_U_DENSITY) <= 0.02 * SIGMA_U_DENSITY

    def to_csv(self) -> str:
        rows = ["r,D,V,H,trace_ratio"]
        for k in range(len(self.radii)):
            rows.append(",".join(format(float(a[k]), ".17g") for a in
                                 (self.radii, self.D, self.V, self.H, self.trace_ratio)))
        return "\n".join(rows) + "\n"

    def summary(self) -> dict:
        return {
            "center_x1": self.center[0], "center_x2": self.center[1],
            "H_limit": self.H_limit, "N0_estimate": self.N0_estimate, "degenerate": self.degenerate,
            "flags": "|".join(self.flags) or "none", "monotone_violations": self.monotone_violations,
            "sigma_u_candidate": self.sigma_u_candidate,
        }


def freq_H(field: ScalarField, x0, window: tuple[float, float] | None = None,
           radii: Sequence[float] | None = None, tol: float = 1e-3) -> FrequencyReport:
    """Per-radius D, V, H with the limit of H and the nearest admissible exponent.

    H is expected to be nondecreasing in r; decreases beyond ``tol`` are
    counted as violations.
    """
    if radii is None:
        if window is None:
            raise ValueError("give a radius window or explicit radii")
        radii = window_radii(window)
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    terms = []
    try:
        for r in radii:
            terms.append(frequency_terms(field, x0, r))
    except DegenerateTrace:
        n = len(terms)
        pad = np.full(len(radii) - n, np.nan)
        D = np.concatenate([[t.D for t in terms], pad])
        V = np.concatenate([[t.V for t in terms], pad])
        return FrequencyReport((float(x0[0]), float(x0[1])), radii, D, V, D - V,
                               np.full(len(radii), np.nan), None, None, True, ["degenerate-trace"])
    D = np.array([t.D for t in terms])
    V = np.array([t.V for t in terms])
    H = D - V
    ratio = np.array([t.trace / t.r ** 4 for t in terms])
    excess = H[1:] - H[:-1] - tol * (1 + np.abs(H[:-1]))
    limit, method, _order, flags = extrapolate(radii, H, tol=0.05)
    flags = [f for f in flags if f != "too-few-radii"]
    try:
        dens = density_limit(field, x0, radii=radii).value if len(radii) >= 4 else None
    except OutOfDomain:  # density is advisory here
        dens = None
    return FrequencyReport(
        center=(float(x0[0]), float(x0[1])), radii=radii, D=D, V=V, H=H, trace_ratio=ratio,
        H_limit=limit, N0_estimate=nearest_exponent(limit), degenerate=False, flags=flags,
        monotone_violations=int(np.sum(excess > 0)), density=dens,
    )


@dataclass
class FrequencyDerivativeCheck:
    radii: np.ndarray
    finite_difference: np.ndarray
    formula: np.ndarray
    square_term: np.ndarray
    volume_term: np.ndarray

    @property
    def discrepancy(self) -> np.ndarray:
        return self.finite_difference - self.formula

    @property
    def max_discrepancy(self) -> float:
        return float(np.max(np.abs(self.discrepancy)))

    @property
    def sign_pattern(self) -> str:
        return "".join("+" if d > 0 else "-" if d < 0 else "0" for d in self.discrepancy)


def freq_derivative_check(field: ScalarField, x0, window: tuple[float, float], points: int = 5,
                          rel_step: float = 0.05) -> FrequencyDerivativeCheck:
    """dH/dr by fourth-order differences against the squared-defect identity.

    The identity reads dH/dr = (2/r) int (r d_nu u^- / sqrt(T) - H u^- / sqrt(T))^2 dS
    + (2/r) V (H - 3/2) with T the trace norm.
    """
    lo, hi = window
    field.require_ball(x0, hi * (1 + 2 * rel_step))
    radii = np.linspace(lo, hi, points)
    fd, sq, vol = [], [], []
    for r in radii:
        d = rel_step * r
        hs = [frequency_terms(field, x0, r + k * d).H for k in (-2, -1, 1, 2)]
        fd.append((hs[0] - 8 * hs[1] + 8 * hs[2] - hs[3]) / (12 * d))
        t = frequency_terms(field, x0, r)
        H = t.H
        square = (r * r * t.flux - 2 * r * H * t.cross + H * H * t.trace) / t.trace
        sq.append(2 / r * square)
        vol.append(2 / r * t.V * (H - 1.5))
    sq = np.array(sq)
    vol = np.array(vol)
    return FrequencyDerivativeCheck(radii, np.array(fd), sq + vol, sq, vol)
