"""Algebraic corner systems for degree-3/2 two-phase corners.

The negative phase is the cone ``theta_1 < theta < theta_1 + 2pi/3`` with
``-pi <= theta_1 <= -2pi/3``. Substituting the homogeneous pieces into the
free boundary conditions gives systems that are linear in the squared
amplitudes for fixed ``theta_1``, so the solver scans ``theta_1``, solves the
linear part by least squares and polishes near-roots with Gauss-Newton.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from . import profiles as P
from .errors import NoSolution

Q = 9.0 / 4.0
LO, HI = -math.pi, -2.0 * math.pi / 3.0
VARIANTS = ("unilateral-config-1", "unilateral-config-2", "bilateral")


@dataclass(frozen=True)
class CornerSystem:
    """``A(theta) c = b(theta)`` with c the squared amplitudes.

    ``gravity`` scales the right-hand sides; zero gives the degenerate
    comparison system solved by every zero amplitude vector.
    """

    variant: str
    gravity: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def n_amplitudes(self) -> int:
        return 3 if self.variant == "bilateral" else 2

    def matrix(self) -> np.ndarray:
        if self.variant == "bilateral":
            return Q * np.array([[1.0, 0.0, -1.0], [1.0, -1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        return Q * np.array([[1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

    def rhs(self, theta1: float) -> np.ndarray:
        t = theta1
        s0, s1, s2 = math.sin(t), math.sin(t + 2 * math.pi / 3), math.sin(t + 4 * math.pi / 3)
        if self.variant == "unilateral-config-1":
            b = [-s0, -s1, s2]
        elif self.variant == "unilateral-config-2":
            b = [-s1, -s0, s2]
        else:
            b = [-s0, -s1, s2, s2]
        return self.gravity * np.array(b)


def residual(system: CornerSystem, assignment) -> np.ndarray:
    """Residuals of the displayed equations at (squared amplitudes..., theta_1)."""
    a = np.asarray(assignment, dtype=float)
    if a.shape != (system.n_amplitudes + 1,):
        raise ValueError(f"{system.variant} takes {system.n_amplitudes} squared amplitudes and theta_1")
    return system.matrix() @ a[:-1] - system.rhs(a[-1])


def _lsq(system: CornerSystem, theta1: float):
    A = system.matrix()
    b = system.rhs(theta1)
    c, *_ = np.linalg.lstsq(A, b, rcond=None)
    return c, float(np.max(np.abs(A @ c - b)))


@dataclass(frozen=True)
class CornerRoot:
    variant: str
    theta1: float
    squared: tuple[float, ...]
    residual: float

    @property
    def amplitudes(self) -> tuple[float, ...]:
        return tuple(math.sqrt(max(c, 0.0)) for c in self.squared)

    def record(self) -> dict:
        out = {"variant": self.variant, "theta1": self.theta1, "residual": self.residual}
        for k, (c2, c) in enumerate(zip(self.squared, self.amplitudes), 1):
            out[f"C{k}_squared"] = c2
            out[f"C{k}"] = c
        return out


@dataclass(frozen=True)
class SolveResult:
    variant: str
    status: str  # isolated | degenerate-family
    roots: tuple[CornerRoot, ...]


def _polish(system: CornerSystem, theta0: float, step: float) -> tuple[float, np.ndarray, float]:
    lo, hi = max(LO, theta0 - step), min(HI, theta0 + step)
    c0, _ = _lsq(system, theta0)
    x0 = np.append(c0, theta0)
    lb = np.append(np.full(len(c0), -np.inf), lo)
    ub = np.append(np.full(len(c0), np.inf), hi)
    if hi - lo < 1e-15:
        return theta0, c0, _lsq(system, theta0)[1]
    x0[-1] = min(max(x0[-1], lo), hi)
    sol = least_squares(lambda x: residual(system, x), x0, bounds=(lb, ub), method="trf",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
    t = float(sol.x[-1])
    c, r = _lsq(system, t)
    c_start, r_start = _lsq(system, theta0)
    if r_start <= r:  # bounded steps cannot land exactly on an endpoint root
        return theta0, c_start, r_start
    return t, c, r


def solve(system: CornerSystem, step: float = 1e-3, accept: float = 1e-9, final: float = 1e-12,
          dedupe: float = 1e-6) -> SolveResult:
    """All roots with ``theta_1`` in [-pi, -2pi/3] and nonnegative squared amplitudes."""
    n = int(math.ceil((HI - LO) / step))
    grid = np.linspace(LO, HI, n + 1)
    res = np.array([_lsq(system, t)[1] for t in grid])
    scale = max(1.0, abs(system.gravity))
    zero_hits = res < accept * scale
    if zero_hits.mean() > 0.1:
        roots = []
        for t in grid[zero_hits][:: max(1, int(zero_hits.sum()) // 16)]:
            c, r = _lsq(system, float(t))
            roots.append(CornerRoot(system.variant, float(t), tuple(float(v) for v in c), r))
        return SolveResult(system.variant, "degenerate-family", tuple(roots))
    # local minima of the residual along theta, endpoints included
    padded = np.concatenate([[np.inf], res, [np.inf]])
    minima = np.where((padded[1:-1] <= padded[:-2]) & (padded[1:-1] <= padded[2:]))[0]
    found: list[CornerRoot] = []
    for k in minima:
        t, c, r = _polish(system, float(grid[k]), step)
        if r >= accept * scale or np.any(c < -accept):
            continue
        if r >= final * scale:
            continue
        c = np.where(np.abs(c) < final, 0.0, c)
        if any(abs(t - f.theta1) < dedupe for f in found):
            continue
        found.append(CornerRoot(system.variant, t, tuple(float(v) for v in c), r))
    if not found:
        raise NoSolution(f"no admissible root for {system.variant}")
    found.sort(key=lambda f: f.theta1)
    return SolveResult(system.variant, "isolated", tuple(found))


# ------------------------------------------------------------ profile assembly


def _pieces(C: float, lo: float, hi: float, sign: int) -> list[P.SectorProfile]:
    """Sector pieces vanishing on both rays of [lo, hi), split at pi when the sector wraps."""
    # 3/2 lo + phi = pi/2 starts a negative lobe, -pi/2 a positive one
    phi = (math.pi / 2 if sign == P.NEGATIVE else -math.pi / 2) - 1.5 * lo
    lo_n = float(P.normalize_angle(lo))
    shift = lo_n - lo
    phi = phi - 1.5 * shift
    hi_n = lo_n + (hi - lo)
    out = []
    if hi_n <= math.pi + 1e-15:
        out.append(P.SectorProfile(C, 1.5, float(P.normalize_angle(phi)), lo_n, min(hi_n, math.pi), sign))
    else:
        out.append(P.SectorProfile(C, 1.5, float(P.normalize_angle(phi)), lo_n, math.pi, sign))
        out.append(P.SectorProfile(C, 1.5, float(P.normalize_angle(phi + 3 * math.pi)), -math.pi,
                                   hi_n - 2 * math.pi, sign))
    return out


def to_profile(root: CornerRoot, name: str | None = None) -> P.PiecewiseProfile:
    """The homogeneous corner described by a root."""
    t = root.theta1
    amps = root.amplitudes
    third = 2 * math.pi / 3
    pieces = _pieces(amps[0], t, t + third, P.NEGATIVE)
    if root.variant == "unilateral-config-1":
        pieces += _pieces(amps[1], t + 2 * third, t + 3 * third, P.POSITIVE)
    elif root.variant == "unilateral-config-2":
        pieces += _pieces(amps[1], t + third, t + 2 * third, P.POSITIVE)
    else:
        pieces += _pieces(amps[1], t + third, t + 2 * third, P.POSITIVE)
        pieces += _pieces(amps[2], t + 2 * third, t + 3 * third, P.POSITIVE)
    return P.PiecewiseProfile(name or f"root({root.variant})", tuple(pieces))


def roots_csv(result: SolveResult) -> str:
    n = max((len(r.squared) for r in result.roots), default=0)
    head = ["variant", "status", "theta1", "residual"] + [f"C{k}_squared" for k in range(1, n + 1)] + \
        [f"C{k}" for k in range(1, n + 1)]
    rows = [",".join(head)]
    for r in result.roots:
        vals = [r.theta1, r.residual, *r.squared, *r.amplitudes]
        rows.append(",".join([r.variant, result.status] + [format(float(v), ".17g") for v in vals]))
    return "\n".join(rows) + "\n"
