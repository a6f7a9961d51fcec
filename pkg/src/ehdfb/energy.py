"""The two-phase energy, its one-phase reduction and domain-variation residuals.

All integrals are evaluated with the kink-aware reconstruction of
:mod:`ehdfb.field`, on polar nodes for balls and on datum-split midpoint nodes
for the whole lattice. Phase indicators are strict: a reconstructed value of
exactly zero belongs to neither phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy.ndimage import maximum_filter

from . import profiles as P
from .errors import NotOnePhase, OutOfDomain
from .field import ScalarField, ball_nodes, extract_level_set, quadrature_resolution

TWO_PHASE = "two-phase"
ONE_PHASE_NEGATIVE = "one-phase-negative"


@dataclass(frozen=True)
class WeightSpec:
    """Gravity weights of the two phases.

    ``negative_weight`` selects the negative-phase weight: ``"statement"`` is
    ``(x2 - x2_0)^+ + x2_0 - x2`` and ``"restated"`` is ``(x2_0 - x2)^+``. The
    two expressions agree pointwise, so the flag only documents the choice.
    """

    x2_0: float = 0.0
    selector: str = TWO_PHASE
    negative_weight: str = "statement"

    def __post_init__(self):
        if self.selector not in (TWO_PHASE, ONE_PHASE_NEGATIVE):
            raise ValueError(f"unknown selector {self.selector!r}")
        if self.negative_weight not in ("statement", "restated"):
            raise ValueError(f"unknown negative weight {self.negative_weight!r}")


def weights(spec: WeightSpec, y):
    """(w_plus, w_minus) at heights ``y``."""
    y = np.asarray(y, dtype=float)
    d = y - spec.x2_0
    if spec.negative_weight == "statement":
        wm = np.maximum(d, 0.0) - d
    else:
        wm = np.maximum(-d, 0.0)
    wp = np.maximum(d, 0.0) if spec.selector == TWO_PHASE else np.zeros_like(d)
    return wp, wm


@dataclass(frozen=True)
class Ball:
    center: tuple[float, float]
    r: float


def region_nodes(field: ScalarField, region: Ball | None, split_y: float | None = None, sub: int = 2):
    """Quadrature nodes for a ball (polar) or the whole lattice (Cartesian midpoint).

    The Cartesian rule places the datum line on a panel edge so the weights are
    integrated piecewise smoothly.
    """
    if split_y is None:
        split_y = field.x2_0
    if region is not None:
        field.require_ball(region.center, region.r)
        nt, ns = quadrature_resolution(region.r, field.h)
        return ball_nodes(region.center, region.r, nt, ns, split_y)
    xa, xb, ya, yb = field.extent
    hq = field.h / sub
    nx = int(round((xb - xa) / hq))
    xs = xa + (xb - xa) * (np.arange(nx) + 0.5) / nx
    cuts = [ya, yb] if not (ya < split_y < yb) else [ya, split_y, yb]
    ys, wy = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        n = max(1, int(math.ceil((b - a) / hq)))
        ys.append(a + (b - a) * (np.arange(n) + 0.5) / n)
        wy.append(np.full(n, (b - a) / n))
    ys = np.concatenate(ys)
    wy = np.concatenate(wy)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    W = np.outer(np.full(nx, (xb - xa) / nx), wy)
    return X.ravel(), Y.ravel(), W.ravel()


def _integrate(field: ScalarField, region, fn) -> float:
    x, y, w = region_nodes(field, region)
    loc = field.reconstruct(x, y)
    return float(np.sum(fn(x, y, loc) * w))


def e_ehd(field: ScalarField, region: Ball | None = None, spec: WeightSpec | None = None) -> float:
    """Dirichlet energy plus gravity weights of the two phases."""
    spec = spec or WeightSpec(field.x2_0)

    def f(x, y, L):
        wp, wm = weights(spec, y)
        return L.gx ** 2 + L.gy ** 2 + wp * (L.value > 0) + wm * (L.value < 0)

    return _integrate(field, region, f)


def e_onephase(field: ScalarField, region: Ball | None = None, tol: float = 1e-10) -> float:
    """One-phase energy of ``u^-``; the field must be nonpositive on the region."""
    u = field.values
    if region is not None:
        X, Y = field.mesh()
        cx, cy = region.center
        inside = (X - cx) ** 2 + (Y - cy) ** 2 <= (region.r + field.h) ** 2
        pos = float(np.max(np.where(inside, u, 0.0)))
    else:
        pos = float(u.max())
    if pos > tol * max(1.0, float(np.abs(u).max())):
        raise NotOnePhase(f"positive part {pos:g} exceeds tolerance", max_positive=pos)

    def f(x, y, L):
        neg = L.value < 0
        return (L.gx ** 2 + L.gy ** 2) * neg + np.maximum(field.x2_0 - y, 0.0) * neg

    return _integrate(field, region, f)


# ------------------------------------------------------------------ test fields


@dataclass(frozen=True)
class TestVectorField:
    """phi(x) = psi(x) (A (x - c) + b) with the bump psi = (1 - |x - c|^2 / R^2)^3_+."""

    __test__ = False  # not a pytest class

    center: tuple[float, float]
    radius: float
    A: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 0.0), (0.0, 0.0))
    b: tuple[float, float] = (0.0, 1.0)

    def _parts(self, x, y):
        dx = np.asarray(x, float) - self.center[0]
        dy = np.asarray(y, float) - self.center[1]
        q = (dx * dx + dy * dy) / self.radius ** 2
        inside = q < 1.0
        s = np.where(inside, 1.0 - q, 0.0)
        psi = s ** 3
        dpsi = -6.0 * s ** 2 / self.radius ** 2  # times (dx, dy)
        (a11, a12), (a21, a22) = self.A
        v1 = a11 * dx + a12 * dy + self.b[0]
        v2 = a21 * dx + a22 * dy + self.b[1]
        return dx, dy, psi, dpsi, v1, v2, (a11, a12, a21, a22)

    def __call__(self, x, y):
        dx, dy, psi, _, v1, v2, _ = self._parts(x, y)
        return psi * v1, psi * v2

    def jacobian(self, x, y):
        """(d1 phi1, d2 phi1, d1 phi2, d2 phi2)."""
        dx, dy, psi, dpsi, v1, v2, (a11, a12, a21, a22) = self._parts(x, y)
        gx, gy = dpsi * dx, dpsi * dy
        return (psi * a11 + v1 * gx, psi * a12 + v1 * gy, psi * a21 + v2 * gx, psi * a22 + v2 * gy)

    def c1_norm(self, n: int = 241) -> float:
        """max |phi| + max |D phi| (Frobenius) sampled on an n x n grid over the support."""
        s = np.linspace(-1.0, 1.0, n) * self.radius
        X, Y = np.meshgrid(self.center[0] + s, self.center[1] + s, indexing="ij")
        p1, p2 = self(X, Y)
        j = self.jacobian(X, Y)
        return float(np.max(np.hypot(p1, p2)) + np.max(np.sqrt(sum(c * c for c in j))))


def standard_test_fields(count: int = 10, seed: int = 7, reach: float = 0.8) -> list[TestVectorField]:
    """A reproducible family of bump fields with supports inside the disk of radius ``reach``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        R = rng.uniform(0.25, 0.45)
        rad = rng.uniform(0.0, reach - R)
        ang = rng.uniform(-math.pi, math.pi)
        c = (float(rad * math.cos(ang)), float(rad * math.sin(ang)))
        A = rng.normal(size=(2, 2))
        b = rng.normal(size=2)
        out.append(TestVectorField(c, float(R), tuple(map(tuple, A.tolist())), tuple(b.tolist())))
    return out


def _fv_integrand(field, phi, spec, x, y, L, one_phase: bool):
    j11, j12, j21, j22 = phi.jacobian(x, y)
    p1, p2 = phi(x, y)
    div = j11 + j22
    neg = L.value < 0
    pos = L.value > 0
    if one_phase:
        gx, gy = np.where(neg, L.gx, 0.0), np.where(neg, L.gy, 0.0)
    else:
        gx, gy = L.gx, L.gy
    g2 = gx * gx + gy * gy
    gDg = gx * (j11 * gx + j12 * gy) + gy * (j21 * gx + j22 * gy)
    out = g2 * div - 2.0 * gDg
    d = y - spec.x2_0
    below = d < 0
    out = out + np.where(below & neg, -d * div - p2, 0.0)
    if not one_phase:
        out = out + np.where(~below & pos, d * div + p2, 0.0)
    return out


def first_variation(field: ScalarField, phi: TestVectorField, spec: WeightSpec | None = None,
                    one_phase: bool = False) -> float:
    """Derivative of the energy along the domain variation ``x -> x + t phi(x)`` at t = 0."""
    spec = spec or WeightSpec(field.x2_0)
    region = Ball(phi.center, phi.radius)
    try:
        x, y, w = region_nodes(field, region, spec.x2_0)
    except OutOfDomain as exc:
        raise OutOfDomain("test field support leaves the lattice") from exc
    L = field.reconstruct(x, y)
    return float(np.sum(_fv_integrand(field, phi, spec, x, y, L, one_phase) * w))


def first_variation_onephase(field: ScalarField, phi: TestVectorField, spec: WeightSpec | None = None) -> float:
    """The same residual for ``u^-`` alone with the one-phase energy."""
    return first_variation(field, phi, spec, one_phase=True)


# -------------------------------------------------------------- sampled checks


def sampled_fb_residual(field: ScalarField, profile: P.PiecewiseProfile, rho: float = 1.0,
                        offset_cells: float = 3.0, center=(0.0, 0.0)) -> dict[float, P.RayResidual]:
    """Free boundary conditions measured on a sampled field.

    One-sided gradients are read ``offset_cells * h`` off each ray of the
    reference profile, so the residual carries a first-order offset error.
    """
    exact = P.fb_residual(profile, 0.0, rho)
    delta = offset_cells * field.h / rho
    out = {}
    for t, ref in exact.items():
        before, after = P._sides(profile, t)
        sq = {}
        for piece, sgn in ((before, -1), (after, 1)):
            if piece is None:
                continue
            th = t + sgn * delta
            L = field.reconstruct(center[0] + rho * math.cos(th), center[1] + rho * math.sin(th))
            sq[piece.sign] = float(L.gx ** 2 + L.gy ** 2)
        x2 = center[1] + rho * math.sin(t)
        gap = field.x2_0 - x2
        neg = sq.get(P.NEGATIVE, 0.0)
        pos = sq.get(P.POSITIVE, 0.0)
        if ref.kind == "two-phase":
            r = neg - pos - gap
        elif ref.kind == "one-phase-negative":
            r = neg - gap
        else:
            r = pos + gap
        out[t] = P.RayResidual(t, ref.kind, float(r))
    return out


@dataclass
class OnePhaseLocation:
    """Heights of one-phase boundary vertices relative to the datum."""

    positive_violations: int
    negative_violations: int
    worst_positive: float  # most negative x2 - x2_0 over one-phase positive vertices
    worst_negative: float  # most positive x2 - x2_0 over one-phase negative vertices
    counts: dict = dc_field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.positive_violations == 0 and self.negative_violations == 0


def onephase_boundary_check(field: ScalarField, slack: float | None = None, reach: int = 2) -> OnePhaseLocation:
    """Check that one-phase positive boundaries lie above the datum and negative ones below.

    A boundary vertex is one-phase when no node of the opposite sign lies
    within ``reach`` cells of it.
    """
    slack = 2 * field.h if slack is None else slack
    u = field.values
    h = field.h
    size = 2 * reach + 1
    near_pos = maximum_filter((u > 0).astype(np.uint8), size=size) > 0
    near_neg = maximum_filter((u < 0).astype(np.uint8), size=size) > 0

    def vertices(sign):
        pls = extract_level_set(field, 0.0, sign)
        return np.concatenate([p.vertices for p in pls]) if pls else np.zeros((0, 2))

    def node_flag(mask, pts):
        ix = np.clip(np.rint((pts[:, 0] - field.origin[0]) / h).astype(int), 0, u.shape[0] - 1)
        iy = np.clip(np.rint((pts[:, 1] - field.origin[1]) / h).astype(int), 0, u.shape[1] - 1)
        return mask[ix, iy]

    vp = vertices(1)
    vn = vertices(-1)
    op_pos = vp[~node_flag(near_neg, vp)] if len(vp) else vp
    op_neg = vn[~node_flag(near_pos, vn)] if len(vn) else vn
    gp = op_pos[:, 1] - field.x2_0 if len(op_pos) else np.zeros(0)
    gn = op_neg[:, 1] - field.x2_0 if len(op_neg) else np.zeros(0)
    return OnePhaseLocation(
        positive_violations=int(np.sum(gp < -slack)),
        negative_violations=int(np.sum(gn > slack)),
        worst_positive=float(gp.min()) if len(gp) else math.inf,
        worst_negative=float(gn.max()) if len(gn) else -math.inf,
        counts={"one_phase_positive": int(len(gp)), "one_phase_negative": int(len(gn))},
    )


__all__: Sequence[str] = (
    "WeightSpec", "weights", "Ball", "region_nodes", "e_ehd", "e_onephase", "TestVectorField",
    "standard_test_fields", "first_variation", "first_variation_onephase", "sampled_fb_residual",
    "OnePhaseLocation", "onephase_boundary_check",
)
