"""Closed-form homogeneous corner profiles.

Each profile is a union of angular sectors carrying ``C rho^kappa cos(w theta + phi)``
(``w`` defaults to ``kappa``). The catalog holds the symmetric Stokes corner and
its two-phase companions, the asymmetric 60 degree corners, the degree-N
frequency profiles and the affine field ``u = x2``.

Angles live in [-pi, pi) and sectors are half-open, so a point on a shared ray
belongs to the piece whose sector starts there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import OnBoundary, UnsupportedExponent

PI = math.pi
TWO_PI = 2.0 * math.pi

# exact catalog amplitudes, evaluated once
C_STOKES = math.sqrt(2.0) / 3.0
C_ASYM = math.sqrt(2.0 * math.sqrt(3.0)) / 3.0
C_BILATERAL_NEG = math.sqrt(6.0) / 3.0
C_BILATERAL_POS = 2.0 / 3.0
W_NORM = math.sqrt(PI / 2.0)

NEGATIVE = -1
POSITIVE = 1

_RAY_TOL = 1e-12


def normalize_angle(theta):
    """Map angles to [-pi, pi)."""
    t = np.mod(np.asarray(theta, dtype=float) + PI, TWO_PI) - PI
    # mod can return exactly 2pi - pi = pi for tiny negative inputs
    t = np.where(t >= PI, t - TWO_PI, t)
    return t if np.ndim(t) else float(t)


@dataclass(frozen=True)
class SectorProfile:
    """One piece ``C rho^kappa cos(freq*theta + phi)`` on ``[theta_lo, theta_hi)``."""

    C: float
    kappa: float
    phi: float
    theta_lo: float
    theta_hi: float
    sign: int
    freq: float | None = None

    def __post_init__(self):
        if self.C < 0:
            raise ValueError("amplitude must be nonnegative")
        if self.kappa < 1.0:
            raise ValueError("homogeneity exponent must be >= 1")
        if not (-PI - 1e-15 <= self.theta_lo < self.theta_hi <= PI + 1e-15):
            raise ValueError("sector must satisfy -pi <= theta_lo < theta_hi <= pi")
        if self.sign not in (NEGATIVE, POSITIVE):
            raise ValueError("sign must be -1 or +1")

    @property
    def w(self) -> float:
        return self.kappa if self.freq is None else self.freq

    @property
    def width(self) -> float:
        return self.theta_hi - self.theta_lo

    def contains(self, theta):
        return (theta >= self.theta_lo) & (theta < self.theta_hi)

    def interior(self, theta):
        return (theta > self.theta_lo + _RAY_TOL) & (theta < self.theta_hi - _RAY_TOL)

    def value(self, rho, theta):
        return self.C * np.power(rho, self.kappa) * np.cos(self.w * theta + self.phi)

    def polar_derivatives(self, rho, theta):
        """Return (u_rho, u_theta / rho)."""
        a = self.w * theta + self.phi
        base = self.C * np.power(rho, self.kappa - 1.0)
        return self.kappa * base * np.cos(a), -self.w * base * np.sin(a)

    def grad_sq(self, rho):
        """|grad u|^2 on the sector boundary rays, where the angular part vanishes."""
        return (self.kappa * self.C) ** 2 * rho ** (2 * self.kappa - 2)


@dataclass(frozen=True)
class PiecewiseProfile:
    name: str
    pieces: tuple[SectorProfile, ...]

    def __post_init__(self):
        ps = sorted(self.pieces, key=lambda p: p.theta_lo)
        for a, b in zip(ps, ps[1:]):
            if b.theta_lo < a.theta_hi - 1e-14:
                raise ValueError(f"{self.name}: overlapping sectors")

    @property
    def kappa(self) -> float:
        ks = {p.kappa for p in self.pieces}
        return ks.pop() if len(ks) == 1 else float("nan")

    def rays(self) -> list[float]:
        """Sector endpoints, normalized and deduplicated."""
        out: list[float] = []
        for p in self.pieces:
            for t in (p.theta_lo, p.theta_hi):
                t = float(normalize_angle(t))
                if not any(abs(t - s) < 1e-12 for s in out):
                    out.append(t)
        return sorted(out)


@dataclass(frozen=True)
class DensityValue:
    value: float
    kind: str
    symbol: str = ""


# --------------------------------------------------------------------------- catalog


def _stokes_neg(C=C_STOKES):
    return SectorProfile(C, 1.5, -PI / 4, -5 * PI / 6, -PI / 6, NEGATIVE)


def A1() -> PiecewiseProfile:
    return PiecewiseProfile("A1", (_stokes_neg(),))


def A2() -> PiecewiseProfile:
    up = SectorProfile(C_STOKES, 1.5, -3 * PI / 4, PI / 6, 5 * PI / 6, POSITIVE)
    return PiecewiseProfile("A2", (_stokes_neg(), up))


def A3() -> PiecewiseProfile:
    # the second positive sector [pi/2, 7pi/6) wraps through pi; its lower part
    # is written with phase 3pi/4 + 3pi == -pi/4 (mod 2pi) after theta -> theta - 2pi
    return PiecewiseProfile(
        "A3",
        (
            SectorProfile(C_BILATERAL_NEG, 1.5, -PI / 4, -5 * PI / 6, -PI / 6, NEGATIVE),
            SectorProfile(C_BILATERAL_POS, 1.5, -PI / 4, -PI / 6, PI / 2, POSITIVE),
            SectorProfile(C_BILATERAL_POS, 1.5, 3 * PI / 4, PI / 2, PI, POSITIVE),
            SectorProfile(C_BILATERAL_POS, 1.5, -PI / 4, -PI, -5 * PI / 6, POSITIVE),
        ),
    )


def A4L() -> PiecewiseProfile:
    return PiecewiseProfile(
        "A4L",
        (
            SectorProfile(C_ASYM, 1.5, -PI, PI / 3, PI, POSITIVE),
            SectorProfile(C_ASYM, 1.5, 0.0, -PI, -PI / 3, NEGATIVE),
        ),
    )


def A4R() -> PiecewiseProfile:
    return PiecewiseProfile(
        "A4R",
        (
            SectorProfile(C_ASYM, 1.5, -PI / 2, 0.0, 2 * PI / 3, POSITIVE),
            SectorProfile(C_ASYM, 1.5, -PI / 2, -2 * PI / 3, 0.0, NEGATIVE),
        ),
    )


def W(N: int) -> PiecewiseProfile:
    """-rho^N |sin N theta| / sqrt(pi/2) on the lower half plane."""
    if N < 2:
        raise ValueError("N must be >= 2")
    pieces = []
    for k in range(N):
        lo = -PI + k * PI / N
        mid = lo + 0.5 * PI / N
        s = 1.0 if math.sin(N * mid) > 0 else -1.0
        # -s sin(Nt) = s cos(Nt + pi/2) = cos(Nt + phi) with phi = +-pi/2
        phi = PI / 2 if s > 0 else -PI / 2
        pieces.append(SectorProfile(1.0 / W_NORM, float(N), phi, lo, lo + PI / N, NEGATIVE))
    return PiecewiseProfile(f"W({N})", tuple(pieces))


def LINEAR() -> PiecewiseProfile:
    return PiecewiseProfile(
        "LINEAR",
        (
            SectorProfile(1.0, 1.0, -PI / 2, -PI, 0.0, NEGATIVE),
            SectorProfile(1.0, 1.0, -PI / 2, 0.0, PI, POSITIVE),
        ),
    )


CORNER_NAMES = ("A1", "A2", "A3", "A4L", "A4R")


def catalog() -> dict[str, PiecewiseProfile]:
    out = {f().name: f() for f in (A1, A2, A3, A4L, A4R)}
    for N in (2, 3, 4):
        out[f"W({N})"] = W(N)
    out["LINEAR"] = LINEAR()
    return out


def get(name: str) -> PiecewiseProfile:
    cat = catalog()
    key = name.strip()
    aliases = {"A4.1": "A4L", "A4.2": "A4R", "X2": "LINEAR", "W2": "W(2)", "W3": "W(3)", "W4": "W(4)"}
    key = aliases.get(key.upper(), key)
    for k, v in cat.items():
        if k.upper() == key.upper():
            return v
    raise KeyError(f"unknown profile {name!r}")


# ------------------------------------------------------------------------ evaluation


def _as_polar(rho, theta):
    rho = np.asarray(rho, dtype=float)
    theta = normalize_angle(theta)
    return rho, np.asarray(theta, dtype=float)


def eval(profile: PiecewiseProfile, rho, theta):  # noqa: A001 - mirrors the catalog vocabulary
    """Value at polar coordinates; zero outside every sector."""
    rho, theta = _as_polar(rho, theta)
    out = np.zeros(np.broadcast(rho, theta).shape)
    for p in profile.pieces:
        m = p.contains(theta)
        v = p.value(rho, theta)
        out = np.where(m, v, out)
    return out if out.ndim else float(out)


evaluate = eval


def eval_xy(profile: PiecewiseProfile, x, y, center=(0.0, 0.0)):
    x = np.asarray(x, dtype=float) - center[0]
    y = np.asarray(y, dtype=float) - center[1]
    return eval(profile, np.hypot(x, y), np.arctan2(y, x))


def _piece_at(profile: PiecewiseProfile, theta: float) -> SectorProfile | None:
    for p in profile.pieces:
        if p.contains(theta):
            return p
    return None


def _check_interior(profile, rho, theta):
    if rho <= 0:
        raise OnBoundary("gradient requested at the vertex")
    theta = float(normalize_angle(theta))
    p = _piece_at(profile, theta)
    if p is None:
        return None, theta
    if not p.interior(theta):
        raise OnBoundary(f"theta={theta!r} lies on a sector ray")
    return p, theta


def gradient(profile: PiecewiseProfile, rho: float, theta: float) -> np.ndarray:
    """Cartesian gradient strictly inside a sector (zero in the zero phase)."""
    p, theta = _check_interior(profile, rho, theta)
    if p is None:
        for q in profile.pieces:
            for t in (q.theta_lo, q.theta_hi):
                if abs(float(normalize_angle(t)) - theta) < _RAY_TOL:
                    raise OnBoundary(f"theta={theta!r} lies on a sector ray")
        return np.zeros(2)
    ur, ut = p.polar_derivatives(rho, theta)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([ur * c - ut * s, ur * s + ut * c])


def gradient_xy(profile: PiecewiseProfile, x, y, center=(0.0, 0.0)):
    """Vectorized gradient; points on rays take the piece that starts there."""
    x = np.asarray(x, dtype=float) - center[0]
    y = np.asarray(y, dtype=float) - center[1]
    rho = np.hypot(x, y)
    theta = np.arctan2(y, x)
    theta = normalize_angle(theta)
    gx = np.zeros(np.broadcast(rho, theta).shape)
    gy = np.zeros_like(gx)
    with np.errstate(divide="ignore", invalid="ignore"):
        for p in profile.pieces:
            m = p.contains(theta) & (rho > 0)
            ur, ut = p.polar_derivatives(rho, theta)
            c, s = np.cos(theta), np.sin(theta)
            gx = np.where(m, ur * c - ut * s, gx)
            gy = np.where(m, ur * s + ut * c, gy)
    return gx, gy


def laplacian_residual(profile: PiecewiseProfile, rho: float, theta: float) -> float:
    """u_rr + u_r/r + u_tt/r^2 of the closed form at an interior point."""
    p, theta = _check_interior(profile, rho, theta)
    if p is None:
        return 0.0
    a = p.w * theta + p.phi
    k = p.kappa
    base = p.C * rho ** (k - 2.0) * math.cos(a)
    u_rr = k * (k - 1.0) * base
    u_r_over_r = k * base
    u_tt_over_r2 = -p.w * p.w * base
    return u_rr + u_r_over_r + u_tt_over_r2


# ------------------------------------------------------------------ boundary conditions


@dataclass(frozen=True)
class RayResidual:
    theta: float
    kind: str  # two-phase | one-phase-negative | one-phase-positive
    residual: float


def _sides(profile, theta):
    """Pieces adjacent to the ray: (before, after) in counterclockwise order."""
    before = after = None
    for p in profile.pieces:
        hi = float(normalize_angle(p.theta_hi)) if p.theta_hi < PI else -PI
        lo = float(normalize_angle(p.theta_lo))
        if abs(hi - theta) < 1e-12:
            before = p
        if abs(lo - theta) < 1e-12:
            after = p
    return before, after


def fb_residual(profile: PiecewiseProfile, x2_0: float = 0.0, rho: float = 1.0) -> dict[float, RayResidual]:
    """Violation of the free boundary conditions on every ray, at radius ``rho``.

    Two-phase rays use ``|grad u-|^2 - |grad u+|^2 - (x2_0 - x2)``; one-phase
    negative rays ``|grad u-|^2 - (x2_0 - x2)``; one-phase positive rays
    ``|grad u+|^2 - (x2 - x2_0)``.
    """
    if any(abs(p.kappa - 1.5) > 1e-15 for p in profile.pieces):
        raise UnsupportedExponent("free boundary conditions are stated for degree 3/2 profiles")
    out: dict[float, RayResidual] = {}
    for t in profile.rays():
        before, after = _sides(profile, t)
        if after is not None and abs(after.value(1.0, t)) > 1e-9:
            continue  # a split inside one phase, not a free boundary ray
        x2 = rho * math.sin(t)
        neg = [p for p in (before, after) if p is not None and p.sign == NEGATIVE]
        pos = [p for p in (before, after) if p is not None and p.sign == POSITIVE]
        if neg and pos:
            r = neg[0].grad_sq(rho) - pos[0].grad_sq(rho) - (x2_0 - x2)
            kind = "two-phase"
        elif neg:
            r = max((p.grad_sq(rho) - (x2_0 - x2) for p in neg), key=abs)
            kind = "one-phase-negative"
        else:
            r = max((p.grad_sq(rho) - (x2 - x2_0) for p in pos), key=abs)
            kind = "one-phase-positive"
        out[t] = RayResidual(t, kind, float(r))
    return out


# ---------------------------------------------------------------------------- density

_DENSITY_KINDS = {
    "stokes": (math.sqrt(3.0) / 3.0, "sqrt(3)/3"),
    "asymmetric": (0.5, "1/2"),
    "halfplane": (2.0 / 3.0, "2/3"),
    "zero": (0.0, "0"),
}


def negative_density(profile: PiecewiseProfile) -> float:
    """int_{B1} (-x2)^+ chi_{u<0} dx in closed form."""
    total = 0.0
    for p in profile.pieces:
        if p.sign != NEGATIVE:
            continue
        lo, hi = max(p.theta_lo, -PI), min(p.theta_hi, 0.0)
        if hi > lo:
            total += (math.cos(hi) - math.cos(lo)) / 3.0
    return total


def density(profile: PiecewiseProfile) -> DensityValue:
    v = negative_density(profile)
    for kind, (exact, sym) in _DENSITY_KINDS.items():
        if abs(v - exact) < 1e-12:
            return DensityValue(exact, kind, sym)
    return DensityValue(v, "other", "")


def halfplane_density() -> DensityValue:
    v, s = _DENSITY_KINDS["halfplane"]
    return DensityValue(v, "halfplane", s)


# ------------------------------------------------------------------------- validation


def validate(profile: PiecewiseProfile, samples: int = 64) -> list[str]:
    """Return a list of invariant violations (empty when the profile is sound)."""
    problems = []
    for p in profile.pieces:
        ts = np.linspace(p.theta_lo, p.theta_hi, samples + 2)[1:-1]
        v = p.value(1.0, ts)
        if np.any(np.sign(v) != p.sign):
            problems.append(f"{profile.name}: piece on [{p.theta_lo:.4f},{p.theta_hi:.4f}) has wrong sign")
    for t in profile.rays():
        before, after = _sides(profile, t)
        vals = [p.value(1.0, t if p is after else (p.theta_hi if p.theta_hi < PI else PI)) for p in (before, after) if p]
        if before is not None and after is not None:
            if abs(vals[0] - vals[1]) > 1e-12:
                problems.append(f"{profile.name}: jump across ray {t:.6f}")
        else:
            if any(abs(v) > 1e-12 for v in vals):
                problems.append(f"{profile.name}: nonzero trace on boundary ray {t:.6f}")
    return problems


# ---------------------------------------------------------------------- serialization

_HEADER = "# name C kappa phi theta_lo theta_hi sign"


def _g(x: float) -> str:
    return format(float(x), ".17g")


def catalog_to_text(profiles: Iterable[PiecewiseProfile]) -> str:
    lines = [_HEADER]
    for prof in profiles:
        for p in prof.pieces:
            lines.append(
                " ".join(
                    [prof.name, _g(p.C), _g(p.kappa), _g(p.phi), _g(p.theta_lo), _g(p.theta_hi),
                     "negative" if p.sign == NEGATIVE else "positive"]
                )
            )
    return "\n".join(lines) + "\n"


def catalog_from_text(text: str) -> dict[str, PiecewiseProfile]:
    groups: dict[str, list[SectorProfile]] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        name, C, k, phi, lo, hi, sign = line.split()
        groups.setdefault(name, []).append(
            SectorProfile(float(C), float(k), float(phi), float(lo), float(hi),
                          NEGATIVE if sign == "negative" else POSITIVE)
        )
    return {n: PiecewiseProfile(n, tuple(ps)) for n, ps in groups.items()}


def scaled(profile: PiecewiseProfile, factor: float) -> PiecewiseProfile:
    """Same sectors, amplitudes multiplied by ``factor`` (for residual probes)."""
    return PiecewiseProfile(
        profile.name,
        tuple(SectorProfile(p.C * factor, p.kappa, p.phi, p.theta_lo, p.theta_hi, p.sign, p.freq)
              for p in profile.pieces),
    )
