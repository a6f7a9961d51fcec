"""Stagnation points, blowup diagnostics and singularity classification.

A stagnation point is a vertex of the free boundary of the negative phase
where the gradient of ``u^-`` vanishes; for weak solutions all of them sit on
the datum line. Around such a point the weighted density of the negative phase
tells the singularity class apart (Stokes corner, asymmetric corner or a
degenerate point), the branch directions of the free boundary give the side of
an asymmetric corner, and the area fraction of the negative phase below the
datum separates cusps from horizontal points.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .errors import EHDError, InsufficientArc, OutOfDomain
from .field import (Polyline, ScalarField, ball_nodes, circle_integral, extract_level_set,
                    negative_gradient, quadrature_resolution)
from .weiss import DensityEstimate, extrapolate, log_radii

SQRT3 = math.sqrt(3.0)

LABELS = ("StokesCorner", "AsymmetricLeft", "AsymmetricRight", "Cusp", "HorizontalPoint",
          "NonStagnation", "Unclassified")

# The Stokes and asymmetric bands of width 0.06 overlap; they are cut at the
# midpoint of the two theoretical values.
_SPLIT = 0.5 * (0.5 + SQRT3 / 3.0)
BANDS = {
    "zero": (0.0, 0.12),
    "asymmetric": (0.44, _SPLIT),
    "stokes": (_SPLIT, SQRT3 / 3.0 + 0.06),
    "sigma_u": (2.0 / 3.0 - 0.02, 2.0 / 3.0 + 0.02),
}


def _check_bands(bands: dict) -> None:
    spans = sorted(bands.values())
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        if not (a0 < a1 and b0 < b1 and a1 <= b0):
            raise ValueError(f"classification bands overlap: [{a0}, {a1}] and [{b0}, {b1}]")


_check_bands(BANDS)

SLOPE_BAND = 0.1  # Stokes branches, on slopes
ANGLE_BAND = 0.1  # asymmetric branches, on directions in radians
SIGNIFICANCE = 1e-6  # negative components below this fraction of max|u| are ignored
TIE = 0.1  # gradients within this fraction of tol_g of the run minimum count as ties
DEGENERATE_DECAY = 0.25  # trace of u^- / r^(3/2) shrinking at least like r^this marks a vanishing blowup
DEFAULT_ALPHA = 1.25  # degenerate-density exponent when the positive phase gives no estimate

# Branch directions (l^-, l^+) pointing away from the vertex.
STOKES_DIRECTIONS = (-5 * math.pi / 6, -math.pi / 6)
LEFT_DIRECTIONS = (-math.pi, -math.pi / 3)
RIGHT_DIRECTIONS = (-2 * math.pi / 3, 0.0)


def _in(band: str, value: float) -> bool:
    lo, hi = BANDS[band]
    if band == "zero":
        return value <= hi
    return lo <= value < hi if band == "asymmetric" else lo <= value <= hi


def detection_tolerances(h: float) -> tuple[float, float]:
    """(tol_g, tol_h): the gradient of a degree-3/2 vertex one cell away, thrice, and three cells."""
    return 3 * 1.5 * math.sqrt(2 * h), 3 * h


def significant(field: ScalarField, rel: float = SIGNIFICANCE) -> ScalarField:
    """Drop negative components whose extreme value is negligible.

    Iterative minimizers leave values many orders below the field scale in
    regions where the energy does not see the sign; such specks would add
    spurious free boundary pieces.
    """
    u = field.values
    neg = u < 0
    if not neg.any():
        return field
    floor = rel * float(np.max(np.abs(u)))
    labels, n = ndimage.label(neg)
    peaks = ndimage.minimum(u, labels, index=np.arange(1, n + 1))
    drop = np.zeros(n + 1, bool)
    drop[1:] = -np.asarray(peaks) <= floor
    if not drop.any():
        return field
    return field.with_values(np.where(drop[labels], 0.0, u))


# ------------------------------------------------------------------ detection


@dataclass(frozen=True)
class StagnationCandidate:
    location: tuple[float, float]
    gradient: float  # |grad u^-| at the vertex
    height_gap: float  # x2 - x2_0 at the vertex
    anomalous: bool = False
    vertex: tuple[float, float] | None = None  # polyline vertex before refinement


@dataclass(frozen=True)
class StagnationSearch:
    candidates: tuple[StagnationCandidate, ...]
    anomalous: tuple[StagnationCandidate, ...]
    tol_g: float
    tol_h: float


def _runs(flags: np.ndarray, closed: bool) -> list[np.ndarray]:
    """Index runs of consecutive true flags, wrapping around for closed curves."""
    idx = np.flatnonzero(flags)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    runs = np.split(idx, breaks + 1)
    if closed and len(runs) > 1 and runs[0][0] == 0 and runs[-1][-1] == len(flags) - 1:
        runs[0] = np.concatenate([runs.pop(), runs[0]])
    return runs


def _branch_line(v: np.ndarray, k: int, step: int, closed: bool, h: float):
    b = _branch(v, k, step, closed, v[k], 10 * h)
    b = b[np.hypot(b[:, 0] - v[k, 0], b[:, 1] - v[k, 1]) >= 2 * h]
    if len(b) < 4:
        return None
    c = b.mean(axis=0)
    d = np.linalg.svd(b - c)[2][0]
    return c, d


def _refine(line: Polyline, k: int, x2_0: float, tol_h: float, h: float) -> tuple[float, float]:
    """Corner position: the branch lines' intersection for x1, the datum for x2.

    Contour vertices near a degree-3/2 corner sit a fraction of a cell off the
    corner; the straight parts of the two branches locate it better.
    """
    v = line.vertices
    x1, x2 = float(v[k, 0]), float(v[k, 1])
    a, b = _branch_line(v, k, -1, line.closed, h), _branch_line(v, k, 1, line.closed, h)
    if a is not None and b is not None:
        (ca, da), (cb, db) = a, b
        cross = da[0] * db[1] - da[1] * db[0]
        if abs(cross) > math.sin(0.2):
            t = ((cb[0] - ca[0]) * db[1] - (cb[1] - ca[1]) * db[0]) / cross
            p = ca + t * da
            if math.hypot(p[0] - x1, p[1] - x2) <= 2 * h:
                x1 = float(p[0])
                x2 = float(p[1])
    if abs(x2 - x2_0) <= tol_h:
        x2 = x2_0
    return x1, x2


def stagnation_search(field: ScalarField, tol_g: float | None = None, tol_h: float | None = None,
                      rel: float = SIGNIFICANCE) -> StagnationSearch:
    """Free boundary vertices with vanishing ``|grad u^-|``, one per connected run.

    Vertices pass when ``|grad u^-| <= tol_g``; those within ``tol_h`` of the
    datum are candidates and those above it are reported as anomalous. Vertices
    within two cells of the lattice edge are skipped.
    """
    g_tol, h_tol = detection_tolerances(field.h)
    tol_g = g_tol if tol_g is None else tol_g
    tol_h = h_tol if tol_h is None else tol_h
    f = significant(field, rel)
    try:
        lines = extract_level_set(f, sign=-1)
    except ValueError:
        lines = []
    found: list[StagnationCandidate] = []
    for line in lines:
        v = line.vertices
        gx, gy = negative_gradient(f, v[:, 0], v[:, 1])
        g = np.hypot(gx, gy)
        gap = v[:, 1] - field.x2_0
        inside = np.array([field.contains(a, b, margin=2 * field.h) for a, b in v])
        ok = inside & (g <= tol_g) & (gap >= -tol_h)
        for run in _runs(ok, line.closed):
            # the middle of the near-minimal stretch, so flat boundaries give their centre
            near = run[g[run] <= g[run].min() + TIE * tol_g]
            k = near[len(near) // 2]
            loc = _refine(line, k, field.x2_0, tol_h, field.h)
            found.append(StagnationCandidate(loc, float(g[k]), float(gap[k]), bool(gap[k] > tol_h),
                                             (float(v[k, 0]), float(v[k, 1]))))
    found.sort(key=lambda c: (c.anomalous, c.gradient, c.location))
    regular = tuple(c for c in found if not c.anomalous)
    anomalous = tuple(c for c in found if c.anomalous)
    return StagnationSearch(regular, anomalous, tol_g, tol_h)


def find_stagnation(field: ScalarField, tol_g: float | None = None,
                    tol_h: float | None = None) -> list[StagnationCandidate]:
    """Stagnation candidates on the datum line; see ``stagnation_search`` for the anomalous ones."""
    return list(stagnation_search(field, tol_g, tol_h).candidates)


# ------------------------------------------------------------ blowup geometry


class Homogeneity(NamedTuple):
    value: float
    degenerate: bool


def homogeneity_deviation(field: ScalarField, x0, kappa: float, radii: tuple[float, float]) -> Homogeneity:
    """Relative L2 distance on the unit ball between two rescalings ``u(x0 + r x) / r^kappa``."""
    r1, r2 = float(radii[0]), float(radii[1])
    for r in (r1, r2):
        field.require_ball(x0, r)
    nt, ns = quadrature_resolution(1.0, field.h / min(r1, r2))
    x, y, w = ball_nodes((0.0, 0.0), 1.0, nt, ns)

    def blow(r):
        return field.reconstruct(x0[0] + r * x, x0[1] + r * y).value / r ** kappa

    a, b = blow(r1), blow(r2)
    na, nb = math.sqrt(float(np.sum(a * a * w))), math.sqrt(float(np.sum(b * b * w)))
    scale = max(na, nb)
    if scale == 0.0:
        return Homogeneity(0.0, True)
    return Homogeneity(math.sqrt(float(np.sum((a - b) ** 2 * w))) / scale, False)


@dataclass(frozen=True)
class TangentSlopes:
    minus: float  # l^-: branch with smaller mean x1
    plus: float
    angle_minus: float  # branch directions seen from x0
    angle_plus: float
    counts: tuple[int, int]

    def as_tuple(self) -> tuple[float, float]:
        return (self.minus, self.plus)


def _branch(v: np.ndarray, start: int, step: int, closed: bool, x0, r_hi: float) -> np.ndarray:
    n = len(v)
    out = []
    k = start
    for _ in range(n - 1):
        k += step
        if closed:
            k %= n
        elif not 0 <= k < n:
            break
        if math.hypot(v[k, 0] - x0[0], v[k, 1] - x0[1]) > r_hi:
            break
        out.append(v[k])
    return np.array(out).reshape(-1, 2)


def tangent_slopes(fb: Polyline | Sequence[Polyline], x0, window: tuple[float, float],
                   near: float | None = None) -> TangentSlopes:
    """Branch slopes ``(x2 - x0_2) / (x1 - x0_1)`` of the free boundary at ``x0``.

    The curve nearest to ``x0`` is split at its closest vertex and each branch
    is followed outward until it leaves the window's outer radius; vertices in
    the window give the mean branch direction, whose tangent is the slope.
    """
    lines = [fb] if isinstance(fb, Polyline) else list(fb)
    if not lines:
        raise InsufficientArc("no free boundary")
    r_lo, r_hi = window
    best = None
    for line in lines:
        d = np.hypot(line.vertices[:, 0] - x0[0], line.vertices[:, 1] - x0[1])
        k = int(np.argmin(d))
        if best is None or d[k] < best[0]:
            best = (float(d[k]), line, k)
    dist, line, k = best
    if near is not None and dist > near:
        raise InsufficientArc(f"free boundary passes {dist:g} from the point", distance=dist)
    branches = []
    for step in (-1, 1):
        b = _branch(line.vertices, k, step, line.closed, x0, r_hi)
        rel = b - np.asarray(x0, float)
        rad = np.hypot(rel[:, 0], rel[:, 1])
        rel = rel[rad >= r_lo]
        if len(rel) < 4:
            raise InsufficientArc(f"branch has {len(rel)} vertices in the window", count=len(rel))
        unit = rel / np.hypot(rel[:, 0], rel[:, 1])[:, None]
        m = unit.mean(axis=0)
        branches.append((float(np.mean(rel[:, 0])), math.atan2(m[1], m[0]), len(rel)))
    branches.sort(key=lambda t: t[0])
    (_, am, nm), (_, ap, npl) = branches
    return TangentSlopes(math.tan(am), math.tan(ap), am, ap, (nm, npl))


def _lower_phase(field: ScalarField, x0, r: float) -> tuple[float, float]:
    """Negative-phase area and depth-weighted area in the lower half of ``B_r(x0)``."""
    field.require_ball(x0, r)
    nt, ns = quadrature_resolution(r, field.h)
    x, y, w = ball_nodes(x0, r, nt, ns, x0[1])
    depth = np.maximum(x0[1] - y, 0.0)
    neg = (field.phase_sign(x, y) < 0) & (y < x0[1])
    return float(np.sum(w * neg)), float(np.sum(w * depth * neg))


def chi_minus_fraction(field: ScalarField, x0, r: float) -> float:
    """Share of the lower half of ``B_r(x0)`` covered by the negative phase."""
    return _lower_phase(field, x0, r)[0] / (0.5 * math.pi * r * r)


def blowup_trace_decay(field: ScalarField, x0, radii: Sequence[float]) -> tuple[float, np.ndarray]:
    """Log-log slope of the unit-circle L2 norm of ``u^-(x0 + r x) / r^(3/2)`` against r.

    Zero for a nonvanishing degree-3/2 blowup; positive when the negative phase
    vanishes faster, i.e. when the blowup of ``u^-`` is identically zero.
    """
    norms = []
    for r in radii:
        t = circle_integral(lambda a, b: np.minimum(field.reconstruct(a, b).value, 0.0) ** 2, x0, r, field=field)
        norms.append(math.sqrt(max(t, 0.0) / r ** 4))
    norms = np.array(norms)
    if np.any(norms <= 0.0):
        return math.inf, norms
    return float(np.polyfit(np.log(radii), np.log(norms), 1)[0]), norms


def positive_decay_exponent(field: ScalarField, x0, radii: Sequence[float]) -> float | None:
    """Log-log slope of the largest ``|grad u^+|`` on circles against the radius."""
    logs_r, logs_g = [], []
    for r in radii:
        nt, _ = quadrature_resolution(r, field.h)
        t = (np.arange(nt) + 0.5) * (2 * math.pi / nt)
        L = field.reconstruct(x0[0] + r * np.cos(t), x0[1] + r * np.sin(t))
        pos = L.value > 0
        if not pos.any():
            continue
        g = float(np.max(np.hypot(L.gx, L.gy)[pos]))
        if g > 0:
            logs_r.append(math.log(r))
            logs_g.append(math.log(g))
    if len(logs_r) < 3:
        return None
    return float(np.polyfit(logs_r, logs_g, 1)[0])


# ------------------------------------------------------------- classification


@dataclass
class ClassificationResult:
    label: str
    density: float | None
    slopes: tuple[float, float] | None
    chi_minus_fraction: float | None
    evidence: list[dict] = dc_field(default_factory=list)
    reasons: list[str] = dc_field(default_factory=list)
    center: tuple[float, float] = (0.0, 0.0)
    branch_angles: tuple[float, float] | None = None
    positive_decay_exponent: float | None = None
    degenerate: bool = False
    blowup_decay: float | None = None
    density_exponent: float = 1.5

    def record(self) -> dict:
        return {
            "label": self.label, "center_x1": self.center[0], "center_x2": self.center[1],
            "density": self.density, "density_exponent": self.density_exponent,
            "chi_minus_fraction": self.chi_minus_fraction,
            "l_minus": None if self.slopes is None else self.slopes[0],
            "l_plus": None if self.slopes is None else self.slopes[1],
            "degenerate": self.degenerate,
            "blowup_decay": self.blowup_decay,
            "positive_decay_exponent": self.positive_decay_exponent,
            "reasons": "|".join(self.reasons) or "none",
        }

    def to_json_like(self) -> str:
        def fmt(v):
            if v is None:
                return "null"
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, str):
                return json.dumps(v)
            return format(float(v), ".17g")

        return "{" + ", ".join(f'"{k}": {fmt(v)}' for k, v in self.record().items()) + "}"

    def evidence_csv(self) -> str:
        cols = ["r", "density", "chi_minus", "homogeneity"]
        rows = [",".join(cols)]
        for e in self.evidence:
            rows.append(",".join("" if e.get(c) is None else format(float(e[c]), ".17g") for c in cols))
        return "\n".join(rows) + "\n"


def _angle_gap(a: float, b: float) -> float:
    return abs((a - b + math.pi) % (2 * math.pi) - math.pi)


def _matches(angles: tuple[float, float], target: tuple[float, float]) -> float:
    return max(_angle_gap(angles[0], target[0]), _angle_gap(angles[1], target[1]))


def _vertex_gradient(field: ScalarField, x0) -> float:
    """``|grad u^-|`` at the free boundary vertex nearest to ``x0``; infinite when none is within 2h."""
    try:
        lines = extract_level_set(field, sign=-1)
    except ValueError:
        return math.inf
    best = (math.inf, None)
    for line in lines:
        d = np.hypot(line.vertices[:, 0] - x0[0], line.vertices[:, 1] - x0[1])
        k = int(np.argmin(d))
        if d[k] < best[0]:
            best = (float(d[k]), line.vertices[k])
    if best[0] > 2 * field.h:
        return math.inf
    return float(np.hypot(*negative_gradient(field, best[1][0], best[1][1])))


def default_window(field: ScalarField) -> tuple[float, float]:
    return 2 * field.h, 10 * field.h


def _finish(radii, values):
    value, method, order, flags = extrapolate(radii, values)
    return value, np.asarray(radii), values, method, order, flags


def classify(field: ScalarField, candidate: StagnationCandidate | Sequence[float],
             radii: Sequence[float] | None = None, window: tuple[float, float] | None = None,
             rel: float = SIGNIFICANCE) -> ClassificationResult:
    """Label the singularity at a stagnation candidate.

    Nondegenerate points (the degree-3/2 blowup of ``u^-`` persists) are
    labelled by their density and branch slopes. Degenerate points, where that
    blowup vanishes, are measured with the lower exponent ``alpha`` taken from
    the positive phase and split by the limiting area fraction of the negative
    phase below the datum.
    """
    if isinstance(candidate, StagnationCandidate):
        x0 = candidate.location
    else:
        x0 = (float(candidate[0]), float(candidate[1]))
    f = significant(field, rel)
    reasons: list[str] = []
    tol_g, tol_h = detection_tolerances(field.h)
    g = candidate.gradient if isinstance(candidate, StagnationCandidate) else _vertex_gradient(f, x0)
    if g > tol_g or abs(x0[1] - field.x2_0) > tol_h:
        return ClassificationResult("NonStagnation", None, None, None,
                                    reasons=[f"gradient {g:.6g} tol {tol_g:.6g}, gap {x0[1] - field.x2_0:.6g}"],
                                    center=x0)
    try:
        radii = log_radii(f, x0) if radii is None else np.sort(np.asarray(radii, float))[::-1]
        decay, _ = blowup_trace_decay(f, x0, radii)
        positive = positive_decay_exponent(f, x0, radii)
        degenerate = decay >= DEGENERATE_DECAY
        kappa = 1.5
        if degenerate:
            kappa = 1.0 + positive if positive is not None and 0.0 < positive < 0.5 else DEFAULT_ALPHA
        if len(radii) < 4:
            raise OutOfDomain("fewer than four radii fit in the lattice")
        parts = [_lower_phase(f, x0, r) for r in radii]
        chis = [a / (0.5 * math.pi * r * r) for (a, _), r in zip(parts, radii)]
        values = np.array([m * r ** (-2 * kappa) for (_, m), r in zip(parts, radii)])
        dens = DensityEstimate(*_finish(radii, values))
    except EHDError as e:
        return ClassificationResult("Unclassified", None, None, None, reasons=[e.code + ": " + str(e)],
                                    center=x0)
    homog: list[float | None] = [None]
    for r_big, r_small in zip(radii[:-1], radii[1:]):
        homog.append(homogeneity_deviation(f, x0, 1.5, (r_big, r_small)).value)
    evidence = [{"r": float(r), "density": float(d), "chi_minus": c, "homogeneity": hm}
                for r, d, c, hm in zip(radii, dens.values, chis, homog)]
    density = dens.value
    chi = chis[-1]
    if "no-limit" in dens.flags:
        reasons.append("density-not-settled")
    slopes = angles = None
    try:
        ts = tangent_slopes(extract_level_set(f, sign=-1), x0, window or default_window(f), near=2 * f.h)
        slopes, angles = ts.as_tuple(), (ts.angle_minus, ts.angle_plus)
    except (EHDError, ValueError) as e:
        reasons.append(getattr(e, "code", "level-set") + ": " + str(e))
    out = ClassificationResult("Unclassified", density, slopes, chi, evidence, reasons, x0, angles, positive,
                               degenerate, decay, kappa)

    if _in("zero", density):
        out.label = "Cusp" if chi < 0.5 else "HorizontalPoint"
    elif degenerate:
        reasons.append("degenerate-density-outside-zero-band")
    elif _in("stokes", density):
        if slopes is None:
            reasons.append("stokes-density-without-slopes")
        elif max(abs(slopes[0] - SQRT3 / 3), abs(slopes[1] + SQRT3 / 3)) <= SLOPE_BAND:
            out.label = "StokesCorner"
        else:
            reasons.append("stokes-density-slopes-off")
    elif _in("asymmetric", density):
        if angles is None:
            reasons.append("asymmetric-density-without-slopes")
        else:
            left, right = _matches(angles, LEFT_DIRECTIONS), _matches(angles, RIGHT_DIRECTIONS)
            if min(left, right) > ANGLE_BAND:
                reasons.append("asymmetric-density-slopes-off")
            else:
                out.label = "AsymmetricLeft" if left < right else "AsymmetricRight"
    elif _in("sigma_u", density):
        reasons.append("density-in-excluded-band")
    else:
        reasons.append("density-outside-bands")
    return out
