"""Local minimization of the discrete smoothed two-phase energy on a rectangle.

The discrete energy on nodes with spacing h is

    E_eps(u) = sum over lattice edges (u_a - u_b)^2
               + h^2 sum over nodes (w+ S_eps(u) + w- S_eps(-u))

with S_eps(t) = clip(t / eps, 0, 1). As a function of one node with its four
neighbours fixed this is the piecewise quadratic 4v^2 - 2 S v + const +
h^2 (w+ S_eps(v) + w- S_eps(-v)), which is minimized exactly on each of its
four pieces. Red-black sweeps of these exact nodal minimizations, optionally
over-relaxed when that still lowers the nodal energy, decrease E_eps
monotonically. The smoothing is annealed down a schedule of eps values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import spsolve

from . import profiles as P
from .errors import Diverged, InnerSolverFailed, NumericalFailure
from .field import Polyline, ScalarField, extract_level_set

STEP_RULES = ("fixed", "backtracking")


@dataclass(frozen=True)
class Domain:
    xlim: tuple[float, float] = (-1.0, 1.0)
    ylim: tuple[float, float] = (-1.0, 1.0)
    cells: int = 128  # cells along the longer side

    @property
    def h(self) -> float:
        return max(self.xlim[1] - self.xlim[0], self.ylim[1] - self.ylim[0]) / self.cells

    def shape(self) -> tuple[int, int]:
        h = self.h
        return (int(round((self.xlim[1] - self.xlim[0]) / h)) + 1, int(round((self.ylim[1] - self.ylim[0]) / h)) + 1)

    def mesh(self):
        nx, ny = self.shape()
        xs = self.xlim[0] + self.h * np.arange(nx)
        ys = self.ylim[0] + self.h * np.arange(ny)
        return np.meshgrid(xs, ys, indexing="ij")


@dataclass(frozen=True)
class MinimizeParams:
    eps_schedule: tuple[float, ...] | None = None  # None: default schedule ending at h^2
    max_sweeps: int = 4000  # per stage
    tol: float = 1e-11  # relative energy change between checks that ends a stage
    step_rule: str = "fixed"
    omega: float = 1.9
    seed: int = 0
    noise: float = 1.0  # initial noise amplitude in units of h
    check_every: int = 25

    def __post_init__(self):
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"step rule must be one of {STEP_RULES}")
        if not (1.0 <= self.omega < 2.0):
            raise ValueError("omega must lie in [1, 2)")
        if self.tol <= 0 or self.max_sweeps < 1 or self.check_every < 1:
            raise ValueError("tolerances and sweep counts must be positive")
        if self.eps_schedule is not None:
            e = np.asarray(self.eps_schedule, dtype=float)
            if len(e) == 0 or np.any(e <= 0) or np.any(np.diff(e) >= 0):
                raise ValueError("eps schedule must be positive and strictly decreasing")

    def schedule(self, h: float) -> tuple[float, ...]:
        if self.eps_schedule is None:
            base = [0.1, 0.03, 0.01, 3e-3, 1e-3]
            return tuple([e for e in base if e > h * h] + [h * h])
        if self.eps_schedule[-1] < h * h * (1 - 1e-12):
            raise ValueError("the last eps must be at least h^2")
        return tuple(float(e) for e in self.eps_schedule)


@dataclass(frozen=True)
class HistoryEntry:
    stage: int
    eps: float
    sweep: int
    energy: float


@dataclass
class MinimizeResult:
    field: ScalarField
    history: list[HistoryEntry]
    converged: bool
    fb: list[Polyline]
    energy: float  # discrete energy with sharp phase indicators
    stage_converged: list[bool] = dc_field(default_factory=list)

    @property
    def energies(self) -> np.ndarray:
        return np.array([e.energy for e in self.history])

    def monotone_within_stages(self, slack: float = 1e-10) -> bool:
        for a, b in zip(self.history[:-1], self.history[1:]):
            if a.stage == b.stage and b.energy > a.energy + slack * max(1.0, abs(a.energy)):
                return False
        return True

    def history_csv(self) -> str:
        rows = ["stage,eps,sweep,energy"]
        rows += [f"{e.stage},{e.eps:.17g},{e.sweep},{e.energy:.17g}" for e in self.history]
        return "\n".join(rows) + "\n"


# ------------------------------------------------------------------ energies


def node_weights(Y: np.ndarray, x2_0: float):
    return np.maximum(Y - x2_0, 0.0), np.maximum(x2_0 - Y, 0.0)


def _step(t, eps):
    if eps is None:
        return (t > 0).astype(float)
    return np.clip(t / eps, 0.0, 1.0)


def discrete_energy(u: np.ndarray, h: float, Y: np.ndarray, x2_0: float, eps: float | None = None) -> float:
    """Edge Dirichlet sum plus h^2-weighted node phases; ``eps=None`` uses sharp indicators."""
    wp, wm = node_weights(Y, x2_0)
    d = float(np.sum(np.diff(u, axis=0) ** 2) + np.sum(np.diff(u, axis=1) ** 2))
    return d + h * h * float(np.sum(wp * _step(u, eps) + wm * _step(-u, eps)))


def _nodal_f(v, S, wp, wm, eps, c):
    return 4 * v * v - 2 * S * v + c * (wm * np.clip(-v / eps, 0, 1) + wp * np.clip(v / eps, 0, 1))


def _nodal_min(S, wp, wm, eps, c):
    cands = np.stack([
        np.minimum(S / 4, -eps),
        np.clip((2 * S + c * wm / eps) / 8, -eps, 0.0),
        np.clip((2 * S - c * wp / eps) / 8, 0.0, eps),
        np.maximum(S / 4, eps),
    ])
    F = _nodal_f(cands, S, wp, wm, eps, c)
    k = np.argmin(F, axis=0)
    return np.take_along_axis(cands, k[None], 0)[0]


# ----------------------------------------------------------- harmonic solves


def _dirichlet_solve(u: np.ndarray, free: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Discrete harmonic values on ``free`` nodes with all other nodes fixed."""
    nfree = int(free.sum())
    if nfree == 0:
        return u.copy()
    idx = -np.ones(u.shape, dtype=np.int64)
    idx[free] = np.arange(nfree)
    I, J = np.nonzero(free)
    k = idx[I, J]
    rows, cols, vals = [k], [k], [np.full(nfree, 4.0)]
    b = np.zeros(nfree)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        I2, J2 = I + di, J + dj
        f = free[I2, J2]
        rows.append(k[f])
        cols.append(idx[I2[f], J2[f]])
        vals.append(-np.ones(int(f.sum())))
        np.add.at(b, k[~f], u[I2[~f], J2[~f]])
    A = csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nfree, nfree))
    x = spsolve(A.tocsc(), b)
    res = float(np.max(np.abs(A @ x - b))) if nfree else 0.0
    if not np.all(np.isfinite(x)) or res > tol * max(1.0, float(np.abs(b).max())):
        raise InnerSolverFailed(f"Dirichlet solve residual {res:g}", residual=res)
    out = u.copy()
    out[free] = x
    return out


def harmonic_replace(field: ScalarField, mask: np.ndarray, tol: float = 1e-10) -> ScalarField:
    """Replace the masked values by the discrete harmonic extension of their surroundings."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != field.shape:
        raise ValueError("mask shape must match the field")
    if mask[0].any() or mask[-1].any() or mask[:, 0].any() or mask[:, -1].any():
        raise ValueError("mask must be strictly interior")
    if not mask.any():
        return field
    return field.with_values(_dirichlet_solve(np.array(field.values), mask, tol))


# ----------------------------------------------------------------- minimize


def boundary_function(data) -> Callable:
    """Boundary data as a callable of (X, Y): catalog name, callable or sampled field."""
    if isinstance(data, str):
        prof = P.get(data)
        return lambda X, Y: P.eval_xy(prof, X, Y)
    if isinstance(data, ScalarField):
        return lambda X, Y: data.reconstruct(X, Y).value
    if callable(data):
        return data
    raise TypeError("boundary data must be a catalog name, a callable or a ScalarField")


def minimize(domain: Domain, boundary, x2_0: float = 0.0, params: MinimizeParams | None = None) -> MinimizeResult:
    params = params or MinimizeParams()
    nx, ny = domain.shape()
    if min(nx, ny) < 65:
        raise ValueError("domain resolution must be at least 64 x 64 cells")
    h = domain.h
    X, Y = domain.mesh()
    g = np.asarray(boundary_function(boundary)(X, Y), dtype=float) * np.ones_like(X)
    if not np.all(np.isfinite(g)):
        raise NumericalFailure("boundary data not finite")
    fixed = np.zeros(g.shape, dtype=bool)
    fixed[0] = fixed[-1] = True
    fixed[:, 0] = fixed[:, -1] = True
    u = _dirichlet_solve(np.where(fixed, g, 0.0), ~fixed)
    rng = np.random.default_rng(params.seed)
    u[~fixed] += params.noise * h * rng.uniform(-1.0, 1.0, int((~fixed).sum()))

    wp, wm = node_weights(Y, x2_0)
    c = h * h
    color = (np.add.outer(np.arange(nx), np.arange(ny)) % 2).astype(bool)
    masks = [color & ~fixed, ~color & ~fixed]
    if params.step_rule == "fixed":
        omegas = [params.omega]
    else:
        omegas = [1.0 + (params.omega - 1.0) / 2 ** k for k in range(4)]

    history: list[HistoryEntry] = []
    stage_ok: list[bool] = []
    for stage, eps in enumerate(params.schedule(h)):
        E_prev = discrete_energy(u, h, Y, x2_0, eps)
        history.append(HistoryEntry(stage, eps, 0, E_prev))
        done = False
        for sweep in range(1, params.max_sweeps + 1):
            for m in masks:
                S = np.zeros_like(u)
                S[1:-1, 1:-1] = u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2]
                vs = _nodal_min(S, wp, wm, eps, c)
                f_old = _nodal_f(u, S, wp, wm, eps, c)
                new = vs
                # take the most aggressive relaxation that does not raise the nodal energy
                for om in reversed(omegas):
                    vo = u + om * (vs - u)
                    new = np.where(_nodal_f(vo, S, wp, wm, eps, c) <= f_old, vo, new)
                u = np.where(m, new, u)
            if sweep % params.check_every == 0 or sweep == params.max_sweeps:
                E = discrete_energy(u, h, Y, x2_0, eps)
                if not math.isfinite(E):
                    raise NumericalFailure("energy is not finite", history=history)
                history.append(HistoryEntry(stage, eps, sweep, E))
                if E > E_prev + 1e-10 * max(1.0, abs(E_prev)):
                    raise Diverged(f"energy rose from {E_prev:.17g} to {E:.17g}", history=history)
                if abs(E_prev - E) <= params.tol * max(1.0, abs(E)):
                    done = True
                    break
                E_prev = E
        stage_ok.append(done)

    fld = ScalarField(u, h, (domain.xlim[0], domain.ylim[0]), x2_0)
    fb = extract_level_set(fld, 0.0, -1) if (u < 0).any() else []
    return MinimizeResult(fld, history, bool(stage_ok[-1]), fb, discrete_energy(u, h, Y, x2_0), stage_ok)


# ------------------------------------------------------- perturbation probe


@dataclass
class PerturbationReport:
    energy: float
    deltas: np.ndarray
    min_delta: float
    argmin: int

    @property
    def descent_found(self) -> bool:
        return self.min_delta < 0


def local_perturbation_test(field: ScalarField, x2_0: float | None = None, trials: int = 20,
                            amplitude: float = 1e-2, seed: int = 0) -> PerturbationReport:
    """Energy changes under random bump perturbations that keep the trace fixed.

    Each trial adds ``a * s * (1 - |x - c|^2 / R^2)^2_+`` with a random interior
    center, a radius of 3 to 16 cells, a random sign s and ``a = amplitude``.
    Energies are the discrete energy with sharp indicators.
    """
    x2_0 = field.x2_0 if x2_0 is None else x2_0
    u = np.array(field.values)
    h = field.h
    X, Y = field.mesh()
    E0 = discrete_energy(u, h, Y, x2_0)
    rng = np.random.default_rng(seed)
    nx, ny = u.shape
    deltas = []
    for _ in range(trials):
        R = h * rng.uniform(3, 16)
        cells = int(math.ceil(R / h)) + 1
        cx = field.origin[0] + h * rng.integers(cells, nx - 1 - cells)
        cy = field.origin[1] + h * rng.integers(cells, ny - 1 - cells)
        q = ((X - cx) ** 2 + (Y - cy) ** 2) / R ** 2
        v = amplitude * rng.choice([-1.0, 1.0]) * np.where(q < 1, (1 - q) ** 2, 0.0)
        v[0] = v[-1] = 0.0
        v[:, 0] = v[:, -1] = 0.0
        deltas.append(discrete_energy(u + v, h, Y, x2_0) - E0)
    d = np.array(deltas)
    k = int(np.argmin(d))
    return PerturbationReport(E0, d, float(d[k]), k)


def profile_trace(name: str) -> Callable:
    prof = P.get(name)
    return lambda X, Y: P.eval_xy(prof, X, Y)


__all__: Sequence[str] = (
    "Domain", "MinimizeParams", "MinimizeResult", "HistoryEntry", "minimize", "harmonic_replace",
    "local_perturbation_test", "discrete_energy", "PerturbationReport",
)
