"""Command-line entry point.

Every command writes its artifacts into ``--out`` (default: the current
directory). CSV files start with a comment line carrying the tool version and
the hash of the effective configuration; summaries are single-line
``key=value`` records. Exit status is 0 when the command's checks pass, 1 when
a check fails and 2 for invalid configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import __version__
from . import blowup as B
from . import corner_solver as CS
from . import frequency as F
from . import minimizer as MZ
from . import profiles as P
from . import weiss as W
from .errors import EHDError
from .field import ScalarField, read_field, write_field, write_polylines_csv

COMMANDS = ("verify-profiles", "weiss", "frequency", "minimize", "blowup", "classify", "corner-solve",
            "pipeline")

# option -> (type, default); None defaults mean "not set"
OPTIONS = {
    "input": (str, None),
    "boundary": (str, "A1"),
    "center": (str, "0,0"),
    "kappa": (float, 1.5),
    "alpha": (float, None),
    "radii": (str, "log"),
    "h": (str, "1/64"),
    "xlim": (str, "-1,1"),
    "ylim": (str, "-1,1"),
    "x2_0": (float, 0.0),
    "seed": (int, 0),
    "variant": (str, "all"),
    "max_sweeps": (int, 4000),
    "step_rule": (str, "fixed"),
    "omega": (float, 1.9),
}

EXPECTED_LABEL = {"A1": "StokesCorner", "A2": "StokesCorner", "A3": "StokesCorner",
                  "A4L": "AsymmetricLeft", "A4R": "AsymmetricRight"}


class UsageError(Exception):
    pass


# ------------------------------------------------------------------- config


def read_config(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            k, v = (t.strip() for t in line.split("=", 1))
            k = k.replace("-", "_")
            if k not in OPTIONS:
                raise UsageError(f"{path}:{n}: unknown key {k!r}")
            out[k] = v
    return out


def effective_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = {k: d for k, (_, d) in OPTIONS.items()}
    if args.config:
        cfg.update(read_config(args.config))
    for k in OPTIONS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    for k, (typ, _) in OPTIONS.items():
        if cfg[k] is not None:
            try:
                cfg[k] = typ(cfg[k])
            except ValueError as e:
                raise UsageError(f"bad value for {k}: {cfg[k]!r}") from e
    cfg["command"] = args.command
    return cfg


def config_hash(cfg: dict) -> str:
    text = "\n".join(f"{k}={cfg[k]!r}" for k in sorted(cfg))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def parse_h(text: str) -> float:
    try:
        h = float(Fraction(text))
    except (ValueError, ZeroDivisionError) as e:
        raise UsageError(f"bad resolution {text!r}") from e
    if not 0 < h < 1:
        raise UsageError("resolution h must lie in (0, 1)")
    return h


def parse_pair(text: str, name: str) -> tuple[float, float]:
    try:
        a, b = (float(Fraction(t)) for t in text.split(","))
    except ValueError as e:
        raise UsageError(f"{name} must be two comma-separated numbers") from e
    return a, b


def parse_radii(text: str, field: ScalarField, center) -> np.ndarray:
    if text == "log":
        return W.log_radii(field, center)
    try:
        radii = np.array(sorted((float(Fraction(t)) for t in text.split(",")), reverse=True))
    except ValueError as e:
        raise UsageError("radii must be 'log' or a comma-separated list") from e
    if np.any(radii <= 0):
        raise UsageError("radii must be positive")
    return radii


# ------------------------------------------------------------------ output


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v).replace(" ", "_")


class Artifacts:
    def __init__(self, out: str, cfg: dict):
        self.out = out
        self.stamp = {"version": __version__, "config_hash": config_hash(cfg)}
        os.makedirs(out, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def csv(self, name: str, body: str) -> None:
        head = f"# ehdfb version={self.stamp['version']} config_hash={self.stamp['config_hash']}\n"
        with open(self.path(name), "w") as fh:
            fh.write(head + body)

    def summary(self, name: str, record: dict) -> str:
        line = " ".join(f"{k}={_fmt(v)}" for k, v in {**self.stamp, **record}.items())
        with open(self.path(name), "w") as fh:
            fh.write(line + "\n")
        return line

    def field(self, name: str, field: ScalarField) -> None:
        write_field(self.path(name), field, self.stamp)

    def polylines(self, name: str, lines) -> None:
        write_polylines_csv(self.path(name), lines)
        with open(self.path(name)) as fh:
            body = fh.read()
        self.csv(name, body)


# ----------------------------------------------------------------- inputs


def load_field(cfg: dict) -> ScalarField:
    """A field file, or a catalog profile sampled on the configured lattice."""
    src = cfg["input"]
    if src is None:
        raise UsageError("--input is required (field file or catalog name)")
    if os.path.exists(src):
        return read_field(src)
    try:
        prof = P.get(src)
    except KeyError as e:
        raise UsageError(f"{src!r} is neither a file nor a catalog name") from e
    h = parse_h(cfg["h"])
    return ScalarField.from_function(lambda x, y: P.eval_xy(prof, x, y), parse_pair(cfg["xlim"], "xlim"),
                                     parse_pair(cfg["ylim"], "ylim"), h, cfg["x2_0"])


def _domain(cfg: dict) -> MZ.Domain:
    h = parse_h(cfg["h"])
    xlim, ylim = parse_pair(cfg["xlim"], "xlim"), parse_pair(cfg["ylim"], "ylim")
    cells = int(round(max(xlim[1] - xlim[0], ylim[1] - ylim[0]) / h))
    return MZ.Domain(xlim, ylim, cells)


def _params(cfg: dict) -> MZ.MinimizeParams:
    try:
        return MZ.MinimizeParams(max_sweeps=cfg["max_sweeps"], step_rule=cfg["step_rule"], omega=cfg["omega"],
                                 seed=cfg["seed"])
    except ValueError as e:
        raise UsageError(str(e)) from e


# --------------------------------------------------------------- commands


def cmd_verify_profiles(cfg: dict, art: Artifacts) -> int:
    rows = ["name,kappa,max_fb_residual,max_laplacian_residual,density,expected_density,density_error,issues"]
    ok = True
    expected = {"A1": math.sqrt(3) / 3, "A2": math.sqrt(3) / 3, "A3": math.sqrt(3) / 3, "A4L": 0.5, "A4R": 0.5}
    for name, prof in P.catalog().items():
        issues = P.validate(prof)
        fb = None
        if prof.kappa == 1.5:
            fb = max(abs(v.residual) for v in P.fb_residual(prof).values())
        lap = 0.0
        for piece in prof.pieces:
            for t in np.linspace(piece.theta_lo, piece.theta_hi, 9)[1:-1]:
                lap = max(lap, abs(P.laplacian_residual(prof, 0.7, float(t))))
        dens = exp = err = None
        if name in expected:
            dens, exp = P.density(prof).value, expected[name]
            err = abs(dens - exp)
        good = not issues and (fb is None or fb <= 1e-12) and lap <= 1e-9 and (err is None or err <= 1e-15)
        ok &= good
        rows.append(",".join([name, _fmt(prof.kappa), _fmt(fb), _fmt(lap), _fmt(dens), _fmt(exp), _fmt(err),
                              "|".join(issues) or "none"]))
    art.csv("profiles.csv", "\n".join(rows) + "\n")
    print(art.summary("summary.txt", {"command": "verify-profiles", "entries": len(rows) - 1, "passed": ok}))
    return 0 if ok else 1


def cmd_weiss(cfg: dict, art: Artifacts) -> int:
    f = load_field(cfg)
    x0 = parse_pair(cfg["center"], "center")
    radii = parse_radii(cfg["radii"], f, x0)
    rep = W.weiss_report(f, x0, cfg["kappa"], radii)
    art.csv("weiss.csv", rep.to_csv())
    rec = {"command": "weiss", **rep.summary()}
    if cfg["alpha"] is not None:
        rec["K_alpha"] = cfg["alpha"]
        rec["K_at_rmax"] = W.weiss_K(f, x0, float(radii[0]), cfg["alpha"])
    print(art.summary("summary.txt", rec))
    return 0


def cmd_frequency(cfg: dict, art: Artifacts) -> int:
    f = load_field(cfg)
    x0 = parse_pair(cfg["center"], "center")
    rep = F.freq_H(f, x0, radii=parse_radii(cfg["radii"], f, x0))
    art.csv("frequency.csv", rep.to_csv())
    print(art.summary("summary.txt", {"command": "frequency", **rep.summary()}))
    return 0 if not rep.degenerate else 1


def _minimize(cfg: dict, art: Artifacts) -> MZ.MinimizeResult:
    res = MZ.minimize(_domain(cfg), cfg["boundary"], cfg["x2_0"], _params(cfg))
    art.field("field.txt", res.field)
    art.csv("history.csv", res.history_csv())
    art.polylines("free_boundary.csv", res.fb)
    return res


def cmd_minimize(cfg: dict, art: Artifacts) -> int:
    res = _minimize(cfg, art)
    mono = res.monotone_within_stages()
    print(art.summary("summary.txt", {
        "command": "minimize", "boundary": cfg["boundary"], "converged": res.converged, "monotone": mono,
        "energy": res.energy, "stages": len(res.stage_converged), "checks": len(res.history),
    }))
    return 0 if res.converged and mono else 1


def _candidates_csv(search: B.StagnationSearch) -> str:
    rows = ["kind,x1,x2,gradient,height_gap,vertex_x1,vertex_x2"]
    for kind, cands in (("regular", search.candidates), ("anomalous", search.anomalous)):
        for c in cands:
            rows.append(",".join([kind, _fmt(c.location[0]), _fmt(c.location[1]), _fmt(c.gradient),
                                  _fmt(c.height_gap), _fmt(c.vertex[0]), _fmt(c.vertex[1])]))
    return "\n".join(rows) + "\n"


def _blowup(f: ScalarField, art: Artifacts) -> B.StagnationSearch:
    search = B.stagnation_search(f)
    art.csv("candidates.csv", _candidates_csv(search))
    fb = B.extract_level_set(B.significant(f), sign=-1) if (f.values < 0).any() else []
    art.polylines("free_boundary.csv", fb)
    rows = ["candidate,r_large,r_small,deviation,degenerate"]
    for k, c in enumerate(search.candidates):
        try:
            radii = W.log_radii(f, c.location)
        except EHDError:
            continue
        for a, b in zip(radii[:-1], radii[1:]):
            d = B.homogeneity_deviation(f, c.location, 1.5, (a, b))
            rows.append(",".join([str(k), _fmt(a), _fmt(b), _fmt(d.value), _fmt(d.degenerate)]))
    art.csv("homogeneity.csv", "\n".join(rows) + "\n")
    return search


def cmd_blowup(cfg: dict, art: Artifacts) -> int:
    f = load_field(cfg)
    s = _blowup(f, art)
    print(art.summary("summary.txt", {"command": "blowup", "candidates": len(s.candidates),
                                      "anomalous": len(s.anomalous), "tol_g": s.tol_g, "tol_h": s.tol_h}))
    return 0 if not s.anomalous else 1


def _classify(f: ScalarField, art: Artifacts, center: tuple[float, float] | None) -> list[B.ClassificationResult]:
    if center is not None:
        targets = [center]
    else:
        targets = B.find_stagnation(f)
    results = [B.classify(f, t) for t in targets]
    rows = ["index," + ",".join(B.ClassificationResult("", None, None, None).record().keys())]
    for k, r in enumerate(results):
        rows.append(str(k) + "," + ",".join(_fmt(v) for v in r.record().values()))
        art.csv(f"evidence_{k}.csv", r.evidence_csv())
    art.csv("classification.csv", "\n".join(rows) + "\n")
    with open(art.path("classification.json"), "w") as fh:
        fh.write("[" + ",\n ".join(r.to_json_like() for r in results) + "]\n")
    return results


def cmd_classify(cfg: dict, art: Artifacts) -> int:
    f = load_field(cfg)
    center = parse_pair(cfg["center"], "center") if cfg["center"] != "auto" else None
    res = _classify(f, art, center)
    labels = [r.label for r in res]
    print(art.summary("summary.txt", {"command": "classify", "points": len(res),
                                      "labels": "|".join(labels) or "none"}))
    return 0 if res and "Unclassified" not in labels else 1


def cmd_corner_solve(cfg: dict, art: Artifacts) -> int:
    variants = CS.VARIANTS if cfg["variant"] == "all" else (cfg["variant"],)
    if any(v not in CS.VARIANTS for v in variants):
        raise UsageError(f"variant must be one of {CS.VARIANTS} or 'all'")
    body, ok, count = "", True, 0
    for k, v in enumerate(variants):
        res = CS.solve(CS.CornerSystem(v))
        text = CS.roots_csv(res)
        body += text if k == 0 else text.split("\n", 1)[1]
        ok &= all(r.residual < 1e-12 for r in res.roots)
        count += len(res.roots)
    art.csv("roots.csv", body)
    print(art.summary("summary.txt", {"command": "corner-solve", "variant": cfg["variant"], "roots": count,
                                      "passed": ok}))
    return 0 if ok else 1


def cmd_pipeline(cfg: dict, art: Artifacts) -> int:
    res = _minimize(cfg, art)
    mono = res.monotone_within_stages()
    f = res.field
    s = _blowup(f, art)
    results = _classify(f, art, None)
    label = results[0].label if results else "NonStagnation"
    expected = EXPECTED_LABEL.get(cfg["boundary"])
    rec = {"command": "pipeline", "boundary": cfg["boundary"], "converged": res.converged, "monotone": mono,
           "energy": res.energy, "candidates": len(s.candidates), "label": label,
           "expected_label": expected}
    if results:
        rec.update(density=results[0].density, chi_minus_fraction=results[0].chi_minus_fraction)
    print(art.summary("summary.txt", rec))
    ok = res.converged and mono and (expected is None or label == expected)
    return 0 if ok else 1


HANDLERS = {
    "verify-profiles": cmd_verify_profiles, "weiss": cmd_weiss, "frequency": cmd_frequency,
    "minimize": cmd_minimize, "blowup": cmd_blowup, "classify": cmd_classify,
    "corner-solve": cmd_corner_solve, "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ehdfb", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"ehdfb {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="key=value file; flags override its entries")
    ap.add_argument("--out", default=".", help="artifact directory")
    ap.add_argument("--input", help="field file or catalog name")
    ap.add_argument("--boundary", help="catalog name used as boundary data (minimize, pipeline)")
    ap.add_argument("--center", help="x1,x2 or 'auto' (classify)")
    ap.add_argument("--kappa", type=float, help="homogeneity exponent for the Weiss energy")
    ap.add_argument("--alpha", type=float, help="exponent for the K term")
    ap.add_argument("--radii", help="'log' or a comma-separated list")
    ap.add_argument("--h", help="lattice spacing, e.g. 1/128")
    ap.add_argument("--xlim", help="x1 range, e.g. -1,1")
    ap.add_argument("--ylim", help="x2 range, e.g. -1,1")
    ap.add_argument("--x2-0", dest="x2_0", type=float, help="datum height")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--variant", help="corner system variant or 'all'")
    ap.add_argument("--max-sweeps", dest="max_sweeps", type=int)
    ap.add_argument("--step-rule", dest="step_rule")
    ap.add_argument("--omega", type=float)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = effective_config(args)
        art = Artifacts(args.out, cfg)
        return HANDLERS[args.command](cfg, art)
    except (UsageError, OSError, ValueError) as e:
        print(f"ehdfb: {e}", file=sys.stderr)
        return 2
    except EHDError as e:
        print(f"ehdfb: {e.code}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
