"""Command-line front end: ``discrete-riemann <subcommand> --config file.json``.

Exit status: 0 on success, 1 when a verdict fails, 2 on errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .calculus import FaceOneForm
from .canonical import PredicateTolerances, canonical_map, degree, embedding_predicates
from .errors import DiscreteRiemannError
from .green import GreenEvaluator, torus_green_oracle
from .harmonic import DipoleSpec, bipolar_potential
from .indicatrix import (
    BoundaryFunctions,
    GridSpec,
    evaluate,
    evaluate_grid,
    genericity_verdict,
    shockwave_residual,
)
from .pipeline import ExperimentConfig, _nearest_vertex, run_experiment, write_artifacts
from .runge import convergence_study
from .surface import build_surface, remove_subdomain, save_surface, validate

log = logging.getLogger("discrete_riemann")

_SAFE = {
    "np": np, "sqrt": np.sqrt, "exp": np.exp, "log": np.log, "sin": np.sin, "cos": np.cos,
    "pi": np.pi, "I": 1j, "abs": np.abs, "conj": np.conj,
}


def _expr(text: str, **names):
    """Evaluate a numpy expression over the given arrays (no builtins)."""
    ns = dict(_SAFE)
    ns.update(names)
    val = eval(str(text), {"__builtins__": {}}, ns)  # noqa: S307 - config expressions
    shape = np.broadcast(*names.values()).shape if names else ()
    return np.broadcast_to(np.asarray(val, dtype=complex), shape).copy()


def _surface(cfg: dict):
    spec = dict(cfg.get("surface", {"kind": "flat_torus"}))
    kind = spec.pop("kind")
    return build_surface(kind, spec)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=1) + "\n")


# ------------------------------------------------------------- subcommands
def cmd_surface(cfg: dict, args) -> int:
    s = _surface(cfg)
    rep = validate(s)
    save_surface(s, args.out / "surface.json")
    _write_json(args.out / "validation.json", {
        "name": s.name, "n_vertices": s.n_vertices, "n_faces": s.n_faces,
        "euler_characteristic": s.euler_characteristic, "ok": rep.ok, "violations": rep.violations,
    })
    return 0 if rep.ok else 1


def cmd_green(cfg: dict, args) -> int:
    s = _surface(cfg)
    ev = GreenEvaluator(s)
    rng = np.random.default_rng(args.seed)
    n_pairs = int(cfg.get("pairs", 5))
    tau = complex(s.periods[1]) if s.periods is not None else None
    rows = []
    for _ in range(n_pairs):
        z, w = (int(x) for x in rng.choice(s.n_vertices, size=2, replace=False))
        g, gt = ev.green(z)[w], ev.green(w)[z]
        row = {"z": z, "w": w, "G": float(g), "asymmetry": float(abs(g - gt))}
        if tau is not None:
            row["oracle"] = torus_green_oracle(tau, s.planar_coords[z], s.planar_coords[w])
            row["error"] = abs(row["G"] - row["oracle"])
        rows.append(row)
    mean = max(abs(float(np.dot(ev.green(r["z"]), s.area_weights))) for r in rows)
    ok = all(r["asymmetry"] <= args.tol for r in rows) and mean <= args.tol
    _write_json(args.out / "green.json", {"rows": rows, "max_mean": mean, "ok": ok})
    return 0 if ok else 1


def cmd_runge(cfg: dict, args) -> int:
    Z = _surface(cfg)
    ev = GreenEvaluator(Z)
    center = _nearest_vertex(Z, cfg.get("center", [0.5, 0.5]))
    _, outer = remove_subdomain(Z, center, float(cfg.get("outer_radius", 0.4)))
    _, inner = remove_subdomain(Z, center, float(cfg.get("inner_radius", 0.2)))
    d = cfg["dipole"]
    dip = DipoleSpec(_nearest_vertex(Z, d["a_minus"]), _nearest_vertex(Z, d["a_plus"]), complex(d.get("c", 1.0)))
    phi = bipolar_potential(ev, dip).values
    table = convergence_study(ev, phi, inner, cfg.get("epsilons", [0.2, 0.1, 0.05]), outer=outer)
    _write_json(args.out / "runge.json", {"rows": table.rows, "c0_decreasing": table.c0_decreasing})
    lines = ["epsilon,sup_c0,sup_c1,l1_residue,sum_q,n_charges"]
    for r in table.rows:
        lines.append(f"{r['epsilon']!r},{r['sup_c0']!r},{r['sup_c1']!r},{r['l1_residue']!r},"
                     f"{r['sum_q']!r},{r['n_charges']}")
    (args.out / "runge.csv").write_text("\n".join(lines) + "\n")
    return 0 if table.c0_decreasing else 1


def cmd_canonical(cfg: dict, args) -> int:
    s = _surface(cfg)
    forms = [FaceOneForm.from_planar(s, lambda z, e=e: _expr(e, z=z)) for e in cfg["forms"]]
    tol = PredicateTolerances(**cfg.get("tolerances", {}))
    m = canonical_map(*forms, tol=tol)
    rep = embedding_predicates(m, tol)
    out = rep.to_dict()
    try:
        out["degree"] = degree(m, report=rep, seed=args.seed).to_dict()
    except DiscreteRiemannError as exc:
        out["degree"] = {"error": str(exc)}
    _write_json(args.out / "predicates.json", out)
    (args.out / "samples.csv").write_text(m.samples_csv())
    return 0 if rep.verdict != "fail" else 1


def cmd_indicatrix(cfg: dict, args) -> int:
    n = int(cfg.get("samples", 512))
    z = np.exp(2j * np.pi * np.arange(n) / n)
    bf = BoundaryFunctions.from_values(_expr(cfg.get("f1", "z"), z=z), _expr(cfg.get("f2", "z**2"), z=z))
    spec = GridSpec.from_dict(cfg["grid"])
    table = evaluate_grid(bf, spec)
    X0, X1 = spec.mesh()
    branches = [_expr(b, xi0=X0, xi1=X1) for b in cfg.get("branches", [])]
    verdict = genericity_verdict(table, branches, tol1=float(cfg.get("tol1", args.tol_default(1e-4))))
    (args.out / "indicatrix.csv").write_text(table.to_csv())
    data = json.loads(verdict.to_json())
    points = []
    for p0, p1 in cfg.get("points", []):
        xi = (complex(*p0), complex(*p1))
        g = evaluate(bf, xi).value
        points.append({"xi0": list(p0), "xi1": list(p1), "G": [g.real, g.imag]})
    data["points"] = points
    data["shockwave"] = [shockwave_residual(h, spec, table.mask) for h in branches]
    _write_json(args.out / "verdict.json", data)
    return 0 if verdict.verdict else 1


def cmd_dipole(cfg: dict, args) -> int:
    cfg = dict(cfg)
    cfg["seed"] = args.seed if args.seed_given else cfg.get("seed", 0)
    cfg["out"] = str(args.out)
    exp = ExperimentConfig.from_dict(cfg)
    res = run_experiment(exp)
    write_artifacts(res, args.out)
    return 0 if res.verdict else 1


COMMANDS = {
    "surface": cmd_surface,
    "green": cmd_green,
    "runge": cmd_runge,
    "canonical": cmd_canonical,
    "indicatrix": cmd_indicatrix,
    "dipole": cmd_dipole,
}


def _version() -> str:
    return (f"discrete-riemann {__version__} (python {platform.python_version()}, "
            f"numpy {np.__version__}, scipy {scipy.__version__})")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="discrete-riemann", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=_version())
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON configuration file")
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--tol", type=float, default=None, help="check tolerance override")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    args.seed_given = args.seed is not None
    args.seed = 0 if args.seed is None else args.seed
    tol = args.tol
    args.tol_default = lambda d: d if tol is None else tol
    args.tol = 1e-9 if tol is None else tol
    args.out = Path(args.out)
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"discrete-riemann: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except (DiscreteRiemannError, KeyError, TypeError, ValueError) as exc:
        print(f"discrete-riemann {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
