"""End-to-end dipole perturbation experiment on a compact surface.

Stages: build the surface and its Green evaluator; cut out the disc S (and
the smaller disc S′ that receives charges); build three bipolar potentials
with poles in S; search a small harmonic correction on Z \\ S that makes the
canonical map an almost embedding; replace every correction by point charges
in S′; reassemble and re-check the predicates on Z \\ S.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .calculus import del_, dirichlet_solve
from .canonical import (
    FAIL,
    PredicateReport,
    PredicateTolerances,
    canonical_map,
    embedding_predicates,
    perturbation_search,
)
from .errors import ConfigurationError, DiscreteRiemannError, InvalidDipoleError, StageError
from .green import GreenEvaluator
from .harmonic import ChargeSet, DipoleSpec, bipolar_potential
from .runge import runge_approximate
from .surface import DiscreteSurface, Subdomain, build_surface, remove_subdomain

__all__ = ["ExperimentConfig", "ExperimentResult", "run_experiment", "write_artifacts"]

log = logging.getLogger("discrete_riemann.pipeline")


def _cx(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1] if len(v) > 1 else 0.0)
    return complex(v)


@dataclass
class ExperimentConfig:
    """JSON-serialisable experiment description.

    Points (``center``, dipole poles) are either vertex ids or planar points
    ``[x, y]`` snapped to the nearest vertex.
    """

    surface: dict = field(default_factory=lambda: {"kind": "flat_torus", "n": 32, "tau": [0.0, 1.0]})
    center: object = (0.5, 0.5)
    radius: float = 0.2
    inner_radius: float = 0.15
    dipoles: list = field(default_factory=list)
    epsilon: float = 0.5
    dictionary: dict = field(default_factory=lambda: {"green_poles": 4, "fourier": 0})
    budget: dict = field(default_factory=lambda: {"delta": 0.05, "draws": 20})
    runge_epsilon: float = 0.14
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if not 0 < self.inner_radius <= self.radius:
            raise ConfigurationError("need 0 < inner_radius <= radius")
        if len(self.dipoles) != 3:
            raise ConfigurationError("need exactly three dipoles")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["center"] = list(self.center) if isinstance(self.center, (list, tuple)) else self.center
        return d

    @property
    def predicate_tolerances(self) -> PredicateTolerances:
        return PredicateTolerances(**self.tolerances)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    dipole_vertices: list
    potentials: list
    perturbation: dict
    charges: list
    assembled: list
    report: PredicateReport
    kappa_l1: float
    charges_in_s: bool
    verdict: bool
    reasons: list
    runge: list = field(default_factory=list)
    samples_csv: str = ""

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "dipole_vertices": self.dipole_vertices,
            "perturbation": self.perturbation,
            "charges": [c.to_list() for c in self.charges],
            "runge": self.runge,
            "predicates": self.report.to_dict(),
            "kappa_l1": self.kappa_l1,
            "charges_in_s": self.charges_in_s,
            "verdict": self.verdict,
            "reasons": self.reasons,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


# ----------------------------------------------------------------- helpers
def _nearest_vertex(s: DiscreteSurface, p) -> int:
    if isinstance(p, (int, np.integer)):
        v = int(p)
        if not 0 <= v < s.n_vertices:
            raise ConfigurationError(f"vertex {v} out of range")
        return v
    if s.planar_coords is None:
        raise ConfigurationError("planar points need a surface with planar coordinates")
    d = s.planar_coords - _cx(p)
    if s.periods is not None:
        d = s._wrap(d)
    return int(np.argmin(np.abs(d)))


def _angle(s: DiscreteSurface, verts: np.ndarray, center: int) -> np.ndarray:
    d = s.planar_coords[verts] - s.planar_coords[center]
    if s.periods is not None:
        d = s._wrap(d)
    return np.angle(d)


def _dictionary(ev: GreenEvaluator, inner: Subdomain, inner_x: DiscreteSurface, spec: dict) -> list[np.ndarray]:
    """Harmonic functions off the closure of S′, as full-length vectors (zero inside S′)."""
    s = ev.surface
    out = []
    n_poles = int(spec.get("green_poles", 0))
    c = inner.center
    if n_poles:
        d = s.distances_from(c)
        ring = inner.interior[np.argsort(np.abs(d[inner.interior] - 0.5 * inner.radius), kind="stable")]
        ang = _angle(s, ring, c)
        picks = []
        for k in range(n_poles):
            target = 2 * np.pi * k / n_poles - np.pi
            gap = np.abs(np.angle(np.exp(1j * (ang - target))))
            order = np.lexsort((np.arange(len(ring)), np.round(gap, 1)))
            v = next(int(ring[i]) for i in order if int(ring[i]) not in picks and int(ring[i]) != c)
            picks.append(v)
        # unit-residue dipoles: coefficient ε puts charges ±2πε at (p_k, center)
        for v in picks:
            out.append(2 * np.pi * np.asarray(ev.green(c) - ev.green(v)))
    order = int(spec.get("fourier", 0))
    if order:
        gam = inner.outer_vertices  # vertices of the bordered complement of S′
        bverts = inner_x.boundary_vertices
        theta = _angle(s, gam[bverts], c)
        for k in range(1, order + 1):
            for f in (np.cos, np.sin):
                b = np.zeros(inner_x.n_vertices)
                b[bverts] = f(k * theta)
                u = dirichlet_solve(inner_x, b)
                full = np.zeros(s.n_vertices)
                full[gam] = u
                out.append(full)
    return out


def _forms(X: DiscreteSurface, fields):
    return [del_(X, u) for u in fields]


def _stage(name: str):
    def wrap(fn):
        def inner(*a, **k):
            log.info("[%s] start", name)
            try:
                return fn(*a, **k)
            except StageError:
                raise
            except DiscreteRiemannError as exc:
                raise StageError(name, exc) from exc
        return inner
    return wrap


# ------------------------------------------------------------------ stages
@_stage("surface")
def _build(cfg: ExperimentConfig):
    Z = build_surface(cfg.surface["kind"], {k: v for k, v in cfg.surface.items() if k != "kind"})
    ev = GreenEvaluator(Z)
    center = _nearest_vertex(Z, cfg.center)
    X, S = remove_subdomain(Z, center, cfg.radius)
    Xp, Sp = remove_subdomain(Z, center, cfg.inner_radius)
    return Z, ev, X, S, Xp, Sp


@_stage("dipoles")
def _dipoles(cfg: ExperimentConfig, ev: GreenEvaluator, S: Subdomain):
    Z = ev.surface
    specs, verts = [], []
    for d in cfg.dipoles:
        am, ap = _nearest_vertex(Z, d["a_minus"]), _nearest_vertex(Z, d["a_plus"])
        specs.append(DipoleSpec(am, ap, _cx(d.get("c", 1.0))))
        verts += [am, ap]
    if len(set(verts)) != 6:
        raise InvalidDipoleError("the six dipole vertices must be distinct")
    if not np.all(S.interior_mask[verts]):
        raise InvalidDipoleError("dipole vertices must lie inside S")
    return specs, verts, [bipolar_potential(ev, d).values for d in specs]


@_stage("perturbation")
def _perturb(cfg, ev, X, S, Sp, Xp, U):
    D_full = _dictionary(ev, Sp, Xp, cfg.dictionary)
    D = [d[S.outer_vertices] for d in D_full]
    UX = [np.asarray(u)[S.outer_vertices] for u in U]
    res = perturbation_search(X, UX, D, (float(cfg.budget.get("delta", 0.05)), int(cfg.budget.get("draws", 40))),
                              seed=cfg.seed, tol=cfg.predicate_tolerances)
    return D_full, res


@_stage("runge")
def _runge(cfg, ev, S, Sp, D_full, coeffs):
    out, reports = [], []
    Z = ev.surface
    for ell in range(3):
        if coeffs is None or not np.any(coeffs[ell]):
            out.append((np.zeros(Z.n_vertices), ChargeSet(epsilon=cfg.runge_epsilon, source=f"dipole{ell}")))
            reports.append(None)
            continue
        W = sum(float(coeffs[ell, k]) * D_full[k] for k in range(len(D_full)))
        phi_eps, q, rep = runge_approximate(ev, W, Sp, cfg.runge_epsilon, outer=S)
        out.append((phi_eps, q))
        reports.append(rep.to_dict())
    return out, reports


@_stage("predicates")
def _assemble(cfg, X, S, U, approx):
    assembled = [np.asarray(U[ell]) + approx[ell][0] for ell in range(3)]
    forms = _forms(X, [a[S.outer_vertices] for a in assembled])
    m = canonical_map(*forms, tol=cfg.predicate_tolerances)
    return assembled, m, embedding_predicates(m, cfg.predicate_tolerances)


def _zero_report(reason: str) -> PredicateReport:
    return PredicateReport(False, 0.0, False, 0.0, False, 0.0, False, 0.0, [], FAIL, [reason])


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run all stages; a failed verdict is a result, stage errors raise ``StageError``."""
    Z, ev, X, S, Xp, Sp = _build(cfg)
    specs, verts, U = _dipoles(cfg, ev, S)
    UX = [np.asarray(u)[S.outer_vertices] for u in U]

    theta0 = _forms(X, [UX[0]])[0]
    bfaces = X.edge_faces[X.edge_index(X.boundary_loops[0], np.roll(X.boundary_loops[0], -1))].max(axis=1)
    if not np.any(theta0.coeffs[bfaces]):
        rep = _zero_report("boundary_nonvanishing: θ₀ vanishes identically on the boundary")
        empty = [ChargeSet(epsilon=cfg.runge_epsilon, source=f"dipole{ell}") for ell in range(3)]
        log.info("[predicates] degenerate dipole data")
        return ExperimentResult(cfg, verts, U, {"draws": 0, "passing": False, "coefficients": None,
                                                "max_abs": 0.0}, empty, U, rep, 0.0, True, False,
                                list(rep.reasons))

    D_full, search = _perturb(cfg, ev, X, S, Sp, Xp, U)
    record = search.record()
    log.info("[perturbation] draws=%d passing=%s", record["draws"], record["passing"])
    coeffs = search.coefficients.real if search.coefficients is not None else None
    approx, runge_reports = _runge(cfg, ev, S, Sp, D_full, coeffs)
    charges = [a[1] for a in approx]
    assembled, m, report = _assemble(cfg, X, S, U, approx)

    kappa = float(sum(c.l1 for c in charges) / (2 * np.pi))
    in_s = all(bool(np.all(S.interior_mask[list(c.vertices)])) for c in charges if len(c))
    reasons = list(report.reasons)
    if not search.passing:
        reasons.append("perturbation: budget exhausted without a passing triple")
    if kappa > cfg.epsilon:
        reasons.append(f"|κ|₁ = {kappa:.6g} exceeds ε = {cfg.epsilon:.6g}")
    if not in_s:
        reasons.append("charges outside S")
    verdict = (search.passing and report.verdict != FAIL and report.boundary_nonvanishing
               and kappa <= cfg.epsilon and in_s)
    log.info("[predicates] verdict=%s |κ|₁=%.6g", verdict, kappa)
    return ExperimentResult(cfg, verts, U, record, charges, assembled, report, kappa, in_s,
                            bool(verdict), reasons, runge_reports, m.samples_csv())


def write_artifacts(result: ExperimentResult, out: str | Path) -> list[Path]:
    """Write ``result.json``, ``charges_ℓ.csv``, ``predicates.json`` and ``samples.csv``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "result.json", out / "predicates.json"]
    paths[0].write_text(result.to_json() + "\n")
    paths[1].write_text(json.dumps(result.report.to_dict(), sort_keys=True, indent=1) + "\n")
    for ell, c in enumerate(result.charges):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["vertex", "q_re", "q_im"])
        for v, q in c:
            w.writerow([v, repr(q.real), repr(q.imag)])
        p = out / f"charges_{ell}.csv"
        p.write_text(buf.getvalue())
        paths.append(p)
    p = out / "samples.csv"
    p.write_text(result.samples_csv)
    paths.append(p)
    return paths
