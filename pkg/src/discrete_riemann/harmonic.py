"""Harmonic distributions: fields harmonic off finitely many logarithmic poles."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .calculus import _boundary_array, dirichlet_solve, residue, stiffness_matrix
from .errors import (
    CompatibilityError,
    DuplicateSingularityError,
    InvalidDipoleError,
    InvalidLocationError,
    InvalidParameterError,
    WrongSurfaceClassError,
)
from .green import GreenEvaluator
from .surface import DiscreteSurface

__all__ = [
    "ChargeSet",
    "HarmonicDistribution",
    "DipoleSpec",
    "BoundaryCurrent",
    "ResidueReport",
    "extend_with_singularities",
    "bipolar_potential",
    "dtn",
    "residues_report",
]


@dataclass(frozen=True)
class ChargeSet:
    """Point charges ``(vertex, q)``; Runge output is neutral, Dirichlet input need not be."""

    vertices: tuple[int, ...] = ()
    charges: tuple[complex, ...] = ()
    epsilon: float | None = None
    source: str | None = None

    def __post_init__(self):
        if len(self.vertices) != len(self.charges):
            raise InvalidParameterError("vertices and charges differ in length")
        object.__setattr__(self, "vertices", tuple(int(v) for v in self.vertices))
        object.__setattr__(self, "charges", tuple(complex(q) for q in self.charges))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, complex]], **meta) -> "ChargeSet":
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs), **meta)

    def __len__(self) -> int:
        return len(self.vertices)

    def __iter__(self):
        return iter(zip(self.vertices, self.charges))

    @property
    def total(self) -> complex:
        return complex(sum(self.charges, 0j))

    @property
    def l1(self) -> float:
        return float(sum(abs(q) for q in self.charges))

    def to_list(self) -> list[dict]:
        return [{"vertex": v, "q": [q.real, q.imag]} for v, q in self]

    def to_json(self) -> str:
        return json.dumps(self.to_list())

    @classmethod
    def from_json(cls, text: str) -> "ChargeSet":
        data = json.loads(text)
        return cls(tuple(d["vertex"] for d in data), tuple(complex(*d["q"]) for d in data))


@dataclass(frozen=True)
class DipoleSpec:
    a_minus: int
    a_plus: int
    c: complex = 1.0

    def __post_init__(self):
        if int(self.a_minus) == int(self.a_plus):
            raise InvalidDipoleError("dipole poles coincide")


@dataclass(frozen=True, eq=False)
class HarmonicDistribution:
    """Vertex field, discretely harmonic off ``singular`` with link residues ``c_a``.

    ``values`` is finite everywhere: at a pole the discrete field stores the
    value that makes the one-ring flux equal ``2π c_a``.
    """

    surface: DiscreteSurface
    values: np.ndarray
    singular: tuple[tuple[int, complex], ...] = ()
    templates: dict = field(default_factory=dict, repr=False)

    @property
    def support(self) -> np.ndarray:
        return np.asarray([a for a, _ in self.singular], dtype=np.int64)

    def declared(self, a: int) -> complex:
        for v, c in self.singular:
            if v == a:
                return c
        return 0j

    def node_class_sums(self) -> list[complex]:
        decl = dict(self.singular)
        return [complex(sum(decl.get(int(v), 0j) for v in cls)) for cls in self.surface.node_classes]

    @property
    def regular_part(self) -> np.ndarray:
        """Field minus ``Σ c_a T_a``; NaN on the singular support.

        On a bordered surface ``T_a`` is the zero-Dirichlet discrete log
        template (``L T_a = -2π e_a`` in the interior), so the regular part is
        discretely harmonic at every interior vertex and obeys the maximum
        principle.
        """
        out = np.array(self.values, dtype=complex)
        for a, c in self.singular:
            out -= c * self.templates[a]
        out[self.support] = np.nan
        return out if np.any(np.nan_to_num(out.imag)) else out.real


def _check_charges(surface: DiscreteSurface, charges: ChargeSet) -> None:
    seen = set()
    bmask = surface.boundary_vertex_mask
    for v, _ in charges:
        if not 0 <= v < surface.n_vertices:
            raise InvalidLocationError(f"charge vertex {v} out of range")
        if bmask[v]:
            raise InvalidLocationError(f"charge at boundary vertex {v}")
        if v in seen:
            raise DuplicateSingularityError(f"two charges at vertex {v}")
        seen.add(v)
    decl = dict(iter(charges))
    for cls in surface.node_classes:
        s = sum(decl.get(int(v), 0j) for v in cls)
        if abs(s) > 1e-10:
            raise CompatibilityError(f"node class {tuple(cls)} has residue sum {s}")


def _point_source(surface: DiscreteSurface, charges: ChargeSet) -> np.ndarray:
    """Right-hand side Δu for ``L u = -2π Σ c_a e_a``."""
    f = np.zeros(surface.n_vertices, dtype=complex)
    for v, q in charges:
        f[v] -= 2 * np.pi * q
    return f / surface.area_weights


def extend_with_singularities(
    surface: DiscreteSurface, boundary, charges: ChargeSet | None = None
) -> HarmonicDistribution:
    """Harmonic extension of boundary data with prescribed log poles.

    The field solves ``L u = -2π Σ c_a e_a`` at interior vertices, so the
    measured link residue at every pole equals its declared charge.
    """
    if surface.is_compact:
        raise WrongSurfaceClassError("extend_with_singularities needs a bordered surface")
    charges = charges or ChargeSet()
    _check_charges(surface, charges)
    bvals = _boundary_array(surface, boundary)
    if len(charges) == 0:
        return HarmonicDistribution(surface, dirichlet_solve(surface, bvals))
    f = _point_source(surface, charges)
    u = dirichlet_solve(surface, bvals, f)
    if not np.any(np.imag(u)):
        u = np.real(u)
    templates = {}
    zero = np.zeros(surface.n_vertices)
    for v, _ in charges:
        t = np.zeros(surface.n_vertices)
        t[v] = -2 * np.pi / surface.area_weights[v]
        templates[v] = dirichlet_solve(surface, zero, t)
    return HarmonicDistribution(surface, u, tuple(charges), templates)


def bipolar_potential(ev: GreenEvaluator, d: DipoleSpec) -> HarmonicDistribution:
    """Dipole potential ``U = 2πc (G(a-, .) − G(a+, .))``.

    The background terms cancel, so ``L U = 2πc (e_{a-} − e_{a+})`` and the
    link residues are exactly ``+c`` at ``a+`` and ``−c`` at ``a-``.
    """
    c = complex(d.c)
    s = ev.surface
    if c == 0:
        return HarmonicDistribution(s, np.zeros(s.n_vertices), ())
    u = 2 * np.pi * c * (ev.green(d.a_minus) - ev.green(d.a_plus))
    if c.imag == 0:
        u = u.real
    return HarmonicDistribution(s, u, ((int(d.a_plus), c), (int(d.a_minus), -c)))


# --------------------------------------------------------------------- DtN
@dataclass(frozen=True)
class BoundaryCurrent:
    """d^c of the harmonic extension, lumped on the boundary dual cells.

    ``values[k]`` is the outward flux through the dual boundary segment of
    ``vertices[k]``; ``loop_totals`` sums it per boundary loop.
    """

    vertices: np.ndarray
    values: np.ndarray
    loop_totals: tuple

    def pairing(self, v) -> complex:
        return np.sum(self.values * np.asarray(v))


def dtn(surface: DiscreteSurface, boundary) -> BoundaryCurrent:
    """Dirichlet-to-Neumann map ``u -> d^c ũ |_{bZ}``."""
    u = dirichlet_solve(surface, boundary)
    flux = stiffness_matrix(surface) @ u
    verts = surface.boundary_vertices
    totals = tuple(flux[np.asarray(loop)].sum() for loop in surface.boundary_loops)
    return BoundaryCurrent(verts, flux[verts], totals)


# ----------------------------------------------------------------- reports
@dataclass(frozen=True)
class ResidueReport:
    rows: tuple  # (vertex, declared, measured)
    node_class_sums: tuple
    total_declared: complex
    total_measured: complex

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["vertex", "declared_re", "declared_im", "measured_re", "measured_im"])
        for v, d, m in self.rows:
            w.writerow([v, repr(d.real), repr(d.imag), repr(m.real), repr(m.imag)])
        w.writerow(["total", repr(self.total_declared.real), repr(self.total_declared.imag),
                    repr(self.total_measured.real), repr(self.total_measured.imag)])
        return buf.getvalue()


def residues_report(H: HarmonicDistribution) -> ResidueReport:
    rows = []
    for a, c in H.singular:
        rows.append((int(a), complex(c), complex(residue(H.values, a, H.surface))))
    td = complex(sum((r[1] for r in rows), 0j))
    tm = complex(sum((r[2] for r in rows), 0j))
    return ResidueReport(tuple(rows), tuple(H.node_class_sums()), td, tm)
