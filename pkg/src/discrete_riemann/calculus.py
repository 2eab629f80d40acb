"""Discrete exterior calculus on :class:`DiscreteSurface`.

Conventions
-----------
``L`` is the cotangent stiffness matrix, positive semi-definite, with
``(L u)_i = sum_j w_ij (u_i - u_j)``.  The discrete Laplacian is
``Δ = M^{-1} L`` with ``M`` the lumped area weights, so that Δ cos(2πx) is
close to 4π² cos(2πx) on the unit flat torus.

The conjugate differential is stored on primal edges: for the edge ``i -> j``
the value ``w_ij (u_j - u_i)`` is the integral of d^c u over the dual edge
crossing it.  The d^c integral over a cycle is the flux of that cochain out
of the vertices lying strictly to the left of the cycle, which makes the sum
of vertex residues inside a cycle telescope exactly.
"""

from __future__ import annotations

import json
import weakref
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import (
    CompatibilityError,
    InvalidCycleError,
    InvalidLocationError,
    InvalidParameterError,
    IterationLimitError,
    ShapeError,
    SingularFaceError,
)
from .surface import DiscreteSurface

__all__ = [
    "SolverOptions",
    "Cochain0",
    "FaceOneForm",
    "EdgeCochain",
    "Cycle",
    "stiffness_matrix",
    "laplacian",
    "del_",
    "partial",
    "dc",
    "contour_integral",
    "residue",
    "region_flux",
    "poisson_solve",
    "dirichlet_solve",
]


@dataclass(frozen=True)
class SolverOptions:
    """Iterative solver settings shared by all Laplace solves."""

    rtol: float = 1e-10
    maxiter_factor: float = 50.0

    def maxiter(self, n: int) -> int:
        return max(10, int(self.maxiter_factor * np.sqrt(max(n, 1))))


DEFAULT_SOLVER = SolverOptions()

_STIFFNESS: "weakref.WeakKeyDictionary[DiscreteSurface, sparse.csr_matrix]" = (
    weakref.WeakKeyDictionary()
)


# ------------------------------------------------------------------ types
@dataclass(frozen=True, eq=False)
class Cochain0:
    """A complex (or real) value per vertex."""

    surface: DiscreteSurface
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.surface.n_vertices,):
            raise ShapeError(f"expected {self.surface.n_vertices} vertex values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("cochain values must be finite")
        object.__setattr__(self, "values", v)

    def to_json(self) -> str:
        v = self.values
        if np.iscomplexobj(v):
            return json.dumps({str(i): [float(x.real), float(x.imag)] for i, x in enumerate(v)})
        return json.dumps({str(i): float(x) for i, x in enumerate(v)})


@dataclass(frozen=True, eq=False)
class FaceOneForm:
    """Per-face constant (1,0)-form ``c_f dw_f`` in the face frames of the surface."""

    surface: DiscreteSurface
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.surface.n_faces,):
            raise ShapeError(f"expected {self.surface.n_faces} face coefficients, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_planar(cls, surface: DiscreteSurface, func) -> "FaceOneForm":
        """Sample ``func(z) dz`` at face centroids of a planar chart."""
        if surface.planar_coords is None:
            raise InvalidParameterError("from_planar needs planar coordinates")
        z = surface.face_centroids.copy()
        return cls(surface, np.array(func(z), dtype=complex))

    def __add__(self, other: "FaceOneForm") -> "FaceOneForm":
        _same_surface(self, other)
        return FaceOneForm(self.surface, self.coeffs + other.coeffs)

    def __sub__(self, other: "FaceOneForm") -> "FaceOneForm":
        _same_surface(self, other)
        return FaceOneForm(self.surface, self.coeffs - other.coeffs)

    def __mul__(self, k: complex) -> "FaceOneForm":
        return FaceOneForm(self.surface, self.coeffs * k)

    __rmul__ = __mul__

    def __neg__(self) -> "FaceOneForm":
        return FaceOneForm(self.surface, -self.coeffs)

    def edge_integrals(self, tails: np.ndarray, heads: np.ndarray) -> np.ndarray:
        """Integral along each directed edge, averaged over its adjacent faces."""
        s = self.surface
        e = s.edge_index(tails, heads)
        ef = s.edge_faces[e]
        total = np.zeros(len(e), complex)
        count = np.zeros(len(e))
        for col in range(2):
            f = ef[:, col]
            ok = f >= 0
            tri = s.triangles[f[ok]]
            fr = s.face_frames[f[ok]]
            it = np.argmax(tri == tails[ok, None], axis=1)
            ih = np.argmax(tri == heads[ok, None], axis=1)
            rows = np.arange(ok.sum())
            dw = fr[rows, ih] - fr[rows, it]
            total[ok] += self.coeffs[f[ok]] * dw
            count[ok] += 1
        return total / count

    def to_json(self) -> str:
        return json.dumps({str(i): [float(c.real), float(c.imag)] for i, c in enumerate(self.coeffs)})


@dataclass(frozen=True, eq=False)
class EdgeCochain:
    """Real-linear edge cochain; ``values[e]`` is oriented along ``edges[e, 0] -> edges[e, 1]``."""

    surface: DiscreteSurface
    values: np.ndarray

    def directed(self, tails: np.ndarray, heads: np.ndarray) -> np.ndarray:
        e = self.surface.edge_index(tails, heads)
        sign = np.where(self.surface.edges[e, 0] == tails, 1.0, -1.0)
        return sign * self.values[e]


@dataclass(frozen=True, eq=False)
class Cycle:
    """Closed vertex loop ``v_0 -> v_1 -> ... -> v_{k-1} -> v_0``."""

    vertices: np.ndarray

    @classmethod
    def from_vertices(cls, vertices: Sequence[int]) -> "Cycle":
        v = np.asarray(vertices, dtype=np.int64)
        if len(v) < 3:
            raise InvalidCycleError("a cycle needs at least three vertices")
        if v[0] == v[-1]:
            v = v[:-1]
        return cls(v)

    @classmethod
    def from_edges(cls, edges: Sequence[tuple[int, int]]) -> "Cycle":
        """Build from oriented edges; consecutive edges must share endpoints and close up."""
        e = [(int(a), int(b)) for a, b in edges]
        if not e:
            raise InvalidCycleError("empty edge list")
        for (a0, b0), (a1, b1) in zip(e, e[1:]):
            if b0 != a1:
                raise InvalidCycleError(f"edges ({a0},{b0}) and ({a1},{b1}) do not connect")
        if e[-1][1] != e[0][0]:
            raise InvalidCycleError("edge chain is open")
        return cls.from_vertices([a for a, _ in e])

    @classmethod
    def vertex_link(cls, surface: DiscreteSurface, a: int) -> "Cycle":
        """Counter-clockwise one-ring around an interior vertex."""
        if surface.boundary_vertex_mask[a]:
            raise InvalidLocationError(f"vertex {a} lies on the boundary")
        return cls(surface.link_cycle(a))

    def reversed(self) -> "Cycle":
        return Cycle(self.vertices[::-1].copy())

    @property
    def tails(self) -> np.ndarray:
        return self.vertices

    @property
    def heads(self) -> np.ndarray:
        return np.roll(self.vertices, -1)


def _same_surface(a, b) -> None:
    if a.surface is not b.surface:
        raise ShapeError("forms live on different surfaces")


def _values(surface: DiscreteSurface, u) -> np.ndarray:
    if isinstance(u, Cochain0):
        return u.values
    v = np.asarray(u)
    if v.shape != (surface.n_vertices,):
        raise ShapeError(f"expected {surface.n_vertices} vertex values, got {v.shape}")
    return v


# ---------------------------------------------------------------- operators
def stiffness_matrix(surface: DiscreteSurface) -> sparse.csr_matrix:
    """Cotangent stiffness ``L`` (symmetric, PSD, rows sum to 0)."""
    L = _STIFFNESS.get(surface)
    if L is None:
        i, j = surface.edges.T
        w = surface.cotan_weights
        n = surface.n_vertices
        off = sparse.coo_matrix(
            (np.concatenate([-w, -w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(n, n),
        ).tocsr()
        L = (off - sparse.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()
        L.sort_indices()
        _STIFFNESS[surface] = L
    return L


def laplacian(surface: DiscreteSurface, u) -> np.ndarray:
    """Discrete Δu = M⁻¹ L u."""
    return stiffness_matrix(surface) @ _values(surface, u) / surface.area_weights


def del_(surface: DiscreteSurface, u) -> FaceOneForm:
    """(1,0)-part of du for the piecewise-linear interpolant of ``u``.

    Writing ``u = a + b w + c w̄`` on a face gives ``∂u = b dw``.
    """
    u = _values(surface, u)
    fr = surface.face_frames
    d1 = fr[:, 1] - fr[:, 0]
    d2 = fr[:, 2] - fr[:, 0]
    t = surface.triangles
    du1 = u[t[:, 1]] - u[t[:, 0]]
    du2 = u[t[:, 2]] - u[t[:, 0]]
    den = d1 * np.conj(d2) - d2 * np.conj(d1)
    if np.any(np.abs(den) <= 1e-14 * np.abs(d1) * np.abs(d2)):
        bad = int(np.argmin(np.abs(den)))
        raise SingularFaceError(f"face {bad} has zero area")
    return FaceOneForm(surface, (du1 * np.conj(d2) - du2 * np.conj(d1)) / den)


partial = del_


def dc(surface: DiscreteSurface, u) -> EdgeCochain:
    """Conjugate differential: ``w_ij (u_j - u_i)`` on each edge ``i -> j``."""
    u = _values(surface, u)
    i, j = surface.edges.T
    return EdgeCochain(surface, surface.cotan_weights * (u[j] - u[i]))


# ---------------------------------------------------------- contour integrals
def _fan(surface: DiscreteSurface, v: int, start: int, stop: int) -> list[int] | None:
    """Neighbours of ``v`` strictly between ``start`` and ``stop`` turning counter-clockwise.

    Returns None when the face to the left of ``v -> start`` is missing.
    """
    nxt = {}
    for f in surface.vertex_faces[v]:
        tri = surface.triangles[f]
        k = int(np.flatnonzero(tri == v)[0])
        nxt[int(tri[(k + 1) % 3])] = int(tri[(k + 2) % 3])
    if start not in nxt:
        return None
    out = []
    j = nxt[start]
    while j != stop:
        out.append(j)
        if j not in nxt or len(out) > len(nxt):
            raise InvalidCycleError(f"cycle is not locally separating at vertex {v}")
        j = nxt[j]
    return out


def _cycle_flux_edges(surface: DiscreteSurface, cycle: Cycle):
    """Directed edges ``(v, j)`` and signs whose weighted sum gives the cycle flux."""
    tails, heads, signs = [], [], []
    verts = cycle.vertices
    k = len(verts)
    on_cycle = set(verts.tolist())
    if len(on_cycle) != k:
        raise InvalidCycleError("cycle repeats a vertex")
    for idx in range(k):
        v = int(verts[idx])
        p = int(verts[idx - 1])
        n = int(verts[(idx + 1) % k])
        left = _fan(surface, v, n, p)
        if left is not None:
            tails += [v] * len(left)
            heads += left
            signs += [-1.0] * len(left)
            continue
        right = _fan(surface, v, p, n)
        if right is None:
            raise InvalidCycleError(f"cycle edges at vertex {v} are not surface edges")
        tails += [v] * len(right)
        heads += right
        signs += [1.0] * len(right)
    return np.asarray(tails, np.int64), np.asarray(heads, np.int64), np.asarray(signs)


def contour_integral(form, cycle: Cycle) -> complex:
    """Integrate a :class:`FaceOneForm` or a d^c :class:`EdgeCochain` over a cycle.

    For a face form each cycle edge takes the mean of its adjacent faces.  For
    an edge cochain the result is the flux out of the vertices strictly to the
    left of the cycle (or into those strictly to the right, along stretches
    where the surface lies only on the right).
    """
    if not isinstance(cycle, Cycle):
        cycle = Cycle.from_vertices(cycle)
    s = form.surface
    try:
        if isinstance(form, FaceOneForm):
            return complex(form.edge_integrals(cycle.tails, cycle.heads).sum())
        if isinstance(form, EdgeCochain):
            t, h, sg = _cycle_flux_edges(s, cycle)
            if len(t) == 0:
                return 0.0
            return complex(np.sum(sg * form.directed(t, h)))
    except KeyError as exc:
        raise InvalidCycleError("cycle uses an edge that is not in the surface") from exc
    raise TypeError(f"cannot integrate {type(form).__name__}")


def region_flux(surface: DiscreteSurface, u, region: Sequence[int]) -> complex:
    """Flux of d^c u out of a vertex set: ``sum_{i in R, j not in R} w_ij (u_j - u_i)``."""
    u = _values(surface, u)
    mask = np.zeros(surface.n_vertices, dtype=bool)
    mask[np.asarray(region, dtype=np.int64)] = True
    i, j = surface.edges.T
    cut = mask[i] ^ mask[j]
    inner = np.where(mask[i[cut]], i[cut], j[cut])
    outer = np.where(mask[i[cut]], j[cut], i[cut])
    val = np.sum(surface.cotan_weights[cut] * (u[outer] - u[inner]))
    return complex(val) if np.iscomplexobj(val) else float(val)


def residue(obj, a: int, surface: DiscreteSurface | None = None):
    """Residue at an interior vertex.

    For vertex values ``u`` this is ``(1/2π)`` times the d^c flux through the
    link of ``a``; if ``u(a)`` is not finite the flux through the boundary of
    the closed star is used instead.  For a :class:`FaceOneForm` it is
    ``(1/2πi)`` times the integral over the link.
    """
    if isinstance(obj, FaceOneForm):
        s = obj.surface
        return contour_integral(obj, Cycle.vertex_link(s, a)) / (2j * np.pi)
    if isinstance(obj, Cochain0):
        surface, obj = obj.surface, obj.values
    if surface is None:
        raise InvalidParameterError("residue of vertex values needs the surface")
    if surface.boundary_vertex_mask[a]:
        raise InvalidLocationError(f"vertex {a} lies on the boundary")
    u = _values(surface, obj)
    ring = surface.neighbors(a)
    if not np.all(np.isfinite(u[ring])):
        raise InvalidParameterError(f"values not finite on the link of {a}")
    if np.isfinite(u[a]):
        w = surface.cotan_weights[surface.edge_index(np.full(len(ring), a), ring)]
        val = np.sum(w * (u[ring] - u[a]))
    else:
        # u(a) = -inf for a sampled log: take the flux out of the two-ring ball,
        # which never touches u(a) and sits far enough out for the log to be
        # resolved by the cotangent weights
        ball = np.flatnonzero(surface.hop_distance([a]) <= 2)
        if surface.boundary_vertex_mask[ball].any():
            raise InvalidLocationError(f"vertex {a} is within two rings of the boundary")
        v = np.where(np.isfinite(u), u, 0.0)
        others = np.setdiff1d(np.unique(surface.adjacency[ball].indices), [a])
        if not np.all(np.isfinite(u[others])):
            raise InvalidParameterError(f"values not finite around {a}")
        val = region_flux(surface, v, ball)
    out = val / (2 * np.pi)
    return complex(out) if np.iscomplexobj(out) else float(out)


# ------------------------------------------------------------------ solvers
def _cg(A, b: np.ndarray, x0: np.ndarray, opts: SolverOptions, what: str) -> np.ndarray:
    if np.iscomplexobj(b) or np.iscomplexobj(x0):
        re = _cg(A, np.real(b), np.real(x0), opts, what)
        im = _cg(A, np.imag(b), np.imag(x0), opts, what)
        return re + 1j * im
    n = A.shape[0]
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0 and np.linalg.norm(A @ x0) == 0.0:
        return x0.astype(float)
    diag = A.diagonal()
    precond = sparse.diags(1.0 / diag)
    x, info = spla.cg(A, b, x0=x0, rtol=opts.rtol, atol=0.0, maxiter=opts.maxiter(n), M=precond)
    if info != 0:
        res = np.linalg.norm(b - A @ x) / max(bnorm, 1e-300)
        raise IterationLimitError(f"{what}: conjugate gradient did not converge", res)
    return x


def poisson_solve(
    surface: DiscreteSurface, rhs, opts: SolverOptions = DEFAULT_SOLVER
) -> np.ndarray:
    """Solve Δu = rhs on a compact surface with the normalisation ⟨u, area⟩ = 0."""
    if not surface.is_compact:
        raise InvalidParameterError("poisson_solve needs a compact surface")
    f = _values(surface, rhs)
    A = surface.area_weights
    mean = np.sum(f * A)
    if abs(mean) > 1e-10 * max(1.0, float(np.max(np.abs(f), initial=0.0))):
        raise CompatibilityError(f"right-hand side has nonzero mean {mean!r}")
    b = A * f - mean * A
    L = stiffness_matrix(surface)
    u = _cg(L, b, np.zeros_like(b), opts, "poisson_solve")
    return u - np.sum(u * A)


def _boundary_array(surface: DiscreteSurface, boundary) -> np.ndarray:
    """Return a full-length vector whose boundary entries carry the given data."""
    bverts = surface.boundary_vertices
    if isinstance(boundary, Mapping):
        missing = set(bverts.tolist()) - set(int(k) for k in boundary)
        if missing:
            raise InvalidParameterError(f"boundary values missing for {sorted(missing)[:5]}")
        vals = np.array([boundary[int(v)] for v in bverts])
    else:
        b = np.asarray(boundary)
        if b.shape == (surface.n_vertices,):
            vals = b[bverts]
        elif b.shape == (len(bverts),):
            vals = b
        else:
            raise ShapeError("boundary values must cover every boundary vertex")
    out = np.zeros(surface.n_vertices, dtype=np.result_type(vals, float))
    out[bverts] = vals
    return out


def dirichlet_solve(
    surface: DiscreteSurface,
    boundary,
    rhs=None,
    opts: SolverOptions = DEFAULT_SOLVER,
) -> np.ndarray:
    """Solve Δu = rhs in the interior with u prescribed on every boundary vertex.

    ``boundary`` is a full vertex vector, a vector ordered like
    ``surface.boundary_vertices``, or a mapping vertex -> value.
    """
    if surface.is_compact:
        raise InvalidParameterError("dirichlet_solve needs a bordered surface")
    u = _boundary_array(surface, boundary)
    bmask = surface.boundary_vertex_mask
    inner = np.flatnonzero(~bmask)
    L = stiffness_matrix(surface)
    L_ii = L[inner][:, inner]
    b = -(L[inner][:, bmask] @ u[bmask])
    if rhs is not None:
        f = _values(surface, rhs)
        b = b + surface.area_weights[inner] * f[inner]
        u = u.astype(np.result_type(u, f))
    x0 = np.full(len(inner), np.mean(u[bmask]), dtype=u.dtype)
    u[inner] = _cg(L_ii.tocsr(), b, x0, opts, "dirichlet_solve")
    return u
