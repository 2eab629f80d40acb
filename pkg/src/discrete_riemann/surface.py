"""Triangulated surfaces carrying an intrinsic (edge-length) metric.

The edge lengths are the source of truth for the conformal structure.  Planar
or ambient coordinates are optional annotations that closed-form oracles and
plotting code use; they never enter the operators except through the
per-face isometric frames derived here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import InvalidParameterError, InvalidSubdomainError

__all__ = [
    "DiscreteSurface",
    "Subdomain",
    "build_surface",
    "flat_torus",
    "annulus",
    "icosphere",
    "remove_subdomain",
    "refine",
    "validate",
    "load_surface",
    "save_surface",
    "surface_to_dict",
    "surface_from_dict",
    "with_node_classes",
    "ValidationReport",
]

# vertex k of a face is opposite the edge (k+1, k+2)
_NEXT = np.array([1, 2, 0])
_PREV = np.array([2, 0, 1])


def _edge_keys(i: np.ndarray, j: np.ndarray, n: int) -> np.ndarray:
    lo = np.minimum(i, j).astype(np.int64)
    hi = np.maximum(i, j).astype(np.int64)
    return lo * n + hi


@dataclass(frozen=True, eq=False)
class DiscreteSurface:
    """Oriented triangulated surface, compact or bordered.

    Parameters
    ----------
    n_vertices : int
        Number of vertices; vertex ids are ``0..n_vertices-1``.
    triangles : (F, 3) int array
        Counter-clockwise oriented vertex triples.
    edges : (E, 2) int array
        Undirected edges with ``edges[:, 0] < edges[:, 1]``, sorted.
    edge_lengths : (E,) float array
        Intrinsic metric.
    boundary_loops : tuple of int arrays
        Each loop is ordered so the surface lies on its left.
    node_classes : tuple of tuples
        Groups of interior vertices identified to nodes.
    planar_coords : complex (V,) array, optional
        A conformal chart.  With ``periods`` set, coordinates are taken modulo
        the lattice spanned by the two periods.
    ambient_coords : (V, 3) array, optional
    periods : (complex, complex), optional
    """

    n_vertices: int
    triangles: np.ndarray
    edges: np.ndarray
    edge_lengths: np.ndarray
    boundary_loops: tuple = ()
    node_classes: tuple = ()
    planar_coords: np.ndarray | None = None
    ambient_coords: np.ndarray | None = None
    periods: tuple | None = None
    name: str = field(default="surface", compare=False)

    # ------------------------------------------------------------------ basic
    @property
    def n_faces(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def is_compact(self) -> bool:
        return len(self.boundary_loops) == 0

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    @cached_property
    def _edge_key_table(self) -> np.ndarray:
        return self.edges[:, 0].astype(np.int64) * self.n_vertices + self.edges[:, 1]

    def edge_index(self, i, j) -> np.ndarray:
        """Ids of the undirected edges ``{i, j}`` (vectorised)."""
        keys = _edge_keys(np.asarray(i), np.asarray(j), self.n_vertices)
        idx = np.searchsorted(self._edge_key_table, keys)
        idx = np.clip(idx, 0, self.n_edges - 1)
        if np.any(self._edge_key_table[idx] != keys):
            raise KeyError("edge not present in surface")
        return idx

    @cached_property
    def face_edges(self) -> np.ndarray:
        """(F, 3) edge ids, column k opposite vertex k."""
        t = self.triangles
        return np.stack(
            [self.edge_index(t[:, _NEXT[k]], t[:, _PREV[k]]) for k in range(3)], axis=1
        )

    @cached_property
    def face_lengths(self) -> np.ndarray:
        """(F, 3) edge lengths, column k opposite vertex k."""
        return self.edge_lengths[self.face_edges]

    @cached_property
    def face_areas(self) -> np.ndarray:
        a, b, c = self.face_lengths.T
        s = 0.5 * (a + b + c)
        with np.errstate(invalid="ignore"):
            return np.sqrt(np.maximum(s * (s - a) * (s - b) * (s - c), 0.0))

    @property
    def total_area(self) -> float:
        return float(self.face_areas.sum())

    @cached_property
    def area_weights(self) -> np.ndarray:
        """Barycentric lumped vertex areas; normalised to sum 1 when compact."""
        w = np.zeros(self.n_vertices)
        np.add.at(w, self.triangles.ravel(), np.repeat(self.face_areas / 3.0, 3))
        if self.is_compact:
            w = w / w.sum()
        return w

    @cached_property
    def cotan_weights(self) -> np.ndarray:
        """Per-edge weight ½(cot α + cot β) from the intrinsic lengths."""
        lengths = self.face_lengths
        area = self.face_areas
        w = np.zeros(self.n_edges)
        for k in range(3):
            lk = lengths[:, k]
            la = lengths[:, _NEXT[k]]
            lb = lengths[:, _PREV[k]]
            cot = (la**2 + lb**2 - lk**2) / (4.0 * area)
            np.add.at(w, self.face_edges[:, k], 0.5 * cot)
        return w

    # ------------------------------------------------------------ topology
    @cached_property
    def edge_faces(self) -> np.ndarray:
        """(E, 2) adjacent face ids, -1 when missing (boundary)."""
        ef = -np.ones((self.n_edges, 2), dtype=np.int64)
        fe = self.face_edges.ravel()
        fid = np.repeat(np.arange(self.n_faces), 3)
        order = np.argsort(fe, kind="stable")
        fe, fid = fe[order], fid[order]
        first = np.ones(len(fe), dtype=bool)
        first[1:] = fe[1:] != fe[:-1]
        ef[fe[first], 0] = fid[first]
        ef[fe[~first], 1] = fid[~first]
        return ef

    @cached_property
    def boundary_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        for loop in self.boundary_loops:
            mask[np.asarray(loop)] = True
        return mask

    @property
    def boundary_vertices(self) -> np.ndarray:
        if not self.boundary_loops:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.asarray(l) for l in self.boundary_loops])

    @property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_vertex_mask)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric vertex graph weighted by edge length."""
        i, j = self.edges.T
        n = self.n_vertices
        a = sparse.coo_matrix(
            (np.concatenate([self.edge_lengths, self.edge_lengths]),
             (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(n, n),
        )
        return a.tocsr()

    @cached_property
    def vertex_faces(self) -> list[np.ndarray]:
        fid = np.repeat(np.arange(self.n_faces), 3)
        v = self.triangles.ravel()
        order = np.argsort(v, kind="stable")
        splits = np.searchsorted(v[order], np.arange(1, self.n_vertices))
        return np.split(fid[order], splits)

    def neighbors(self, v: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def distances_from(self, sources, limit: float = np.inf) -> np.ndarray:
        """Graph (Dijkstra) distance along edges from the given vertices."""
        d = csgraph.dijkstra(self.adjacency, directed=False, indices=sources, limit=limit)
        return d

    def hop_distance(self, sources: Iterable[int]) -> np.ndarray:
        """Breadth-first hop count from a vertex set (inf when unreachable)."""
        src = np.unique(np.asarray(list(sources), dtype=np.int64))
        dist = np.full(self.n_vertices, np.inf)
        if len(src) == 0:
            return dist
        dist[src] = 0
        frontier = src
        a = self.adjacency
        level = 0
        while len(frontier):
            level += 1
            nbr = np.unique(a[frontier].indices)
            nbr = nbr[np.isinf(dist[nbr])]
            dist[nbr] = level
            frontier = nbr
        return dist

    def link_cycle(self, v: int) -> np.ndarray:
        """Ordered one-ring of an interior vertex, counter-clockwise."""
        nxt = {}
        for f in self.vertex_faces[v]:
            tri = self.triangles[f]
            k = int(np.flatnonzero(tri == v)[0])
            nxt[int(tri[_NEXT[k]])] = int(tri[_PREV[k]])
        start = min(nxt)
        ring = [start]
        while True:
            n = nxt.get(ring[-1])
            if n is None or n == start:
                break
            ring.append(n)
        if len(ring) != len(nxt):
            raise InvalidParameterError(f"vertex {v} has a non-disc link")
        return np.asarray(ring)

    # -------------------------------------------------------------- frames
    @cached_property
    def face_frames(self) -> np.ndarray:
        """(F, 3) complex positions of each face in an isometric local chart.

        The planar chart is used when present (unwrapped across the periods
        of a torus); otherwise the triangle is laid out from its lengths.
        """
        t = self.triangles
        if self.planar_coords is not None:
            z = self.planar_coords[t]
            if self.periods is not None:
                z = z[:, [0]] + np.stack(
                    [np.zeros(len(t), complex)]
                    + [self._wrap(z[:, k] - z[:, 0]) for k in (1, 2)],
                    axis=1,
                )
            return z
        lengths = self.face_lengths
        # a: opposite vertex 0, etc.  vertex 0 at origin, vertex 1 on the x axis
        l01 = lengths[:, 2]
        l02 = lengths[:, 1]
        l12 = lengths[:, 0]
        cos0 = np.clip((l01**2 + l02**2 - l12**2) / (2 * l01 * l02), -1.0, 1.0)
        ang = np.arccos(cos0)
        return np.stack(
            [np.zeros(len(t), complex), l01.astype(complex), l02 * np.exp(1j * ang)], axis=1
        )

    def _wrap(self, d: np.ndarray) -> np.ndarray:
        w1, w2 = self.periods
        m = np.array([[w1.real, w2.real], [w1.imag, w2.imag]])
        st = np.linalg.solve(m, np.stack([d.real, d.imag]))
        st = st - np.round(st)
        return st[0] * w1 + st[1] * w2

    @cached_property
    def face_centroids_frame(self) -> np.ndarray:
        return self.face_frames.mean(axis=1)

    @cached_property
    def face_centroids(self) -> np.ndarray | None:
        """Face centroids in the global planar chart when one exists."""
        if self.planar_coords is None:
            return None
        c = self.face_frames.mean(axis=1)
        if self.periods is not None:
            c = self._wrap_point(c)
        return c

    def _wrap_point(self, z: np.ndarray) -> np.ndarray:
        w1, w2 = self.periods
        m = np.array([[w1.real, w2.real], [w1.imag, w2.imag]])
        st = np.linalg.solve(m, np.stack([np.real(z), np.imag(z)]))
        st = st - np.floor(st)
        return st[0] * w1 + st[1] * w2

    @cached_property
    def face_adjacency(self) -> sparse.csr_matrix:
        """Face graph through shared edges."""
        ef = self.edge_faces
        inner = ef[:, 1] >= 0
        a, b = ef[inner, 0], ef[inner, 1]
        n = self.n_faces
        m = sparse.coo_matrix(
            (np.ones(2 * len(a)), (np.concatenate([a, b]), np.concatenate([b, a]))),
            shape=(n, n),
        )
        return m.tocsr()

    def max_edge_length(self) -> float:
        return float(self.edge_lengths.max())

    def __repr__(self) -> str:
        return (
            f"DiscreteSurface({self.name!r}, V={self.n_vertices}, F={self.n_faces}, "
            f"loops={len(self.boundary_loops)})"
        )


@dataclass(frozen=True, eq=False)
class Subdomain:
    """A disc S cut out of a compact surface Z.

    ``interior`` are the vertices strictly inside S, ``gamma`` the separating
    loop oriented as the boundary of Z minus S, ``faces`` the faces of S.
    ``outer_vertices``/``outer_faces`` map ids of the bordered surface Z minus S
    back to Z.
    """

    surface: DiscreteSurface
    interior: np.ndarray
    faces: np.ndarray
    gamma: np.ndarray
    collar_faces: np.ndarray
    outer_vertices: np.ndarray
    outer_faces: np.ndarray
    center: int
    radius: float

    @cached_property
    def closure_vertices(self) -> np.ndarray:
        return np.union1d(self.interior, self.gamma)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        m = np.zeros(self.surface.n_vertices, dtype=bool)
        m[self.interior] = True
        return m

    @cached_property
    def closure_mask(self) -> np.ndarray:
        m = self.interior_mask.copy()
        m[self.gamma] = True
        return m

    @cached_property
    def outside_mask(self) -> np.ndarray:
        """Vertices of Z minus S (including the loop)."""
        return ~self.interior_mask

    def restrict(self, values: np.ndarray) -> np.ndarray:
        """Restrict a vertex field of Z to the bordered surface Z minus S."""
        return np.asarray(values)[self.outer_vertices]


# ------------------------------------------------------------------- builders
def _make_edges(triangles: np.ndarray, n: int) -> np.ndarray:
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e = np.sort(e, axis=1)
    keys = np.unique(e[:, 0].astype(np.int64) * n + e[:, 1])
    return np.stack([keys // n, keys % n], axis=1)


def _from_frames(
    n: int,
    triangles: np.ndarray,
    frames: np.ndarray,
    **kwargs,
) -> DiscreteSurface:
    """Assemble a surface whose edge lengths are read off per-face frames."""
    edges = _make_edges(triangles, n)
    keys = edges[:, 0] * n + edges[:, 1]
    lengths = np.zeros(len(edges))
    for a, b in ((0, 1), (1, 2), (2, 0)):
        k = _edge_keys(triangles[:, a], triangles[:, b], n)
        idx = np.searchsorted(keys, k)
        lengths[idx] = np.abs(frames[:, b] - frames[:, a])
    return DiscreteSurface(n, triangles.astype(np.int64), edges, lengths, **kwargs)


def flat_torus(n: int, tau: complex = 1j) -> DiscreteSurface:
    """Regular n-by-n grid on the torus C / (Z + tau Z)."""
    tau = complex(tau)
    if n < 4:
        raise InvalidParameterError("flat_torus needs n >= 4")
    if not tau.imag > 0:
        raise InvalidParameterError("flat_torus needs Im(tau) > 0")
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    vid = lambda a, b: (a % n) + n * (b % n)  # noqa: E731
    i, j = i.ravel(), j.ravel()
    v00, v10, v11, v01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    tris = np.concatenate(
        [np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)]
    )
    base = (i + j * tau) / n
    h1, ht = 1.0 / n, tau / n
    f1 = np.stack([base, base + h1, base + h1 + ht], 1)
    f2 = np.stack([base, base + h1 + ht, base + ht], 1)
    frames = np.concatenate([f1, f2])
    coords = np.zeros(n * n, complex)
    coords[vid(i, j)] = base
    surf = _from_frames(
        n * n, tris, frames, planar_coords=coords, periods=(1.0 + 0j, tau),
        name=f"torus(n={n}, tau={tau})",
    )
    return surf


def annulus(r: float, n_radial: int, n_angular: int, outer: float = 1.0) -> DiscreteSurface:
    """Planar annulus ``r·outer <= |z| <= outer`` with log-uniform radial layers."""
    if not 0 < r < 1:
        raise InvalidParameterError("annulus needs 0 < r < 1")
    if n_radial < 3 or n_angular < 8:
        raise InvalidParameterError("annulus needs n_radial >= 3 and n_angular >= 8")
    if not outer > 0:
        raise InvalidParameterError("annulus needs outer > 0")
    radii = outer * r ** (1.0 - np.arange(n_radial) / (n_radial - 1))
    theta = 2 * np.pi * np.arange(n_angular) / n_angular
    k, m = np.meshgrid(np.arange(n_radial), np.arange(n_angular), indexing="ij")
    # stagger alternate rings by half a step for near-equilateral triangles
    shift = 0.5 * (k % 2) * (2 * np.pi / n_angular)
    z = (radii[k] * np.exp(1j * (theta[m] + shift))).ravel()
    vid = lambda a, b: a * n_angular + (b % n_angular)  # noqa: E731
    tris = []
    for a in range(n_radial - 1):
        for b in range(n_angular):
            if a % 2 == 0:
                # ring a is behind ring a+1 by half a step
                tris.append((vid(a, b), vid(a, b + 1), vid(a + 1, b)))
                tris.append((vid(a, b + 1), vid(a + 1, b + 1), vid(a + 1, b)))
            else:
                tris.append((vid(a, b), vid(a + 1, b + 1), vid(a + 1, b)))
                tris.append((vid(a, b), vid(a, b + 1), vid(a + 1, b + 1)))
    tris = np.asarray(tris, dtype=np.int64)[:, ::-1].copy()
    outer = np.array([vid(n_radial - 1, b) for b in range(n_angular)])
    inner = np.array([vid(0, b) for b in range(n_angular)])[::-1]
    return _from_frames(
        n_radial * n_angular, tris, z[tris], boundary_loops=(outer, inner),
        planar_coords=z, name=f"annulus(r={r}, {n_radial}, {n_angular}, outer={outer})",
    )


def icosphere(level: int) -> DiscreteSurface:
    """Subdivided icosahedron on the unit sphere (chordal metric)."""
    if level < 1:
        raise InvalidParameterError("sphere needs subdivision level >= 1")
    p = (1 + 5**0.5) / 2
    verts = [(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0), (0, -1, p), (0, 1, p),
             (0, -1, -p), (0, 1, -p), (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9),
             (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2),
             (3, 2, 6), (3, 6, 8), (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10),
             (8, 6, 7), (9, 8, 1)]
    x = np.asarray(verts, float)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    t = np.asarray(faces, dtype=np.int64)
    for _ in range(level):
        n = len(x)
        edges = _make_edges(t, n)
        keys = edges[:, 0] * n + edges[:, 1]
        mid = x[edges[:, 0]] + x[edges[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        x = np.concatenate([x, mid])
        m = [n + np.searchsorted(keys, _edge_keys(t[:, a], t[:, b], n))
             for a, b in ((0, 1), (1, 2), (2, 0))]
        t = np.concatenate([
            np.stack([t[:, 0], m[0], m[2]], 1),
            np.stack([m[0], t[:, 1], m[1]], 1),
            np.stack([m[2], m[1], t[:, 2]], 1),
            np.stack([m[0], m[1], m[2]], 1),
        ])
    edges = _make_edges(t, len(x))
    lengths = np.linalg.norm(x[edges[:, 0]] - x[edges[:, 1]], axis=1)
    return DiscreteSurface(len(x), t, edges, lengths, ambient_coords=x,
                           name=f"sphere(level={level})")


def build_surface(kind: str, params: dict | None = None) -> DiscreteSurface:
    """Dispatch on ``kind`` in {flat_torus, annulus, sphere}."""
    params = dict(params or {})
    if kind == "flat_torus":
        tau = params.get("tau", 1j)
        if isinstance(tau, (list, tuple)):
            tau = complex(*tau)
        return flat_torus(int(params.get("n", 16)), tau)
    if kind == "annulus":
        return annulus(float(params.get("r", 0.5)), int(params.get("n_radial", 8)),
                       int(params.get("n_angular", 32)), float(params.get("outer", 1.0)))
    if kind == "sphere":
        return icosphere(int(params.get("level", 2)))
    raise InvalidParameterError(f"unknown surface kind {kind!r}")


# ----------------------------------------------------------------- refine
def refine(surface: DiscreteSurface) -> DiscreteSurface:
    """Split every face 1 -> 4 at edge midpoints of the intrinsic metric."""
    n = surface.n_vertices
    t = surface.triangles
    fe = surface.face_edges
    mid = n + fe  # midpoint vertex of edge opposite vertex k
    m01, m12, m20 = mid[:, 2], mid[:, 0], mid[:, 1]
    new_t = np.concatenate([
        np.stack([t[:, 0], m01, m20], 1),
        np.stack([m01, t[:, 1], m12], 1),
        np.stack([m20, m12, t[:, 2]], 1),
        np.stack([m01, m12, m20], 1),
    ])
    fr = surface.face_frames
    h01 = 0.5 * (fr[:, 0] + fr[:, 1])
    h12 = 0.5 * (fr[:, 1] + fr[:, 2])
    h20 = 0.5 * (fr[:, 2] + fr[:, 0])
    new_frames = np.concatenate([
        np.stack([fr[:, 0], h01, h20], 1),
        np.stack([h01, fr[:, 1], h12], 1),
        np.stack([h20, h12, fr[:, 2]], 1),
        np.stack([h01, h12, h20], 1),
    ])
    n_new = n + surface.n_edges

    planar = None
    if surface.planar_coords is not None:
        # midpoint of edge (a, b) = z_a + (frame_b - frame_a) / 2 from any face
        planar = np.concatenate([surface.planar_coords, np.zeros(surface.n_edges, complex)])
        for k in range(3):
            a, b = _NEXT[k], _PREV[k]
            planar[mid[:, k]] = surface.planar_coords[t[:, a]] + 0.5 * (fr[:, b] - fr[:, a])
        if surface.periods is not None:
            planar = surface._wrap_point(planar)
    ambient = None
    if surface.ambient_coords is not None:
        x = surface.ambient_coords
        ambient = np.concatenate([x, 0.5 * (x[surface.edges[:, 0]] + x[surface.edges[:, 1]])])

    loops = []
    for loop in surface.boundary_loops:
        loop = np.asarray(loop)
        nxt = np.roll(loop, -1)
        mids = n + surface.edge_index(loop, nxt)
        loops.append(np.stack([loop, mids], 1).ravel())

    edges = _make_edges(new_t, n_new)
    keys = edges[:, 0] * n_new + edges[:, 1]
    lengths = np.zeros(len(edges))
    for a, b in ((0, 1), (1, 2), (2, 0)):
        idx = np.searchsorted(keys, _edge_keys(new_t[:, a], new_t[:, b], n_new))
        lengths[idx] = np.abs(new_frames[:, b] - new_frames[:, a])
    return DiscreteSurface(
        n_new, new_t, edges, lengths,
        boundary_loops=tuple(loops),
        node_classes=surface.node_classes,
        planar_coords=planar,
        ambient_coords=ambient,
        periods=surface.periods,
        name=f"refine({surface.name})",
    )


# --------------------------------------------------------------- validate
@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __iter__(self):
        return iter(self.violations)

    def __len__(self) -> int:
        return len(self.violations)


def validate(surface: DiscreteSurface) -> ValidationReport:
    """Check every structural invariant; return the violations found."""
    report = ValidationReport()
    v = report.violations
    t = np.asarray(surface.triangles)
    n = surface.n_vertices
    if t.ndim != 2 or t.shape[1] != 3:
        v.append("triangles: expected an (F, 3) array")
        return report
    if t.size and (t.min() < 0 or t.max() >= n):
        v.append("triangles: vertex id out of range")
        return report
    if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
        v.append("triangles: repeated vertex in a face")

    # directed half-edges: each must be unique, interior ones paired
    d = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]).astype(np.int64)
    dkeys = d[:, 0] * n + d[:, 1]
    uk, counts = np.unique(dkeys, return_counts=True)
    if np.any(counts > 1):
        v.append(f"orientation: {int(np.sum(counts > 1))} directed edge(s) used twice")
    ukeys = _edge_keys(d[:, 0], d[:, 1], n)
    eu, ecount = np.unique(ukeys, return_counts=True)
    if np.any(ecount > 2):
        v.append(f"manifold: {int(np.sum(ecount > 2))} edge(s) with more than two faces")
    if len(eu) != surface.n_edges or np.any(eu != surface._edge_key_table):
        v.append("edges: edge list does not match the triangles")
        return report

    boundary_edges = set(eu[ecount == 1].tolist())
    loop_edges = set()
    for loop in surface.boundary_loops:
        loop = np.asarray(loop)
        k = _edge_keys(loop, np.roll(loop, -1), n)
        loop_edges.update(k.tolist())
        # loop must run with the surface on its left: directed edge present
        fwd = loop.astype(np.int64) * n + np.roll(loop, -1)
        if not np.all(np.isin(fwd, uk)):
            v.append("boundary: loop orientation does not match the faces")
    if boundary_edges != loop_edges:
        v.append("boundary: single-face edges differ from boundary_loops")

    lengths = surface.edge_lengths
    if np.any(~np.isfinite(lengths)) or np.any(lengths <= 0):
        v.append("metric: non-positive edge length")
    a, b, c = surface.face_lengths.T
    bad = (a >= b + c) | (b >= a + c) | (c >= a + b)
    if np.any(bad):
        v.append(f"triangle inequality: violated on {int(bad.sum())} face(s)")

    if surface.is_compact and not bad.any():
        total = surface.area_weights.sum()
        if abs(total - 1.0) > 1e-12:
            v.append(f"area: weights sum to {total!r}, expected 1")

    bmask = surface.boundary_vertex_mask
    for cls in surface.node_classes:
        if len(cls) < 2:
            v.append("node classes: a class has fewer than two members")
        if any(bmask[int(x)] for x in cls):
            v.append("node classes: boundary vertex in a node class")
    return report


# -------------------------------------------------------- remove_subdomain
def remove_subdomain(
    surface: DiscreteSurface, center: int, radius: float
) -> tuple[DiscreteSurface, Subdomain]:
    """Cut the metric disc of ``radius`` around ``center`` out of ``surface``.

    Returns the bordered surface Z minus S and the record of S.
    """
    if not surface.is_compact:
        raise InvalidSubdomainError("remove_subdomain expects a compact surface")
    dist = surface.distances_from(center)
    core = np.flatnonzero(dist < radius)
    in_core = np.zeros(surface.n_vertices, dtype=bool)
    in_core[core] = True
    if not in_core[surface.triangles].all(axis=1).any():
        raise InvalidSubdomainError("empty subdomain: radius covers no face")
    s_face_mask = in_core[surface.triangles].any(axis=1)
    s_faces = np.flatnonzero(s_face_mask)
    o_faces = np.flatnonzero(~s_face_mask)
    if len(o_faces) == 0:
        raise InvalidSubdomainError("radius swallows the whole surface")

    t_out = surface.triangles[o_faces]
    n = surface.n_vertices
    d = np.concatenate([t_out[:, [0, 1]], t_out[:, [1, 2]], t_out[:, [2, 0]]]).astype(np.int64)
    keys = set((d[:, 0] * n + d[:, 1]).tolist())
    bnd = [(a, b) for a, b in d.tolist() if b * n + a not in keys]
    succ: dict[int, int] = {}
    for a, b in bnd:
        if a in succ:
            raise InvalidSubdomainError("subdomain boundary is not a simple loop")
        succ[a] = b
    start = min(succ)
    loop = [start]
    while succ[loop[-1]] != start:
        loop.append(succ[loop[-1]])
        if len(loop) > len(succ):
            raise InvalidSubdomainError("subdomain boundary is not a simple loop")
    if len(loop) != len(succ):
        raise InvalidSubdomainError("subdomain boundary has several components")
    gamma = np.asarray(loop, dtype=np.int64)

    s_vertices = np.unique(surface.triangles[s_faces])
    interior = np.setdiff1d(s_vertices, gamma)
    s_edges = np.unique(_edge_keys(
        np.concatenate([surface.triangles[s_faces][:, k] for k in range(3)]),
        np.concatenate([surface.triangles[s_faces][:, (k + 1) % 3] for k in range(3)]), n))
    chi = len(s_vertices) - len(s_edges) + len(s_faces)
    if chi != 1:
        raise InvalidSubdomainError(f"subdomain is not a disc (Euler characteristic {chi})")
    marked = {int(x) for cls in surface.node_classes for x in cls}
    if marked & set(s_vertices.tolist()):
        raise InvalidSubdomainError("subdomain swallows marked node vertices")

    gmask = np.zeros(n, dtype=bool)
    gmask[gamma] = True
    collar = s_faces[gmask[surface.triangles[s_faces]].any(axis=1)]

    outer_vertices = np.unique(t_out)
    remap = -np.ones(n, dtype=np.int64)
    remap[outer_vertices] = np.arange(len(outer_vertices))
    new_t = remap[t_out]
    edges = _make_edges(new_t, len(outer_vertices))
    old_e = surface.edge_index(outer_vertices[edges[:, 0]], outer_vertices[edges[:, 1]])
    bordered = DiscreteSurface(
        len(outer_vertices), new_t, edges, surface.edge_lengths[old_e],
        boundary_loops=(remap[gamma],),
        node_classes=tuple(tuple(int(remap[x]) for x in c) for c in surface.node_classes),
        planar_coords=None if surface.planar_coords is None else surface.planar_coords[outer_vertices],
        ambient_coords=None if surface.ambient_coords is None else surface.ambient_coords[outer_vertices],
        periods=surface.periods,
        name=f"{surface.name} minus disc",
    )
    sub = Subdomain(surface, interior, s_faces, gamma, collar, outer_vertices, o_faces,
                    int(center), float(radius))
    return bordered, sub


# ------------------------------------------------------------------- JSON
def surface_to_dict(surface: DiscreteSurface) -> dict:
    verts = []
    for i in range(surface.n_vertices):
        rec: dict = {"id": i}
        if surface.ambient_coords is not None:
            rec["ambient"] = [float(x) for x in surface.ambient_coords[i]]
        verts.append(rec)
    out = {
        "vertices": verts,
        "triangles": surface.triangles.tolist(),
        "edge_lengths": [[int(a), int(b), float(l)]
                         for (a, b), l in zip(surface.edges, surface.edge_lengths)],
        "boundary_loops": [np.asarray(l).tolist() for l in surface.boundary_loops],
        "node_classes": [list(map(int, c)) for c in surface.node_classes],
    }
    if surface.planar_coords is not None:
        out["planar_coords"] = [[float(z.real), float(z.imag)] for z in surface.planar_coords]
    if surface.periods is not None:
        out["periods"] = [[float(w.real), float(w.imag)] for w in surface.periods]
    out["name"] = surface.name
    return out


def surface_from_dict(data: dict) -> DiscreteSurface:
    n = len(data["vertices"])
    tris = np.asarray(data["triangles"], dtype=np.int64).reshape(-1, 3)
    el = data["edge_lengths"]
    edges = np.asarray([[e[0], e[1]] for e in el], dtype=np.int64).reshape(-1, 2)
    lengths = np.asarray([e[2] for e in el], dtype=float)
    edges = np.sort(edges, axis=1)
    order = np.argsort(edges[:, 0] * n + edges[:, 1], kind="stable")
    ambient = None
    if data["vertices"] and "ambient" in data["vertices"][0]:
        ambient = np.asarray([v["ambient"] for v in data["vertices"]], dtype=float)
    planar = None
    if data.get("planar_coords") is not None:
        planar = np.asarray([complex(a, b) for a, b in data["planar_coords"]])
    periods = None
    if data.get("periods") is not None:
        periods = tuple(complex(a, b) for a, b in data["periods"])
    return DiscreteSurface(
        n, tris, edges[order], lengths[order],
        boundary_loops=tuple(np.asarray(l, dtype=np.int64) for l in data.get("boundary_loops", [])),
        node_classes=tuple(tuple(int(x) for x in c) for c in data.get("node_classes", [])),
        planar_coords=planar, ambient_coords=ambient, periods=periods,
        name=data.get("name", "surface"),
    )


def save_surface(surface: DiscreteSurface, path: str | Path) -> None:
    Path(path).write_text(json.dumps(surface_to_dict(surface)), encoding="utf-8")


def load_surface(path: str | Path) -> DiscreteSurface:
    return surface_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def with_node_classes(surface: DiscreteSurface, classes: Sequence[Sequence[int]]) -> DiscreteSurface:
    """Copy of ``surface`` carrying the given node classes (tests build these by hand)."""
    return DiscreteSurface(
        surface.n_vertices, surface.triangles, surface.edges, surface.edge_lengths,
        boundary_loops=surface.boundary_loops,
        node_classes=tuple(tuple(int(x) for x in c) for c in classes),
        planar_coords=surface.planar_coords, ambient_coords=surface.ambient_coords,
        periods=surface.periods, name=surface.name,
    )
