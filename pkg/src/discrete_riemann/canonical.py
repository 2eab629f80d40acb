"""Canonical maps into CP² and numerical almost-embedding predicates.

A triple of face one-forms ``(θ₀, θ₁, θ₂)`` gives, on every face, the
homogeneous point ``[c₀ : c₁ : c₂]`` of its coefficients; the ratio is frame
independent.  Image distances use the Fubini–Study chordal metric, computed
through the embedding ``p -> p p*`` into Hermitian matrices, whose Frobenius
distance is exactly √2 times the chordal distance.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .calculus import FaceOneForm, del_, laplacian
from .errors import ArityError, InvalidParameterError, ProbeSelectionError, ShapeError
from .surface import DiscreteSurface

__all__ = [
    "PredicateTolerances",
    "CanonicalMap",
    "PredicateReport",
    "DegreeResult",
    "PerturbationResult",
    "chordal",
    "canonical_map",
    "embedding_predicates",
    "degree",
    "bishop_reduce",
    "perturbation_search",
]

EMBEDDING = "embedding"
_MAX_VIOLATIONS = 400
ALMOST = "almost_embedding"
FAIL = "fail"


@dataclass(frozen=True)
class PredicateTolerances:
    """Relative tolerances; image distances are compared with the local image step."""

    base: float = 1e-8
    nonvanishing: float = 1e-3
    immersion: float = 0.05
    injective: float = 0.1
    proper: float = 0.25
    exceptional: float = 0.5
    candidate: float = 1.5
    crossing: float = 0.15
    exceptional_cap: int = 12
    event_span: int = 6


def chordal(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Fubini–Study chordal distance between homogeneous vectors (last axis)."""
    num = np.abs(np.sum(np.conj(p) * q, axis=-1)) ** 2
    den = np.sum(np.abs(p) ** 2, axis=-1) * np.sum(np.abs(q) ** 2, axis=-1)
    return np.sqrt(np.clip(1.0 - num / den, 0.0, None))


def _normalize(c: np.ndarray):
    """Unit vectors with the largest entry real positive, and that entry's index."""
    norm = np.linalg.norm(c, axis=1)
    chart = np.argmax(np.abs(c), axis=1)
    lead = c[np.arange(len(c)), chart]
    with np.errstate(invalid="ignore", divide="ignore"):
        phase = np.abs(lead) / lead
        t = c * (phase / norm)[:, None]
    return t, chart


def _veronese(t: np.ndarray) -> np.ndarray:
    """Real 9-vectors of ``t t*`` for unit rows ``t``."""
    m = t[:, :, None] * np.conj(t[:, None, :])
    iu = np.triu_indices(3, 1)
    diag = np.real(m[:, [0, 1, 2], [0, 1, 2]])
    off = m[:, iu[0], iu[1]] * np.sqrt(2.0)
    return np.concatenate([diag, off.real, off.imag], axis=1)


def _segment_distance(a0, a1, b0, b1) -> np.ndarray:
    """Distance between segments [a0, a1] and [b0, b1] (row-wise, any dimension)."""
    d1 = a1 - a0
    d2 = b1 - b0
    r = a0 - b0
    a = np.sum(d1 * d1, axis=1)
    e = np.sum(d2 * d2, axis=1)
    f = np.sum(d2 * r, axis=1)
    c = np.sum(d1 * r, axis=1)
    b = np.sum(d1 * d2, axis=1)
    denom = a * e - b * b
    tiny = 1e-300
    s = np.where(denom > tiny, np.clip((b * f - c * e) / np.maximum(denom, tiny), 0, 1), 0.0)
    t = (b * s + f) / np.maximum(e, tiny)
    s = np.where(t < 0, np.clip(-c / np.maximum(a, tiny), 0, 1), s)
    s = np.where(t > 1, np.clip((b - c) / np.maximum(a, tiny), 0, 1), s)
    t = np.clip(t, 0, 1)
    diff = a0 + d1 * s[:, None] - (b0 + d2 * t[:, None])
    return np.linalg.norm(diff, axis=1)


def _point_segment_distance(p, a0, a1) -> np.ndarray:
    """Distance from each row of ``p`` to the nearest of the segments ``[a0, a1]``."""
    d = a1 - a0
    dd = np.maximum(np.sum(d * d, axis=1), 1e-300)
    out = np.full(len(p), np.inf)
    for k in range(0, len(a0), 256):
        sl = slice(k, k + 256)
        w = p[:, None, :] - a0[None, sl, :]
        t = np.clip(np.sum(w * d[None, sl, :], axis=2) / dd[None, sl], 0, 1)
        diff = w - t[:, :, None] * d[None, sl, :]
        out = np.minimum(out, np.linalg.norm(diff, axis=2).min(axis=1))
    return out


@dataclass(frozen=True, eq=False)
class CanonicalMap:
    """Samples of ``[θ₀ : θ₁ : θ₂]`` on faces and on boundary edges.

    Boundary edges inherit the coefficients of their single face.  Faces in
    the base locus carry NaN samples.
    """

    surface: DiscreteSurface
    forms: tuple
    face_points: np.ndarray
    face_chart: np.ndarray
    base_locus: np.ndarray
    boundary_faces: np.ndarray
    boundary_loop: np.ndarray
    boundary_vertices: np.ndarray
    scale: float

    @property
    def coeffs(self) -> np.ndarray:
        return np.stack([f.coeffs for f in self.forms], axis=1)

    @property
    def boundary_points(self) -> np.ndarray:
        return self.face_points[self.boundary_faces]

    @property
    def boundary_chart(self) -> np.ndarray:
        return self.face_chart[self.boundary_faces]

    @cached_property
    def face_embedded(self) -> np.ndarray:
        return _veronese(self.face_points)

    @cached_property
    def valid(self) -> np.ndarray:
        v = np.ones(self.surface.n_faces, dtype=bool)
        v[self.base_locus] = False
        return v

    @cached_property
    def face_step(self) -> np.ndarray:
        """Mean image distance (Frobenius) from each face to its neighbours."""
        A = self.surface.face_adjacency.tocoo()
        E = self.face_embedded
        ok = self.valid[A.row] & self.valid[A.col]
        d = np.linalg.norm(E[A.row[ok]] - E[A.col[ok]], axis=1)
        tot = np.bincount(A.row[ok], weights=d, minlength=self.surface.n_faces)
        cnt = np.bincount(A.row[ok], minlength=self.surface.n_faces)
        with np.errstate(invalid="ignore"):
            return tot / cnt

    def affine(self, sites: np.ndarray | None = None) -> np.ndarray:
        """Affine coordinates in each sample's own chart: the two other entries / chart entry."""
        t = self.face_points if sites is None else self.face_points[sites]
        ch = self.face_chart if sites is None else self.face_chart[sites]
        rows = np.arange(len(t))
        others = np.array([[1, 2], [0, 2], [0, 1]])[ch]
        lead = t[rows, ch]
        return np.stack([t[rows, others[:, 0]] / lead, t[rows, others[:, 1]] / lead], axis=1)

    def samples_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["site", "kind", "chart", "a1_re", "a1_im", "a2_re", "a2_im"])
        aff = self.affine()
        row = lambda a: [repr(float(a[0].real)), repr(float(a[0].imag)),  # noqa: E731
                         repr(float(a[1].real)), repr(float(a[1].imag))]
        for f in range(self.surface.n_faces):
            w.writerow([f, "face", int(self.face_chart[f])] + row(aff[f]))
        for k, f in enumerate(self.boundary_faces):
            w.writerow([k, "boundary_edge", int(self.face_chart[f])] + row(aff[f]))
        return buf.getvalue()


def canonical_map(theta0: FaceOneForm, theta1: FaceOneForm, theta2: FaceOneForm,
                  tol: PredicateTolerances = PredicateTolerances()) -> CanonicalMap:
    """Projective samples of the triple; faces with all three coefficients tiny form the base locus."""
    forms = (theta0, theta1, theta2)
    s = theta0.surface
    if any(f.surface is not s for f in forms):
        raise ShapeError("forms live on different surfaces")
    c = np.stack([f.coeffs for f in forms], axis=1)
    norms = np.linalg.norm(c, axis=1)
    scale = float(np.median(norms))
    if scale == 0.0:
        scale = float(norms.max())
    base = norms <= tol.base * scale
    if base.all():
        raise InvalidParameterError("base locus is the whole surface")
    t, chart = _normalize(np.where(base[:, None], 1.0, c))
    t[base] = np.nan

    bfaces, bloop, bverts = [], [], []
    for k, loop in enumerate(s.boundary_loops):
        loop = np.asarray(loop)
        nxt = np.roll(loop, -1)
        e = s.edge_index(loop, nxt)
        ef = s.edge_faces[e]
        bfaces.append(np.where(ef[:, 0] >= 0, ef[:, 0], ef[:, 1]))
        bloop.append(np.full(len(loop), k))
        bverts.append(loop)
    cat = (lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt))
    return CanonicalMap(s, forms, t, chart, np.flatnonzero(base), cat(bfaces, np.int64),
                        cat(bloop, np.int64), cat(bverts, np.int64), scale)


# ------------------------------------------------------------- predicates
@dataclass
class PredicateReport:
    boundary_nonvanishing: bool
    nonvanishing_margin: float
    immersion: bool
    immersion_margin: float
    boundary_injective: bool
    injective_margin: float
    proper: bool
    proper_margin: float
    exceptional_set: list
    verdict: str
    reasons: list = field(default_factory=list)
    exceptional_events: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "boundary_nonvanishing": bool(self.boundary_nonvanishing),
            "nonvanishing_margin": float(self.nonvanishing_margin),
            "immersion": bool(self.immersion),
            "immersion_margin": float(self.immersion_margin),
            "boundary_injective": bool(self.boundary_injective),
            "injective_margin": float(self.injective_margin),
            "proper": bool(self.proper),
            "proper_margin": float(self.proper_margin),
            "exceptional_set": [[int(a), int(b)] for a, b in self.exceptional_set],
            "verdict": self.verdict,
            "reasons": list(self.reasons),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def passing(self) -> bool:
        return self.verdict in (EMBEDDING, ALMOST) and self.boundary_nonvanishing


def _hop_close(surface: DiscreteSurface, hops: int) -> sparse.csr_matrix:
    """Face-by-face matrix: nonzero when two faces have vertices within ``hops`` edges."""
    n = surface.n_vertices
    A = surface.adjacency.astype(bool).astype(np.int32) + sparse.identity(n, dtype=np.int32, format="csr")
    R = sparse.identity(n, dtype=np.int32, format="csr")
    for _ in range(hops):
        R = (R @ A).astype(bool).astype(np.int32)
    F = surface.n_faces
    T = sparse.csr_matrix((np.ones(3 * F, dtype=np.int32),
                           (np.repeat(np.arange(F), 3), surface.triangles.ravel())), shape=(F, n))
    return (T @ R @ T.T).astype(bool).tocsr()


def _pair_flags(M: sparse.csr_matrix, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if len(a) == 0:
        return np.zeros(0, dtype=bool)
    return np.asarray(M[a, b]).ravel().astype(bool)


def _interior_faces(surface: DiscreteSurface, rings: int) -> np.ndarray:
    """Faces whose vertices are all more than ``rings`` hops from the boundary."""
    if surface.is_compact:
        return np.ones(surface.n_faces, dtype=bool)
    h = surface.hop_distance(surface.boundary_vertices)
    return (h[surface.triangles] > rings).all(axis=1)


def _boundary_segments(m: CanonicalMap):
    """Consecutive boundary sample pairs as segments in the embedded image."""
    E = m.face_embedded[m.boundary_faces]
    starts, ends, loops, pos = [], [], [], []
    offset = 0
    for k, loop in enumerate(m.surface.boundary_loops):
        n = len(loop)
        idx = offset + np.arange(n)
        starts.append(idx)
        ends.append(offset + (np.arange(n) + 1) % n)
        loops.append(np.full(n, k))
        pos.append(np.arange(n))
        offset += n
    return E, np.concatenate(starts), np.concatenate(ends), np.concatenate(loops), np.concatenate(pos)


def embedding_predicates(m: CanonicalMap, tol: PredicateTolerances = PredicateTolerances()) -> PredicateReport:
    """Evaluate the almost-embedding predicate suite on a bordered surface."""
    s = m.surface
    if s.is_compact:
        raise InvalidParameterError("embedding predicates need a bordered surface")
    reasons = []
    c = m.coeffs

    # boundary nonvanishing of θ₀
    bc = c[m.boundary_faces]
    bscale = float(np.max(np.linalg.norm(bc, axis=1)))
    nv_margin = float(np.min(np.abs(bc[:, 0])) / bscale) if bscale > 0 else 0.0
    nonvanishing = nv_margin > tol.nonvanishing
    if not nonvanishing:
        reasons.append(f"boundary_nonvanishing: min |θ₀| / scale = {nv_margin:.3e}")

    valid = m.valid
    E = m.face_embedded

    # immersion: chordal speed across shared edges, relative to its median
    ef = s.edge_faces
    inner = (ef[:, 1] >= 0)
    f, g = ef[inner, 0], ef[inner, 1]
    ok = valid[f] & valid[g]
    f, g, e_ids = f[ok], g[ok], np.flatnonzero(inner)[ok]
    dist = _centroid_distance(s, f, g, e_ids)
    speed = np.linalg.norm(E[f] - E[g], axis=1) / dist
    tot = np.bincount(np.concatenate([f, g]), weights=np.concatenate([speed, speed]), minlength=s.n_faces)
    cnt = np.bincount(np.concatenate([f, g]), minlength=s.n_faces)
    has = cnt > 0
    per_face = tot[has] / cnt[has]
    med = float(np.median(per_face)) if len(per_face) else 0.0
    imm_margin = float(per_face.min() / med) if med > 0 else 0.0
    immersion = imm_margin > tol.immersion and len(m.base_locus) == 0
    if not immersion:
        reasons.append(f"immersion: min speed / median = {imm_margin:.3e}")

    # boundary injectivity on segments at least two edges apart
    Eb, st, en, lp, ps = _boundary_segments(m)
    seg_len = np.linalg.norm(Eb[en] - Eb[st], axis=1)
    inj_margin, bad_pairs = _segment_clearance(Eb, st, en, lp, ps, seg_len, m.surface)
    boundary_injective = inj_margin > tol.injective
    if not boundary_injective:
        reasons.append(f"boundary_injective: min separation / step = {inj_margin:.3e}")

    # properness: interior samples away from the collar stay off the boundary image
    deep = _interior_faces(s, 1) & valid
    step = m.face_step
    ids = np.flatnonzero(deep)
    if len(ids):
        d = _point_segment_distance(E[ids], Eb[st], Eb[en])
        local = np.maximum(step[ids], 1e-300)
        proper_margin = float(np.min(d / local))
    else:
        proper_margin = np.inf
    proper = proper_margin > tol.proper
    if not proper:
        reasons.append(f"proper: min clearance / step = {proper_margin:.3e}")

    events = _exceptional_events(m, tol)
    exceptional = [ev["pair"] for ev in events]
    localized = all(ev["span"] <= tol.event_span for ev in events)

    core = nonvanishing and immersion and boundary_injective and proper
    if core and not events:
        verdict = EMBEDDING
    elif core and localized and len(events) <= tol.exceptional_cap:
        verdict = ALMOST
    else:
        verdict = FAIL
        if events and not localized:
            reasons.append("exceptional_set: collisions are not isolated")
        elif len(events) > tol.exceptional_cap:
            reasons.append(f"exceptional_set: {len(events)} events exceed cap {tol.exceptional_cap}")
    return PredicateReport(nonvanishing, nv_margin, immersion, imm_margin, boundary_injective,
                           inj_margin, proper, proper_margin, exceptional, verdict, reasons, events)


def _centroid_offset(s: DiscreteSurface, f, g, e_ids) -> np.ndarray:
    """Centroid of ``g`` minus centroid of ``f``, in ``f``'s frame, unfolded across their shared edge."""
    i, j = s.edges[e_ids].T
    fr_f, fr_g = s.face_frames[f], s.face_frames[g]
    tf, tg = s.triangles[f], s.triangles[g]
    rows = np.arange(len(f))
    wi = fr_f[rows, np.argmax(tf == i[:, None], axis=1)]
    wj = fr_f[rows, np.argmax(tf == j[:, None], axis=1)]
    ui = fr_g[rows, np.argmax(tg == i[:, None], axis=1)]
    uj = fr_g[rows, np.argmax(tg == j[:, None], axis=1)]
    rot = (wj - wi) / (uj - ui)
    cg = wi + (fr_g.mean(axis=1) - ui) * rot
    return cg - fr_f.mean(axis=1)


def _centroid_distance(s: DiscreteSurface, f, g, e_ids) -> np.ndarray:
    return np.abs(_centroid_offset(s, f, g, e_ids))


def _face_jacobians(m: CanonicalMap):
    """Least-squares real Jacobian (9 x 2) of the embedded image per face, and the mean neighbour spacing."""
    s = m.surface
    ef = s.edge_faces
    inner = np.flatnonzero(ef[:, 1] >= 0)
    f, g = ef[inner, 0], ef[inner, 1]
    ok = m.valid[f] & m.valid[g]
    f, g, e = f[ok], g[ok], inner[ok]
    off_fg = _centroid_offset(s, f, g, e)
    off_gf = _centroid_offset(s, g, f, e)
    src = np.concatenate([f, g])
    off = np.concatenate([off_fg, off_gf])
    X = np.stack([off.real, off.imag], axis=1)
    dE = m.face_embedded[np.concatenate([g, f])] - m.face_embedded[src]
    F = s.n_faces
    XtX = np.zeros((F, 2, 2))
    XtE = np.zeros((F, 2, dE.shape[1]))
    np.add.at(XtX, src, X[:, :, None] * X[:, None, :])
    np.add.at(XtE, src, X[:, :, None] * dE[:, None, :])
    spacing = np.bincount(src, weights=np.abs(off), minlength=F) / np.maximum(np.bincount(src, minlength=F), 1)
    det = XtX[:, 0, 0] * XtX[:, 1, 1] - XtX[:, 0, 1] ** 2
    good = det > 1e-12 * np.maximum(spacing, 1e-300) ** 4
    J = np.zeros((F, dE.shape[1], 2))
    J[good] = np.transpose(np.linalg.solve(XtX[good], XtE[good]), (0, 2, 1))
    return J, spacing, good


def _linear_gap(E, J, spacing, a, b):
    """Closest approach of the linearised images of faces ``a`` and ``b``.

    Returns the residual distance and the parameter offsets relative to each
    face's neighbour spacing.
    """
    M = np.concatenate([J[a], -J[b]], axis=2)  # (k, 9, 4)
    rhs = E[b] - E[a]
    Gm = np.einsum("kij,kil->kjl", M, M)
    Gm += 1e-12 * np.trace(Gm, axis1=1, axis2=2)[:, None, None] * np.eye(4)
    sol = np.linalg.solve(Gm, np.einsum("kij,ki->kj", M, rhs)[..., None])[..., 0]
    resid = np.linalg.norm(np.einsum("kij,kj->ki", M, sol) - rhs, axis=1)
    xa = np.linalg.norm(sol[:, :2], axis=1) / np.maximum(spacing[a], 1e-300)
    xb = np.linalg.norm(sol[:, 2:], axis=1) / np.maximum(spacing[b], 1e-300)
    return resid, xa, xb


def _segment_clearance(Eb, st, en, lp, ps, seg_len, surface):
    """Minimum over far-apart boundary segment pairs of distance / local step."""
    n = len(st)
    if n == 0:
        return np.inf, []
    mids = 0.5 * (Eb[st] + Eb[en])
    radius = 4.0 * float(seg_len.max())
    tree = cKDTree(mids)
    pairs = tree.query_pairs(radius, output_type="ndarray").astype(np.int64).reshape(-1, 2)
    loop_len = np.bincount(lp)
    if len(pairs):
        a, b = pairs.T
        same = lp[a] == lp[b]
        gap = np.abs(ps[a] - ps[b])
        gap = np.minimum(gap, loop_len[lp[a]] - gap)
        keep = ~same | (gap >= 2)
        a, b = a[keep], b[keep]
    else:
        a = b = np.zeros(0, dtype=np.int64)
    cap = radius / max(float(seg_len.max()), 1e-300)
    if len(a) == 0:
        return cap, []
    d = _segment_distance(Eb[st[a]], Eb[en[a]], Eb[st[b]], Eb[en[b]])
    local = np.maximum(0.5 * (seg_len[a] + seg_len[b]), 1e-300)
    ratio = d / local
    k = int(np.argmin(ratio))
    return float(min(ratio[k], cap)), [(int(a[k]), int(b[k]))]


def _close_pairs(X: np.ndarray, radii: np.ndarray):
    """Index pairs ``a < b`` with ``|X_a − X_b| < max(radii_a, radii_b)``."""
    hits = cKDTree(X).query_ball_point(X, radii)
    a = np.repeat(np.arange(len(X)), [len(h) for h in hits])
    b = np.concatenate([np.asarray(h, dtype=np.int64) for h in hits]) if len(hits) else np.zeros(0, np.int64)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    key = np.unique(lo[lo < hi] * len(X) + hi[lo < hi])
    return key // len(X), key % len(X)


def _exceptional_events(m: CanonicalMap, tol: PredicateTolerances) -> list[dict]:
    """Interior face pairs with nearly equal images but far apart on the surface, clustered."""
    s = m.surface
    deep = _interior_faces(s, 0) & m.valid
    ids = np.flatnonzero(deep)
    if len(ids) < 2:
        return []
    E = m.face_embedded[ids]
    step = m.face_step[ids]
    reach = max(tol.exceptional, tol.candidate)
    a, b = _close_pairs(E, reach * np.nan_to_num(step))
    if len(a) == 0:
        return []
    d = np.linalg.norm(E[a] - E[b], axis=1)
    local = np.maximum(step[a], step[b])
    cand = d < reach * local
    a, b, d, local = a[cand], b[cand], d[cand], local[cand]
    keep = d < tol.exceptional * local
    # samples are one per face: also accept pairs whose linearised images cross
    # inside the two faces' cells
    test = ~keep
    if test.any():
        J, spacing, good = _face_jacobians(m)
        fa_, fb_ = ids[a[test]], ids[b[test]]
        resid, xa, xb = _linear_gap(m.face_embedded, J, spacing, fa_, fb_)
        cross = (good[fa_] & good[fb_] & (resid <= tol.crossing * np.minimum(step[a[test]], step[b[test]]))
                 & (xa <= 1.0) & (xb <= 1.0))
        keep[np.flatnonzero(test)[cross]] = True
    a, b, d = a[keep], b[keep], d[keep]
    if len(a) == 0:
        return []
    fa, fb = ids[a], ids[b]
    near2 = _hop_close(s, 2)
    far = ~_pair_flags(near2, fa, fb)
    fa, fb, d = fa[far], fb[far], d[far]
    if len(fa) == 0:
        return []
    lo, hi = np.minimum(fa, fb), np.maximum(fa, fb)
    n = len(lo)
    if n > _MAX_VIOLATIONS:
        # a collision curve, not a finite set: report it as one spread-out event
        k = int(np.argmin(d))
        return [{"pair": (int(lo[k]), int(hi[k])), "distance": float(d[k]),
                 "n_pairs": int(n), "span": _event_span(s, np.unique(np.concatenate([lo, hi])),
                                                         int(lo[k]), int(hi[k]))}]
    near3 = _hop_close(s, 3)
    # link two violating pairs when both ends are close, in either order
    ii, jj = np.triu_indices(n, 1)
    same = _pair_flags(near3, lo[ii], lo[jj]) & _pair_flags(near3, hi[ii], hi[jj])
    swap = _pair_flags(near3, lo[ii], hi[jj]) & _pair_flags(near3, hi[ii], lo[jj])
    link = same | swap
    G = sparse.coo_matrix((np.ones(link.sum()), (ii[link], jj[link])), shape=(n, n))
    ncomp, label = csgraph.connected_components(G, directed=False)
    events = []
    for c in range(ncomp):
        members = np.flatnonzero(label == c)
        best = members[np.argmin(d[members])]
        faces = np.unique(np.concatenate([lo[members], hi[members]]))
        span = _event_span(s, faces, int(lo[best]), int(hi[best]))
        events.append({
            "pair": (int(lo[best]), int(hi[best])),
            "distance": float(d[best]),
            "n_pairs": int(len(members)),
            "span": span,
        })
    events.sort(key=lambda ev: ev["pair"])
    return events


def _event_span(s: DiscreteSurface, faces: np.ndarray, f0: int, g0: int) -> int:
    """Largest hop distance from a colliding face to the nearer of the two anchor faces."""
    src = np.unique(np.concatenate([s.triangles[f0], s.triangles[g0]]))
    h = s.hop_distance(src)
    return int(np.max(h[s.triangles[faces]].min(axis=1)))


# ------------------------------------------------------------------- degree
@dataclass
class DegreeResult:
    degree: int
    probe_faces: list
    counts: list

    def to_dict(self) -> dict:
        return {"degree": int(self.degree), "probe_faces": [int(f) for f in self.probe_faces],
                "counts": [int(c) for c in self.counts]}


def _select_probes(m: CanonicalMap, report: PredicateReport | None, n_probes: int, seed: int):
    s = m.surface
    cand = _interior_faces(s, 2) & m.valid
    ids = np.flatnonzero(cand)
    if len(ids) == 0:
        return []
    E = m.face_embedded
    step = m.face_step
    clear = np.ones(len(ids), dtype=bool)
    if not s.is_compact:
        Eb, st, en, _, _ = _boundary_segments(m)
        d = _point_segment_distance(E[ids], Eb[st], Eb[en])
        clear &= d > 3 * step[ids]
    if report is not None:
        for f, g in report.exceptional_set:
            for x in (f, g):
                clear &= np.linalg.norm(E[ids] - E[x], axis=1) > 6 * step[ids]
    ids = ids[clear]
    if len(ids) == 0:
        return []
    rng = np.random.default_rng(seed)
    k = min(n_probes, len(ids))
    return sorted(rng.choice(ids, size=k, replace=False).tolist())


def degree(m: CanonicalMap, probes: Sequence[int] | None = None, *,
           report: PredicateReport | None = None, n_probes: int = 16, seed: int = 0,
           radius: float = 1.0, link_hops: int = 3) -> DegreeResult:
    """Argument-principle degree: max over probes of the number of preimage clusters.

    Probes are face ids whose images serve as target points.  Faces whose
    image lies within ``radius`` local steps of a probe are preimages; they are
    grouped by single linkage at ``link_hops`` edges.
    """
    if probes is None or len(probes) == 0:
        probes = _select_probes(m, report, n_probes, seed)
        if not probes:
            raise ProbeSelectionError("no interior face image clears the boundary image")
    s = m.surface
    E = m.face_embedded
    step = m.face_step
    valid = np.flatnonzero(m.valid)
    tree = cKDTree(E[valid])
    near = _hop_close(s, link_hops)
    counts = []
    for f in probes:
        q = E[int(f)]
        cand = valid[tree.query_ball_point(q, radius * float(np.nanmax(step)))]
        dist = np.linalg.norm(E[cand] - q, axis=1)
        pre = cand[dist <= radius * np.maximum(step[cand], step[int(f)])]
        if len(pre) == 0:
            counts.append(0)
            continue
        sub = near[pre][:, pre]
        ncomp, _ = csgraph.connected_components(sub, directed=False)
        counts.append(int(ncomp))
    return DegreeResult(int(max(counts)), [int(p) for p in probes], counts)


# ------------------------------------------------------------ reduction
def bishop_reduce(theta: Sequence[FaceOneForm], a: Sequence[complex]) -> list[FaceOneForm]:
    """``(θ₀, θ₁ − a₁θ_{n+1}, ..., θ_n − a_nθ_{n+1})`` from ``n + 2`` forms and ``n`` numbers."""
    theta = list(theta)
    a = list(a)
    n = len(a)
    if n < 2 or len(theta) != n + 2:
        raise ArityError(f"need n >= 2 coefficients and n + 2 forms, got {n} and {len(theta)}")
    last = theta[-1]
    return [theta[0]] + [theta[k] - a[k - 1] * last for k in range(1, n + 1)]


# ---------------------------------------------------------- perturbation
@dataclass
class PerturbationResult:
    fields: tuple
    report: PredicateReport
    coefficients: np.ndarray | None
    draws: int
    passing: bool

    def record(self) -> dict:
        return {
            "draws": int(self.draws),
            "passing": bool(self.passing),
            "coefficients": None if self.coefficients is None else
            [[[float(x.real), float(x.imag)] for x in row] for row in self.coefficients],
            "max_abs": 0.0 if self.coefficients is None else float(np.max(np.abs(self.coefficients), initial=0.0)),
        }


def _score(rep: PredicateReport) -> tuple:
    flags = [rep.boundary_nonvanishing, rep.immersion, rep.boundary_injective, rep.proper]
    return (sum(flags), rep.verdict != FAIL,
            min(rep.nonvanishing_margin, rep.immersion_margin, rep.injective_margin, rep.proper_margin))


def perturbation_search(
    surface: DiscreteSurface,
    U: Sequence[np.ndarray],
    dictionary: Sequence[np.ndarray],
    budget: tuple[float, int],
    seed: int = 0,
    tol: PredicateTolerances = PredicateTolerances(),
    harmonic_tol: float = 1e-8,
    harmonic_mask: np.ndarray | None = None,
    maps=None,
) -> PerturbationResult:
    """Search ``V_ℓ = U_ℓ + Σ_k ε_ℓk D_k`` with ``|ε| <= δ`` for an almost embedding.

    The zero perturbation is tried first; then ``max_draws`` uniform draws in
    ``[-δ, δ]`` from ``numpy.random.default_rng(seed)``.  The first passing
    triple is returned, otherwise the best one found with a failing verdict.
    ``maps`` optionally turns the three fields into the three forms
    (default: ``del_`` on ``surface``).
    """
    delta, max_draws = float(budget[0]), int(budget[1])
    if delta < 0 or max_draws < 0:
        raise InvalidParameterError("budget must be non-negative")
    U = [np.asarray(u) for u in U]
    if len(U) != 3:
        raise ArityError("perturbation_search needs three fields")
    D = [np.asarray(d) for d in dictionary]
    mask = harmonic_mask
    if mask is None:
        mask = ~surface.boundary_vertex_mask
    for k, d in enumerate(D):
        lap = laplacian(surface, d) * surface.area_weights
        res = float(np.max(np.abs(lap[mask]), initial=0.0))
        if res > harmonic_tol * max(1.0, float(np.max(np.abs(d)))):
            raise InvalidParameterError(f"dictionary entry {k} is not harmonic (residual {res:.3e})")
    to_forms = maps or (lambda fields: [del_(surface, u) for u in fields])

    def evaluate(fields):
        forms = to_forms(fields)
        try:
            cm = canonical_map(*forms, tol=tol)
        except InvalidParameterError:
            return None
        return embedding_predicates(cm, tol)

    rep = evaluate(U)
    best = PerturbationResult(tuple(U), rep, None, 0, bool(rep and rep.passing))
    if best.passing or not D or delta == 0 or max_draws == 0:
        if rep is None:
            rep = _degenerate_report()
            best = PerturbationResult(tuple(U), rep, None, 0, False)
        return best
    rng = np.random.default_rng(seed)
    best_score = _score(rep) if rep is not None else (-1, False, -np.inf)
    for draw in range(1, max_draws + 1):
        eps = rng.uniform(-delta, delta, size=(3, len(D)))
        V = [U[l] + sum(eps[l, k] * D[k] for k in range(len(D))) for l in range(3)]
        r = evaluate(V)
        if r is None:
            continue
        if r.passing:
            return PerturbationResult(tuple(V), r, eps, draw, True)
        sc = _score(r)
        if sc > best_score:
            best_score = sc
            best = PerturbationResult(tuple(V), r, eps, draw, False)
    best.draws = max_draws
    if best.report is None:
        best.report = _degenerate_report()
    return best


def _degenerate_report() -> PredicateReport:
    return PredicateReport(False, 0.0, False, 0.0, False, 0.0, False, 0.0, [], FAIL,
                           ["base locus covers the whole surface"])
