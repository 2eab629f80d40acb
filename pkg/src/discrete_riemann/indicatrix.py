"""Cauchy–Fantappiè indicatrix of boundary data and the shock-wave check.

For boundary functions ``f₁, f₂`` on a closed curve γ,

    G(ξ₀, ξ₁) = (1/2πi) ∮_γ f₁ dD / D,   D = ξ₀ + ξ₁ f₁ + f₂,

is evaluated with the periodic trapezoid rule, the tangential derivatives of
``f₁`` and ``f₂`` being taken spectrally (FFT) along each loop.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .canonical import CanonicalMap
from .errors import (
    DivisionGuardError,
    InsufficientCoverageError,
    InvalidParameterError,
    PoleProximityError,
    ShapeError,
)

__all__ = [
    "BoundaryFunctions",
    "IndicatrixValue",
    "GridSpec",
    "IndicatrixTable",
    "GenericityVerdict",
    "boundary_functions",
    "evaluate",
    "evaluate_grid",
    "shockwave_residual",
    "genericity_verdict",
]

GUARD_FACTOR = 5.0


def _spectral_derivative(f: np.ndarray) -> np.ndarray:
    """Derivative of periodic samples w.r.t. a parameter of period 2π."""
    n = len(f)
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return np.fft.ifft(1j * k * np.fft.fft(f))


@dataclass(frozen=True, eq=False)
class BoundaryFunctions:
    """Samples of ``f₁, f₂`` along the oriented boundary loops.

    ``loops`` holds the start offset of each loop; ``df1``, ``df2`` are the
    tangential derivatives per unit of a 2π-periodic parameter on each loop.
    """

    f1: np.ndarray
    f2: np.ndarray
    loops: tuple
    df1: np.ndarray
    df2: np.ndarray

    @classmethod
    def from_values(cls, f1, f2, loop_sizes: Sequence[int] | None = None) -> "BoundaryFunctions":
        f1 = np.asarray(f1, dtype=complex)
        f2 = np.asarray(f2, dtype=complex)
        if f1.shape != f2.shape or f1.ndim != 1:
            raise ShapeError("f1 and f2 must be matching 1-d arrays")
        sizes = [len(f1)] if loop_sizes is None else [int(s) for s in loop_sizes]
        if sum(sizes) != len(f1) or min(sizes) < 3:
            raise ShapeError("loop sizes do not partition the samples")
        starts = np.concatenate([[0], np.cumsum(sizes)])
        df1 = np.empty_like(f1)
        df2 = np.empty_like(f2)
        for a, b in zip(starts[:-1], starts[1:]):
            df1[a:b] = _spectral_derivative(f1[a:b])
            df2[a:b] = _spectral_derivative(f2[a:b])
        return cls(f1, f2, tuple(int(s) for s in starts), df1, df2)

    @property
    def n_loops(self) -> int:
        return len(self.loops) - 1

    @property
    def multi_component(self) -> bool:
        return self.n_loops > 1

    def reversed(self) -> "BoundaryFunctions":
        """Same data traversed against the orientation of every loop."""
        f1, f2, sizes = [], [], []
        for a, b in zip(self.loops[:-1], self.loops[1:]):
            f1.append(self.f1[a:b][::-1])
            f2.append(self.f2[a:b][::-1])
            sizes.append(b - a)
        return BoundaryFunctions.from_values(np.concatenate(f1), np.concatenate(f2), sizes)


def boundary_functions(m: CanonicalMap, guard: float = 1e-8) -> BoundaryFunctions:
    """``f_ℓ = θ_ℓ / θ₀`` on the boundary edge samples, loop by loop."""
    c = m.coeffs[m.boundary_faces]
    scale = float(np.max(np.abs(c)))
    small = np.abs(c[:, 0]) <= guard * scale
    if small.any():
        k = int(np.argmax(small))
        loop = m.surface.boundary_loops[int(m.boundary_loop[k])]
        pos = int(np.flatnonzero(m.boundary_loop == m.boundary_loop[k]).tolist().index(k))
        tail, head = int(loop[pos]), int(loop[(pos + 1) % len(loop)])
        raise DivisionGuardError(f"θ₀ vanishes on boundary edge ({tail}, {head})")
    sizes = [len(loop) for loop in m.surface.boundary_loops]
    return BoundaryFunctions.from_values(c[:, 1] / c[:, 0], c[:, 2] / c[:, 0], sizes)


@dataclass(frozen=True)
class IndicatrixValue:
    value: complex
    margin: float
    guard: float
    trusted: bool


def _denominator(bf: BoundaryFunctions, xi0: complex, xi1: complex):
    D = xi0 + xi1 * bf.f1 + bf.f2
    dD = xi1 * bf.df1 + bf.df2
    return D, dD


def _guard(bf: BoundaryFunctions, D: np.ndarray) -> float:
    g = 0.0
    for a, b in zip(bf.loops[:-1], bf.loops[1:]):
        d = D[a:b]
        g = max(g, float(np.max(np.abs(np.roll(d, -1) - d))))
    return GUARD_FACTOR * g


def evaluate(bf: BoundaryFunctions, xi: tuple[complex, complex]) -> IndicatrixValue:
    """G(ξ) with a trust flag; raises when the pole of the integrand nears γ."""
    xi0, xi1 = complex(xi[0]), complex(xi[1])
    D, dD = _denominator(bf, xi0, xi1)
    margin = float(np.min(np.abs(D)))
    guard = _guard(bf, D)
    if margin <= guard:
        raise PoleProximityError(f"|ξ₀ + ξ₁f₁ + f₂| = {margin:.3e} below guard {guard:.3e}")
    total = 0j
    for a, b in zip(bf.loops[:-1], bf.loops[1:]):
        total += np.sum(bf.f1[a:b] * dD[a:b] / D[a:b]) / (b - a)
    # (1/2πi) Σ (2π/N) f₁ D'/D
    value = complex(total / 1j)
    return IndicatrixValue(value, margin, guard, margin > 2 * guard)


# -------------------------------------------------------------------- grids
@dataclass(frozen=True)
class GridSpec:
    """``ξ₀ = origin0 + j·step0`` (``j < n0``), ``ξ₁ = origin1 + k·step1`` (``k < n1``)."""

    origin0: complex
    step0: complex
    n0: int
    origin1: complex
    step1: complex
    n1: int

    def __post_init__(self):
        if self.step0 == 0 or self.step1 == 0 or self.n0 < 1 or self.n1 < 1:
            raise InvalidParameterError("grid steps must be nonzero and sizes positive")

    @classmethod
    def centered(cls, xi0: complex, xi1: complex, step: complex, n: int) -> "GridSpec":
        half = (n - 1) / 2
        return cls(complex(xi0) - half * step, complex(step), n, complex(xi1) - half * step, complex(step), n)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n0, self.n1)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.origin0 + self.step0 * np.arange(self.n0),
                self.origin1 + self.step1 * np.arange(self.n1))

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        a0, a1 = self.axes()
        return np.meshgrid(a0, a1, indexing="ij")

    def to_dict(self) -> dict:
        cx = lambda z: [float(z.real), float(z.imag)]  # noqa: E731
        return {"origin0": cx(self.origin0), "step0": cx(self.step0), "n0": self.n0,
                "origin1": cx(self.origin1), "step1": cx(self.step1), "n1": self.n1}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        cx = lambda v: complex(*v) if isinstance(v, (list, tuple)) else complex(v)  # noqa: E731
        return cls(cx(d["origin0"]), cx(d["step0"]), int(d["n0"]),
                   cx(d["origin1"]), cx(d["step1"]), int(d["n1"]))


@dataclass(frozen=True, eq=False)
class IndicatrixTable:
    spec: GridSpec
    values: np.ndarray
    mask: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re_xi0", "im_xi0", "re_xi1", "im_xi1", "re_G", "im_G", "mask"])
        X0, X1 = self.spec.mesh()
        for j in range(self.spec.n0):
            for k in range(self.spec.n1):
                g = self.values[j, k]
                x0, x1 = complex(X0[j, k]), complex(X1[j, k])
                w.writerow([repr(x0.real), repr(x0.imag), repr(x1.real), repr(x1.imag),
                            repr(float(g.real)), repr(float(g.imag)), int(self.mask[j, k])])
        return buf.getvalue()


def _stencil_mask(mask: np.ndarray) -> np.ndarray:
    """Interior points whose five-point cross is entirely valid."""
    out = np.zeros_like(mask)
    out[1:-1, 1:-1] = (mask[1:-1, 1:-1] & mask[:-2, 1:-1] & mask[2:, 1:-1]
                       & mask[1:-1, :-2] & mask[1:-1, 2:])
    return out


def evaluate_grid(bf: BoundaryFunctions, spec: GridSpec) -> IndicatrixTable:
    """G over the grid; entries too close to a pole are masked and set to NaN."""
    if spec.n0 < 5 or spec.n1 < 5:
        raise InsufficientCoverageError("grid needs at least 5 x 5 points")
    X0, X1 = spec.mesh()
    values = np.full(spec.shape, np.nan + 0j)
    mask = np.zeros(spec.shape, dtype=bool)
    for j in range(spec.n0):
        for k in range(spec.n1):
            try:
                values[j, k] = evaluate(bf, (X0[j, k], X1[j, k])).value
                mask[j, k] = True
            except PoleProximityError:
                pass
    if _stencil_mask(mask).sum() < 9:
        raise InsufficientCoverageError("too few unmasked stencil points after masking")
    return IndicatrixTable(spec, values, mask)


def _d0(h: np.ndarray, spec: GridSpec) -> np.ndarray:
    out = np.full(h.shape, np.nan + 0j)
    out[1:-1, :] = (h[2:, :] - h[:-2, :]) / (2 * spec.step0)
    return out


def _d1(h: np.ndarray, spec: GridSpec) -> np.ndarray:
    out = np.full(h.shape, np.nan + 0j)
    out[:, 1:-1] = (h[:, 2:] - h[:, :-2]) / (2 * spec.step1)
    return out


def _d00(h: np.ndarray, spec: GridSpec) -> np.ndarray:
    out = np.full(h.shape, np.nan + 0j)
    out[1:-1, :] = (h[2:, :] - 2 * h[1:-1, :] + h[:-2, :]) / spec.step0**2
    return out


def _check_shape(h: np.ndarray, spec: GridSpec) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.shape != spec.shape:
        raise ShapeError(f"grid values of shape {h.shape} do not match {spec.shape}")
    return h


def shockwave_residual(h, spec: GridSpec, mask: np.ndarray | None = None) -> float:
    """``max |h ∂h/∂ξ₀ − ∂h/∂ξ₁|`` over interior points, central differences."""
    h = _check_shape(h, spec)
    valid = np.isfinite(h) if mask is None else (np.asarray(mask, dtype=bool) & np.isfinite(h))
    inner = _stencil_mask(valid)
    if not inner.any():
        raise InsufficientCoverageError("no interior stencil point")
    r = np.abs(h * _d0(h, spec) - _d1(h, spec))
    return float(np.max(r[inner]))


@dataclass(frozen=True)
class GenericityVerdict:
    verdict: bool
    shockwave: tuple
    second_derivative_gap: float
    curvature_floor: float
    scale: float
    flags: tuple
    multi_component: bool = False

    def to_json(self) -> str:
        return json.dumps({
            "verdict": bool(self.verdict),
            "shockwave_residuals": [float(x) for x in self.shockwave],
            "second_derivative_gap": float(self.second_derivative_gap),
            "curvature_floor": float(self.curvature_floor),
            "scale": float(self.scale),
            "flags": list(self.flags),
            "multi_component": bool(self.multi_component),
        }, sort_keys=True)


def genericity_verdict(
    table: IndicatrixTable,
    branches: Sequence[np.ndarray] = (),
    tol1: float = 1e-4,
    tol2: float = 1e-4,
    tol3: float = 1e-6,
    distinct_tol: float = 1e-8,
    multi_component: bool = False,
) -> GenericityVerdict:
    """Check the shock-wave decomposition of G on the unmasked grid interior.

    (i) every branch solves the shock-wave equation to ``tol1``;
    (ii) ``|∂²(G − Σh)/∂ξ₀²| <= tol2·scale``;
    (iii) ``|∂²G/∂ξ₀²| >= tol3·scale``, with ``scale = max |G|``.
    """
    spec = table.spec
    hs = [_check_shape(h, spec) for h in branches]
    for a in range(len(hs)):
        for b in range(a + 1, len(hs)):
            if np.nanmax(np.abs(hs[a] - hs[b])) <= distinct_tol:
                raise InvalidParameterError(f"branches {a} and {b} coincide on the grid")
    valid = table.mask.copy()
    for h in hs:
        valid &= np.isfinite(h)
    inner = _stencil_mask(valid)
    if not inner.any():
        raise InsufficientCoverageError("no interior stencil point")
    G = np.where(table.mask, table.values, np.nan)
    scale = float(np.max(np.abs(G[table.mask])))
    shocks = tuple(shockwave_residual(h, spec, valid) for h in hs)
    rest = G - (sum(hs) if hs else 0)
    gap = float(np.max(np.abs(_d00(rest, spec))[inner]))
    floor = float(np.min(np.abs(_d00(G, spec))[inner]))
    flags = []
    if any(s > tol1 for s in shocks):
        flags.append("i")
    if gap > tol2 * scale:
        flags.append("ii")
    if floor < tol3 * scale:
        flags.append("iii")
    return GenericityVerdict(not flags, shocks, gap, floor, scale, tuple(flags), multi_component)
