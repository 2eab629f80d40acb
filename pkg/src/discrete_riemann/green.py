"""Green functions and the Hodge operators on compact surfaces.

The Green function of a vertex z solves ``L g = e_z - A`` with
``<g, A> = 0`` (``A`` the normalised area weights), i.e. Δg = δ_z − 1 with
unit flux.  Near z it behaves like ``-(1/2π) ln dist``.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from typing import Iterable, Mapping

import numpy as np
from scipy import special
from scipy.sparse import linalg as spla

from .calculus import _values, laplacian, stiffness_matrix
from .errors import (
    InvalidParameterError,
    SingularEvaluationError,
    WrongSurfaceClassError,
)
from .surface import DiscreteSurface

__all__ = [
    "GreenEvaluator",
    "green",
    "hodge_decompose",
    "torus_green_oracle",
    "torus_green_fourier",
]


class GreenEvaluator:
    """Factorised Laplace solver with an LRU cache of Green columns.

    The stiffness matrix is grounded at vertex 0 and factorised once with a
    sparse LU; every solve is then a pair of triangular solves followed by the
    mean-zero normalisation.  Column requests are safe from several threads.

    Parameters
    ----------
    surface : DiscreteSurface
        Compact, connected surface.
    cache_size : int
        Maximum number of Green columns kept.
    """

    def __init__(self, surface: DiscreteSurface, cache_size: int = 256):
        if not surface.is_compact:
            raise WrongSurfaceClassError("Green functions need a compact surface")
        self.surface = surface
        self.area = surface.area_weights
        L = stiffness_matrix(surface)
        self._lu = spla.splu(L[1:, 1:].tocsc())
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self._cache_size = int(cache_size)
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self.surface.n_vertices

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``L p = b`` for zero-sum ``b``, returning the mean-zero solution."""
        b = np.asarray(b)
        if np.iscomplexobj(b):
            return self.solve(b.real) + 1j * self.solve(b.imag)
        p = np.zeros(self.n)
        p[1:] = self._lu.solve(b[1:])
        return p - np.dot(p, self.area)

    def green(self, z: int) -> np.ndarray:
        """Column ``G(z, .)`` (read-only view of the cached array)."""
        z = int(z)
        if not 0 <= z < self.n:
            raise InvalidParameterError(f"vertex {z} out of range")
        with self._lock:
            col = self._cache.get(z)
            if col is not None:
                self._cache.move_to_end(z)
                return col
        b = -self.area.copy()
        b[z] += 1.0
        col = self.solve(b)
        col.setflags(write=False)
        with self._lock:
            self._cache[z] = col
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return col

    def potential(self, charges: Mapping[int, complex] | Iterable[tuple[int, complex]]) -> np.ndarray:
        """``sum_v q_v G(v, .)`` computed with a single solve."""
        items = charges.items() if isinstance(charges, Mapping) else charges
        b = np.zeros(self.n, dtype=complex)
        total = 0.0
        for v, q in items:
            b[int(v)] += q
            total += q
        b -= total * self.area
        out = self.solve(b)
        return out.real if not np.any(out.imag) else out

    def mean(self, phi) -> complex:
        """ℋφ = ∫φ ω."""
        phi = _values(self.surface, phi)
        return np.sum(phi * self.area)

    def green_operator(self, f) -> np.ndarray:
        """𝒢f: the mean-zero solution of Δp = f − ℋf."""
        f = _values(self.surface, f)
        return self.solve(self.area * (f - self.mean(f)))


def green(ev: GreenEvaluator, z: int) -> np.ndarray:
    return ev.green(z)


def hodge_decompose(ev: GreenEvaluator, phi) -> tuple[complex, np.ndarray]:
    """Split φ = ℋφ + 𝒢Δφ; returns ``(ℋφ, 𝒢Δφ)``."""
    phi = _values(ev.surface, phi)
    return ev.mean(phi), ev.green_operator(laplacian(ev.surface, phi))


# ------------------------------------------------------------------ oracle
def _lattice_coords(tau: complex, d: complex) -> tuple[float, float]:
    b = tau.imag
    t = d.imag / b
    s = d.real - t * tau.real
    return s, t


def torus_green_oracle(tau: complex, z: complex, w: complex, modes: int = 8) -> float:
    """Flat-torus Green function of C/(Z + τZ), mean zero, Δ = −b ∇² with b = Im τ.

    Evaluated by Ewald splitting of the lattice Fourier series
    ``(1/b) Σ_{k≠0} e^{2πi k·x} / (4π²|k|²)``: a Gaussian-damped Fourier part
    plus an exponential-integral lattice sum, both truncated to indices
    ``|m|, |n| <= modes``.
    """
    tau = complex(tau)
    if not tau.imag > 0:
        raise InvalidParameterError("need Im(tau) > 0")
    if modes < 8:
        raise InvalidParameterError("need modes >= 8")
    b = tau.imag
    s, t = _lattice_coords(tau, complex(z) - complex(w))
    s -= np.round(s)
    t -= np.round(t)
    x = s + t * tau
    if abs(x) < 1e-12:
        raise SingularEvaluationError("z and w coincide on the torus")
    s0 = b / (4 * np.pi)
    m, n = np.meshgrid(np.arange(-modes, modes + 1), np.arange(-modes, modes + 1), indexing="ij")
    m, n = m.ravel(), n.ravel()
    keep = (m != 0) | (n != 0)
    mk, nk = m[keep], n[keep]
    k2 = mk**2 + ((nk - mk * tau.real) / b) ** 2
    four = np.sum(np.cos(2 * np.pi * (mk * s + nk * t)) * np.exp(-4 * np.pi**2 * k2 * s0)
                  / (4 * np.pi**2 * k2)) / b
    lam = m + n * tau
    r2 = np.abs(x - lam) ** 2
    real = np.sum(special.exp1(r2 / (4 * s0))) / (4 * np.pi)
    return float(four + real - s0 / b)


def torus_green_fourier(tau: complex, z: complex, w: complex, modes: int = 64) -> float:
    """Plain truncated Fourier series of the same Green function (slowly convergent)."""
    tau = complex(tau)
    b = tau.imag
    s, t = _lattice_coords(tau, complex(z) - complex(w))
    m, n = np.meshgrid(np.arange(-modes, modes + 1), np.arange(-modes, modes + 1), indexing="ij")
    m, n = m.ravel(), n.ravel()
    keep = (m**2 + n**2 > 0) & (m**2 + n**2 <= modes**2)
    m, n = m[keep], n[keep]
    k2 = m**2 + ((n - m * tau.real) / b) ** 2
    return float(np.sum(np.cos(2 * np.pi * (m * s + n * t)) / (4 * np.pi**2 * k2)) / b)
