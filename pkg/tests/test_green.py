from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discrete_riemann.calculus import laplacian, residue
from discrete_riemann.errors import InvalidParameterError, SingularEvaluationError, WrongSurfaceClassError
from discrete_riemann.green import (
    GreenEvaluator,
    green,
    hodge_decompose,
    torus_green_fourier,
    torus_green_oracle,
)
from discrete_riemann.surface import flat_torus

from conftest import vertex_at

# value of the Ewald oracle at ((0,0), (0.5,0.5)) for tau = i, frozen on first build
HALF_DIAGONAL = -0.05515890003816291


def test_bordered_rejected(ring):
    with pytest.raises(WrongSurfaceClassError):
        GreenEvaluator(ring)


def test_normalization_and_residual(torus32, ev32):
    g = green(ev32, 77)
    assert abs(g @ torus32.area_weights) <= 1e-10
    e = np.zeros(torus32.n_vertices)
    e[77] = 1
    from discrete_riemann.calculus import stiffness_matrix

    r = stiffness_matrix(torus32) @ g - (e - torus32.area_weights)
    assert np.max(np.abs(r)) < 1e-10


def test_residue_of_green(torus32, ev32):
    # PSD convention: the unit charge carries residue -1/(2π)
    z = 300
    r = residue(ev32.green(z), z, torus32)
    assert np.isclose(r, -(1 - torus32.area_weights[z]) / (2 * np.pi), rtol=1e-10)
    assert abs(r + 1 / (2 * np.pi)) <= 0.03 / (2 * np.pi)


def test_matches_oracle_quadratically():
    errs = []
    for n in (16, 32):
        s = flat_torus(n)
        ev = GreenEvaluator(s)
        w = vertex_at(s, 0.5 + 0.5j)
        errs.append(abs(ev.green(0)[w] - HALF_DIAGONAL))
    assert errs[0] / errs[1] >= 3


def test_symmetry_20_pairs(torus32, ev32):
    rng = np.random.default_rng(5)
    for _ in range(20):
        z, w = rng.choice(torus32.n_vertices, 2, replace=False)
        assert abs(ev32.green(z)[w] - ev32.green(w)[z]) <= 1e-9


def test_log_growth_coefficient():
    fits = []
    for n in (32, 64):
        s = flat_torus(n)
        P = s.planar_coords
        z = vertex_at(s, 0.5 + 0.5j)
        g = GreenEvaluator(s).green(z)
        r = np.abs(P - P[z])
        m = (r >= 2 / n - 1e-9) & (r <= 0.25)
        A = np.c_[np.log(r[m]), np.ones(m.sum()), r[m] ** 2]
        fits.append(np.linalg.lstsq(A, g[m], rcond=None)[0][0])
    dev = [abs(k * 2 * np.pi + 1) for k in fits]
    assert max(dev) <= 0.1 and dev[1] < dev[0]


def test_potential_neutral_charges(torus32, ev32):
    u = ev32.potential({10: 1.0, 500: -1.0})
    assert np.allclose(u, ev32.green(10) - ev32.green(500))


# ------------------------------------------------------------------ hodge
def test_hodge_constant(ev32, torus32):
    h, p = hodge_decompose(ev32, np.full(torus32.n_vertices, 2.0))
    assert np.isclose(h, 2.0) and np.max(np.abs(p)) < 1e-12


def test_hodge_cosine(ev32, torus32):
    phi = np.cos(2 * np.pi * torus32.planar_coords.real)
    h, p = hodge_decompose(ev32, phi)
    assert abs(h) < 1e-12
    assert np.max(np.abs(p - phi)) < 1e-8
    assert abs(p @ torus32.area_weights) < 1e-10


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hodge_both_orders(seed):
    s = flat_torus(12)
    ev = GreenEvaluator(s)
    phi = np.random.default_rng(seed).normal(size=s.n_vertices)
    h, p = hodge_decompose(ev, phi)
    assert np.max(np.abs(phi - h - p)) <= 1e-8 * np.max(np.abs(phi))
    other = h + laplacian(s, ev.green_operator(phi))
    assert np.max(np.abs(phi - other)) <= 1e-8 * np.max(np.abs(phi))


# ----------------------------------------------------------------- oracle
def test_oracle_frozen_value():
    assert torus_green_oracle(1j, 0, 0.5 + 0.5j) == pytest.approx(HALF_DIAGONAL, abs=1e-14)


def test_oracle_agrees_with_plain_series():
    # independent route: the slowly convergent disc-truncated Fourier sum
    for z in (0.5 + 0.5j, 0.3 + 0.2j, 0.1 + 0.45j):
        g = torus_green_oracle(1j, z, 0)
        coarse = abs(g - torus_green_fourier(1j, z, 0, modes=32))
        fine = abs(g - torus_green_fourier(1j, z, 0, modes=512))
        assert fine < 5e-6 and fine < coarse


@settings(max_examples=30, deadline=None)
@given(st.complex_numbers(max_magnitude=2), st.complex_numbers(max_magnitude=2),
       st.complex_numbers(max_magnitude=2))
def test_oracle_symmetry_translation(z, w, t):
    tau = 0.2 + 1.1j
    try:
        g = torus_green_oracle(tau, z, w)
    except SingularEvaluationError:
        return
    assert abs(g - torus_green_oracle(tau, w, z)) <= 1e-12
    assert abs(g - torus_green_oracle(tau, z + t, w + t)) <= 1e-12 * max(1, abs(g))


def test_oracle_mode_doubling():
    for z in (0.5 + 0.5j, 0.25 + 0.1j):
        assert abs(torus_green_oracle(1j, z, 0, 8) - torus_green_oracle(1j, z, 0, 16)) < 1e-8


def test_oracle_errors():
    with pytest.raises(SingularEvaluationError):
        torus_green_oracle(1j, 0.3, 1.3)
    with pytest.raises(InvalidParameterError):
        torus_green_oracle(1.0 + 0j, 0, 0.5)
    with pytest.raises(InvalidParameterError):
        torus_green_oracle(1j, 0, 0.5, modes=4)
