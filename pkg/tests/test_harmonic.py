from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discrete_riemann.calculus import dirichlet_solve, laplacian, residue
from discrete_riemann.errors import (
    CompatibilityError,
    DuplicateSingularityError,
    InvalidDipoleError,
    InvalidLocationError,
    WrongSurfaceClassError,
)
from discrete_riemann.green import GreenEvaluator
from discrete_riemann.harmonic import (
    ChargeSet,
    DipoleSpec,
    HarmonicDistribution,
    bipolar_potential,
    dtn,
    extend_with_singularities,
    residues_report,
)
from discrete_riemann.surface import annulus, with_node_classes

from conftest import vertex_at


# -------------------------------------------------------------- extension
def test_extend_no_charges(ring):
    b = ring.planar_coords.real ** 3
    H = extend_with_singularities(ring, b)
    assert np.array_equal(H.values, dirichlet_solve(ring, b))
    assert H.singular == ()


def test_extend_dipole_residues(ring):
    p, q = vertex_at(ring, 0.75), vertex_at(ring, -0.75j)
    H = extend_with_singularities(ring, np.zeros(ring.n_vertices), ChargeSet((p, q), (1.0, -1.0)))
    assert abs(residue(H.values, p, ring) - 1) <= 0.03
    assert abs(residue(H.values, q, ring) + 1) <= 0.03
    assert np.all(H.values[ring.boundary_vertices] == 0)
    off = np.ones(ring.n_vertices, bool)
    off[[p, q]] = False
    off[ring.boundary_vertices] = False
    assert np.max(np.abs(laplacian(ring, H.values)[off] * ring.area_weights[off])) < 1e-9


def test_extend_log(ring):
    u = np.log(np.abs(ring.planar_coords))
    assert np.max(np.abs(extend_with_singularities(ring, u).values - u)) < 2e-3


def test_extend_errors(ring, torus16):
    b = np.zeros(ring.n_vertices)
    v = vertex_at(ring, 0.75)
    with pytest.raises(InvalidLocationError):
        extend_with_singularities(ring, b, ChargeSet((int(ring.boundary_vertices[0]),), (1.0,)))
    with pytest.raises(DuplicateSingularityError):
        extend_with_singularities(ring, b, ChargeSet((v, v), (1.0, -1.0)))
    with pytest.raises(WrongSurfaceClassError):
        extend_with_singularities(torus16, np.zeros(torus16.n_vertices))


def test_node_class_sum_enforced():
    s = annulus(0.5, 6, 24)
    a, b = vertex_at(s, 0.75), vertex_at(s, -0.75)
    s = with_node_classes(s, [[a, b]])
    with pytest.raises(CompatibilityError):
        extend_with_singularities(s, np.zeros(s.n_vertices), ChargeSet((a,), (1.0,)))
    H = extend_with_singularities(s, np.zeros(s.n_vertices), ChargeSet((a, b), (1.0, -1.0)))
    assert H.node_class_sums() == [0j]


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_extension_linear(alpha, beta, seed):
    s = annulus(0.5, 5, 24)
    rng = np.random.default_rng(seed)
    u1, u2 = rng.normal(size=(2, s.n_vertices))
    p, q = vertex_at(s, 0.75), vertex_at(s, -0.7)
    c1, c2 = rng.normal(size=2), rng.normal(size=2)
    E1 = extend_with_singularities(s, u1, ChargeSet((p, q), tuple(c1))).values
    E2 = extend_with_singularities(s, u2, ChargeSet((p, q), tuple(c2))).values
    E = extend_with_singularities(s, alpha * u1 + beta * u2,
                                  ChargeSet((p, q), tuple(alpha * c1 + beta * c2))).values
    assert np.max(np.abs(E - alpha * E1 - beta * E2)) <= 1e-7 * (1 + np.max(np.abs(E)))


def test_regular_part_maximum_principle(ring):
    rng = np.random.default_rng(2)
    b = rng.normal(size=ring.n_vertices)
    p, q = vertex_at(ring, 0.75), vertex_at(ring, -0.7j)
    H = extend_with_singularities(ring, b, ChargeSet((p, q), (2.0, -0.5)))
    reg = H.regular_part
    inner = np.setdiff1d(ring.interior_vertices, [p, q])
    bv = b[ring.boundary_vertices]
    assert np.nanmax(reg[inner]) <= bv.max() + 1e-10
    assert np.nanmin(reg[inner]) >= bv.min() - 1e-10


# ---------------------------------------------------------------- bipolar
def test_bipolar_zero(ev32):
    U = bipolar_potential(ev32, DipoleSpec(3, 400, 0.0))
    assert np.all(U.values == 0)


@pytest.mark.parametrize("c", [1.0, 2 + 1j])
def test_bipolar_residues(ev32, torus32, c):
    d = DipoleSpec(vertex_at(torus32, 0.3 + 0.3j), vertex_at(torus32, 0.6 + 0.5j), c)
    U = bipolar_potential(ev32, d)
    assert abs(residue(U.values, d.a_plus, torus32) - c) <= 0.03 * abs(c)
    assert abs(residue(U.values, d.a_minus, torus32) + c) <= 0.03 * abs(c)
    off = np.ones(torus32.n_vertices, bool)
    off[[d.a_plus, d.a_minus]] = False
    assert np.max(np.abs(laplacian(torus32, U.values)[off])) < 1e-8


def test_bipolar_invalid():
    with pytest.raises(InvalidDipoleError):
        DipoleSpec(4, 4)


# -------------------------------------------------------------------- dtn
def test_dtn_constant(ring):
    assert np.allclose(dtn(ring, np.full(ring.n_vertices, 7.0)).values, 0, atol=1e-10)


def test_dtn_log(ring):
    tot = dtn(ring, np.log(np.abs(ring.planar_coords))).loop_totals
    outer, inner = tot  # boundary loop 0 is the unit circle
    assert abs(outer - 2 * np.pi) <= 0.01 * 2 * np.pi
    assert abs(inner + 2 * np.pi) <= 0.01 * 2 * np.pi


def test_dtn_re_z(ring):
    P = ring.planar_coords
    N = dtn(ring, P.real)
    assert all(abs(t) < 1e-10 for t in N.loop_totals)
    pos = {int(v): k for k, v in enumerate(N.vertices)}
    for loop, sign in zip(ring.boundary_loops, (1, -1)):
        v = N.values[[pos[int(x)] for x in loop]]
        R = abs(P[loop[0]])
        # outward d^c(Re z) = dy integrated over the dual segment
        want = sign * R * np.cos(np.angle(P[loop])) * 2 * np.pi / len(loop)
        assert np.max(np.abs(v - want)) <= 0.01 * np.max(np.abs(want))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dtn_reciprocity(seed):
    s = annulus(0.5, 5, 24)
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=(2, s.n_vertices))
    bu, bv = u[s.boundary_vertices], v[s.boundary_vertices]
    assert abs(dtn(s, u).pairing(bv) - dtn(s, v).pairing(bu)) <= 1e-8


# ----------------------------------------------------------------- reports
def test_report_empty(ring):
    H = HarmonicDistribution(ring, np.zeros(ring.n_vertices))
    assert len(residues_report(H)) == 0


def test_report_bipolar(ev32, torus32):
    U = bipolar_potential(ev32, DipoleSpec(10, 600, 1.0))
    rep = residues_report(U)
    assert len(rep) == 2
    meas = sorted(r[2].real for r in rep.rows)
    assert abs(meas[0] + 1) < 0.03 and abs(meas[1] - 1) < 0.03
    assert abs(rep.total_measured) < 1e-10


def test_report_three_charges(ring):
    vs = (vertex_at(ring, 0.75), vertex_at(ring, 0.75j), vertex_at(ring, -0.75))
    H = extend_with_singularities(ring, np.zeros(ring.n_vertices), ChargeSet(vs, (1.0, 1.0, -2.0)))
    rep = residues_report(H)
    assert rep.total_declared == 0
    lines = rep.to_csv().splitlines()
    assert lines[0] == "vertex,declared_re,declared_im,measured_re,measured_im"
    assert lines[-1].startswith("total,0.0,0.0,")
    assert len(lines) == 5


def test_chargeset_json_roundtrip():
    c = ChargeSet((3, 9), (1.5 - 2j, -1.5 + 2j))
    back = ChargeSet.from_json(c.to_json())
    assert back.vertices == c.vertices and back.charges == c.charges
    assert c.total == 0 and c.l1 == pytest.approx(5.0)
