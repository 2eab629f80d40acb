from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from discrete_riemann.calculus import FaceOneForm, del_
from discrete_riemann.canonical import canonical_map
from discrete_riemann.errors import (
    DivisionGuardError,
    InsufficientCoverageError,
    InvalidParameterError,
    PoleProximityError,
    ShapeError,
)
from discrete_riemann.indicatrix import (
    BoundaryFunctions,
    GridSpec,
    boundary_functions,
    evaluate,
    evaluate_grid,
    genericity_verdict,
    shockwave_residual,
)
from discrete_riemann.surface import annulus, refine


def circle(n=512):
    return np.exp(2j * np.pi * np.arange(n) / n)


@pytest.fixture(scope="module")
def quad():
    z = circle()
    return BoundaryFunctions.from_values(z, z**2)


def inside_root(X0, X1):
    return (-X1 + np.sqrt(X1**2 - 4 * X0 + 0j)) / 2


# -------------------------------------------------------- boundary functions
def test_boundary_functions_closed_form():
    errs = []
    s = annulus(0.5, 6, 32)
    for _ in range(3):
        P = s.planar_coords
        m = canonical_map(del_(s, np.log(np.abs(P))), del_(s, P.real), del_(s, P.imag))
        bf = boundary_functions(m)
        z = s.face_centroids[m.boundary_faces]
        errs.append(max(np.max(np.abs(bf.f1 - z)), np.max(np.abs(bf.f2 + 1j * z))))
        s = refine(s)
    assert bf.multi_component and bf.n_loops == 2
    assert errs[1] < errs[0] and errs[2] < errs[1]


def test_boundary_functions_guard(ring):
    th = [FaceOneForm.from_planar(ring, lambda z: z + 0 * z) for _ in range(3)]
    m0 = canonical_map(*th)
    th[0].coeffs[m0.boundary_faces[3]] = 0
    with pytest.raises(DivisionGuardError, match="edge"):
        boundary_functions(canonical_map(*th))


def test_boundary_functions_constant_ratio(ring):
    th = FaceOneForm.from_planar(ring, lambda z: 1 / z)
    bf = boundary_functions(canonical_map(th, 2 * th, -1j * th))
    assert np.allclose(bf.f1, 2) and np.allclose(bf.f2, -1j)


# ------------------------------------------------------------------ evaluate
def test_f1_zero():
    z = circle()
    bf = BoundaryFunctions.from_values(0 * z, z**2)
    assert evaluate(bf, (0.3, 0.7)).value == 0


def test_quadratic_one_root(quad):
    v = evaluate(quad, (1.0, 3.0))
    assert abs(v.value - (-3 + np.sqrt(5)) / 2) <= 1e-6
    assert v.trusted


def test_quadratic_two_roots(quad):
    xi1 = 0.3
    assert abs(evaluate(quad, (0.2, xi1)).value + xi1) <= 1e-6


def test_pole_proximity(quad):
    with pytest.raises(PoleProximityError):
        evaluate(quad, (2.0, 3.0))  # z = -1 is a root on the contour


def test_sample_doubling():
    a = BoundaryFunctions.from_values(circle(512), circle(512) ** 2)
    b = BoundaryFunctions.from_values(circle(1024), circle(1024) ** 2)
    for xi in ((1, 3), (0.2, 0.3), (0.5 + 0.2j, -1 + 0.5j)):
        assert abs(evaluate(a, xi).value - evaluate(b, xi).value) < 1e-8


@pytest.mark.parametrize("xi", [(1.0, 3.0), (0.2, 0.3), (4.0, 0.5)])
def test_orientation(quad, xi):
    fwd = evaluate(quad, xi).value
    rev = evaluate(quad.reversed(), xi).value
    assert abs(fwd + rev) <= 1e-12
    # forward value plus the outside roots recovers the full root sum
    roots = np.roots([1, xi[1], xi[0]])
    outside = roots[np.abs(roots) > 1].sum()
    assert abs(fwd + outside + xi[1]) <= 1e-6


@settings(max_examples=40, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=2), min_size=2, max_size=4),
       st.complex_numbers(max_magnitude=2), st.complex_numbers(max_magnitude=2))
def test_residue_oracle(coeffs, xi0, xi1):
    # f1 = z, f2 = polynomial of degree <= 3; G = sum of zeros inside the disc
    deg = len(coeffs) - 1
    lead = coeffs[-1]
    assume(abs(lead) > 0.2)
    poly = np.zeros(4, complex)
    poly[:deg + 1] = coeffs
    full = poly.copy()
    full[0] += xi0
    full[1] += xi1
    roots = np.roots(full[:deg + 1][::-1]) if deg >= 1 else np.array([])
    assume(len(roots) == 0 or np.min(np.abs(np.abs(roots) - 1)) > 0.05)
    z = circle(1024)
    bf = BoundaryFunctions.from_values(z, np.polyval(poly[::-1], z))
    try:
        g = evaluate(bf, (xi0, xi1)).value
    except PoleProximityError:
        return
    assert abs(g - roots[np.abs(roots) < 1].sum()) <= 1e-6


def test_multi_component_sum():
    z = circle()
    one = BoundaryFunctions.from_values(z, z**2)
    two = BoundaryFunctions.from_values(np.r_[z, 0.5 * z], np.r_[z**2, 0.25 * z**2], [512, 512])
    inner = BoundaryFunctions.from_values(0.5 * z, 0.25 * z**2)
    xi = (0.1, 3.0)
    assert abs(evaluate(inner, xi).value) > 0.01
    assert two.multi_component
    assert np.isclose(evaluate(two, xi).value, evaluate(one, xi).value + evaluate(inner, xi).value)


def test_shape_errors():
    with pytest.raises(ShapeError):
        BoundaryFunctions.from_values(np.zeros(5), np.zeros(6))
    with pytest.raises(ShapeError):
        BoundaryFunctions.from_values(np.zeros(6), np.zeros(6), [4, 4])


# --------------------------------------------------------------------- grids
def test_grid_all_admissible(quad):
    t = evaluate_grid(quad, GridSpec.centered(1.0, 3.0, 0.01, 7))
    assert t.mask.all()
    lines = t.to_csv().splitlines()
    assert lines[0] == "re_xi0,im_xi0,re_xi1,im_xi1,re_G,im_G,mask"
    assert len(lines) == 50


def test_grid_root_crossing(quad):
    spec = GridSpec(1.5, 0.05, 21, 2.98, 0.01, 5)
    t = evaluate_grid(quad, spec)
    col = t.mask[:, 2]
    assert not col[10] and col[0] and col[-1]  # ξ0 = 2 puts the root z = -1 on the contour
    assert abs(t.values[0, 2] - t.values[-1, 2]) > 0.5


def test_grid_too_small(quad):
    with pytest.raises(InsufficientCoverageError):
        evaluate_grid(quad, GridSpec.centered(1.0, 3.0, 0.01, 3))


def test_grid_spec_roundtrip():
    g = GridSpec(0.5 + 0.1j, 0.01, 9, 3.0, 0.02j, 7)
    assert GridSpec.from_dict(json.loads(json.dumps(g.to_dict()))) == g
    with pytest.raises(InvalidParameterError):
        GridSpec(0, 0, 5, 0, 1, 5)


# ---------------------------------------------------------------- shock wave
def test_shockwave_constant():
    spec = GridSpec.centered(1, 3, 0.01, 7)
    assert shockwave_residual(np.full(spec.shape, 2 - 1j), spec) == 0


def test_shockwave_root_branch():
    spec = GridSpec.centered(1.0, 3.0, 0.01, 9)
    X0, X1 = spec.mesh()
    assert shockwave_residual(inside_root(X0, X1), spec) <= 1e-5


def test_shockwave_linear():
    spec = GridSpec.centered(1 + 0.5j, 3, 0.01, 7)
    X0, _ = spec.mesh()
    r = shockwave_residual(X0, spec)
    assert np.isclose(r, np.max(np.abs(X0[1:-1, 1:-1])), rtol=1e-12)


def test_shockwave_shape():
    spec = GridSpec.centered(1, 3, 0.01, 7)
    with pytest.raises(ShapeError):
        shockwave_residual(np.zeros((6, 7)), spec)


# ------------------------------------------------------------------- verdict
def test_verdict_one_root(quad):
    spec = GridSpec.centered(1.0, 3.0, 0.01, 9)
    t = evaluate_grid(quad, spec)
    v = genericity_verdict(t, [inside_root(*spec.mesh())])
    assert v.verdict and v.flags == ()
    assert json.loads(v.to_json())["verdict"] is True


def test_verdict_two_roots(quad):
    # fine step so finite-difference error stays below tol1 near the branch locus
    spec = GridSpec.centered(0.2, 0.3, 0.002, 9)
    t = evaluate_grid(quad, spec)
    X0, X1 = spec.mesh()
    r = 1j * np.sqrt(4 * X0 - X1**2)
    both = [(-X1 + r) / 2, (-X1 - r) / 2]
    v = genericity_verdict(t, both)
    assert not v.verdict and v.flags == ("iii",)
    v0 = genericity_verdict(t)
    assert not v0.verdict and "iii" in v0.flags


def test_verdict_errors(quad):
    spec = GridSpec.centered(1.0, 3.0, 0.01, 9)
    t = evaluate_grid(quad, spec)
    h = inside_root(*spec.mesh())
    with pytest.raises(InvalidParameterError):
        genericity_verdict(t, [h, h.copy()])
    with pytest.raises(ShapeError):
        genericity_verdict(t, [h[:5]])
