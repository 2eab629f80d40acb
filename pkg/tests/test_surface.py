from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from discrete_riemann.errors import InvalidParameterError, InvalidSubdomainError
from discrete_riemann.surface import (
    DiscreteSurface,
    annulus,
    build_surface,
    flat_torus,
    icosphere,
    load_surface,
    refine,
    remove_subdomain,
    save_surface,
    surface_from_dict,
    surface_to_dict,
    validate,
    with_node_classes,
)


def test_torus_counts(torus16):
    assert torus16.n_vertices == 256
    assert torus16.n_faces == 512
    assert torus16.boundary_loops == ()
    assert torus16.euler_characteristic == 0


def test_annulus_loops():
    s = annulus(0.5, 8, 32)
    assert [len(loop) for loop in s.boundary_loops] == [32, 32]
    r = np.abs(s.planar_coords)
    assert r.min() >= 0.5 - 1e-12 and r.max() <= 1 + 1e-12


def test_annulus_outer_radius():
    s = annulus(0.25, 4, 16, outer=2.0)
    r = np.abs(s.planar_coords)
    assert np.isclose(r.min(), 0.5) and np.isclose(r.max(), 2.0)


def test_sphere_euler():
    assert icosphere(3).euler_characteristic == 2


@pytest.mark.parametrize("kind,params", [
    ("flat_torus", {"n": 3}),
    ("flat_torus", {"n": 8, "tau": [1.0, 0.0]}),
    ("annulus", {"r": 1.0}),
    ("annulus", {"r": 0.5, "n_radial": 2}),
    ("annulus", {"r": 0.5, "n_angular": 7}),
    ("sphere", {"level": 0}),
    ("klein", {}),
])
def test_build_surface_rejects(kind, params):
    with pytest.raises(InvalidParameterError):
        build_surface(kind, params)


@pytest.mark.parametrize("kind,params", [
    ("flat_torus", {"n": 6, "tau": [0.3, 1.2]}),
    ("annulus", {"r": 0.4, "n_radial": 4, "n_angular": 16}),
    ("sphere", {"level": 2}),
])
def test_built_surfaces_validate(kind, params):
    s = build_surface(kind, params)
    assert validate(s).ok
    assert validate(refine(s)).ok


def test_remove_subdomain_empty(torus16):
    with pytest.raises(InvalidSubdomainError):
        remove_subdomain(torus16, 0, 1e-3)


def test_remove_subdomain_torus():
    Z = flat_torus(24)
    X, S = remove_subdomain(Z, 0, 0.2)
    assert len(X.boundary_loops) == 1
    # genus 1 with one hole: V - E + F = -1
    assert X.euler_characteristic == -1
    assert validate(X).ok


def test_remove_subdomain_sphere():
    X, _ = remove_subdomain(icosphere(3), 0, 0.3)
    assert X.euler_characteristic == 1


def test_regluing_reproduces_faces():
    Z = flat_torus(12)
    X, S = remove_subdomain(Z, 40, 0.25)
    both = np.concatenate([S.faces, S.outer_faces])
    assert np.array_equal(np.sort(both), np.arange(Z.n_faces))
    assert np.array_equal(S.outer_vertices[X.triangles], Z.triangles[S.outer_faces])


def test_remove_subdomain_too_large(torus16):
    with pytest.raises(InvalidSubdomainError):
        remove_subdomain(torus16, 0, 0.45)


def test_refine_counts():
    s = annulus(0.5, 4, 12)
    r = refine(s)
    assert r.n_faces == 4 * s.n_faces
    assert [len(x) for x in r.boundary_loops] == [2 * len(x) for x in s.boundary_loops]


def test_refine_keeps_node_classes():
    s = with_node_classes(flat_torus(6), [[7, 20]])
    assert refine(s).node_classes == s.node_classes


def test_refine_torus_stays_flat():
    r = refine(flat_torus(8))
    L = r.face_lengths
    # every face of the τ = i grid is an isosceles right triangle
    assert np.allclose(np.sort(L, axis=1) / np.sort(L, axis=1)[:, :1], [1, 1, np.sqrt(2)])


def test_refine_edge_shrink():
    s = annulus(0.5, 8, 32)
    assert s.max_edge_length() / refine(refine(s)).max_edge_length() >= 3.5


@pytest.mark.parametrize("s", [flat_torus(8, 0.2 + 1.1j), annulus(0.5, 5, 20)], ids=["torus", "annulus"])
def test_refine_preserves_area(s):
    assert abs(refine(s).total_area - s.total_area) <= 1e-10


def test_validate_flipped_triangle(torus16):
    t = torus16.triangles.copy()
    t[0] = t[0][::-1]
    bad = dataclasses.replace(torus16, triangles=t)
    assert any(v.startswith("orientation") for v in validate(bad))


def test_validate_triangle_inequality():
    t = np.array([[0, 1, 2]])
    edges = np.array([[0, 1], [0, 2], [1, 2]])
    s = DiscreteSurface(3, t, edges, np.array([1.0, 1.0, 3.0]), boundary_loops=(np.array([0, 1, 2]),))
    rep = validate(s)
    assert any(v.startswith("triangle inequality") for v in rep)


def test_area_weights_sum_to_one(torus16):
    assert abs(torus16.area_weights.sum() - 1) < 1e-12


def test_json_roundtrip(tmp_path):
    s = with_node_classes(annulus(0.5, 4, 12), [[20, 30]])
    path = tmp_path / "s.json"
    save_surface(s, path)
    t = load_surface(path)
    assert np.array_equal(t.triangles, s.triangles)
    assert np.array_equal(t.edge_lengths, s.edge_lengths)
    assert np.array_equal(t.planar_coords, s.planar_coords)
    assert [list(x) for x in t.boundary_loops] == [list(x) for x in s.boundary_loops]
    assert t.node_classes == s.node_classes
    d = surface_to_dict(s)
    assert {"vertices", "triangles", "edge_lengths", "boundary_loops", "node_classes",
            "planar_coords"} <= set(d)
    assert surface_to_dict(surface_from_dict(d)) == d
