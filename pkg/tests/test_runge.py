from __future__ import annotations

import numpy as np
import pytest

from discrete_riemann.calculus import stiffness_matrix
from discrete_riemann.errors import ConfigurationError, PreconditionError, ResolutionError
from discrete_riemann.green import GreenEvaluator
from discrete_riemann.harmonic import DipoleSpec, bipolar_potential
from discrete_riemann.pipeline import _nearest_vertex
from discrete_riemann.runge import (
    ExtensionConfig,
    convergence_study,
    extend_E,
    partition_subdomain,
    runge_approximate,
)
from discrete_riemann.surface import flat_torus, remove_subdomain

# Σ|q| / sup|φ| measured on the n=48 fixture over ε = 0.4, 0.2, 0.1 (max 9.86)
L1_CONSTANT = 10.0


@pytest.fixture(scope="module")
def setup():
    Z = flat_torus(48)
    ev = GreenEvaluator(Z)
    c = _nearest_vertex(Z, [0.5, 0.5])
    _, outer = remove_subdomain(Z, c, 0.4)
    _, inner = remove_subdomain(Z, c, 0.2)
    dip = DipoleSpec(_nearest_vertex(Z, [0.42, 0.5]), _nearest_vertex(Z, [0.53, 0.57]), 1.0)
    phi = bipolar_potential(ev, dip).values
    return Z, ev, inner, outer, phi, ExtensionConfig.build(inner)


# ----------------------------------------------------------------- extension
def test_cutoffs(setup):
    Z, _, inner, _, _, cfg = setup
    assert np.all(cfg.chi1 == 1)
    assert np.all(cfg.chi2[inner.outside_mask] == 0)
    assert np.all(cfg.chi2 >= 0)
    assert abs(cfg.chi2 @ Z.area_weights - 1) < 1e-12


def test_extend_zero(setup):
    Z, _, _, _, _, cfg = setup
    assert np.all(extend_E(np.zeros(Z.n_vertices), cfg) == 0)


def test_extend_one(setup):
    Z, _, inner, _, _, cfg = setup
    out = extend_E(np.ones(len(inner.outer_vertices)), cfg)
    assert np.all(out[inner.outside_mask] == 1)
    assert abs(out @ Z.area_weights) <= 1e-10


def test_extend_bipolar(setup):
    Z, _, inner, _, phi, cfg = setup
    out = extend_E(phi, cfg)
    assert np.array_equal(out[inner.outside_mask], phi[inner.outside_mask])
    assert abs(out @ Z.area_weights) <= 1e-10


def test_extend_hodge_exact(setup):
    Z, ev, inner, _, phi, cfg = setup
    t = extend_E(phi, cfg)
    h = t @ Z.area_weights
    rebuilt = h + ev.green_operator((stiffness_matrix(Z) @ t) / Z.area_weights)
    assert np.max(np.abs((t - rebuilt)[inner.outside_mask])) <= 1e-8


def test_extend_mismatch(setup):
    _, _, _, _, _, cfg = setup
    with pytest.raises(ConfigurationError):
        extend_E(np.zeros(7), cfg)
    other = flat_torus(12)
    _, sub = remove_subdomain(other, 0, 0.2)
    with pytest.raises(ConfigurationError):
        extend_E(np.zeros(48 * 48), ExtensionConfig.build(sub))


# ----------------------------------------------------------------- partition
def test_partition_single_cluster(setup):
    _, _, inner, _, _, _ = setup
    assert len(partition_subdomain(inner, 1.0)) == 1


def test_partition_halving_ratio(setup):
    _, _, inner, _, _, _ = setup
    a, b = partition_subdomain(inner, 0.2), partition_subdomain(inner, 0.1)
    assert 3 <= len(b) / len(a) <= 6


@pytest.mark.parametrize("eps", [0.4, 0.2, 0.1])
def test_partition_invariants(setup, eps):
    _, _, inner, _, _, _ = setup
    p = partition_subdomain(inner, eps)
    faces = np.sort(np.concatenate(p.face_clusters))
    assert np.array_equal(faces, np.sort(inner.faces))
    verts = np.sort(np.concatenate(p.vertex_clusters))
    assert np.array_equal(verts, np.sort(inner.closure_vertices))
    assert p.diameters.max() <= eps


def test_partition_resolution(setup):
    _, _, inner, _, _, _ = setup
    with pytest.raises(ResolutionError):
        partition_subdomain(inner, 0.03)


# -------------------------------------------------------------------- runge
def test_runge_zero(setup):
    Z, ev, inner, _, _, cfg = setup
    phi_eps, charges, rep = runge_approximate(ev, np.zeros(Z.n_vertices), inner, 0.2, cfg)
    assert np.all(phi_eps == 0) and len(charges) == 0 and rep.sup_c0 == 0


def test_runge_not_harmonic(setup):
    Z, ev, inner, _, _, cfg = setup
    with pytest.raises(PreconditionError):
        runge_approximate(ev, np.cos(2 * np.pi * Z.planar_coords.real), inner, 0.2, cfg)


def test_runge_invariants(setup):
    Z, ev, inner, outer, phi, cfg = setup
    phi_eps, charges, rep = runge_approximate(ev, phi, inner, 0.1, cfg, outer)
    assert abs(charges.total) <= 1e-10
    # clusters cover the closed disc S', which sits strictly inside S
    assert np.all(inner.closure_mask[list(charges.vertices)])
    assert np.all(outer.interior_mask[list(charges.vertices)])
    assert rep.n_charges == len(charges)
    assert rep.l1_residue == pytest.approx(charges.l1 / (2 * np.pi))
    off = np.ones(Z.n_vertices, bool)
    off[list(charges.vertices)] = False
    lap = stiffness_matrix(Z) @ phi_eps
    assert np.max(np.abs(lap[off])) <= 1e-9
    assert set(rep.to_dict()) == {"sup_c0", "sup_c1", "l1_residue", "epsilon", "n_charges"}


def test_convergence_table(setup):
    _, ev, inner, outer, phi, cfg = setup
    t = convergence_study(ev, phi, inner, [0.4, 0.2, 0.1], cfg, outer)
    assert len(t) == 3 and t.c0_decreasing
    assert all(r["sum_q"] <= 1e-10 for r in t.rows)
    sup_phi = np.max(np.abs(phi[inner.outside_mask]))
    assert max(r["l1_charge"] for r in t.rows) <= L1_CONSTANT * sup_phi


def test_convergence_edge_cases(setup):
    _, ev, inner, outer, phi, cfg = setup
    assert len(convergence_study(ev, phi, inner, [])) == 0
    assert len(convergence_study(ev, phi, inner, [0.2], cfg, outer)) == 1
    with pytest.raises(ConfigurationError):
        convergence_study(ev, phi, inner, [0.1, 0.2], cfg, outer)
