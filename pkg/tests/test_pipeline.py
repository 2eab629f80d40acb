from __future__ import annotations

import json

import numpy as np
import pytest

from discrete_riemann.errors import ConfigurationError, StageError
from discrete_riemann.pipeline import ExperimentConfig, run_experiment, write_artifacts
from discrete_riemann.surface import build_surface, remove_subdomain
from discrete_riemann.pipeline import _nearest_vertex

CONFIG = "configs/dipole.json"


def base() -> dict:
    with open(CONFIG) as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def result():
    return run_experiment(ExperimentConfig.load(CONFIG))


@pytest.mark.parametrize("patch", [
    {"bogus": 1},
    {"epsilon": 0.0},
    {"epsilon": -1.0},
    {"inner_radius": 0.3},
    {"inner_radius": 0.0},
])
def test_config_rejected(patch):
    d = base()
    d.update(patch)
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(d)


def test_config_needs_three_dipoles():
    d = base()
    d["dipoles"] = d["dipoles"][:2]
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(d)


def test_fixture_passes(result):
    assert result.verdict
    assert result.reasons == []
    assert result.report.verdict == "almost_embedding"


def test_budget_is_charge_mass(result):
    assert np.isclose(result.kappa_l1, sum(c.l1 for c in result.charges) / (2 * np.pi), rtol=0, atol=1e-15)
    assert result.kappa_l1 <= result.config.epsilon


def test_charges_inside_s(result):
    cfg = result.config
    Z = build_surface("flat_torus", {"n": 32, "tau": [0.0, 1.0]})
    _, S = remove_subdomain(Z, _nearest_vertex(Z, cfg.center), cfg.radius)
    verts = np.concatenate([np.asarray(c.vertices, dtype=int) for c in result.charges])
    assert len(verts) and S.interior_mask[verts].all()
    assert result.charges_in_s


def test_charge_totals_vanish(result):
    # the charges replace a harmonic correction, so each set is neutral
    for c in result.charges:
        assert abs(c.total) <= 1e-10 * max(1.0, c.l1)


def test_tight_epsilon_fails():
    d = base()
    d["epsilon"] = 1e-9
    res = run_experiment(ExperimentConfig.from_dict(d))
    assert not res.verdict
    assert any(r.startswith("|κ|₁") for r in res.reasons)


def test_zero_strength_reported():
    d = base()
    for dip in d["dipoles"]:
        dip["c"] = 0.0
    res = run_experiment(ExperimentConfig.from_dict(d))
    assert not res.verdict
    assert any(r.startswith("boundary_nonvanishing") for r in res.reasons)


def test_dipole_outside_s_wrapped():
    d = base()
    d["dipoles"][0]["a_minus"] = [0.1, 0.1]
    with pytest.raises(StageError) as info:
        run_experiment(ExperimentConfig.from_dict(d))
    assert info.value.stage == "dipoles"


def test_deterministic(result):
    again = run_experiment(ExperimentConfig.load(CONFIG))
    assert again.to_json() == result.to_json()


def test_artifacts(result, tmp_path):
    paths = write_artifacts(result, tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["charges_0.csv", "charges_1.csv", "charges_2.csv", "predicates.json",
                     "result.json", "samples.csv"]
    assert (tmp_path / "charges_0.csv").read_text().splitlines()[0] == "vertex,q_re,q_im"
    data = json.loads((tmp_path / "result.json").read_text())
    assert data["verdict"] is True and data["kappa_l1"] == result.kappa_l1
