import json

import numpy as np
import pytest

import stochinv


def test_mesh_and_forward_solve():
    mesh = stochinv.structured_mesh(6, 6)
    assert mesh.node_count == 49
    assert mesh.dof_count == 98
    assert mesh.coordinates.shape == (49, 2)
    u = stochinv.solve_forward(mesh, np.full(49, np.log(100.0)))
    assert u.shape == (98,)
    assert np.all(u[1::2] <= 1e-15)  # gravity pushes everything down


def test_adjoint_gradient_matches_finite_difference():
    mesh = stochinv.structured_mesh(4, 4)
    rng = np.random.default_rng(0)
    y = np.log(50.0) + 0.3 * rng.standard_normal(mesh.node_count)
    dofs = list(range(10, 30))
    values = np.zeros(len(dofs))
    _, g = stochinv.misfit_gradient(mesh, y, dofs, values)
    h = 1e-6
    for k in (0, 7, 20):
        e = np.zeros_like(y)
        e[k] = h
        jp, _ = stochinv.misfit_gradient(mesh, y + e, dofs, values)
        jm, _ = stochinv.misfit_gradient(mesh, y - e, dofs, values)
        assert g[k] == pytest.approx((jp - jm) / (2 * h), rel=1e-4, abs=1e-14)


def test_kpca_round_trip_and_pce():
    mesh = stochinv.structured_mesh(6, 6)
    Y = stochinv.generate_snapshots(mesh, 40, seed=3)
    assert Y.shape == (49, 40)
    model = stochinv.KpcaModel.fit(Y, stochinv.Kernel.polynomial(3), dimension=5)
    assert model.dimension == 5
    assert np.all(np.diff(model.eigenvalues) <= 0)
    xi = model.project(Y[:, 0])
    assert xi.shape == (5,)
    assert model.preimage(xi).y.shape == (49,)

    pce = stochinv.fit_pce(model.training_coordinates, order=4, quadrature_points=16)
    assert pce(np.zeros(5)).shape == (5,)
    assert stochinv.hermite(2, 3.0) == pytest.approx(8.0)
    with pytest.raises(ValueError):
        stochinv.KpcaModel.fit(Y, stochinv.Kernel.linear(), dimension=3, energy_fraction=0.5)


def test_langevin_on_gaussian():
    recs = stochinv.sample_gaussian(np.zeros(2), np.eye(2), n_samples=3000, tau=0.5, seed=5)
    assert len(recs) == 3
    d = stochinv.diagnostics(recs, 500)
    assert max(d["rhat"]) < 1.1
    assert np.all(np.abs(d["mean"]) < 0.3)


def test_stage_pipeline(tmp_path):
    cfg = stochinv.ExperimentConfig.parse(json.dumps({
        "mesh": {"nx": 6, "ny": 6},
        "prior": {"realizations": 30, "seed": 5},
        "reduction": {"kernel": "polynomial", "degree": 3, "dimension": 4},
        "pce": {"order": 4, "quadrature_points": 16},
        "sampling": {"n_samples": 10, "seed": 3},
        "report": {"fidelity_snapshots": 10},
    }))
    stochinv.generate(cfg, tmp_path)
    assert stochinv.fit(cfg, tmp_path)["dimension"] == 4
    assert stochinv.synth_obs(cfg, tmp_path)["count"] > 0
    inv = stochinv.invert(cfg, tmp_path, chains=2)
    assert [len(r["acceptance_rates"]) for r in inv["runs"]] == [2, 2, 2]
    rep = stochinv.report(cfg, tmp_path)
    assert len(rep["preimage_fidelity"]) == 5
    assert (tmp_path / "report.json").exists()
