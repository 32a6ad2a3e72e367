import json

import numpy as np
import pytest

import mixborrow as mb


def test_joint_pmf_product_at_rho_zero():
    pb = np.array([0.5, 0.3, 0.2])
    pt = np.array([0.1, 0.6, 0.3])
    pmf = mb.joint_indicator_pmf(pb, pt, 0.0)
    np.testing.assert_allclose(pmf, np.outer(pb, pt), atol=1e-14)


def test_stick_weights_match_cumulative_product():
    v = np.array([0.3, 0.5, 0.2, 1.0])
    expected = v * np.concatenate([[1.0], np.cumprod(1.0 - v)[:-1]])
    np.testing.assert_allclose(mb.stick_weights(v), expected, atol=1e-15)
    assert mb.stick_weights(v).sum() == pytest.approx(1.0)


def test_simulate_is_deterministic_and_shaped():
    a = mb.simulate("simA", 50, 3, P=2, L=6)
    b = mb.simulate("simA", 50, 3, P=2, L=6)
    assert a["Y"].shape == (50, 4)
    assert a["X"].shape == (50, 12)
    np.testing.assert_array_equal(a["Y"], b["Y"])
    for w in a["omegas"]:
        assert np.linalg.norm(w) == pytest.approx(1.0)


def test_importance_linear_oracle():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((2000, 3))
    alpha = np.array([1.0, 2.0, 0.0])
    phi, _ = mb.exposure_importance(lambda rows: rows @ alpha, X, 2)
    assert phi == pytest.approx(alpha[1] ** 2 / np.sum(alpha**2), abs=0.05)


def test_fit_mim_smoke():
    rng = np.random.default_rng(1)
    n = 150
    X = rng.standard_normal((n, 3))
    w = np.array([0.6, 0.8, 0.0])
    y = np.sin(X @ w) + 0.3 * rng.standard_normal(n)
    Y = (y - y.mean())[:, None]
    cfg = "[model]\nkind = mim\nn_exposures = 3\nn_indices = 1\n[chain]\nn_iter = 600\nburn_in = 300\nseed = 4\n"
    fit = mb.fit(cfg, Y, X)
    assert fit.n_draws == 300
    omega = fit.omega(1, 1)
    assert np.linalg.norm(omega) == pytest.approx(1.0)
    assert abs(omega @ w) > 0.95
    beta, theta, labels = fit.heatmap()
    assert labels == ["k1_j1"]
    assert np.isfinite(fit.waic()["waic"])


def test_fit_rejects_unknown_key():
    with pytest.raises(ValueError, match="unknown config key"):
        mb.fit("[model]\nkind = mim\nn_exposures = 2\nbogus = 1\n", np.zeros((5, 1)), np.zeros((5, 2)))


def test_cli_exit_codes(tmp_path):
    sim = tmp_path / "sim.ini"
    sim.write_text("[simulate]\nscenario = simB1\nn = 40\nseed = 2\n")
    out = tmp_path / "sim"
    assert mb.run_cli(["simulate", "--config", str(sim), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert "data.csv" in manifest["artifacts"]
    bad = tmp_path / "bad.ini"
    bad.write_text("[simulate]\nscenario = nowhere\n")
    assert mb.run_cli(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 1
    assert mb.run_cli(["fit"]) == 1
