import math
import os
import tempfile

import numpy as np
import pytest

import fplcast


def test_canonicalize_and_match():
    assert fplcast.canonicalize_name("Aleksandar Mitrović") == "aleksandar mitrovic"
    assert fplcast.canonicalize_name("  Son   Heung-min ") == "son heung-min"
    match = fplcast.fuzzy_match("heung-min son", ["harry kane", "son heung-min"])
    assert match == ("son heung-min", 1.0)
    assert fplcast.fuzzy_match("kane", ["salah"], 0.85) is None


def test_rank_metrics():
    assert fplcast.mse([0, 0], [1, 3]) == 5.0
    assert fplcast.average_ranks([1, 1, 2]) == [1.5, 1.5, 3.0]
    assert fplcast.spearman_tied([1, 2, 3], [3, 1, 2]) == pytest.approx(-0.5)
    assert fplcast.spearman_tied([1, 1, 2], [1, 2, 3]) == pytest.approx(0.8660254, abs=1e-6)
    assert fplcast.spearman_tied([2, 2, 2], [1, 2, 3]) is None


def test_ridge_exact_fit():
    x = np.arange(6, dtype=float).reshape(-1, 1)
    y = 2.0 * x[:, 0] + 1.0
    model = fplcast.fit_ridge(x, y, 0.0)
    assert model.weights[0] == pytest.approx(2.0, abs=1e-9)
    assert model.intercept == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(model.predict(x), y, atol=1e-9)


def test_gbm_toy_and_shapley():
    x = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([0.0, 0.0, 10.0, 10.0])
    hp = fplcast.GbmHyperparams()
    hp.n_trees, hp.max_depth, hp.num_leaves = 1, 1, 2
    hp.min_data_in_leaf, hp.lambda_l2, hp.eta = 1, 0.0, 1.0
    model = fplcast.fit_gbm(x, y, hp)
    np.testing.assert_allclose(model.predict(x), y)
    base, phi, prediction = fplcast.shapley_values(model, [1.0], x)
    assert math.isclose(base + sum(phi), prediction, abs_tol=1e-10)


def test_cli_pipeline_roundtrip():
    with tempfile.TemporaryDirectory() as out:
        for args in (
            ["synth", "--players", "60", "--weeks", "12"],
            ["ingest"],
            ["split"],
            ["train", "--family", "ridge"],
        ):
            code, stdout, stderr = fplcast.run_cli(["--seed", "3", "--out", out, "--quiet"] + args)
            assert code == 0, stderr
        assert os.path.exists(os.path.join(out, "model_ridge_MID.txt"))
        code, _, stderr = fplcast.run_cli(["--out", out, "train", "--family", "nope"])
        assert code != 0
        assert stderr.startswith("error[config]")


def test_synthetic_csv_is_deterministic():
    a = fplcast.synthetic_csv(5, 20, 4)
    b = fplcast.synthetic_csv(5, 20, 4)
    assert a == b
    assert a[0].splitlines()[0].startswith('"name"')
