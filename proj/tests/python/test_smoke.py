import json
import os
import subprocess

import numpy as np
import pytest

import drgbab

# f(x) = ReLU(x) + bias on [-1, 1], property f > 0.
def toy(bias):
    model = {
        "input_dim": 1,
        "layers": [
            {"weights": [[1.0]], "bias": [0.0], "activation": "relu"},
            {"weights": [[1.0]], "bias": [bias], "activation": "linear"},
        ],
    }
    spec = {"input_lower": [-1.0], "input_upper": [1.0], "C": [[1.0]]}
    return drgbab.Task.from_json(json.dumps(model), json.dumps(spec))


def test_forward_and_margin():
    t = toy(-0.5)
    assert t.input_dim == 1 and t.output_dim == 1
    np.testing.assert_allclose(t.forward(np.array([0.75])), [0.25])
    np.testing.assert_allclose(t.margin(np.array([-0.3])), [-0.5])


def test_verify_safe_and_unsafe():
    safe = drgbab.verify(toy(0.1))
    assert safe["verdict"] == "Safe"
    assert {"branches", "splits", "time_s", "heuristic", "config_echo"} <= safe.keys()

    bad = drgbab.verify(toy(-0.5), heuristic="width", timeout_seconds=5.0)
    assert bad["verdict"] == "Unsafe"
    assert bad["heuristic"] == "width"
    assert bad["witness"]["concrete_margin"][0] <= 0.0


def test_unknown_config_key_raises():
    with pytest.raises(drgbab.InputError):
        drgbab.verify(toy(0.1), colour="red")


def test_oracle_and_attack_agree_with_verify(tmp_path):
    drgbab.generate_suite(str(tmp_path), seed=4, count=6, input_dim=2, widths=[5, 5], eps=0.2)
    for i in range(6):
        base = tmp_path / f"inst_{i:04d}"
        t = drgbab.load_task(f"{base}.model.json", f"{base}.spec.json")
        exact = drgbab.exact_min_margin(t)
        verdict = drgbab.verify(t, max_branches=100000)["verdict"]
        assert verdict == ("Safe" if exact.min_value > 0 else "Unsafe")
        assert drgbab.grid_attack(t, 2000, 1).best_margin >= exact.min_value - 1e-9
        interior = drgbab.exact_min_margin(t, regions="interior")
        assert interior.min_value == pytest.approx(exact.min_value, abs=1e-9)


def test_relaxation_numbers():
    assert drgbab.relu_relaxation(-2.0, 18.0) == pytest.approx((0.9, 1.8, 0.0), abs=1e-12)
    assert drgbab.directional_gap(-1.0, 8.0, -2.0, 18.0) == pytest.approx(1.0, abs=1e-12)
    assert drgbab.directional_gap(-1.0, 0.0, -4.0, 4.0) == pytest.approx(2.0, abs=1e-12)
    assert "drg" in drgbab.heuristics()


def test_round_trip_through_files(tmp_path):
    t = toy(0.1)
    t.save(str(tmp_path / "m.json"), str(tmp_path / "s.json"))
    back = drgbab.load_task(tmp_path / "m.json", tmp_path / "s.json")
    assert back.model_json() == t.model_json()
    np.testing.assert_array_equal(back.lower, [-1.0])


@pytest.mark.skipif("DRGBAB_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_matches_binding(tmp_path):
    t = toy(-0.5)
    t.save(str(tmp_path / "m.json"), str(tmp_path / "s.json"))
    out = subprocess.run(
        [os.environ["DRGBAB_CLI"], "verify", "--model", str(tmp_path / "m.json"), "--spec", str(tmp_path / "s.json")],
        capture_output=True, text=True)
    assert out.returncode == 1
    assert json.loads(out.stdout)["verdict"] == drgbab.verify(t)["verdict"]
