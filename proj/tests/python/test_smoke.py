import math
import os

import numpy as np
import pytest

import postfault as pf


def test_module_metadata():
    assert pf.__version__ == "0.1.0"
    assert "DeepONet" in pf._core.__doc__
    assert "[train]" in pf.default_config()


def test_trips_and_simulation():
    n1 = pf.admissible_trips("N1")
    n2 = pf.admissible_trips("N2")
    assert len(n2) == 66
    assert all(len(t) == 1 for t in n1)
    times, values = pf.simulate(n1[0], t_f=1.6)
    assert len(times) == 900
    assert math.isclose(times[0], 0.01)
    assert np.all((values > 0) & (values < 2))


def test_unknown_fault_kind():
    with pytest.raises(pf.ConfigError):
        pf.admissible_trips("N3")


def test_uq_helpers():
    assert math.isclose(pf.z_value(0.95), 1.959963984540054, rel_tol=1e-9)
    assert math.isclose(pf.inverse_normal_cdf(0.5), 0.0, abs_tol=1e-12)
    assert math.isclose(pf.chi_reference(1.0), math.erf(1 / math.sqrt(2)), rel_tol=1e-12)
    mean = np.zeros(4)
    std = np.ones(4)
    assert pf.epsilon_ratio(mean, std, np.array([0.0, 1.0, -1.5, 3.0])) == 75.0


def test_normality_verdict():
    rng = np.random.default_rng(3)
    assert pf.residual_normality(rng.normal(size=20000))["normal"]
    assert not pf.residual_normality(rng.uniform(-1, 1, size=20000))["normal"]


def test_missing_checkpoint():
    with pytest.raises(pf.DataError):
        pf.Model.load("does/not/exist.ckpt")


@pytest.mark.skipif("POSTFAULT_CLI" not in os.environ, reason="needs the CLI binary")
def test_trained_model_roundtrip(tmp_path):
    import subprocess

    cli = os.environ["POSTFAULT_CLI"]
    ini = os.path.join(os.path.dirname(__file__), "..", "cli", "small.ini")
    for args in (["simulate"], ["train", "--model", "prob"]):
        subprocess.run([cli, *args, "-c", ini, "-q", "-o", str(tmp_path / "run")], check=True)
    model = pf.Model.load(str(tmp_path / "run" / "prob.ckpt"))
    assert model.kind == "prob"
    ys = np.linspace(2.1, 9.0, 5)
    mean, std = model.predict(np.ones(model.m), ys)
    assert mean.shape == (5,) and np.all(std > 0)
    with pytest.raises(pf.DimensionError):
        model.predict(np.ones(model.m + 1), ys)
