import math

import pytest

import patchlab

TINY = {
    "data": {"d": 20, "jnr_count": 5},
    "network": {"m": 4, "sigma0": 0.05},
    "train": {"epochs": 4, "eval_every": 2, "n_train": 12},
    "test_n": 16,
    "seeds": [1],
}


def test_activation():
    assert patchlab.srelu(-0.5) == 0.0
    assert patchlab.srelu(0.5) == pytest.approx(0.125 / 3)
    assert patchlab.srelu(2.0) == pytest.approx(4 / 3)
    assert patchlab.srelu_prime(0.5) == pytest.approx(0.25)
    with pytest.raises(Exception):
        patchlab.Activation(q=1)


def test_default_config():
    cfg = patchlab.default_config()
    assert cfg["data"]["k"] == 2
    assert cfg["data"]["d"] == 100
    assert cfg["train"]["epsilon"] == 1.2
    assert cfg["train"]["eta_tilde"] == 1000


def test_bad_config():
    with pytest.raises(patchlab.ConfigError, match="epsilon"):
        patchlab.validate_config('{\n "train": {"epsilon": -1}\n}')


def test_dataset_and_network():
    data = patchlab.sample_dataset(5, 3)
    assert len(data) == 5
    x, y = data[0]
    assert len(x) == 16 and len(x[0]) == 100
    net = patchlab.rank_one_network(2, 100, 100.0, "robust")
    assert net.predict(x) == y
    scores = net.forward(x)
    assert len(scores) == 2
    assert patchlab.Network.from_json(net.to_json()) == net
    adv = patchlab.pgd_attack(net, x, y, 1.2, 0.3)
    assert max(abs(a - b) for ra, rb in zip(adv, x) for a, b in zip(ra, rb)) <= 1.2 + 1e-12


def test_run_seed_is_deterministic():
    a = patchlab.run_seed("std", 2, TINY)
    b = patchlab.run_seed("std", 2, TINY)
    assert a["trace_csv"] == b["trace_csv"]
    assert a["trace_csv"].startswith("epoch,train_ce,std_acc,rob_acc,corr_u_1")
    assert 0.0 <= a["clean_acc"] <= 1.0


def test_experiment_and_plots(tmp_path):
    summary = patchlab.run_experiment(tmp_path / "run", "adv", TINY)
    assert summary["mode"] == "adv"
    files = patchlab.emit_plot_data(tmp_path / "plots", adv_dir=tmp_path / "run")
    assert any(f.endswith("fig4_adv_correlations_mean.csv") for f in files)


def test_checks():
    g = patchlab.gradcheck(10, 1)
    assert g["max_rel_err_weights"] <= 1e-6
    p = patchlab.props_check(100.0, {"test_n": 100})
    assert p["nonrobust"]["clean_acc"] == 1.0
    diag, coef = patchlab.lockstep("std", 10, {"network": {"m": 10}})
    assert diag <= 1e-6 and coef <= 1e-6
    r = patchlab.tensor_power_check(0.011, 0.01, 1.0)
    assert r["x_first"] and r["ratio"] <= 100
    assert not math.isnan(r["ratio"])
