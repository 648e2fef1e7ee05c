import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdpmix import harness
from sdpmix.distributions import RngStream
from sdpmix.exceptions import ConfigurationError
from sdpmix.models import GrowthModel, load_growth_data
from sdpmix.sampler import ChainConfig, run_chain

SHORT = ChainConfig(300, 100)


def _cfg(**kw):
    base = dict(error="E8", reps=2, chain=SHORT, seed=3)
    base.update(kw)
    return harness.ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        _cfg(methods=())
    with pytest.raises(ConfigurationError):
        _cfg(methods=("F1", "B7"))


def test_simulate_csv_deterministic(tmp_path):
    out = []
    for k in range(2):
        path = tmp_path / f"run{k}.csv"
        harness.cmd_simulate(_cfg(reps=1), path)
        out.append((path.read_bytes(), harness.aggregate_path(path).read_bytes()))
    assert out[0] == out[1]
    rows = list(csv.reader(open(tmp_path / "run0.csv")))
    assert rows[0] == ["experiment", "method", "rep", "sqerr"]
    assert [r[1] for r in rows[1:]] == list(harness.METHODS)
    agg = list(csv.reader(open(tmp_path / "run0_aggregate.csv")))
    assert agg[0] == ["experiment", "method", "mse", "rel_eff"]
    assert agg[-1][1] == "B3" and float(agg[-1][3]) == 1.0


def test_worker_count_invariance():
    a = harness.cmd_simulate(_cfg(reps=3, methods=("F1", "B3")), workers=1)
    b = harness.cmd_simulate(_cfg(reps=3, methods=("F1", "B3")), workers=2)
    assert a.records == b.records


def test_replication_matches_direct_run():
    cfg = _cfg(methods=("B3",))
    rows = harness.run_replication(cfg, 1)
    stream = RngStream(cfg.seed, 1)
    from sdpmix.models import simulate_dataset
    data = simulate_dataset(stream.child(0), cfg.generative())
    s = run_chain(data, cfg.priors, SHORT, "B3", rng=stream.child(1 + harness.METHODS.index("B3")))
    assert rows[0][2] == pytest.approx(float(np.sum((s.beta_mean - cfg.beta0) ** 2)), rel=1e-15)


def test_failures_are_counted(monkeypatch):
    real = harness.ols_fit
    calls = {"n": 0}

    def flaky(data):
        calls["n"] += 1
        if calls["n"] == 2:
            raise RuntimeError("boom")
        return real(data)

    monkeypatch.setattr(harness, "ols_fit", flaky)
    table = harness.cmd_simulate(_cfg(reps=3, methods=("F1", "F2")))
    assert table.counts("E8", "F1") == (2, 1)
    assert table.counts("E8", "F2") == (3, 0)
    ok = [r[3] for r in table.records if r[1] == "F1" and r[3] is not None]
    assert table.mse("E8", "F1") == pytest.approx(sum(ok) / 2)
    assert "boom" in [r[4] for r in table.records if r[3] is None][0]


def test_mse_definition():
    table = harness.ResultTable([("E", "F1", 0, 0.5, ""), ("E", "F1", 1, 1.5, ""), ("E", "B3", 0, 0.25, ""),
                                 ("E", "B3", 1, 0.75, "")], ("F1", "B3"))
    assert table.mse("E", "F1") == 1.0 and table.rel_eff("E", "F1") == 2.0 and table.rel_eff("E", "B3") == 1.0
    no_b3 = harness.ResultTable([("E", "F1", 0, 0.5, "")], ("F1",))
    assert math.isnan(no_b3.rel_eff("E", "F1"))


@pytest.mark.xfail(strict=True, reason="absolute MSE level not reachable with unit-variance errors and a "
                                       "random intercept; see the decisions ledger")
def test_normal_errors_ols_mse_level():
    table = harness.cmd_simulate(harness.ExperimentConfig(error="E6", reps=300, methods=("F1",), seed=1))
    assert 0.02 <= table.mse("E6", "F1") <= 0.06


# ---------------------------------------------------------------------------
# growth fits


def test_fit_m5_parameter_set(tmp_path):
    out = tmp_path / "m5.csv"
    rows, _ = harness.cmd_fit("M5", chain=ChainConfig(400, 100), out=out)
    names = ["beta_0", "beta_1", "beta_2", "beta_3", "sigma", "sigma_b1", "sigma_b2"]
    assert [r["parameter"] for r in rows] == names
    lines = list(csv.reader(open(out)))
    assert lines[0] == ["parameter", "mean", "sd", "median", "q025", "q975"]
    assert [l[0] for l in lines[1:]] == names


def test_fit_parameter_sets():
    assert harness.growth_parameters(GrowthModel.M1)[-1] == "sigma"
    assert harness.growth_parameters(GrowthModel.M3)[-1] == "sigma_b1"


def test_fit_m1_slope():
    rows, _ = harness.cmd_fit("M1")
    beta2 = next(r for r in rows if r["parameter"] == "beta_2")["mean"]
    assert 0.6 <= beta2 <= 1.0


def test_fit_calibration_m1():
    data = load_growth_data()
    truth = np.array([16.5, 1.0, 0.8, -0.3])
    variant = harness.growth_variant(GrowthModel.M1)
    hits = 0
    for r in range(50):
        gen = RngStream(7, r).gen
        d = data.with_response(data.X @ truth + 2.0 * gen.standard_normal(data.n_obs))
        s = run_chain(d, chain=ChainConfig(2000, 500), variant=variant, rng=RngStream(8, r))
        hits += np.all(np.abs(s.beta_mean - truth) <= 3 * s.sd[:4])
    assert hits / 50 >= 0.9


def test_fit_malformed_csv(tmp_path):
    from sdpmix.exceptions import DataFormatError
    bad = tmp_path / "bad.csv"
    bad.write_text("subject,sex,age,distance\nM01,0,8\n")
    with pytest.raises(DataFormatError) as exc:
        harness.cmd_fit("M1", bad, ChainConfig(10, 0))
    assert exc.value.line == 2


# ---------------------------------------------------------------------------
# Gaussian-limit study


def test_bvm_refuses_non_mixture():
    for token in ("E1", "E2", "E6", "E7"):
        with pytest.raises(ConfigurationError, match="not a symmetric normal location mixture"):
            harness.BvmConfig(error=token)
    with pytest.raises(ConfigurationError):
        harness.BvmConfig(kind="probit")


def test_bvm_zero_reps(tmp_path):
    out = tmp_path / "bvm.csv"
    assert harness.cmd_bvm(harness.BvmConfig(reps=0), out) == []
    assert out.read_text().strip() == "n,rep,mean_gap,min_eig,max_eig,max_ks"


def test_bvm_ks_shrinks_with_n():
    chain = ChainConfig(3000, 500)
    med = {}
    for n in (50, 500):
        reps = harness.cmd_bvm(harness.BvmConfig(n=n, reps=8, chain=chain, seed=2))
        med[n] = np.median([r.max_ks for r in reps])
    assert med[500] < med[50]


@pytest.mark.parametrize("kind", ["regression", "random-intercept"])
def test_bvm_other_kinds_run(kind, tmp_path):
    out = tmp_path / "b.csv"
    reps = harness.cmd_bvm(harness.BvmConfig(kind=kind, n=60, reps=1, chain=ChainConfig(700, 100)), out)
    assert reps[0].delta.shape == (2,) and len(out.read_text().splitlines()) == 2


# ---------------------------------------------------------------------------
# Polya-urn demo


def test_sdp_demo_examples(tmp_path):
    rows, _ = harness.cmd_sdp_demo(1.0, 3.0, 0)
    assert len(rows) == 1 and rows[0][0] == "base" and rows[0][2] == 1.0
    rows, _ = harness.cmd_sdp_demo(1.0, 3.0, 0, past=[2.0], out=tmp_path / "p.csv", stick_out=tmp_path / "s.csv")
    assert [(k, w) for k, _, w in rows] == [("base", 0.5), ("atom", 0.25), ("atom", 0.25)]
    assert [loc for _, loc, _ in rows[1:]] == [-2.0, 2.0]
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines == ["kind,location,weight", "base,,0.5", "atom,-2.0,0.25", "atom,2.0,0.25"]
    stick = list(csv.reader(open(tmp_path / "s.csv")))
    assert math.fsum(float(r[2]) for r in stick[1:]) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=25)
@given(st.floats(0.05, 20), st.integers(0, 15), st.integers(0, 1000))
def test_sdp_demo_weights_sum_to_one(alpha, n, seed):
    rows, stick = harness.cmd_sdp_demo(alpha, 1.0, n, seed)
    assert abs(math.fsum(w for _, _, w in rows) - 1.0) <= 1e-12
    assert abs(stick.weights.sum() + stick.remainder_mass - 1.0) <= 1e-12
