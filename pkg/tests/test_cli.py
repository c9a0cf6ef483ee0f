import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra import numpy as hnp
from hypothesis import strategies as st

from mcr2 import cli, io, rates, synth


def write_config(path, **cfg):
    path.write_text(json.dumps({"schema_version": 1, **cfg}))
    return str(path)


def run(*argv):
    return cli.main([str(a) for a in argv])


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


# ---------------------------------------------------------------------------
# file formats


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)),
                  elements=st.floats(allow_nan=False, allow_infinity=False)))
@settings(max_examples=30)
def test_matrix_round_trip_is_exact(tmp_path_factory, Z):
    path = tmp_path_factory.mktemp("io") / "z.csv"
    io.write_matrix(path, Z)
    np.testing.assert_array_equal(io.read_matrix(path), Z)


def test_matrix_layout(tmp_path):
    io.write_matrix(tmp_path / "z.csv", np.array([[1.0, 2.0, 3.0], [0.1, 0.2, 0.3]]))
    assert (tmp_path / "z.csv").read_text().splitlines() == ["f0,f1", "1,0.10000000000000001",
                                                            "2,0.20000000000000001", "3,0.29999999999999999"]


def test_labels_round_trip_and_errors(tmp_path):
    io.write_labels(tmp_path / "y.csv", [2, 0, 1])
    assert (tmp_path / "y.csv").read_text() == "label\n2\n0\n1\n"
    np.testing.assert_array_equal(io.read_labels(tmp_path / "y.csv"), [2, 0, 1])
    (tmp_path / "bad.csv").write_text("label\n1.5\n")
    with pytest.raises(io.FileFormatError):
        io.read_labels(tmp_path / "bad.csv")
    (tmp_path / "bad2.csv").write_text("x0,x1\n1,2\n")
    with pytest.raises(io.FileFormatError):
        io.read_matrix(tmp_path / "bad2.csv")


# ---------------------------------------------------------------------------
# config handling


def test_unknown_key_is_usage_error(tmp_path):
    cfg = write_config(tmp_path / "c.json", specs=[], n_seed=3)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2


def test_wrong_schema_version(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"schema_version": 7}))
    assert run("simulate", "--config", tmp_path / "c.json", "--out", tmp_path / "o") == 2


def test_missing_config_flag_and_bad_subcommand(tmp_path):
    assert run("optimize", "--out", tmp_path) == 2
    assert run("compress") == 2


def test_missing_config_file(tmp_path):
    assert run("simulate", "--config", tmp_path / "nope.json", "--out", tmp_path / "o") == 1


# ---------------------------------------------------------------------------
# simulate


def test_simulate_empty_spec_list(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", specs=[])
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 0
    assert (tmp_path / "o" / "rates.csv").read_text() == "spec_id,seed,d,d_j,orthogonal,R,Rc,DeltaR\n"
    assert manifest(tmp_path / "o")["status"] == "ok"


def test_simulate_is_deterministic_and_matches_library(tmp_path):
    specs = [{"id": "g", "kind": "gaussian", "d": 20, "m": 40, "k": 4},
             {"id": "s", "d": 20, "d_j": 3, "k": 4, "samples_per_class": 10, "orthogonal": False}]
    cfg = write_config(tmp_path / "c.json", specs=specs, n_seeds=3, workers=3,
                       rate={"eps_sq": 0.5, "log_base": "nats"})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "a", "--seed", 5) == 0
    assert run("simulate", "--config", cfg, "--out", tmp_path / "b", "--seed", 5) == 0
    a = (tmp_path / "a" / "rates.csv").read_bytes()
    assert a == (tmp_path / "b" / "rates.csv").read_bytes()
    lines = a.decode().splitlines()
    assert len(lines) == 1 + 2 * 4
    Z, y = synth.gen_gaussian(20, 40, 4, 6)
    rep = rates.rate_reduction(Z, synth.membership_from_labels(y, 4), rates.RateParams(0.5, "nats"))
    row = lines[2].split(",")
    assert row[:2] == ["g", "6"] and float(row[7]) == rep.reduction
    means = [ln.split(",") for ln in lines if ln.split(",")[1] == "mean"]
    assert [m[0] for m in means] == ["g", "s"]
    assert manifest(tmp_path / "a")["seeds"] == [5, 6, 7]


def test_simulate_bad_row_fails_but_keeps_good_rows(tmp_path):
    specs = [{"id": "ok", "d": 8, "d_j": 2, "k": 2, "samples_per_class": 5},
             {"id": "bad", "d": 4, "d_j": 9}]
    cfg = write_config(tmp_path / "c.json", specs=specs)
    out = tmp_path / "o"
    assert run("simulate", "--config", cfg, "--out", out) == 1
    assert "ok,0" in (out / "rates.csv").read_text()
    errors = json.loads((out / "errors.json").read_text())
    assert errors[0]["spec_id"] == "bad"
    assert manifest(out)["status"] == "failed"


def test_log_base_override(tmp_path):
    specs = [{"id": "g", "kind": "gaussian", "d": 6, "m": 12, "k": 2}]
    cfg = write_config(tmp_path / "c.json", specs=specs, rate={"eps_sq": 0.5, "log_base": "bits"})
    assert run("--log-base", "nats", "simulate", "--config", cfg, "--out", tmp_path / "n") == 0
    assert run("simulate", "--config", cfg, "--out", tmp_path / "b") == 0
    r_n = float((tmp_path / "n" / "rates.csv").read_text().splitlines()[1].split(",")[5])
    r_b = float((tmp_path / "b" / "rates.csv").read_text().splitlines()[1].split(",")[5])
    assert r_n == pytest.approx(r_b * np.log(2), rel=1e-12)
    assert manifest(tmp_path / "n")["config"]["rate"]["log_base"] == "nats"


# ---------------------------------------------------------------------------
# verify


def test_verify_lemmas_pass(tmp_path):
    out = tmp_path / "v"
    assert run("verify", "--suite", "lemmas", "--trials", 100, "--seed", 20261017, "--out", out) == 0
    report = json.loads((out / "verify.json").read_text())
    assert report["passed"] and len(report["properties"]) == 9
    assert all("worst_slack" in p for p in report["properties"])


def test_verify_usage_errors(tmp_path):
    assert run("verify", "--trials", 0, "--out", tmp_path) == 2
    assert run("verify", "--suite", "everything", "--out", tmp_path) == 2


def test_verify_catches_flipped_reduction(tmp_path, monkeypatch):
    honest = rates.rate_reduction

    def broken(Z, pi, params):
        rep = honest(Z, pi, params)
        rep.reduction = rep.rate_segmented - rep.rate_whole
        return rep

    monkeypatch.setattr(rates, "rate_reduction", broken)
    out = tmp_path / "v"
    assert run("verify", "--suite", "lemmas", "--trials", 20, "--out", out) == 1
    props = {p["name"]: p for p in json.loads((out / "verify.json").read_text())["properties"]}
    assert not props["reduction_nonnegative"]["passed"]
    assert props["reduction_nonnegative"]["witness"]["DeltaR"] < 0


# ---------------------------------------------------------------------------
# optimize


def a7_config(tmp_path, **optimizer):
    return write_config(tmp_path / "a7.json", seed=4, rate={"eps_sq": 0.5, "log_base": "nats"},
                        optimizer={"step_size": 0.5, "tol": 1e-10, **optimizer},
                        data={"source": "random_sphere", "d": 16, "samples_per_class": [4, 4]})


def test_optimize_theorem_instance(tmp_path):
    out = tmp_path / "o"
    assert run("optimize", "--config", a7_config(tmp_path), "--out", out) == 0
    rep = json.loads((out / "diagnostics.json").read_text())
    assert rep["diagnostics"]["max_interclass_cosine"] < 1e-2
    for s in rep["diagnostics"]["per_class_singular_values"]:
        np.testing.assert_allclose(s, 1.0, rtol=1e-2)
    assert abs(rep["final"]["DeltaR"] - rep["oracle_DeltaR"]) / rep["oracle_DeltaR"] < 5e-3
    assert io.read_matrix(out / "Z.csv").shape == (16, 8)
    assert (out / "trace.csv").read_text().startswith("iter,R,Rc,DeltaR,grad_norm\n")
    assert set(manifest(out)["outputs"]) == {"Z.csv", "labels.csv", "trace.csv", "diagnostics.json"}


def test_optimize_zero_iterations_echo_input(tmp_path):
    Z0 = synth.random_sphere(5, 6, seed=9)
    io.write_matrix(tmp_path / "z0.csv", Z0)
    io.write_labels(tmp_path / "y.csv", [0, 0, 1, 1, 2, 2])
    cfg = write_config(tmp_path / "c.json", optimizer={"max_iters": 0},
                       data={"source": "files", "features": str(tmp_path / "z0.csv"), "labels": str(tmp_path / "y.csv")})
    assert run("optimize", "--config", cfg, "--out", tmp_path / "o") == 0
    assert (tmp_path / "o" / "Z.csv").read_bytes() == (tmp_path / "z0.csv").read_bytes()


def test_optimize_missing_input_file(tmp_path):
    cfg = write_config(tmp_path / "c.json",
                       data={"source": "files", "features": str(tmp_path / "nope.csv"), "labels": str(tmp_path / "y.csv")})
    out = tmp_path / "o"
    assert run("optimize", "--config", cfg, "--out", out) == 1
    m = manifest(out)
    assert m["status"] == "failed" and "nope.csv" in m["error"]


# ---------------------------------------------------------------------------
# train


def circles_config(tmp_path, name="c.json", **extra):
    base = dict(seed=0, rate={"eps_sq": 0.5, "log_base": "nats"},
                optimizer={"step_size": 0.1, "max_iters": 1000, "tol": 1e-12},
                network={"layer_widths": [3, 32, 8]}, data={"source": "two_circles", "m_per_class": 100})
    base.update(extra)
    return write_config(tmp_path / name, **base)


def test_train_two_circles(tmp_path):
    out = tmp_path / "t"
    assert run("train", "--config", circles_config(tmp_path), "--out", out) == 0
    rep = json.loads((out / "eval.json").read_text())
    assert rep["train_accuracy"] >= 0.95 and rep["heldout_accuracy"] >= 0.95
    assert io.read_matrix(out / "params" / "layer0_weight.csv").shape == (3, 32)
    trace = np.loadtxt(out / "trace.csv", delimiter=",", skiprows=1)
    assert np.all(np.diff(trace[:, 3]) >= -1e-12)


def test_train_zero_learning_rate_flat_trace(tmp_path):
    cfg = circles_config(tmp_path, optimizer={"step_size": 0.0, "max_iters": 10})
    assert run("train", "--config", cfg, "--out", tmp_path / "t") == 0
    trace = np.loadtxt(tmp_path / "t" / "trace.csv", delimiter=",", skiprows=1)
    assert np.ptp(trace[:, 1:4], axis=0).max() == 0.0


def test_train_corruption_raises_segmented_rate(tmp_path):
    finals = {}
    for ratio in (0.0, 0.3):
        cfg = write_config(tmp_path / f"c{ratio}.json", seed=0, rate={"eps_sq": 0.5, "log_base": "nats"},
                           optimizer={"step_size": 0.1, "max_iters": 1000, "tol": 1e-12},
                           network={"layer_widths": [16, 32, 16]}, holdout_fraction=0.0,
                           corruption={"ratio": ratio, "seed": 1},
                           data={"source": "subspace_mixture", "k": 4, "d": 16, "d_j": 2, "samples_per_class": 30})
        assert run("train", "--config", cfg, "--out", tmp_path / str(ratio)) == 0
        finals[ratio] = json.loads((tmp_path / str(ratio) / "eval.json").read_text())["final"]["Rc"]
    assert finals[0.3] > finals[0.0]


def test_train_width_mismatch_is_config_error(tmp_path):
    cfg = circles_config(tmp_path, network={"layer_widths": [2, 4]})
    assert run("train", "--config", cfg, "--out", tmp_path / "t") == 2


# ---------------------------------------------------------------------------
# eval


def test_eval_identical_files(tmp_path):
    io.write_labels(tmp_path / "y.csv", [0, 1, 2, 2, 1])
    cfg = write_config(tmp_path / "c.json", truth=str(tmp_path / "y.csv"), predictions=str(tmp_path / "y.csv"))
    assert run("eval", "--config", cfg, "--out", tmp_path / "e") == 0
    rep = json.loads((tmp_path / "e" / "metrics.json").read_text())
    assert (rep["nmi"], rep["acc"], rep["ari"]) == (1.0, 1.0, 1.0)


def test_eval_matches_hand_values(tmp_path):
    io.write_labels(tmp_path / "y.csv", [0, 0, 1, 1])
    io.write_labels(tmp_path / "c.csv", [0, 1, 0, 1])
    cfg = write_config(tmp_path / "c.json", truth=str(tmp_path / "y.csv"), predictions=str(tmp_path / "c.csv"))
    assert run("eval", "--config", cfg, "--out", tmp_path / "e") == 0
    rep = json.loads((tmp_path / "e" / "metrics.json").read_text())
    assert rep["nmi"] == pytest.approx(0.0, abs=1e-15)
    assert rep["ari"] == pytest.approx(-0.5)
    assert rep["acc"] == 0.5


def test_eval_kmeans_on_features(tmp_path):
    rng = np.random.default_rng(0)
    X = np.hstack([rng.normal(0, 0.01, (2, 8)), rng.normal(5, 0.01, (2, 8))])
    io.write_matrix(tmp_path / "x.csv", X)
    io.write_labels(tmp_path / "y.csv", np.repeat([0, 1], 8))
    cfg = write_config(tmp_path / "c.json", truth=str(tmp_path / "y.csv"), features=str(tmp_path / "x.csv"),
                       kmeans={"k": 2})
    assert run("eval", "--config", cfg, "--out", tmp_path / "e") == 0
    assert json.loads((tmp_path / "e" / "metrics.json").read_text())["acc"] == 1.0
    assert (tmp_path / "e" / "predictions.csv").exists()


def test_eval_missing_file_and_length_mismatch(tmp_path):
    io.write_labels(tmp_path / "y.csv", [0, 1])
    io.write_labels(tmp_path / "z.csv", [0, 1, 1])
    cfg = write_config(tmp_path / "c.json", truth=str(tmp_path / "y.csv"), predictions=str(tmp_path / "nope.csv"))
    assert run("eval", "--config", cfg, "--out", tmp_path / "e") == 1
    assert manifest(tmp_path / "e")["status"] == "failed"
    cfg = write_config(tmp_path / "d.json", truth=str(tmp_path / "y.csv"), predictions=str(tmp_path / "z.csv"))
    assert run("eval", "--config", cfg, "--out", tmp_path / "f") == 1
