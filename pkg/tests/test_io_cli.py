import csv
import json

import numpy as np
import pytest

from spamqpt import cli, hs, io, sim, tomo

B = hs.build_basis(2)


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    code = run("sweep", "--out", out, "--grid", "0,0.02", "--runs", 3, "--seed", 9, "--dump-data")
    assert code == 0
    return out


# ---------------------------------------------------------------- io


def test_frame_round_trip(tmp_path):
    for design in sim.DESIGNS.values():
        frame = design.full_frame(B)
        io.write_frame(frame, tmp_path / "f.json")
        back = io.read_frame(tmp_path / "f.json")
        assert np.array_equal(back.m0, frame.m0) and np.array_equal(back.s0, frame.s0)
        assert back.effect_labels == frame.effect_labels and back.state_labels == frame.state_labels


def test_read_frame_rejects_garbage(tmp_path):
    bad = tmp_path / "f.json"
    bad.write_text("{not json")
    with pytest.raises(io.ParseError):
        io.read_frame(bad)
    bad.write_text(json.dumps({"format": "other"}))
    with pytest.raises(io.ParseError):
        io.read_frame(bad)


def test_counts_round_trip(tmp_path):
    design = sim.MINIMAL_DESIGN
    ds = sim.simulate_dataset(design, sim.NoiseModel.depolarizing(0.01), 0, B)
    pairs = {b: sim.BASIS_OUTCOMES[b] for b in design.bases}
    io.write_counts(ds.p_hat, pairs, tmp_path / "c.csv", "header text")
    text = (tmp_path / "c.csv").read_text()
    assert text.startswith("# header text\n")
    rows = read_csv(tmp_path / "c.csv")
    assert set(rows[0]) == set(io.COUNT_COLUMNS)
    assert len(rows) == 6 * 4
    back = io.read_counts(tmp_path / "c.csv")
    assert np.array_equal(back.values, ds.p_hat.values)
    assert np.all(back.shots == 5000)
    assert back.row_labels == ds.p_hat.row_labels and back.col_labels == ds.p_hat.col_labels


def test_read_counts_errors(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("prep_label,basis_label,outcome_label,counts\n+x,x,+x,1\n")
    with pytest.raises(io.ParseError):
        io.read_counts(p)
    p.write_text("prep_label,basis_label,outcome_label,counts,shots\n+x,x,+x,abc,10\n")
    with pytest.raises(io.ParseError):
        io.read_counts(p)
    p.write_text("prep_label,basis_label,outcome_label,counts,shots\n+x,x,+x,11,10\n")
    with pytest.raises(io.ParseError):
        io.read_counts(p)


def test_config_hash_stable():
    a = io.config_hash({"b": 1, "a": [1, 2]})
    assert a == io.config_hash({"a": [1, 2], "b": 1})
    assert len(a) == 12 and a != io.config_hash({"a": [1, 2], "b": 2})


def test_estimate_dict_round_trip(tmp_path):
    frame = sim.MINIMAL_DESIGN.frame(B)
    est = tomo.spam_corrected_qpt(frame, frame.m0 @ frame.s0, frame.m0 @ frame.s0, 0.5)
    d = io.estimate_to_dict(est)
    json.dumps(d)
    assert np.allclose(d["g_hat"], np.eye(4))
    assert len(d["diagnostics"]["spectrum"]) == 4


# ---------------------------------------------------------------- sweep


def test_sweep_outputs(small_sweep):
    names = {"records.csv", "aggregates.csv", "aggregates.json", "plot_fig1.dat", "plot_fig2.dat", "config.json"}
    assert names <= {p.name for p in small_sweep.iterdir()}
    assert not (small_sweep / "warnings.txt").exists()
    recs = read_csv(small_sweep / "records.csv")
    assert tuple(recs[0]) == cli.RECORD_COLUMNS
    assert len(recs) == 2 * 3 * 4
    aggs = read_csv(small_sweep / "aggregates.csv")
    assert tuple(aggs[0]) == cli.AGGREGATE_COLUMNS
    assert {a["n"] for a in aggs} == {"3"}
    for name in ("records.csv", "aggregates.csv", "plot_fig1.dat", "plot_fig2.dat"):
        first = (small_sweep / name).read_text().splitlines()[0]
        assert first.startswith("# ") and "config_hash" in first and "seed" in first
    blob = json.loads((small_sweep / "aggregates.json").read_text())
    assert blob["config"]["base_seed"] == 9 and len(blob["aggregates"]) == 8


def test_plot_file_columns(small_sweep):
    rows = [ln.split() for ln in (small_sweep / "plot_fig2.dat").read_text().splitlines() if not ln.startswith("#")]
    assert len(rows) == 2 and all(len(r) == 1 + 2 * 4 for r in rows)
    assert float(rows[1][0]) == pytest.approx(0.02)


def test_sweep_byte_identical(tmp_path):
    args = ("--grid", "0.01", "--runs", 2, "--seed", 3, "--estimators", "standard,corrected:0.5")
    assert run("sweep", "--out", tmp_path / "a", *args) == 0
    assert run("sweep", "--out", tmp_path / "b", *args) == 0
    for name in ("records.csv", "aggregates.csv", "aggregates.json", "plot_fig1.dat", "plot_fig2.dat", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_exact_shots(tmp_path):
    assert run("sweep", "--out", tmp_path, "--shots", "exact", "--grid", "0.02", "--runs", 2) == 0
    aggs = {a["estimator"]: a for a in read_csv(tmp_path / "aggregates.csv")}
    std = aggs["standard"]
    assert abs(float(std["mean_fid_err_entanglement"]) - 3 * 0.99 * (0.98**2 - 1) / 4) < 1e-10
    assert float(std["mean_fid_err_entanglement"]) == pytest.approx(-0.029403, abs=1e-6)
    assert float(std["sigma_fid_err_entanglement"]) == 0
    for tag in ("corrected:0", "corrected:0.5", "corrected:1"):
        assert abs(float(aggs[tag]["mean_fid_err_entanglement"])) < 1e-10


def test_builtin_config_shape(tmp_path):
    # shrink shots only to keep the run short; the shape is what matters
    assert run("sweep", "--config", "paper-fig1-depol", "--out", tmp_path, "--shots", 200) == 0
    aggs = read_csv(tmp_path / "aggregates.csv")
    assert len(aggs) == 4 * 9
    assert sorted({a["estimator"] for a in aggs}) == ["corrected:0", "corrected:0.5", "corrected:1", "standard"]
    assert {a["n"] for a in aggs} == {"50"}
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["name"] == "paper-fig1-depol" and cfg["base_seed"] == 20240601


def test_sweep_json_config_and_overrides(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"noise_kind": "coherent", "grid": [0.05], "n_runs": 2, "formats": ["json"]}))
    assert run("sweep", "--config", conf, "--out", tmp_path / "o", "--gauge-p", "0,1") == 0
    assert not (tmp_path / "o" / "records.csv").exists()
    blob = json.loads((tmp_path / "o" / "aggregates.json").read_text())
    assert {a["estimator"] for a in blob["aggregates"]} == {"standard", "corrected:0", "corrected:1"}


def test_sweep_usage_errors(tmp_path):
    assert run("sweep", "--out", tmp_path, "--config", "no-such-config") == 1
    assert run("sweep", "--out", tmp_path, "--estimators", "bayes") == 1
    assert run("sweep", "--out", tmp_path, "--shots", "-3") == 1
    assert run("sweep", "--out", tmp_path, "--shots", "exact", "--dump-data") == 1
    assert run("sweep", "--out", tmp_path, "--bogus") == 1
    assert run("sweep") == 1


# ---------------------------------------------------------------- estimate


def test_dump_data_round_trip(small_sweep, tmp_path):
    data = small_sweep / "data"
    out = tmp_path / "est.json"
    code = run("estimate", "--frame", small_sweep / "frame.json", "--counts", data / "g01_r001_gate.csv",
               "--calibration", data / "g01_r001_calibration.csv", "--target", "xpi2", "--gauge-p", "0,0.5,1",
               "--out", out)
    assert code == 0
    doc = io.read_estimate(out)
    assert [e["gauge_p"] for e in doc["estimates"]] == [0, 0.5, 1]

    ds = sim.simulate_dataset(sim.MINIMAL_DESIGN, sim.NoiseModel.depolarizing(0.02), 9 + 1, B)
    frame = sim.MINIMAL_DESIGN.frame(B)
    for e in doc["estimates"]:
        ref = tomo.spam_corrected_qpt(frame, ds.i_hat, ds.p_hat, e["gauge_p"], B)
        assert np.allclose(e["g_hat"], ref.g_hat.mat, atol=1e-12)
        assert e["fidelity"]["entanglement"] == pytest.approx(hs.gate_fidelity(ref.g_hat, hs.X_PI_2, B, "entanglement"))

    recs = [r for r in read_csv(small_sweep / "records.csv")
            if r["grid_index"] == "1" and r["run_index"] == "1" and r["estimator"] == "corrected:0.5"]
    f_true = hs.gate_fidelity(sim.true_gate(sim.NoiseModel.none(), B), hs.X_PI_2, B, "entanglement")
    assert float(recs[0]["fid_err_entanglement"]) == pytest.approx(
        doc["estimates"][1]["fidelity"]["entanglement"] - f_true, abs=1e-12)


def test_estimate_without_calibration_warns(small_sweep, tmp_path, capsys):
    out = tmp_path / "est.json"
    assert run("estimate", "--frame", small_sweep / "frame.json",
               "--counts", small_sweep / "data" / "g00_r000_gate.csv", "--out", out) == 0
    assert "SPAM correction was skipped" in capsys.readouterr().err
    doc = io.read_estimate(out)
    assert doc["warnings"] and doc["estimates"][0]["method"] == "standard"


def test_estimate_overcomplete_routing(small_sweep, tmp_path):
    out = tmp_path / "est.json"
    data = small_sweep / "data"
    assert run("estimate", "--frame", small_sweep / "frame_full.json", "--counts", data / "g01_r000_gate.csv",
               "--calibration", data / "g01_r000_calibration.csv", "--out", out) == 0
    assert io.read_estimate(out)["estimates"][0]["method"] == "overcomplete"


def test_estimate_shape_mismatch_exit_code(small_sweep, tmp_path):
    # six-effect frame against counts that only record four outcomes
    src = (small_sweep / "data" / "g00_r000_gate.csv").read_text().splitlines()
    kept = [ln for ln in src if ",y," not in ln]
    short = tmp_path / "short.csv"
    short.write_text("\n".join(kept) + "\n")
    code = run("estimate", "--frame", small_sweep / "frame_full.json", "--counts", short)
    assert code == 4


def test_estimate_malformed_inputs(small_sweep, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("prep,basis\n1,2\n")
    assert run("estimate", "--frame", small_sweep / "frame.json", "--counts", bad) == 1
    assert run("estimate", "--frame", tmp_path / "missing.json", "--counts", bad) == 1
    assert run("estimate", "--frame", small_sweep / "frame.json",
               "--counts", small_sweep / "data" / "g00_r000_gate.csv", "--estimator", "corrected") == 1


# ---------------------------------------------------------------- check-spam / make-design


def test_check_spam_exit_codes(tmp_path, capsys):
    assert run("make-design", "minimal", "--out", tmp_path) == 0
    design = sim.MINIMAL_DESIGN
    pairs = {b: sim.BASIS_OUTCOMES[b] for b in design.bases}
    clean = sim.simulate_dataset(design, sim.NoiseModel.none(), 1, B).i_hat
    noisy = sim.simulate_dataset(design, sim.NoiseModel.depolarizing(0.02), 1, B).i_hat
    io.write_counts(clean, pairs, tmp_path / "clean.csv")
    io.write_counts(noisy, pairs, tmp_path / "noisy.csv")
    assert run("check-spam", "--frame", tmp_path / "frame.json", "--calibration", tmp_path / "clean.csv",
               "--out", tmp_path / "rep.json") == 0
    assert "PASS" in capsys.readouterr().out
    assert json.loads((tmp_path / "rep.json").read_text())["passed"] is True
    assert run("check-spam", "--frame", tmp_path / "frame.json", "--calibration", tmp_path / "noisy.csv") == 2
    assert "FAIL" in capsys.readouterr().out


def test_make_design_files(tmp_path):
    assert run("make-design", "overcomplete", "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "design.json").read_text())
    assert doc["n_circuits"] == 36 and len(doc["preps"]) == 6
    assert io.read_frame(tmp_path / "frame_full.json").shape == (6, 6)
    assert run("make-design", "nonsense", "--out", tmp_path) == 1


@pytest.mark.parametrize("sub", ["sweep", "estimate", "check-spam", "make-design"])
def test_help_for_each_subcommand(sub, capsys):
    assert cli.main([sub, "--help"]) == 0
    assert "usage:" in capsys.readouterr().out


def test_no_subcommand_is_usage_error():
    assert run() == 1
