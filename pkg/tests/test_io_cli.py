"""Data files, configuration, preprocessing and the command line surface."""

import json

import numpy as np
import pytest

from mmar.cli import main
from mmar.exceptions import DataError
from mmar.io import (Preprocessing, parse_config, preprocess, read_data_csv,
                     read_labels_csv, write_data_csv, write_labels_csv)
from mmar.model import MatrixSeries, load_model, save_model
from mmar.scenarios import frozen_scenario
from mmar.simulate import simulate

from conftest import two_regime_demo_model


def test_data_csv_round_trip(rng, tmp_path):
    series = MatrixSeries(rng.standard_normal((7, 2, 3)))
    path = tmp_path / "data.csv"
    write_data_csv(path, series, row_labels=["x", "y"],
                   col_labels=["a", "b", "c"])
    back, rows, cols = read_data_csv(path)
    assert rows == ["x", "y"] and cols == ["a", "b", "c"]
    assert np.array_equal(back.values, series.values)
    # writing what was read reproduces the file byte for byte
    path2 = tmp_path / "data2.csv"
    write_data_csv(path2, back, rows, cols)
    assert path.read_text() == path2.read_text()


def test_data_csv_validation(tmp_path):
    path = tmp_path / "bad.csv"
    # duplicate cell
    path.write_text("t,row,col,value\n1,r0,c0,1.0\n1,r0,c0,2.0\n")
    with pytest.raises(DataError):
        read_data_csv(path)
    # gap in time index
    path.write_text("t,row,col,value\n1,r0,c0,1.0\n3,r0,c0,2.0\n")
    with pytest.raises(DataError):
        read_data_csv(path)
    # incomplete grid
    path.write_text("t,row,col,value\n1,r0,c0,1.0\n1,r1,c0,1.0\n2,r0,c0,2.0\n")
    with pytest.raises(DataError):
        read_data_csv(path)
    # wrong header
    path.write_text("time,row,col,value\n1,r0,c0,1.0\n")
    with pytest.raises(DataError):
        read_data_csv(path)


def test_single_cell_grid_is_valid(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("t,row,col,value\n1,r0,c0,1.0\n2,r0,c0,2.0\n")
    series, _, _ = read_data_csv(path)
    assert series.values.shape == (2, 1, 1)


def test_labels_csv_round_trip(tmp_path):
    path = tmp_path / "labels.csv"
    write_labels_csv(path, [1, 2, 2, 1])
    assert np.array_equal(read_labels_csv(path), [1, 2, 2, 1])


def test_config_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "n_components = 2\norder=1\nseed= 7\nem_rel_tol = 1e-7 # comment\n"
        "center = yes\nk_range = 1,2,3\n")
    cfg = parse_config(path)
    assert cfg == {"n_components": 2, "order": 1, "seed": 7,
                   "em_rel_tol": 1e-7, "center": True, "k_range": [1, 2, 3]}
    path.write_text("bogus_key = 1\n")
    with pytest.raises(DataError):
        parse_config(path)
    path.write_text("seed 7\n")
    with pytest.raises(DataError):
        parse_config(path)


def test_preprocessing_round_trip(rng):
    series = MatrixSeries(3.0 + 2.5 * rng.standard_normal((50, 3, 4)))
    transformed, transform = preprocess(series, center=True, scale=True)
    # pooled per-row variance of the transformed data is 1
    pooled = np.mean(transformed.values**2, axis=(0, 2))
    centered = transformed.values.mean(axis=0)
    assert np.allclose(centered, 0.0, atol=1e-12)
    assert np.allclose(pooled, 1.0, atol=1e-10)
    back = transform.inverse(transformed.values)
    assert np.allclose(back, series.values, atol=1e-10)
    # survives serialization
    again = Preprocessing.from_dict(json.loads(json.dumps(transform.to_dict())))
    assert np.allclose(again.inverse(transformed.values), series.values,
                       atol=1e-10)


# ---------------------------------------------------------------------------
# CLI subcommands (run in-process through main())
# ---------------------------------------------------------------------------

@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "model.json"
    save_model(path, two_regime_demo_model())
    return str(path)


def test_cli_simulate_round_trip(model_file, tmp_path):
    out = tmp_path / "sim"
    code = main(["simulate", "--model", model_file, "--n-obs", "60",
                 "--seed", "3", "--out", str(out)])
    assert code == 0
    series, _, _ = read_data_csv(out / "simulated.csv")
    labels = read_labels_csv(out / "labels.csv")
    direct = simulate(load_model(model_file), 60, seed=3)
    assert np.array_equal(series.values, direct.series.values)
    assert np.array_equal(labels, direct.labels)
    # same seed -> identical files
    out2 = tmp_path / "sim2"
    main(["simulate", "--model", model_file, "--n-obs", "60", "--seed", "3",
          "--out", str(out2)])
    assert (out / "simulated.csv").read_text() == (out2 / "simulated.csv").read_text()


def test_cli_simulate_missing_model(tmp_path, capsys):
    code = main(["simulate", "--model", str(tmp_path / "nope.json"),
                 "--n-obs", "10", "--seed", "1"])
    assert code == 3
    assert "nope.json" in capsys.readouterr().err


def test_cli_fit_matches_library(tmp_path, capsys):
    truth = frozen_scenario("scenario1")
    sim = simulate(truth, 300, seed=21)
    data_path = tmp_path / "data.csv"
    write_data_csv(data_path, sim.series)
    out = tmp_path / "fit"
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        code = main(["fit", "--data", str(data_path), "--k", "2", "--p", "1",
                     "--seed", "5", "--out", str(out)])
    assert code == 0
    payload = json.loads((out / "fit.json").read_text())
    from mmar.estimate import EmOptions, fit_multistart

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        direct = fit_multistart(sim.series, truth.spec, EmOptions(seed=5))
    assert payload["loglik"] == pytest.approx(direct.loglik, abs=1e-12)
    assert (out / "coefficients.txt").exists()
    assert payload["stationarity"]["strict_sufficient"] in (True, False)


def test_cli_select_smoke(tmp_path):
    truth = frozen_scenario("scenario1")
    sim = simulate(truth, 260, seed=23)
    data_path = tmp_path / "data.csv"
    write_data_csv(data_path, sim.series)
    out = tmp_path / "sel"
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        code = main(["select", "--data", str(data_path), "--k-range", "1,2",
                     "--p-range", "1", "--criterion", "bic", "--seed", "5",
                     "--out", str(out)])
    assert code == 0
    winner = json.loads((out / "winner.json").read_text())
    assert winner["criterion"] == "bic"
    assert (out / "selection.csv").read_text().startswith("K,p,dim")


def test_cli_predict(model_file, tmp_path):
    model = load_model(model_file)
    sim = simulate(model, 40, seed=31)
    data_path = tmp_path / "data.csv"
    write_data_csv(data_path, sim.series)
    out = tmp_path / "pred"
    code = main(["predict", "--model", model_file, "--data", str(data_path),
                 "--cells", "0,0;1,1", "--level", "0.9", "--out", str(out)])
    assert code == 0
    payload = json.loads((out / "prediction.json").read_text())
    assert len(payload["steps"]) == 1
    cells = payload["steps"][0]["cells"]
    assert len(cells) == 2 and all(cell["hdr"] for cell in cells)
    assert "mspe" not in payload
    text = (out / "predictive.csv").read_text()
    assert text.startswith("t,row,col,grid,density,in_hdr")


def test_cli_predict_holdout_mspe(model_file, tmp_path):
    from mmar.forecast import conditional_mean, mspe

    model = load_model(model_file)
    sim = simulate(model, 40, seed=41)
    data_path = tmp_path / "data.csv"
    write_data_csv(data_path, sim.series)
    out = tmp_path / "pred"
    code = main(["predict", "--model", model_file, "--data", str(data_path),
                 "--cells", "0,0", "--holdout", "4", "--out", str(out)])
    assert code == 0
    payload = json.loads((out / "prediction.json").read_text())
    assert len(payload["steps"]) == 4
    assert all("observed" in c for step in payload["steps"]
               for c in step["cells"])
    vals = sim.series.values
    forecasts = np.stack([conditional_mean(model, vals[t - 1:t])
                          for t in range(36, 40)])
    assert payload["mspe"] == pytest.approx(mspe(forecasts, vals[36:40]),
                                            abs=1e-9)


def test_cli_diagnose(model_file, tmp_path, capsys):
    out = tmp_path / "diag"
    code = main(["diagnose", "--model", model_file, "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "strict (sufficient)" in text
    payload = json.loads((out / "stationarity.json").read_text())
    assert payload["mean_stationary"] is False
    assert payload["strict_sufficient"] is True
    # the sufficient strict criterion for the demo mixture
    assert payload["strict_value"] == pytest.approx(-0.009777, abs=1e-4)
    assert payload["log_mean_radius"] == pytest.approx(-0.0018, abs=2e-4)


def test_cli_diagnose_lyapunov_needs_seed(model_file, capsys):
    code = main(["diagnose", "--model", model_file, "--lyapunov",
                 "--replications", "5", "--horizon", "50"])
    assert code == 3
    code = main(["diagnose", "--model", model_file, "--lyapunov", "--seed", "4",
                 "--replications", "5", "--horizon", "50"])
    assert code == 0


def test_cli_replicate_single_rep(tmp_path):
    out = tmp_path / "rep"
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        code = main(["replicate", "--scenario", "scenario1", "--reps", "1",
                     "--n-obs", "250", "--seed", "9", "--mode", "coverage",
                     "--workers", "1", "--out", str(out)])
    assert code == 0
    payload = json.loads((out / "replicate_coverage.json").read_text())
    assert payload["n_reps"] == 1
    rates = set(payload["block_coverage"].values())
    assert rates <= {0.0, 1.0} or all(0 <= v <= 1 for v in rates)


def test_cli_replicate_unknown_scenario(capsys):
    code = main(["replicate", "--scenario", "scenarioX", "--reps", "1",
                 "--n-obs", "100", "--seed", "1"])
    assert code == 3


def test_cli_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["simulate", "--model"])  # missing value
    assert excinfo.value.code == 2
