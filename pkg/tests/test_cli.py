# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
import json

from ruamel.yaml import YAML
import numpy as np
import pandas as pd
import pytest

from stap_glm.__main__ import StapGLM
from stap_glm.artifacts import natural_columns
from stap_glm.version import version
from stapcore.diagnostics import split_rhat
from stapcore.summary import chains_of

FIT_ARGS = ["--iter", "60", "--warmup", "30", "--chains", "2", "--seed", "7"]


def _run(*argv) -> int:
    return StapGLM().run([str(arg) for arg in argv])


def _simulate(directory, scenario="cross-sectional", *extra) -> str:
    assert _run("simulate", "--scenario", scenario, "--out", directory, *extra) == 0
    return str(directory / "simulation.yaml")


def _draws(path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


@pytest.fixture
def simulated(tmp_path) -> str:
    return _simulate(tmp_path / "sim", "cross-sectional", "--n-subjects", 60, "--n-befs", 12)


@pytest.fixture
def fitted(tmp_path, simulated) -> str:
    assert _run("fit", "-c", simulated, *FIT_ARGS, "--out", tmp_path / "fit") == 0
    return str(tmp_path / "fit" / "draws.csv")


def test_simulate_writes_tables_and_companion(tmp_path, simulated):
    directory = tmp_path / "sim"
    for name in ("subjects.csv", "distances.csv", "simulation.yaml"):
        assert (directory / name).is_file()
    assert not (directory / "times.csv").exists()
    assert len(pd.read_csv(directory / "subjects.csv")) == 60
    assert len(pd.read_csv(directory / "distances.csv")) == 60 * 12
    with open(simulated) as file:
        first = file.readline()
        companion = YAML(typ="safe").load(file)
    assert first.strip() == f"# stap-glm {version} seed=0"
    assert companion["engine_version"] == version
    assert companion["model"]["formula"] == "y ~ sex + sap(Fast_Food)"
    assert companion["model"]["max_distance"] == 5.0
    assert companion["data"]["subject"] == str(directory / "subjects.csv")


def test_simulate_longitudinal_writes_times(tmp_path):
    _simulate(tmp_path / "long", "longitudinal", "--n-subjects", 20, "--n-befs", 5)
    times = pd.read_csv(tmp_path / "long" / "times.csv")
    assert list(times.columns) == ["subj_ID", "measure_ID", "bef_name", "bef_ID", "Time"]


def test_simulate_unknown_scenario(tmp_path):
    assert _run("simulate", "--scenario", "spatial-only", "--out", tmp_path / "x") == 2


def test_fit_writes_artifacts(tmp_path, fitted):
    directory = tmp_path / "fit"
    for name in ("draws.csv", "summary.txt", "summary_long.txt", "diagnostics.json",
                 "exposure_curves.csv", "config.yaml"):
        assert (directory / name).is_file()
    with open(fitted) as file:
        assert file.readline().strip() == f"# stap-glm {version} seed=7"
    draws = _draws(fitted)
    assert len(draws) == 2 * 30
    assert sorted(draws["chain"].unique()) == [1, 2]
    for column in ("(Intercept)", "sexF", "Fast_Food", "Fast_Food_spatial_scale", "sigma",
                   "lp__", "divergent__"):
        assert column in draws.columns
    assert (draws["Fast_Food_spatial_scale"] > 0).all()
    assert (draws["sigma"] > 0).all()
    summary = (directory / "summary.txt").read_text()
    assert summary.startswith("stap_glm")
    assert summary.rstrip().endswith(f"* stap-glm {version}, seed 7")
    with open(directory / "diagnostics.json") as file:
        assert isinstance(json.load(file), dict)


def test_fit_is_reproducible(tmp_path, simulated, fitted):
    assert _run("fit", "-c", simulated, *FIT_ARGS, "--out", tmp_path / "again") == 0
    pd.testing.assert_frame_equal(_draws(fitted), _draws(tmp_path / "again" / "draws.csv"))


def test_fit_is_independent_of_cores(tmp_path, simulated, fitted):
    assert _run("fit", "-c", simulated, *FIT_ARGS, "--cores", 2, "--out", tmp_path / "par") == 0
    pd.testing.assert_frame_equal(_draws(fitted), _draws(tmp_path / "par" / "draws.csv"))


def test_termination(tmp_path, simulated, fitted):
    assert _run("termination", "-c", simulated, "--draws", fitted, "--out", tmp_path / "term") == 0
    path = tmp_path / "term" / "termination.csv"
    with open(path) as file:
        assert file.readline().strip() == f"# stap-glm {version} seed=7"
    table = pd.read_csv(path, comment="#", index_col="term")
    assert list(table.columns) == ["2.5%", "50%", "97.5%"]
    assert list(table.index) == ["Fast_Food"]
    row = table.loc["Fast_Food"]
    assert 0 < row["2.5%"] <= row["50%"] <= row["97.5%"]


def test_ppc(tmp_path, simulated, fitted):
    assert _run("ppc", "-c", simulated, "--draws", fitted, "--out", tmp_path / "ppc") == 0
    replicates = pd.read_csv(tmp_path / "ppc" / "ppc_replicates.csv", comment="#")
    assert len(replicates) == 60
    assert list(replicates.columns[:3]) == ["chain", "draw", "y_rep[1]"]
    assert replicates.columns[-1] == "mean_PPD"
    assert replicates.shape[1] == 2 + 60 + 1
    text = (tmp_path / "ppc" / "ppc_summary.txt").read_text()
    assert "mean_PPD" in text


def test_missing_time_data_is_a_config_error(tmp_path, simulated):
    code = _run("fit", "-c", simulated, "--formula", "y ~ sex + stap(Fast_Food)", *FIT_ARGS,
                "--out", tmp_path / "bad")
    assert code == 2
    assert not (tmp_path / "bad" / "draws.csv").exists()


def test_missing_subject_file_is_a_data_error(tmp_path, simulated):
    code = _run("fit", "-c", simulated, "--subject-data", tmp_path / "missing.csv", *FIT_ARGS,
                "--out", tmp_path / "bad")
    assert code == 3


def _covers(draws: pd.DataFrame, column: str, truth: float) -> bool:
    lower, upper = np.quantile(draws[column], [0.005, 0.995])
    return lower <= truth <= upper


def _worst_rhat(draws: pd.DataFrame) -> float:
    """Largest split R̂ over the natural-scale parameters other than random intercepts."""
    values = [
        split_rhat(chains_of(draws, column)) for column in natural_columns(draws)
        if not column.startswith("b[")
    ]
    return max(value for value in values if value is not None)


def _mean_ppd(tmp_path, config: str, draws_path) -> float:
    assert _run("ppc", "-c", config, "--draws", draws_path, "--out", tmp_path / "ppc") == 0
    replicates = pd.read_csv(tmp_path / "ppc" / "ppc_replicates.csv", comment="#")
    return float(replicates["mean_PPD"].median())


def test_cross_sectional_companion_carries_priors(simulated):
    with open(simulated) as file:
        file.readline()
        companion = YAML(typ="safe").load(file)
    priors = companion["priors"]
    assert priors["intercept"] == {"distribution": "normal", "location": 26, "scale": 4}
    assert priors["coefficients"]["scale"] == 4
    assert priors["coefficients"]["autoscale"] is False
    assert priors["stap"] == {"distribution": "normal", "location": 0, "scale": 4}
    assert priors["theta"] == {"distribution": "log_normal", "location": 1, "scale": 1}
    assert priors["aux"] == {"distribution": "cauchy", "location": 0, "scale": 5}


def test_other_companions_use_default_priors(tmp_path):
    config = _simulate(tmp_path / "long", "longitudinal", "--n-subjects", 10, "--n-befs", 3)
    with open(config) as file:
        file.readline()
        assert "priors" not in YAML(typ="safe").load(file)


@pytest.mark.slow
@pytest.mark.parametrize("n_subjects,slack", [(None, 1.0), (300, 2.0)])
def test_recovers_cross_sectional_effects(tmp_path, n_subjects, slack):
    extra = ["--n-subjects", n_subjects] if n_subjects else []
    config = _simulate(tmp_path / "sim", "cross-sectional", "--seed", 11, *extra)
    assert _run("fit", "-c", config, "--seed", 3, "--out", tmp_path / "fit") == 0
    draws_path = tmp_path / "fit" / "draws.csv"
    draws = _draws(draws_path)
    assert _covers(draws, "(Intercept)", 22.5)
    assert _covers(draws, "sexF", -0.8)
    assert _covers(draws, "Fast_Food", 1.2)
    assert _covers(draws, "Fast_Food_spatial_scale", 0.5)
    assert _covers(draws, "sigma", 2.3)
    assert abs(draws["Fast_Food"].median() - 1.2) <= 0.15 * slack
    assert abs(draws["Fast_Food_spatial_scale"].median() - 0.5) <= 0.1 * slack
    assert draws["divergent__"].mean() < 0.01
    assert _worst_rhat(draws) <= 1 + 0.01 * slack

    observed = pd.read_csv(tmp_path / "sim" / "subjects.csv")["y"].mean()
    assert abs(_mean_ppd(tmp_path, config, draws_path) - observed) <= 0.5 * slack

    assert _run("termination", "-c", config, "--draws", draws_path,
                "--out", tmp_path / "term") == 0
    table = pd.read_csv(tmp_path / "term" / "termination.csv", comment="#", index_col="term")
    assert list(table.columns) == ["2.5%", "50%", "97.5%"]
    row = table.loc["Fast_Food"]
    assert 0 < row["2.5%"] < row["50%"] < row["97.5%"]


@pytest.mark.slow
@pytest.mark.parametrize("n_subjects,slack", [(None, 1.0), (150, 2.0)])
def test_recovers_longitudinal_effects(tmp_path, n_subjects, slack):
    extra = ["--n-subjects", n_subjects] if n_subjects else []
    config = _simulate(tmp_path / "sim", "longitudinal", "--seed", 12, *extra)
    assert _run("fit", "-c", config, "--seed", 4, "--out", tmp_path / "fit") == 0
    draws = _draws(tmp_path / "fit" / "draws.csv")
    assert _covers(draws, "(Intercept)", 21.0)
    assert _covers(draws, "sex", 1.3)
    assert _covers(draws, "Fast_Food", 1.0)
    assert _covers(draws, "Fast_Food_spatial_scale", 0.8)
    assert _covers(draws, "Fast_Food_temporal_scale", 18.0)
    assert _covers(draws, "sigma", 2.0)
    assert abs(draws["Fast_Food_spatial_scale"].median() - 0.8) <= 0.15 * slack
    assert abs(draws["Fast_Food_temporal_scale"].median() - 18.0) <= 2.5 * slack
    assert abs(draws["sd[subj_ID:(Intercept)]"].median() - 1.5) <= 0.4 * slack
    assert _worst_rhat(draws) <= 1 + 0.01 * slack


@pytest.mark.slow
def test_recovers_grouped_binomial_effects(tmp_path):
    config = _simulate(tmp_path / "sim", "grouped-binomial", "--seed", 13)
    assert _run("fit", "-c", config, "--iter", 1000, "--warmup", 500, "--seed", 5,
                "--out", tmp_path / "fit") == 0
    draws = _draws(tmp_path / "fit" / "draws.csv")
    assert _covers(draws, "Gender_CATMale", 0.3)
    assert _covers(draws, "FFR", 0.25)
    assert _covers(draws, "FFR_spatial_scale", 0.6)
