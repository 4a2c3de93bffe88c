# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
import numpy as np
import pandas as pd
import pytest

from stapcore.diagnostics import waic
from stapcore.errors import DiagnosticsError, KernelDomainError
from stapcore.summary import (
    build_header,
    chains_of,
    exposure_curve,
    format_long_summary,
    format_ppd_summary,
    format_summary,
    mad_sd,
    prior_summary,
    stap_termination,
    summarize,
    summarize_parameter,
    termination_table,
)
from stapcore.types import Family, KernelKind

from .conftest import context_from_tables


def _draws_table(rng: np.random.Generator, chains: int = 2, draws: int = 100) -> pd.DataFrame:
    n = chains * draws
    return pd.DataFrame({
        "chain": np.repeat(np.arange(1, chains + 1), draws),
        "draw": np.tile(np.arange(1, draws + 1), chains),
        "(Intercept)": rng.normal(22.0, 0.5, size=n),
        "sexM": rng.normal(1.0, 0.2, size=n),
        "Fast_Food": rng.normal(2.0, 0.3, size=n),
        "Fast_Food_spatial_scale": rng.uniform(0.5, 0.7, size=n),
        "sigma": rng.normal(2.3, 0.05, size=n),
        "b[(Intercept) g:a]": rng.normal(0.0, 1.0, size=n),
        "sd[g:(Intercept)]": np.full(n, 1.5),
    })


def _header(subject_table, distance_table):
    ctx = context_from_tables(subject_table, distance_table, None, "y ~ sex + sap(Fast_Food)",
                              max_distance=5.0)
    return build_header(ctx, posterior_sample_size=200)


def test_mad_sd():
    assert mad_sd([1, 2, 3, 4, 5]) == pytest.approx(1.4826)
    assert mad_sd([7.0] * 10) == 0.0


def test_summarize_constant_draws():
    summary = summarize_parameter("theta", np.full((2, 20), 0.4))
    assert summary.sd == 0.0
    assert summary.mad_sd == 0.0
    assert summary.median == 0.4
    assert set(summary.quantiles) == {"2.5%", "25%", "50%", "75%", "97.5%"}
    assert summary.diagnostics.degenerate


def test_header(subject_table, distance_table):
    header = _header(subject_table, distance_table)
    assert header.function == "stap_glm"
    assert header.family == "gaussian [identity]"
    assert header.formula == "y ~ sex + sap(Fast_Food, erf)"
    assert header.observations == 2
    assert header.intercept
    assert header.fixed_predictors == 1
    assert header.spatial_predictors == 1
    assert header.temporal_predictors == 0
    assert header.spatial_temporal_predictors == 0
    assert header.posterior_sample_size == 200
    assert header.group_levels == {}


def test_grouped_header(make_context):
    ctx = make_context(Family.BINOMIAL, "stap(F, exp, cexp)")
    header = build_header(ctx)
    assert header.function == "stap_glmer"
    assert header.family == "binomial [logit]"
    assert header.spatial_temporal_predictors == 1
    assert header.group_levels == {"g": 3}


def test_summarize_splits_parameter_blocks(subject_table, distance_table):
    draws = _draws_table(np.random.default_rng(0))
    summary = summarize(draws, _header(subject_table, distance_table), engine_version="0.1.0",
                        seed=7)
    assert [s.name for s in summary.estimates] == [
        "(Intercept)", "sexM", "Fast_Food", "Fast_Food_spatial_scale",
    ]
    assert [s.name for s in summary.auxiliary] == ["sigma"]
    assert [(t.group, t.name) for t in summary.error_terms] == [("g", "(Intercept)"), ("Residual", "")]
    assert summary.error_terms[0].std_dev == 1.5
    assert summary.estimates[0].median == pytest.approx(22.0, abs=0.2)
    assert summary.waic is None


def test_summarize_requires_computed_waic(subject_table, distance_table):
    draws = _draws_table(np.random.default_rng(1))
    with pytest.raises(DiagnosticsError, match="WAIC"):
        summarize(draws, _header(subject_table, distance_table), include_waic=True)


def test_chains_of():
    draws = _draws_table(np.random.default_rng(2), chains=3, draws=10)
    assert chains_of(draws, "sigma").shape == (3, 10)
    assert chains_of(draws.drop(columns="chain"), "sigma").shape == (1, 30)
    with pytest.raises(DiagnosticsError, match="different numbers"):
        chains_of(draws.iloc[:-1], "sigma")


def test_format_summary(subject_table, distance_table):
    rng = np.random.default_rng(3)
    draws = _draws_table(rng)
    summary = summarize(
        draws, _header(subject_table, distance_table),
        mean_ppd=rng.normal(22.5, 0.1, size=(2, 100)), engine_version="0.1.0", seed=7,
    )
    text = format_summary(summary)
    lines = text.splitlines()
    assert lines[0] == "stap_glm"
    assert " family:       gaussian [identity]" in lines
    assert " observations: 2" in lines
    assert " spatial predictors:  1" in lines
    assert "Median" in text and "MAD_SD" in text
    assert "Auxiliary parameter(s):" in lines
    assert "Error terms:" in lines
    assert "Sample avg. posterior predictive distribution of y:" in lines
    assert lines[-1] == "* stap-glm 0.1.0, seed 7"
    assert "(Intercept)" in text


def test_format_long_summary(subject_table, distance_table):
    rng = np.random.default_rng(4)
    draws = _draws_table(rng)
    ll = rng.normal(-2.0, 0.1, size=(200, 2))
    summary = summarize(
        draws, _header(subject_table, distance_table), include_waic=True, waic=waic(ll),
        log_posterior=rng.normal(-50.0, 1.0, size=(2, 100)), engine_version="0.1.0",
    )
    text = format_long_summary(summary)
    assert "Model Info:" in text
    assert " sample:       200 (posterior sample size)" in text
    assert " Spatial Predictors:   1" in text
    assert "WAIC:" in text
    assert "Estimates:" in text and "Diagnostics:" in text
    assert "log-posterior" in text
    assert "n_eff" in text and "Rhat" in text
    assert text.rstrip().endswith("* stap-glm 0.1.0")


def test_format_ppd_summary():
    mean_ppd = summarize_parameter("mean_PPD", np.random.default_rng(5).normal(3.0, 0.1, (2, 50)))
    text = format_ppd_summary(mean_ppd, engine_version="0.1.0", seed=1)
    assert text.startswith("Sample avg. posterior predictive distribution of y:")
    assert "mean_PPD" in text
    assert "3.0" in text


def test_termination_of_fixed_scale():
    row = stap_termination(np.ones(50), KernelKind.SPATIAL_ERFC, 0.01, label="Fast_Food")
    assert row.lower == pytest.approx(1.82139, abs=1e-5)
    assert row.median == pytest.approx(1.82139, abs=1e-5)
    assert row.upper == pytest.approx(1.82139, abs=1e-5)
    assert row.column_names == ["2.5%", "50%", "97.5%"]


def test_termination_is_truncated_at_max_value():
    row = stap_termination(np.ones(10), KernelKind.SPATIAL_EXP, 0.01, max_value=1.0)
    assert (row.lower, row.median, row.upper) == (1.0, 1.0, 1.0)


def test_termination_scales_with_theta():
    theta = np.random.default_rng(6).uniform(0.2, 2.0, size=500)
    single = stap_termination(theta, KernelKind.SPATIAL_ERFC)
    double = stap_termination(2 * theta, KernelKind.SPATIAL_ERFC)
    assert double.median == pytest.approx(2 * single.median)
    assert double.lower == pytest.approx(2 * single.lower)
    assert double.upper == pytest.approx(2 * single.upper)
    assert single.lower < single.median < single.upper


def test_termination_interval_width():
    theta = np.random.default_rng(7).uniform(0.2, 2.0, size=500)
    wide = stap_termination(theta, KernelKind.SPATIAL_EXP, prob=0.95)
    narrow = stap_termination(theta, KernelKind.SPATIAL_EXP, prob=0.5)
    assert narrow.column_names == ["25%", "50%", "75%"]
    assert wide.lower < narrow.lower < narrow.upper < wide.upper


@pytest.mark.parametrize("kind", [KernelKind.TEMPORAL_ERF, KernelKind.TEMPORAL_CEXP])
def test_termination_rejects_temporal_kernels(kind):
    with pytest.raises(KernelDomainError):
        stap_termination(np.ones(5), kind)


def test_termination_rejects_bad_input():
    with pytest.raises(KernelDomainError):
        stap_termination([1.0, -1.0], KernelKind.SPATIAL_ERFC)
    with pytest.raises(DiagnosticsError):
        stap_termination([], KernelKind.SPATIAL_ERFC)
    with pytest.raises(DiagnosticsError):
        stap_termination([1.0], KernelKind.SPATIAL_ERFC, prob=1.0)


def test_termination_table():
    rows = [
        stap_termination(np.ones(5), KernelKind.SPATIAL_ERFC, label="FF"),
        stap_termination(np.ones(5), KernelKind.SPATIAL_EXP, label="CS"),
    ]
    table = termination_table(rows)
    assert list(table.columns) == ["2.5%", "50%", "97.5%"]
    assert table.index.name == "term"
    assert list(table.index) == ["FF", "CS"]
    assert table.loc["CS", "50%"] == pytest.approx(4.60517, abs=1e-5)
    assert termination_table([]).empty


def test_exposure_curve():
    theta = np.random.default_rng(8).uniform(0.4, 0.8, size=200)
    curve = exposure_curve(theta, KernelKind.SPATIAL_ERFC, max_x=3.0, points=31)
    assert list(curve.columns) == ["x", "lower", "median", "upper"]
    assert curve.shape == (31, 4)
    assert curve["x"].iloc[-1] == 3.0
    np.testing.assert_allclose(curve.iloc[0][["lower", "median", "upper"]], 1.0)
    assert np.all(np.diff(curve["median"]) <= 0)
    assert np.all(curve["lower"] <= curve["median"])
    assert np.all(curve["median"] <= curve["upper"])
    temporal = exposure_curve(theta, KernelKind.TEMPORAL_CEXP, max_x=3.0)
    assert temporal["median"].iloc[0] == 0.0
    with pytest.raises(DiagnosticsError):
        exposure_curve(theta, KernelKind.SPATIAL_ERFC, max_x=float("inf"))


def test_prior_summary(make_context):
    ctx = make_context(Family.GAUSSIAN, "stap(F)")
    priors = prior_summary(ctx)
    assert list(priors) == [
        "(Intercept)", "x1", "F", "F_spatial_scale", "F_temporal_scale", "sigma",
        "sd[g:(Intercept)]",
    ]
    assert priors["(Intercept)"]["scale"] == 10
    assert priors["F_spatial_scale"]["distribution"] == "log_normal"
    assert priors["sigma"]["distribution"] == "cauchy"
