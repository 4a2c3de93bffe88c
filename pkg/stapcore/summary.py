# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""Posterior summaries, printed model reports, termination distances and exposure curves."""
from __future__ import annotations

from typing import Dict, Iterable, List, Optional, Sequence
import math

import numpy as np
import pandas as pd

from .diagnostics import as_chains, parameter_diagnostics
from .errors import DiagnosticsError, KernelDomainError
from .kernels import termination_distance, weight
from .model import ModelContext
from .types import (
    ErrorTerm,
    FitSummary,
    KernelKind,
    ModelHeader,
    ParameterDiagnostics,
    ParameterSummary,
    StapKind,
    TerminationRow,
    WaicResult,
)

MAD_SD_CONSTANT = 1.4826
QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)
AUXILIARY_NAMES = ("sigma",)


def mad_sd(values: Iterable[float]) -> float:
    values = np.asarray(values, dtype=float).ravel()
    median = np.median(values)
    return MAD_SD_CONSTANT * float(np.median(np.abs(values - median)))


def quantile_label(q: float) -> str:
    return f"{100 * q:g}%"


def summarize_parameter(
    name: str, chains: np.ndarray, diagnostics: Optional[ParameterDiagnostics] = None
) -> ParameterSummary:
    chains = as_chains(chains)
    flat = chains.ravel()
    return ParameterSummary(
        name=name,
        mean=float(flat.mean()),
        sd=float(flat.std(ddof=1)) if flat.size > 1 else 0.0,
        median=float(np.median(flat)),
        mad_sd=mad_sd(flat),
        quantiles={quantile_label(q): float(np.quantile(flat, q)) for q in QUANTILES},
        diagnostics=diagnostics or parameter_diagnostics(chains),
    )


def chains_of(draws: pd.DataFrame, column: str) -> np.ndarray:
    """(chains x draws) array of one column of a draws table with a ``chain`` column."""
    if "chain" not in draws.columns:
        return draws[column].to_numpy(dtype=float)[np.newaxis, :]
    groups = [group[column].to_numpy(dtype=float) for _, group in draws.groupby("chain", sort=True)]
    if len({len(group) for group in groups}) > 1:
        raise DiagnosticsError("Chains have different numbers of draws")
    return np.vstack(groups)


def build_header(
    ctx: ModelContext, posterior_sample_size: int = 0, formula: Optional[str] = None
) -> ModelHeader:
    spec = ctx.spec
    return ModelHeader(
        function="stap_glmer" if spec.group_terms else "stap_glm",
        family=ctx.family.human_str,
        formula=formula or spec.render(),
        observations=ctx.n_obs,
        intercept=spec.intercept,
        fixed_predictors=len(spec.fixed_terms),
        spatial_predictors=spec.count(StapKind.SPATIAL),
        temporal_predictors=spec.count(StapKind.TEMPORAL),
        spatial_temporal_predictors=spec.count(StapKind.SPATIAL_TEMPORAL),
        posterior_sample_size=posterior_sample_size,
        group_levels={ctx.grouping_factor: len(ctx.group_levels)} if ctx.grouping_factor else {},
    )


def summarize(
    draws: pd.DataFrame,
    header: ModelHeader,
    diagnostics: Optional[Dict[str, ParameterDiagnostics]] = None,
    include_waic: bool = False,
    waic: Optional[WaicResult] = None,
    mean_ppd: Optional[np.ndarray] = None,
    log_posterior: Optional[np.ndarray] = None,
    engine_version: str = "",
    seed: Optional[int] = None,
) -> FitSummary:
    """Summarize natural-scale draws (one column per parameter plus ``chain``).

    Random intercepts ``b[...]`` feed no estimate rows; group standard deviations ``sd[...]``
    and ``sigma`` make up the error terms block of grouped fits.
    """
    diagnostics = diagnostics or {}
    parameters = [
        column for column in draws.columns
        if column not in ("chain", "draw") and not column.startswith("b[")
        and not column.startswith("sd[")
    ]
    estimates = [
        summarize_parameter(name, chains_of(draws, name), diagnostics.get(name))
        for name in parameters if name not in AUXILIARY_NAMES
    ]
    auxiliary = [
        summarize_parameter(name, chains_of(draws, name), diagnostics.get(name))
        for name in parameters if name in AUXILIARY_NAMES
    ]
    error_terms = []
    for column in draws.columns:
        if column.startswith("sd[") and column.endswith(":(Intercept)]"):
            group = column[len("sd["):-len(":(Intercept)]")]
            error_terms.append(ErrorTerm(group=group, name="(Intercept)",
                                         std_dev=float(np.median(draws[column]))))
    if error_terms and "sigma" in draws.columns:
        error_terms.append(ErrorTerm(group="Residual", name="", std_dev=float(np.median(draws["sigma"]))))
    if include_waic and waic is None:
        raise DiagnosticsError("WAIC was requested but not computed")
    return FitSummary(
        header=header,
        estimates=estimates,
        auxiliary=auxiliary,
        error_terms=error_terms,
        mean_ppd=None if mean_ppd is None else summarize_parameter("mean_PPD", mean_ppd),
        log_posterior=(
            None if log_posterior is None else summarize_parameter("log-posterior", log_posterior)
        ),
        waic=waic if include_waic else None,
        engine_version=engine_version,
        seed=seed,
    )


def _fmt(value: Optional[float], digits: int) -> str:
    if value is None:
        return "NA"
    elif math.isinf(value):
        return "Inf"
    return f"{value:.{digits}f}"


def _table(rows: Dict[str, Dict[str, str]], columns: Sequence[str]) -> str:
    frame = pd.DataFrame.from_dict(rows, orient="index", columns=list(columns))
    return frame.to_string(justify="left")


def _median_table(summaries: Sequence[ParameterSummary], digits: int) -> str:
    rows = {s.name: {"Median": _fmt(s.median, digits), "MAD_SD": _fmt(s.mad_sd, digits)}
            for s in summaries}
    return _table(rows, ("Median", "MAD_SD"))


def _header_lines(header: ModelHeader) -> List[str]:
    return [
        header.function,
        f" family:       {header.family}",
        f" formula:      {header.formula}",
        f" observations: {header.observations}",
        f" Intercept:  {'TRUE' if header.intercept else 'FALSE'}",
        f" fixed predictors:   {header.fixed_predictors}",
        f" spatial predictors:  {header.spatial_predictors}",
        f" temporal predictors:  {header.temporal_predictors}",
        f" spatial-temporal predictors:  {header.spatial_temporal_predictors}",
    ]


def _footer(engine_version: str, seed: Optional[int]) -> List[str]:
    seed_text = "" if seed is None else f", seed {seed}"
    return ["------", f"* stap-glm {engine_version}{seed_text}"]


def format_summary(summary: FitSummary, digits: int = 1) -> str:
    """Median / MAD_SD report of a fit."""
    lines = _header_lines(summary.header)
    lines += ["------", _median_table(summary.estimates, digits)]
    if summary.auxiliary:
        lines += ["", "Auxiliary parameter(s):", _median_table(summary.auxiliary, digits)]
    if summary.error_terms:
        lines += ["", "Error terms:", " Groups   Name        Std.Dev."]
        for term in summary.error_terms:
            lines.append(f" {term.group:<8} {term.name:<11} {_fmt(term.std_dev, digits)}")
        levels = " ".join(f"{group} {count}" for group, count in summary.header.group_levels.items())
        lines.append(f"Num.levels: {levels}")
    if summary.mean_ppd is not None:
        lines += [
            "",
            "Sample avg. posterior predictive distribution of y:",
            _median_table([summary.mean_ppd], digits),
        ]
    lines += [""] + _footer(summary.engine_version, summary.seed)
    return "\n".join(lines) + "\n"


def format_ppd_summary(
    mean_ppd: ParameterSummary, digits: int = 1, engine_version: str = "", seed: Optional[int] = None
) -> str:
    lines = [
        "Sample avg. posterior predictive distribution of y:",
        _median_table([mean_ppd], digits),
        "",
        *_footer(engine_version, seed),
    ]
    return "\n".join(lines) + "\n"


def format_long_summary(summary: FitSummary, digits: int = 1) -> str:
    """Model info, full estimates and MCMC diagnostics tables."""
    header = summary.header
    lines = [
        "Model Info:",
        "",
        f" function:     {header.function}",
        f" family:       {header.family}",
        f" formula:      {header.formula}",
        " priors:       see diagnostics.json (priors)",
        f" sample:       {header.posterior_sample_size} (posterior sample size)",
        f" observations: {header.observations}",
    ]
    for label, count in (
        ("Spatial Predictors", header.spatial_predictors),
        ("Temporal Predictors", header.temporal_predictors),
        ("Spatial-Temporal Predictors", header.spatial_temporal_predictors),
    ):
        if count:
            lines.append(f" {label}:   {count}")
    for group, count in header.group_levels.items():
        lines.append(f" groups:       {group} ({count})")
    if summary.waic is not None:
        lines.append(f" WAIC: {summary.waic.waic:.0f}")

    rows = [*summary.estimates, *summary.auxiliary]
    rows += [row for row in (summary.mean_ppd, summary.log_posterior) if row is not None]
    quantile_columns = [quantile_label(q) for q in QUANTILES]
    estimates = {
        s.name: {
            "mean": _fmt(s.mean, digits),
            "sd": _fmt(s.sd, digits),
            **{column: _fmt(s.quantiles[column], digits) for column in quantile_columns},
        }
        for s in rows
    }
    diagnostics = {
        s.name: {
            "mcse": _fmt(s.diagnostics.mcse, digits),
            "Rhat": _fmt(s.diagnostics.rhat, digits),
            "n_eff": "NA" if s.diagnostics.ess is None else f"{s.diagnostics.ess:.0f}",
        }
        for s in rows
    }
    lines += [
        "",
        "Estimates:",
        _table(estimates, ("mean", "sd", *quantile_columns)),
        "",
        "Diagnostics:",
        _table(diagnostics, ("mcse", "Rhat", "n_eff")),
        "",
        "For each parameter, mcse is Monte Carlo standard error, n_eff is a crude measure",
        "of effective sample size, and Rhat is the potential scale reduction factor",
        "on split chains (at convergence Rhat=1).",
    ]
    lines += _footer(summary.engine_version, summary.seed)
    return "\n".join(lines) + "\n"


def _check_draws(theta_draws: Iterable[float], prob: float) -> np.ndarray:
    theta = np.asarray(theta_draws, dtype=float).ravel()
    if theta.size == 0:
        raise DiagnosticsError("No scale draws given")
    if not np.all(theta > 0):
        raise KernelDomainError("Scale draws must be positive")
    if not 0 < prob < 1:
        raise DiagnosticsError(f"prob must be in (0, 1), got {prob}")
    return theta


def stap_termination(
    theta_draws: Iterable[float],
    kind: KernelKind,
    exposure_limit: float = 0.01,
    prob: float = 0.95,
    max_value: float = math.inf,
    label: str = "",
) -> TerminationRow:
    """Central interval and median of the distance at which exposure decays to the limit."""
    theta = _check_draws(theta_draws, prob)
    if not kind.is_spatial:
        raise KernelDomainError("Termination distances are only defined for spatial scales")
    if not max_value > 0:
        raise DiagnosticsError(f"max_value must be positive, got {max_value}")
    # the termination distance is linear in theta
    distances = theta * termination_distance(kind, 1.0, exposure_limit)
    distances = np.minimum(distances, max_value)
    lower, median, upper = np.quantile(distances, [(1 - prob) / 2, 0.5, (1 + prob) / 2])
    return TerminationRow(
        label=label, lower=float(lower), median=float(median), upper=float(upper), prob=prob
    )


def termination_table(rows: Sequence[TerminationRow]) -> pd.DataFrame:
    if not rows:
        return pd.DataFrame(columns=["2.5%", "50%", "97.5%"])
    columns = rows[0].column_names
    return pd.DataFrame(
        [[row.lower, row.median, row.upper] for row in rows],
        index=pd.Index([row.label for row in rows], name="term"),
        columns=columns,
    )


def exposure_curve(
    theta_draws: Iterable[float],
    kind: KernelKind,
    max_x: float,
    prob: float = 0.95,
    points: int = 100,
) -> pd.DataFrame:
    """Posterior band of the weight function over ``[0, max_x]``."""
    theta = _check_draws(theta_draws, prob)
    if not max_x > 0 or not math.isfinite(max_x):
        raise DiagnosticsError(f"Curve range must be positive and finite, got {max_x}")
    grid = np.linspace(0.0, max_x, points)
    # (draws x grid) weights
    weights = np.vstack([weight(kind, grid, float(value)) for value in theta])
    lower, median, upper = np.quantile(weights, [(1 - prob) / 2, 0.5, (1 + prob) / 2], axis=0)
    return pd.DataFrame({"x": grid, "lower": lower, "median": median, "upper": upper})


def prior_summary(ctx: ModelContext) -> Dict[str, Dict]:
    """Priors after autoscaling, keyed by the parameter they apply to."""
    priors = {"(Intercept)": ctx.intercept_prior.serialize()}
    for name, prior in zip(ctx.fixed_names, ctx.coefficient_priors):
        priors[name] = prior.serialize()
    for label, prior in zip(ctx.stap_labels, ctx.stap_priors):
        priors[label] = prior.serialize()
    for slot, prior in zip(ctx.layout.theta_slots, ctx.theta_priors):
        priors[slot.label] = prior.serialize()
    if ctx.aux_prior is not None:
        priors["sigma"] = ctx.aux_prior.serialize()
    if ctx.group_sd_prior is not None:
        priors[f"sd[{ctx.grouping_factor}:(Intercept)]"] = ctx.group_sd_prior.serialize()
    return priors
