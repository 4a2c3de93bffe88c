# stap-glm - Bayesian spatial-temporal aggregated predictor regression
# Copyright (C) 2026 stap-glm contributors
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU Affero General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Affero General Public License for more details.
#
# You should have received a copy of the GNU Affero General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.
from typing import Any, Dict, List
import math

import numpy as np
import pandas as pd

from stapcore.diagnostics import (
    energy_diagnostics,
    mean_ppd,
    parameter_diagnostics,
    posterior_predict,
    waic,
)
from stapcore.model import ModelContext, log_likelihood_matrix
from stapcore.nuts import ChainOutput
from stapcore.summary import (
    build_header,
    chains_of,
    exposure_curve,
    format_long_summary,
    format_summary,
    prior_summary,
    summarize,
)
from stapcore.types import ParameterDiagnostics, ThetaComponent

from .. import artifacts
from ..pipeline import load_model
from ..runner import ChainRunner
from .handler import (
    MODEL_FLAGS,
    OUTPUT_FLAGS,
    SAMPLER_FLAGS,
    CommandEvent,
    HelpSection,
    command_handler,
)

SECTION_MODELING = HelpSection("Modeling", 10, "")

RHAT_WARNING = 1.01


def curve_range(ctx: ModelContext, component: ThetaComponent) -> float:
    """Upper end of the exposure curve grid of one scale component."""
    if component == ThetaComponent.TEMPORAL:
        return float(ctx.index.max_time)
    if math.isfinite(ctx.index.max_distance) and ctx.index.max_distance > 0:
        return float(ctx.index.max_distance)
    observed = [
        float(term.distances[term.mask].max())
        for term in ctx.index.terms
        if term.distances is not None and term.total
    ]
    return max(observed, default=1.0)


def exposure_curves(
    table: pd.DataFrame, ctx: ModelContext, prob: float, points: int
) -> pd.DataFrame:
    labels = ctx.stap_labels
    frames = []
    for slot in ctx.layout.theta_slots:
        curve = exposure_curve(
            table[slot.label], slot.kernel, curve_range(ctx, slot.component), prob, points
        )
        curve.insert(0, "kernel", slot.kernel.value)
        curve.insert(0, "component", slot.component.value)
        curve.insert(0, "term", labels[slot.term])
        frames.append(curve)
    if not frames:
        return pd.DataFrame(columns=["term", "component", "kernel", "x", "lower", "median", "upper"])
    return pd.concat(frames, ignore_index=True)


def check_diagnostics(evt: CommandEvent, diagnostics: Dict[str, ParameterDiagnostics]) -> None:
    for name, diag in diagnostics.items():
        if diag.rhat is not None and diag.rhat > RHAT_WARNING:
            evt.log.warning("Rhat of %s is %.3f, the chains have not mixed", name, diag.rhat)
        if diag.ess_exceeds_draws:
            evt.log.warning("Effective sample size of %s exceeds the number of draws", name)
        if diag.degenerate:
            evt.log.debug("Diagnostics of %s are undefined (constant draws)", name)


def chain_report(chains: List[ChainOutput]) -> List[Dict[str, Any]]:
    return [
        {
            "chain": chain.chain_id + 1,
            "step_size": chain.step_size,
            "inv_metric": chain.inv_metric.tolist(),
            "divergences": chain.divergences,
            "warmup_divergences": chain.warmup_divergences,
            "max_treedepth_hits": chain.max_treedepth_hits,
            "mean_accept_stat": float(np.mean(chain.accept_stat)) if chain.n_draws else None,
        }
        for chain in chains
    ]


@command_handler(
    help_section=SECTION_MODELING,
    help_text="Fit a STAP model and write draws, summaries and diagnostics.",
    flags=[*MODEL_FLAGS, *SAMPLER_FLAGS, *OUTPUT_FLAGS],
)
async def fit(evt: CommandEvent) -> None:
    config = evt.config
    inputs = load_model(config)
    ctx = inputs.ctx
    sampler = config.sampler
    draws_format = config.draws_format
    directory = artifacts.prepare_directory(config["output.directory"])

    chains = await ChainRunner(ctx, sampler).run()

    table = artifacts.draws_table(chains, ctx)
    names = artifacts.natural_columns(table)
    diagnostics = {name: parameter_diagnostics(chains_of(table, name)) for name in names}
    check_diagnostics(evt, diagnostics)

    all_draws = np.vstack([chain.draws for chain in chains])
    replicates = posterior_predict(all_draws, ctx, evt.prediction_rng(sampler.seed, sampler.chains))
    ppd = mean_ppd(replicates).reshape(sampler.chains, sampler.draws)
    log_posterior = np.vstack([chain.lp for chain in chains])
    include_waic = bool(config["output.waic"])
    waic_result = waic(log_likelihood_matrix(all_draws, ctx)) if include_waic else None

    header = build_header(ctx, len(table), inputs.formula)
    summary = summarize(
        table[["chain", *names]], header, diagnostics, include_waic=include_waic,
        waic=waic_result, mean_ppd=ppd, log_posterior=log_posterior,
        engine_version=evt.version, seed=sampler.seed,
    )
    digits = int(config["output.digits"])
    short_text = format_summary(summary, digits)

    artifacts.write_draws(directory, table, evt.version, sampler.seed, draws_format)
    artifacts.write_text(directory, "summary.txt", short_text)
    artifacts.write_text(directory, "summary_long.txt", format_long_summary(summary, digits))
    artifacts.write_json(directory, "diagnostics.json", artifacts.sanitize({
        "engine_version": evt.version,
        "seed": sampler.seed,
        "parameters": {name: diag.serialize() for name, diag in diagnostics.items()},
        "summary": summary.serialize(),
        "chains": chain_report(chains),
        "energy": [energy_diagnostics(chain).serialize() for chain in chains],
        "waic": waic_result.serialize() if waic_result else None,
        "priors": prior_summary(ctx),
        "scale_bounds": {
            component.value: bound.upper for component, bound in ctx.bounds.items()
        },
        "dropped_distance_rows": {
            label: term.dropped for label, term in zip(ctx.stap_labels, ctx.index.terms)
        },
    }))
    artifacts.write_table(
        directory, "exposure_curves.csv",
        exposure_curves(table, ctx, float(config["output.prob"]), int(config["output.curve_points"])),
        evt.version, sampler.seed,
    )
    artifacts.write_text(
        directory, "config.yaml",
        artifacts.provenance_line(evt.version, sampler.seed) + "\n"
        + config.dump({"engine_version": evt.version}),
    )
    print(short_text, end="")
    evt.log.info("Wrote fit artifacts to %s", directory)
