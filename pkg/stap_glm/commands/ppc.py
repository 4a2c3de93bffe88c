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
import math

import pandas as pd

from stapcore.diagnostics import mean_ppd, posterior_predict
from stapcore.summary import chains_of, format_ppd_summary, summarize_parameter

from .. import artifacts
from ..pipeline import load_model
from .fit import SECTION_MODELING
from .handler import MODEL_FLAGS, OUTPUT_FLAGS, CommandEvent, command_handler
from .termination import DRAWS_ARGUMENT


@command_handler(
    help_section=SECTION_MODELING,
    help_text="Simulate outcomes from the posterior predictive distribution of a fit.",
    flags=[*MODEL_FLAGS, *OUTPUT_FLAGS],
    arguments=[DRAWS_ARGUMENT],
)
async def ppc(evt: CommandEvent) -> None:
    config = evt.config
    inputs = load_model(config)
    draws = artifacts.read_draws(evt.args.draws)
    table = draws.table
    n_chains, n_draws = artifacts.chain_split(table)
    limit = config["output.ppc_draws"]
    if limit is not None and 0 < int(limit) < len(table):
        # thin every chain alike
        step = math.ceil(n_chains * n_draws / int(limit))
        table = table[(table["draw"] - 1) % step == 0].reset_index(drop=True)
    seed = draws.seed if draws.seed is not None else evt.seed
    rng = evt.prediction_rng(seed, n_chains + 1)
    replicates = posterior_predict(artifacts.raw_draws(table, inputs.ctx), inputs.ctx, rng)

    replicate_table = pd.DataFrame(
        replicates, columns=[f"y_rep[{i + 1}]" for i in range(replicates.shape[1])]
    )
    replicate_table.insert(0, "draw", table["draw"].to_numpy())
    replicate_table.insert(0, "chain", table["chain"].to_numpy())
    replicate_table["mean_PPD"] = mean_ppd(replicates)

    summary = summarize_parameter("mean_PPD", chains_of(replicate_table, "mean_PPD"))
    digits = int(config["output.digits"])
    text = format_ppd_summary(summary, digits, evt.version, seed)
    directory = artifacts.prepare_directory(config["output.directory"])
    artifacts.write_table(directory, "ppc_replicates.csv", replicate_table, evt.version, seed)
    artifacts.write_text(directory, "ppc_summary.txt", text)
    print(text, end="")
    evt.log.info("Wrote %d posterior predictive replicates to %s", len(replicate_table), directory)
