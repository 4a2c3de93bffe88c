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
from typing import List
import math
import os

import pandas as pd

from stapcore.errors import DataError, KernelDomainError
from stapcore.summary import stap_termination, termination_table
from stapcore.types import FormulaSpec, TerminationRow

from .. import artifacts
from ..pipeline import formula_of
from .fit import SECTION_MODELING
from .handler import OUTPUT_FLAGS, TERMINATION_FLAGS, CommandEvent, Flag, command_handler

DRAWS_ARGUMENT = (
    ("--draws",),
    {"type": str, "required": True, "metavar": "<path>",
     "help": "draws.csv or draws.npz written by fit"},
)


def termination_rows(
    table: pd.DataFrame, spec: FormulaSpec, exposure_limit: float, prob: float, max_value: float
) -> List[TerminationRow]:
    rows = []
    for label, term in zip(spec.term_labels(), spec.stap_terms):
        if term.spatial_kernel is None:
            continue
        column = f"{label}_spatial_scale"
        if column not in table.columns:
            raise DataError(f"The draws have no {column!r} column; were they fitted with this formula?")
        rows.append(stap_termination(
            table[column], term.spatial_kernel, exposure_limit, prob, max_value, label=label
        ))
    if not rows:
        raise KernelDomainError("Termination distances need at least one spatial term")
    return rows


@command_handler(
    help_section=SECTION_MODELING,
    help_text="Distances at which exposure of each spatial term becomes negligible.",
    flags=[Flag("--formula", "model.formula", str, "formula of the fit"),
           *TERMINATION_FLAGS, *OUTPUT_FLAGS],
    arguments=[DRAWS_ARGUMENT],
)
async def termination(evt: CommandEvent) -> None:
    config = evt.config
    _, spec = formula_of(config)
    draws = artifacts.read_draws(evt.args.draws)
    max_value = config["output.max_value"]
    rows = termination_rows(
        draws.table, spec,
        exposure_limit=float(config["output.exposure_limit"]),
        prob=float(config["output.prob"]),
        max_value=math.inf if max_value is None else float(max_value),
    )
    table = termination_table(rows)
    directory = artifacts.prepare_directory(config["output.directory"])
    path = artifacts.write_table(
        directory, "termination.csv", table, evt.version, draws.seed, index=True
    )
    print(table.round(2).to_string())
    evt.log.info("Wrote termination distances to %s", os.path.abspath(path))
