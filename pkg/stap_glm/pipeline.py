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
from typing import NamedTuple, Optional
import logging

import pandas as pd

from stapcore.errors import MissingInputError
from stapcore.formula import parse_formula
from stapcore.ingest import build_exposure_index, load_table
from stapcore.model import ModelContext, build_context
from stapcore.types import FormulaSpec

from .config import Config

log = logging.getLogger("stap.pipeline")


class ModelInputs(NamedTuple):
    formula: str
    spec: FormulaSpec
    subjects: pd.DataFrame
    ctx: ModelContext


def formula_of(config: Config) -> tuple:
    text = config["model.formula"]
    if not text:
        raise MissingInputError("No model formula given (model.formula or --formula)")
    return text, parse_formula(text)


def _optional_table(
    config: Config, key: str, required: list, numeric: list, needed: bool
) -> Optional[pd.DataFrame]:
    path = config[f"data.{key}"]
    if not path:
        if needed:
            raise MissingInputError(
                f"The formula needs {key} data but data.{key} / --{key}-data is not set"
            )
        return None
    if not needed:
        log.warning("Ignoring %s data %s, the formula has no term that uses it", key, path)
        return None
    return load_table(path, required, numeric, config["data.delimiter"])


def load_model(config: Config) -> ModelInputs:
    """Parse the formula, load and join the tables and build the model context.

    Every precondition on the inputs is checked before sampling starts.
    """
    text, spec = formula_of(config)
    columns = config.columns
    subject_id = config["data.subject_id"]
    group_ids = config.group_ids
    keys = [subject_id, *group_ids]
    subject_path = config["data.subject"]
    if not subject_path:
        raise MissingInputError("No subject data given (data.subject or --subject-data)")
    subjects = load_table(subject_path, [*keys, *spec.response], spec.response,
                          config["data.delimiter"])
    distances = _optional_table(
        config, "distance", [*keys, columns.bef_name, columns.distance], [columns.distance],
        spec.has_spatial,
    )
    times = _optional_table(
        config, "time", [*keys, columns.bef_name, columns.time], [columns.time],
        spec.has_temporal,
    )
    max_time = config["model.max_time"]
    index = build_exposure_index(
        subjects, distances, times, spec, subject_id, group_ids,
        max_distance=config.max_distance, columns=columns,
        max_time=None if max_time is None else float(max_time),
    )
    ctx = build_context(
        subjects, index, spec, config.family, config.priors,
        bound_quantile=float(config["model.bound_quantile"]),
        reference_levels={str(k): str(v) for k, v in (config["model.reference_levels"] or {}).items()},
    )
    log.info("Model has %d observations and %d sampler coordinates", ctx.n_obs, ctx.dim)
    return ModelInputs(text, spec, subjects, ctx)
