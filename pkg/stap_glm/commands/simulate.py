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
from typing import Any, Callable, Dict, NamedTuple
import os

from ruamel.yaml import YAML

from stapcore.errors import ConfigError
from stapcore.simulate import (
    GENDER,
    MEASURE_ID,
    SCHOOL_ID,
    SUBJECT_ID,
    SimConfig,
    SimulatedData,
    simulate_cross_sectional,
    simulate_grouped_binomial,
    simulate_longitudinal,
)
from stapcore.types import Family

from .. import artifacts
from .handler import OUTPUT_FLAGS, CommandEvent, Flag, HelpSection, command_handler

SECTION_DATA = HelpSection("Data", 20, "")

# Larger than any subject to BEF distance of the default squares
SIM_MAX_DISTANCE = 5.0


class Scenario(NamedTuple):
    make_config: Callable[..., SimConfig]
    generate: Callable[[SimConfig], SimulatedData]
    model: Dict[str, Any]
    data: Dict[str, Any]
    priors: Dict[str, Any] = {}


SCENARIOS = {
    "cross-sectional": Scenario(
        SimConfig.cross_sectional,
        simulate_cross_sectional,
        {"formula": "y ~ sex + sap({bef})", "family": "gaussian",
         "reference_levels": {"sex": "M"}},
        {"subject_id": SUBJECT_ID, "group_id": []},
        {
            "intercept": {"distribution": "normal", "location": 26, "scale": 4},
            "coefficients": {"distribution": "normal", "location": 0, "scale": 4, "autoscale": False},
            "stap": {"distribution": "normal", "location": 0, "scale": 4},
            "theta": {"distribution": "log_normal", "location": 1, "scale": 1},
            "aux": {"distribution": "cauchy", "location": 0, "scale": 5},
        },
    ),
    "longitudinal": Scenario(
        SimConfig.longitudinal,
        simulate_longitudinal,
        {"formula": f"y ~ sex + stap({{bef}}) + (1 | {SUBJECT_ID})", "family": "gaussian"},
        {"subject_id": SUBJECT_ID, "group_id": [MEASURE_ID]},
    ),
    "grouped-binomial": Scenario(
        SimConfig.grouped_binomial,
        simulate_grouped_binomial,
        {"formula": f"cbind(overweight, not_overweight) ~ {GENDER} + sap({{bef}}) + (1 | {SCHOOL_ID})",
         "family": "binomial", "reference_levels": {GENDER: "Female"}},
        {"subject_id": SCHOOL_ID, "group_id": [GENDER]},
    ),
}


def fit_config(scenario: Scenario, sim: SimConfig, paths: Dict[str, str]) -> Dict[str, Any]:
    """Config that fits the simulated tables with the model that generated them."""
    model = {**scenario.model, "formula": scenario.model["formula"].format(bef=sim.bef_name),
             "max_distance": SIM_MAX_DISTANCE}
    config = {"model": model, "data": {**scenario.data, **paths}}
    if scenario.priors:
        config["priors"] = {key: dict(value) for key, value in scenario.priors.items()}
    return config


@command_handler(
    help_section=SECTION_DATA,
    help_text="Write synthetic subject, distance and time tables with planted effects.",
    flags=[
        Flag("--scenario", "simulate.scenario", str,
             "cross-sectional, longitudinal or grouped-binomial"),
        Flag("--seed", "simulate.seed", int, "random seed"),
        *OUTPUT_FLAGS,
    ],
    arguments=[
        (("--n-subjects",), {"type": int, "default": None, "help": "number of subjects"}),
        (("--n-befs",), {"type": int, "default": None, "help": "number of BEFs"}),
    ],
)
async def simulate(evt: CommandEvent) -> None:
    config = evt.config
    name = config["simulate.scenario"]
    try:
        scenario = SCENARIOS[name]
    except KeyError:
        raise ConfigError(
            f"Unknown simulation scenario {name!r}, expected one of {', '.join(SCENARIOS)}"
        ) from None
    parameters = dict(config.as_dict()["simulate"].get("parameters") or {})
    for key in ("n_subjects", "n_befs"):
        value = getattr(evt.args, key, None)
        if value is not None:
            parameters[key] = value
    if "family" in parameters:
        try:
            parameters["family"] = Family.parse(str(parameters["family"]))
        except ValueError:
            raise ConfigError(f"Unknown family {parameters['family']!r}") from None
    seed = int(config["simulate.seed"] or 0)
    try:
        sim = scenario.make_config(**{**parameters, "seed": seed})
    except TypeError as e:
        raise ConfigError(f"Invalid simulation parameters: {e}") from e
    data = scenario.generate(sim)

    directory = artifacts.prepare_directory(config["output.directory"])
    paths = {"subject": os.path.join(directory, "subjects.csv"),
             "distance": os.path.join(directory, "distances.csv")}
    data.subjects.to_csv(paths["subject"], index=False, float_format="%.17g")
    data.distances.to_csv(paths["distance"], index=False, float_format="%.17g")
    if data.times is not None:
        paths["time"] = os.path.join(directory, "times.csv")
        data.times.to_csv(paths["time"], index=False, float_format="%.17g")

    companion = {
        "engine_version": evt.version,
        "simulation": {"scenario": name, **artifacts.sanitize(sim.serialize())},
        **fit_config(scenario, sim, paths),
    }
    with open(os.path.join(directory, "simulation.yaml"), "w") as file:
        file.write(artifacts.provenance_line(evt.version, seed) + "\n")
        dumper = YAML()
        dumper.default_flow_style = False
        dumper.dump(companion, file)
    evt.log.info(
        "Wrote %d observations of the %s scenario to %s", len(data.subjects), name, directory
    )
