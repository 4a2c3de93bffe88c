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
from typing import Any, Dict, Iterator, List, Optional
import io
import os

from ruamel.yaml import YAML
from ruamel.yaml.comments import CommentedMap
from ruamel.yaml.error import YAMLError
import numpy as np

from mautrix.util.config import BaseFileConfig, ConfigUpdateHelper

from stapcore.errors import ConfigError, MissingFileError
from stapcore.ingest import DataColumns
from stapcore.model import PriorSpec
from stapcore.nuts import SamplerConfig
from stapcore.types import Family

ENV_PREFIX = "STAP_GLM_"
DRAWS_FORMATS = ("csv", "npz")

yaml = YAML(typ="safe")


def env_name(key: str) -> str:
    return ENV_PREFIX + key.replace(".", "_").upper()


class Config(BaseFileConfig):
    """Layered run configuration: packaged defaults, the user's file, then ``STAP_GLM_*``."""

    def __init__(self, path: Optional[str] = None) -> None:
        super().__init__(path or "", "pkg://stap_glm/example-config.yaml")

    def __getitem__(self, key: str) -> Any:
        try:
            raw = os.environ[env_name(key)]
        except KeyError:
            return super().__getitem__(key)
        try:
            return yaml.load(raw)
        except YAMLError as e:
            raise ConfigError(f"Invalid value in {env_name(key)}: {e}") from e

    def do_update(self, helper: ConfigUpdateHelper) -> None:
        copy, copy_dict, base = helper

        copy("model.formula")
        copy("model.family")
        copy("model.max_distance")
        copy("model.max_time")
        copy("model.bound_quantile")
        copy_dict("model.reference_levels", override_existing_map=True)

        copy("data.subject")
        copy("data.distance")
        copy("data.time")
        copy("data.subject_id")
        copy("data.group_id")
        copy("data.delimiter")
        copy("data.columns.bef_name")
        copy("data.columns.distance")
        copy("data.columns.time")
        copy("data.columns.bef_id")

        copy_dict("priors.intercept")
        copy_dict("priors.coefficients")
        copy_dict("priors.stap")
        copy_dict("priors.theta", override_existing_map=True)
        copy_dict("priors.aux")
        copy_dict("priors.group_sd")

        copy("sampler.iter")
        copy("sampler.warmup")
        copy("sampler.chains")
        copy("sampler.cores")
        copy("sampler.adapt_delta")
        copy("sampler.max_treedepth")
        copy("sampler.seed")

        copy("output.directory")
        copy("output.draws_format")
        copy("output.waic")
        copy("output.digits")
        copy("output.exposure_limit")
        copy("output.prob")
        copy("output.max_value")
        copy("output.curve_points")
        copy("output.ppc_draws")

        copy("simulate.scenario")
        copy_dict("simulate.parameters", override_existing_map=True)
        copy("simulate.seed")

        copy("logging")

    def load_and_update(self) -> None:
        """Merge the user's file (if any) over the packaged defaults and apply env overrides."""
        if self.path:
            if not os.path.isfile(self.path):
                raise MissingFileError(self.path)
            try:
                self.load()
            except YAMLError as e:
                raise ConfigError(f"Failed to parse {self.path}: {e}") from e
        self.update(save=False)
        for key in list(self._leaf_keys(self._data)):
            if env_name(key) in os.environ:
                self[key] = self[key]

    @classmethod
    def _leaf_keys(cls, data: Dict[str, Any], prefix: str = "") -> Iterator[str]:
        for key, value in data.items():
            path = f"{prefix}{key}"
            if isinstance(value, dict) and value and path != "logging":
                yield from cls._leaf_keys(value, f"{path}.")
            else:
                yield path

    def override(self, values: Dict[str, Any]) -> None:
        """Apply command line flags, which win over the file and the environment."""
        for key, value in values.items():
            if value is not None:
                self[key] = value

    def resolve_seed(self) -> int:
        seed = self["sampler.seed"]
        if seed is None:
            seed = int(np.random.SeedSequence().entropy % 2**63)
            self["sampler.seed"] = seed
        return int(seed)

    @property
    def family(self) -> Family:
        try:
            return Family.parse(str(self["model.family"]))
        except ValueError:
            raise ConfigError(f"Unknown family {self['model.family']!r}") from None

    @property
    def max_distance(self) -> float:
        value = self["model.max_distance"]
        return float("inf") if value is None else float(value)

    @property
    def group_ids(self) -> List[str]:
        value = self["data.group_id"] or []
        return [value] if isinstance(value, str) else list(value)

    @property
    def columns(self) -> DataColumns:
        return DataColumns(**{key: self[f"data.columns.{key}"] for key in
                              ("bef_name", "distance", "time", "bef_id")})

    @property
    def priors(self) -> PriorSpec:
        return PriorSpec.from_dict(self._plain(self["priors"]))

    @property
    def sampler(self) -> SamplerConfig:
        try:
            return SamplerConfig(
                iter=int(self["sampler.iter"]),
                warmup=int(self["sampler.warmup"]),
                chains=int(self["sampler.chains"]),
                cores=int(self["sampler.cores"]),
                adapt_delta=float(self["sampler.adapt_delta"]),
                max_treedepth=int(self["sampler.max_treedepth"]),
                seed=self.resolve_seed(),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid sampler settings: {e}") from e

    @property
    def draws_format(self) -> str:
        value = self["output.draws_format"]
        if value not in DRAWS_FORMATS:
            raise ConfigError(f"output.draws_format must be one of {DRAWS_FORMATS}, got {value!r}")
        return value

    @staticmethod
    def _plain(value: Any) -> Any:
        if isinstance(value, dict):
            return {str(k): Config._plain(v) for k, v in value.items()}
        elif isinstance(value, list):
            return [Config._plain(v) for v in value]
        return value

    def as_dict(self) -> Dict[str, Any]:
        return self._plain(self._data)

    def dump(self, extra: Optional[Dict[str, Any]] = None) -> str:
        """The fully resolved config as YAML text."""
        data = CommentedMap(self.as_dict())
        data.update(extra or {})
        stream = io.StringIO()
        dumper = YAML()
        dumper.default_flow_style = False
        dumper.dump(data, stream)
        return stream.getvalue()
