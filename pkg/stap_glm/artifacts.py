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
from typing import Any, Dict, List, NamedTuple, Optional, Tuple
import json
import logging
import os
import re

import numpy as np
import pandas as pd

from stapcore.errors import DataError, MissingFileError
from stapcore.model import ModelContext, natural_scale_report
from stapcore.nuts import ChainOutput

log = logging.getLogger("stap.artifacts")

RAW_PREFIX = "raw."
TELEMETRY_COLUMNS = (
    "lp__", "accept_stat__", "stepsize__", "treedepth__", "n_leapfrog__", "divergent__", "energy__"
)
HEADER_PATTERN = re.compile(r"^# stap-glm (?P<version>\S+) seed=(?P<seed>\d+)")


class DrawsFile(NamedTuple):
    table: pd.DataFrame
    version: str
    seed: Optional[int]


def provenance_line(version: str, seed: Optional[int]) -> str:
    return f"# stap-glm {version} seed={seed}"


def draws_table(chains: List[ChainOutput], ctx: ModelContext) -> pd.DataFrame:
    """One row per post-warmup draw: natural-scale parameters, sampler telemetry and the
    unconstrained coordinates (prefixed with ``raw.``) needed to replay the model."""
    frames = []
    coordinate_names = [RAW_PREFIX + name for name in ctx.coordinate_names()]
    for chain in chains:
        natural = natural_scale_report(chain.draws, ctx)
        telemetry = pd.DataFrame({
            "lp__": chain.lp,
            "accept_stat__": chain.accept_stat,
            "stepsize__": np.full(chain.n_draws, chain.step_size),
            "treedepth__": chain.treedepth,
            "n_leapfrog__": chain.n_leapfrog,
            "divergent__": chain.divergent.astype(int),
            "energy__": chain.energy,
        })
        raw = pd.DataFrame(chain.draws, columns=coordinate_names)
        ids = pd.DataFrame({"chain": chain.chain_id + 1, "draw": np.arange(1, chain.n_draws + 1)})
        frames.append(pd.concat([ids, natural, telemetry, raw], axis=1))
    return pd.concat(frames, ignore_index=True)


def natural_columns(table: pd.DataFrame) -> List[str]:
    return [
        column for column in table.columns
        if column not in ("chain", "draw") and column not in TELEMETRY_COLUMNS
        and not column.startswith(RAW_PREFIX)
    ]


def raw_draws(table: pd.DataFrame, ctx: ModelContext) -> np.ndarray:
    columns = [RAW_PREFIX + name for name in ctx.coordinate_names()]
    missing = [column for column in columns if column not in table.columns]
    if missing:
        raise DataError(
            f"The draws do not match the model: missing columns {', '.join(missing)}"
        )
    return table[columns].to_numpy(dtype=float)


def write_draws(
    directory: str, table: pd.DataFrame, version: str, seed: Optional[int], fmt: str = "csv"
) -> str:
    if fmt == "npz":
        path = os.path.join(directory, "draws.npz")
        np.savez_compressed(
            path,
            columns=np.array(table.columns, dtype=str),
            values=table.to_numpy(dtype=float),
            version=np.array(version),
            seed=np.array(-1 if seed is None else seed),
        )
    else:
        path = os.path.join(directory, "draws.csv")
        with open(path, "w", newline="") as file:
            file.write(provenance_line(version, seed) + "\n")
            table.to_csv(file, index=False, float_format="%.17g")
    log.info("Wrote %d draws to %s", len(table), path)
    return path


def read_draws(path: str) -> DrawsFile:
    if not os.path.isfile(path):
        raise MissingFileError(path)
    if path.endswith(".npz"):
        with np.load(path) as data:
            table = pd.DataFrame(data["values"], columns=[str(c) for c in data["columns"]])
            seed = int(data["seed"])
            return DrawsFile(table, str(data["version"]), None if seed < 0 else seed)
    with open(path) as file:
        first = file.readline()
    match = HEADER_PATTERN.match(first)
    table = pd.read_csv(path, comment="#")
    if match is None:
        return DrawsFile(table, "unknown", None)
    return DrawsFile(table, match.group("version"), int(match.group("seed")))


def write_text(directory: str, name: str, text: str) -> str:
    path = os.path.join(directory, name)
    with open(path, "w") as file:
        file.write(text)
    return path


def write_json(directory: str, name: str, data: Dict[str, Any]) -> str:
    path = os.path.join(directory, name)
    with open(path, "w") as file:
        json.dump(data, file, indent=2, allow_nan=False, default=_json_default)
        file.write("\n")
    return path


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    elif isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def sanitize(value: Any) -> Any:
    """Replace non-finite floats with strings, which JSON cannot represent."""
    if isinstance(value, dict):
        return {key: sanitize(item) for key, item in value.items()}
    elif isinstance(value, (list, tuple)):
        return [sanitize(item) for item in value]
    elif isinstance(value, (float, np.floating)) and not np.isfinite(value):
        return "Infinity" if value > 0 else "-Infinity" if value < 0 else "NaN"
    return value


def write_table(
    directory: str, name: str, table: pd.DataFrame, version: str, seed: Optional[int],
    index: bool = False,
) -> str:
    path = os.path.join(directory, name)
    with open(path, "w", newline="") as file:
        file.write(provenance_line(version, seed) + "\n")
        table.to_csv(file, index=index)
    return path


def prepare_directory(directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    return directory


def chain_split(table: pd.DataFrame) -> Tuple[int, int]:
    """Number of chains and draws per chain of a draws table."""
    counts = table.groupby("chain").size()
    if counts.nunique() != 1:
        raise DataError("Every chain in the draws table must have the same number of draws")
    return len(counts), int(counts.iloc[0])
