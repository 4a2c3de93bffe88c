# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
from __future__ import annotations

from typing import Iterable, Sequence
import logging
import os

from attr import dataclass
import numpy as np
import pandas as pd

from .errors import (
    AlignmentError,
    DataError,
    DuplicateObservationError,
    MissingColumnError,
    MissingFileError,
    MissingInputError,
    MissingValueError,
    NonNumericValueError,
    UnknownBEFError,
)
from .types import FormulaSpec, StapKind, StapTerm

log = logging.getLogger("stapcore.ingest")

# Data row N of a file sits on line N + 2 (line 1 is the header).
HEADER_LINES = 2


@dataclass(frozen=True)
class DataColumns:
    """Column names of the built environment tables."""

    bef_name: str = "bef_name"
    distance: str = "Distance"
    time: str = "Time"
    bef_id: str = "bef_ID"


def load_table(
    path: str,
    required_columns: Iterable[str] = (),
    numeric_columns: Iterable[str] = (),
    delimiter: str = ",",
) -> pd.DataFrame:
    """Load a delimited table with a header row.

    All columns are read as text so that ID columns join exactly as written. Columns listed in
    ``numeric_columns`` are converted to floats, reporting the file line of the first bad value.
    """
    if not os.path.isfile(path):
        raise MissingFileError(path)
    try:
        table = pd.read_csv(
            path, sep=delimiter, dtype=str, keep_default_na=False, skipinitialspace=True
        )
    except pd.errors.EmptyDataError:
        raise DataError(f"{path} is empty (a header row is required)") from None
    except pd.errors.ParserError as e:
        raise DataError(f"Failed to parse {path}: {e}") from e
    table.columns = [str(column).strip() for column in table.columns]
    table = table.apply(lambda column: column.str.strip())
    for column in required_columns:
        if column not in table.columns:
            raise MissingColumnError(column, path)
    for column in numeric_columns:
        if column not in table.columns:
            raise MissingColumnError(column, path)
        table[column] = to_numeric_column(table[column], column, path)
    log.debug("Loaded %d rows with columns %s from %s", len(table), list(table.columns), path)
    return table


def require_values(values: pd.Series, column: str, path: str | None = None) -> pd.Series:
    """The stripped text of a column in which no cell is blank or NA."""
    text = values.astype(str).str.strip()
    missing = values.isna().to_numpy() | (text == "").to_numpy()
    if missing.any():
        raise MissingValueError(column, int(np.argmax(missing)) + HEADER_LINES, path)
    return text


def to_numeric_column(values: pd.Series, column: str, path: str | None = None) -> pd.Series:
    if pd.api.types.is_numeric_dtype(values):
        missing = values.isna().to_numpy()
        if missing.any():
            raise MissingValueError(column, int(np.argmax(missing)) + HEADER_LINES, path)
        return values.astype(float)
    text = require_values(values, column, path)
    converted = pd.to_numeric(text, errors="coerce")
    bad = converted.isna().to_numpy() | ~np.isfinite(converted.to_numpy(dtype=float))
    if bad.any():
        row = int(np.argmax(bad))
        raise NonNumericValueError(column, row + HEADER_LINES, text.iloc[row], path)
    return converted.astype(float)


@dataclass(frozen=True, eq=False)
class TermIndex:
    """Distances and times of one STAP term in a padded (observation x BEF) layout.

    Row ``i`` holds the BEFs of observation ``i`` sorted by (distance, time), and ``mask`` marks
    the occupied slots. Arrays for a component the term does not have are ``None``.
    """

    term: StapTerm
    mask: np.ndarray
    distances: np.ndarray | None = None
    times: np.ndarray | None = None
    dropped: int = 0

    @property
    def counts(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def total(self) -> int:
        return int(self.mask.sum())

    def entries(self, observation: int) -> tuple[list[float], list[float]]:
        occupied = self.mask[observation]
        distances = [] if self.distances is None else self.distances[observation][occupied].tolist()
        times = [] if self.times is None else self.times[observation][occupied].tolist()
        return distances, times


@dataclass(frozen=True, eq=False)
class ExposureIndex:
    keys: list[tuple[str, ...]]
    terms: list[TermIndex]
    max_distance: float
    max_time: float | None = None

    @property
    def n_obs(self) -> int:
        return len(self.keys)

    def for_term(self, term: StapTerm) -> TermIndex:
        for term_index in self.terms:
            if term_index.term == term:
                return term_index
        raise KeyError(term.render())


def _key_frame(table: pd.DataFrame, key_columns: Sequence[str], name: str) -> pd.DataFrame:
    for column in key_columns:
        if column not in table.columns:
            raise MissingColumnError(column, name)
    return table[list(key_columns)].astype(str).apply(lambda column: column.str.strip())


def observation_keys(subjects: pd.DataFrame, key_columns: Sequence[str]) -> pd.DataFrame:
    """Key frame of the subject table with an ``_obs`` column holding the row position."""
    keys = _key_frame(subjects, key_columns, "subject")
    duplicated = keys.duplicated(keep=False)
    if duplicated.any():
        first = keys[duplicated].iloc[0].tolist()
        raise DuplicateObservationError(
            f"{int(duplicated.sum())} subject rows share their ID columns {list(key_columns)} "
            f"(first duplicate: {first})"
        )
    keys = keys.reset_index(drop=True)
    keys["_obs"] = np.arange(len(keys))
    return keys


def _bef_rows(
    table: pd.DataFrame,
    key_columns: Sequence[str],
    value_column: str,
    bef_name: str,
    table_name: str,
    columns: DataColumns,
) -> pd.DataFrame:
    if columns.bef_name not in table.columns:
        raise MissingColumnError(columns.bef_name, table_name)
    if value_column not in table.columns:
        raise MissingColumnError(value_column, table_name)
    names = table[columns.bef_name].astype(str).str.strip()
    values = to_numeric_column(table[value_column], value_column, table_name).to_numpy()
    chosen = (names == bef_name).to_numpy()
    selected = table[chosen]
    if selected.empty:
        raise UnknownBEFError(bef_name, table_name)
    rows = _key_frame(selected, key_columns, table_name)
    rows["_line"] = np.flatnonzero(chosen) + HEADER_LINES
    rows[value_column] = values[chosen]
    if (rows[value_column] < 0).any():
        line = int(rows.loc[rows[value_column] < 0, "_line"].iloc[0])
        raise DataError(f"Negative {value_column} in {table_name} data (row {line})")
    if columns.bef_id in selected.columns:
        rows["_bef_id"] = selected[columns.bef_id].astype(str).str.strip().to_numpy()
    return rows


def _attach_observations(
    rows: pd.DataFrame, keys: pd.DataFrame, key_columns: Sequence[str], what: str
) -> pd.DataFrame:
    joined = rows.merge(keys, on=list(key_columns), how="left")
    unmatched = joined["_obs"].isna()
    if unmatched.any():
        log.debug("Ignoring %d %s rows with no matching subject row", int(unmatched.sum()), what)
    return joined[~unmatched].astype({"_obs": int})


def _align_spatial_temporal(
    distance_rows: pd.DataFrame,
    time_rows: pd.DataFrame,
    key_columns: Sequence[str],
    bef_name: str,
) -> pd.DataFrame:
    join_on = list(key_columns)
    if "_bef_id" in distance_rows.columns and "_bef_id" in time_rows.columns:
        join_on.append("_bef_id")
    distance_rows = distance_rows.assign(_rank=distance_rows.groupby(join_on, sort=False).cumcount())
    time_rows = time_rows.assign(_rank=time_rows.groupby(join_on, sort=False).cumcount())
    join_on.append("_rank")
    joined = distance_rows.drop(columns="_line").merge(
        time_rows.drop(columns="_line"), on=join_on, how="outer", indicator=True
    )
    unaligned = joined[joined["_merge"] != "both"]
    if not unaligned.empty:
        sample = unaligned.iloc[0]
        side = "distance" if sample["_merge"] == "left_only" else "time"
        where = ", ".join(f"{column}={sample[column]}" for column in join_on if column != "_rank")
        raise AlignmentError(
            f"{len(unaligned)} {bef_name} rows cannot be paired between the distance and time "
            f"data (first unpaired {side} row: {where}, occurrence {int(sample['_rank']) + 1})"
        )
    return joined.drop(columns=["_merge", "_rank"])


def _pack(
    n_obs: int, obs: np.ndarray, distances: np.ndarray | None, times: np.ndarray | None
) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    sort_d = distances if distances is not None else np.zeros(len(obs))
    sort_t = times if times is not None else np.zeros(len(obs))
    order = np.lexsort((sort_t, sort_d, obs))
    obs = obs[order]
    counts = np.bincount(obs, minlength=n_obs)
    width = int(counts.max()) if n_obs and len(obs) else 0
    starts = np.concatenate(([0], np.cumsum(counts)[:-1])) if n_obs else np.zeros(0, dtype=int)
    slots = np.arange(len(obs)) - starts[obs] if len(obs) else np.zeros(0, dtype=int)
    mask = np.zeros((n_obs, width), dtype=bool)
    mask[obs, slots] = True
    packed = []
    for values in (distances, times):
        if values is None:
            packed.append(None)
            continue
        padded = np.zeros((n_obs, width))
        padded[obs, slots] = values[order]
        packed.append(padded)
    return mask, packed[0], packed[1]


def build_exposure_index(
    subjects: pd.DataFrame,
    distances: pd.DataFrame | None,
    times: pd.DataFrame | None,
    spec: FormulaSpec,
    subject_id: str,
    group_ids: Sequence[str] = (),
    max_distance: float = float("inf"),
    columns: DataColumns = DataColumns(),
    max_time: float | None = None,
) -> ExposureIndex:
    """Join the built environment tables to the subject rows and index them per STAP term.

    Distances above ``max_distance`` are dropped (a distance equal to it is kept). Observations
    without BEF rows keep an empty entry, i.e. zero exposure.
    """
    if not max_distance >= 0:
        raise DataError(f"max_distance must be non-negative, got {max_distance}")
    if spec.has_spatial and distances is None:
        raise MissingInputError("The formula has a spatial component but no distance data was given")
    if spec.has_temporal and times is None:
        raise MissingInputError("The formula has a temporal component but no time data was given")
    key_columns = [subject_id, *group_ids]
    keys = observation_keys(subjects, key_columns)
    n_obs = len(keys)
    term_indices = []
    observed_max_time = 0.0
    for term in spec.stap_terms:
        distance_rows = time_rows = None
        if term.kind.has_spatial:
            distance_rows = _attach_observations(
                _bef_rows(distances, key_columns, columns.distance, term.bef_name, "distance",
                          columns),
                keys, key_columns, "distance",
            )
        if term.kind.has_temporal:
            time_rows = _attach_observations(
                _bef_rows(times, key_columns, columns.time, term.bef_name, "time", columns),
                keys, key_columns, "time",
            )
        if term.kind == StapKind.SPATIAL_TEMPORAL:
            rows = _align_spatial_temporal(
                distance_rows.drop(columns="_obs"), time_rows, key_columns, term.bef_name
            )
        else:
            rows = distance_rows if distance_rows is not None else time_rows
        dropped = 0
        if term.kind.has_spatial:
            beyond = rows[columns.distance].to_numpy() > max_distance
            dropped = int(beyond.sum())
            rows = rows[~beyond]
            log.info(
                "Kept %d %s distance rows within max_distance=%g, dropped %d",
                len(rows), term.bef_name, max_distance, dropped,
            )
        d = rows[columns.distance].to_numpy(dtype=float) if term.kind.has_spatial else None
        t = rows[columns.time].to_numpy(dtype=float) if term.kind.has_temporal else None
        if t is not None and len(t):
            observed_max_time = max(observed_max_time, float(t.max()))
        mask, padded_d, padded_t = _pack(n_obs, rows["_obs"].to_numpy(dtype=int), d, t)
        term_indices.append(
            TermIndex(term=term, mask=mask, distances=padded_d, times=padded_t, dropped=dropped)
        )
    if spec.has_temporal and max_time is None:
        max_time = observed_max_time if observed_max_time > 0 else None
    keys_list = [tuple(row) for row in keys[key_columns].itertuples(index=False, name=None)]
    return ExposureIndex(
        keys=keys_list, terms=term_indices, max_distance=max_distance, max_time=max_time
    )
