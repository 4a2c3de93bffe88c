# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
from typing import Callable, Optional

import numpy as np
import pandas as pd
import pytest

from stapcore.formula import parse_formula
from stapcore.ingest import build_exposure_index
from stapcore.model import ModelContext, PriorSpec, build_context
from stapcore.types import Family


@pytest.fixture
def distance_table() -> pd.DataFrame:
    """Two subjects near fast food outlets and one coffee shop."""
    return pd.DataFrame({
        "subject_ID": [1, 1, 2, 2, 2],
        "bef_ID": [1, 2, 1, 2, 3],
        "bef_name": ["Fast_Food", "Fast_Food", "Fast_Food", "Fast_Food", "Coffee_Shop"],
        "Distance": [0.351, 0.891, 1.231, 0.331, 0.531],
    })


@pytest.fixture
def subject_table() -> pd.DataFrame:
    return pd.DataFrame({"subject_ID": [1, 2], "sex": ["F", "M"], "y": [24.1, 22.7]})


@pytest.fixture
def longitudinal_tables() -> tuple:
    """Subject, distance and time rows of one subject measured twice.

    The second measurement has a repeated ``bef_ID`` in the distance rows and a distinct one
    in the time rows.
    """
    subjects = pd.DataFrame({"s_ID": [1, 1], "m_ID": [1, 2], "y": [1.0, 2.0]})
    distances = pd.DataFrame({
        "s_ID": [1, 1, 1, 1],
        "m_ID": [1, 1, 2, 2],
        "bef_ID": [1, 2, 1, 1],
        "bef_name": ["CoffeeShop"] * 4,
        "Distance": [0.351, 0.891, 0.413, 1.343],
    })
    times = pd.DataFrame({
        "s_ID": [1, 1, 1, 1],
        "m_ID": [1, 1, 2, 2],
        "bef_ID": [1, 2, 1, 2],
        "bef_name": ["CoffeeShop"] * 4,
        "Time": [3.43, 2.891, 0.513, 0.513],
    })
    return subjects, distances, times


def random_tables(
    rng: np.random.Generator,
    family: Family,
    n_obs: int = 12,
    max_befs: int = 200,
    n_groups: int = 3,
) -> tuple:
    """Subject, distance and time tables with random BEF counts and a random response."""
    counts = rng.integers(0, max_befs + 1, size=n_obs)
    counts[0] = max_befs
    rows = {"subject_ID": [], "bef_ID": [], "Distance": [], "Time": []}
    for subject, count in enumerate(counts):
        rows["subject_ID"] += [subject + 1] * int(count)
        rows["bef_ID"] += list(range(1, int(count) + 1))
        rows["Distance"] += rng.uniform(0.0, 3.0, size=count).tolist()
        rows["Time"] += rng.uniform(0.0, 10.0, size=count).tolist()
    befs = pd.DataFrame(rows)
    befs["bef_name"] = "F"
    subjects = pd.DataFrame({
        "subject_ID": np.arange(1, n_obs + 1),
        "x1": rng.normal(size=n_obs),
        "g": [f"level{i % n_groups}" for i in range(n_obs)],
    })
    if family == Family.GAUSSIAN:
        subjects["y"] = rng.normal(2.0, 1.5, size=n_obs)
    elif family == Family.BERNOULLI:
        subjects["y"] = rng.integers(0, 2, size=n_obs)
    elif family == Family.POISSON:
        subjects["y"] = rng.poisson(3.0, size=n_obs)
    else:
        trials = rng.integers(1, 30, size=n_obs)
        subjects["successes"] = rng.binomial(trials, 0.4)
        subjects["failures"] = trials - subjects["successes"]
    return subjects, befs.drop(columns="Time"), befs.drop(columns="Distance")


def context_from_tables(
    subjects: pd.DataFrame,
    distances: Optional[pd.DataFrame],
    times: Optional[pd.DataFrame],
    formula: str,
    family: Family = Family.GAUSSIAN,
    max_distance: float = 3.0,
    priors: Optional[PriorSpec] = None,
    subject_id: str = "subject_ID",
    **kwargs,
) -> ModelContext:
    spec = parse_formula(formula)
    index = build_exposure_index(
        subjects, distances if spec.has_spatial else None, times if spec.has_temporal else None,
        spec, subject_id, max_distance=max_distance,
    )
    return build_context(subjects, index, spec, family, priors, **kwargs)


@pytest.fixture
def make_context() -> Callable[..., ModelContext]:
    """Factory of small random models: ``make_context(family, "stap(F, exp, cexp)")``."""

    def make(
        family: Family,
        stap: str,
        seed: int = 0,
        grouped: bool = True,
        n_obs: int = 12,
        max_befs: int = 200,
    ) -> ModelContext:
        rng = np.random.default_rng(seed)
        subjects, distances, times = random_tables(rng, family, n_obs, max_befs)
        response = "cbind(successes, failures)" if family == Family.BINOMIAL else "y"
        formula = f"{response} ~ x1 + {stap}"
        if grouped:
            formula += " + (1 | g)"
        return context_from_tables(subjects, distances, times, formula, family)

    return make
