# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""Synthetic data sets with planted STAP effects.

Subjects live uniformly on a centered square nested inside a larger square holding the built
environment features, so exposure is free of edge effects for moderate scales.
"""
from __future__ import annotations

from typing import NamedTuple, Optional
import logging
import math

from attr import dataclass
from scipy import special
import numpy as np
import pandas as pd

from mautrix.types import SerializableAttrs

from .errors import ConfigError
from .kernels import weight
from .types import Family, KernelKind

log = logging.getLogger("stapcore.simulate")

SUBJECT_ID = "subj_ID"
MEASURE_ID = "measure_ID"
SCHOOL_ID = "school_ID"
GENDER = "Gender_CAT"


@dataclass(frozen=True)
class SimConfig(SerializableAttrs):
    n_subjects: int = 950
    n_befs: int = 44
    bef_name: str = "Fast_Food"
    bef_side: float = 3.0
    subject_side: float = 1.0
    family: Family = Family.GAUSSIAN
    alpha: float = 22.5
    delta_sex: float = -0.8
    beta: float = 1.2
    theta_s: float = 0.5
    theta_t: Optional[float] = None
    tau: float = 0.0
    sigma: float = 2.3
    spatial_kernel: KernelKind = KernelKind.SPATIAL_ERFC
    temporal_kernel: KernelKind = KernelKind.TEMPORAL_ERF
    visits: int = 1
    revisit_probability: float = 0.88
    relocation_probability: float = 0.5
    max_time: float = 40.0
    mean_trials: float = 100.0
    seed: int = 0

    def __attrs_post_init__(self) -> None:
        if self.n_subjects < 1 or self.n_befs < 0:
            raise ConfigError("n_subjects must be positive and n_befs non-negative")
        if not 0 < self.subject_side <= self.bef_side:
            raise ConfigError("The subject square must fit inside the BEF square")
        if not self.theta_s > 0 or (self.theta_t is not None and not self.theta_t > 0):
            raise ConfigError("Simulation scales must be positive")
        if self.tau < 0 or self.sigma < 0:
            raise ConfigError("tau and sigma must be non-negative")
        if self.visits < 1:
            raise ConfigError("visits must be at least 1")
        for name in ("revisit_probability", "relocation_probability"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must be a probability")

    @classmethod
    def cross_sectional(cls, **kwargs) -> SimConfig:
        return cls(**kwargs)

    @classmethod
    def longitudinal(cls, **kwargs) -> SimConfig:
        defaults = dict(
            n_subjects=350, alpha=21.0, delta_sex=1.3, beta=1.0, theta_s=0.8, theta_t=18.0,
            tau=1.5, sigma=2.0, visits=2,
        )
        return cls(**{**defaults, **kwargs})

    @classmethod
    def grouped_binomial(cls, **kwargs) -> SimConfig:
        defaults = dict(
            n_subjects=120, bef_name="FFR", family=Family.BINOMIAL, alpha=-1.0, delta_sex=0.3,
            beta=0.25, theta_s=0.6, tau=0.3, sigma=0.0,
        )
        return cls(**{**defaults, **kwargs})


class SimulatedData(NamedTuple):
    subjects: pd.DataFrame
    distances: pd.DataFrame
    times: Optional[pd.DataFrame]
    exposure: np.ndarray


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _uniform_square(rng: np.random.Generator, n: int, side: float) -> np.ndarray:
    return rng.uniform(-side / 2, side / 2, size=(n, 2))


def _pairwise(points: np.ndarray, befs: np.ndarray) -> np.ndarray:
    return np.sqrt(((points[:, np.newaxis, :] - befs[np.newaxis, :, :]) ** 2).sum(axis=2))


def _distance_table(keys: pd.DataFrame, distances: np.ndarray, bef_name: str) -> pd.DataFrame:
    n_obs, n_befs = distances.shape
    table = keys.loc[keys.index.repeat(n_befs)].reset_index(drop=True)
    table["bef_name"] = bef_name
    table["bef_ID"] = np.tile(np.arange(1, n_befs + 1), n_obs)
    table["Distance"] = distances.ravel()
    return table


def _draw_outcome(rng: np.random.Generator, config: SimConfig, eta: np.ndarray) -> np.ndarray:
    if config.family == Family.GAUSSIAN:
        return eta + rng.normal(0.0, config.sigma, size=eta.shape[0])
    elif config.family == Family.POISSON:
        return rng.poisson(np.exp(eta))
    elif config.family == Family.BERNOULLI:
        return rng.binomial(1, special.expit(eta))
    raise ConfigError("Binomial counts are only simulated by the grouped scenario")


def simulate_cross_sectional(config: SimConfig = SimConfig()) -> SimulatedData:
    """One measurement per subject with a spatial-only exposure and a sex effect on level F."""
    rng = make_rng(config.seed)
    subjects_xy = _uniform_square(rng, config.n_subjects, config.subject_side)
    befs_xy = _uniform_square(rng, config.n_befs, config.bef_side)
    distances = _pairwise(subjects_xy, befs_xy)
    exposure = weight(config.spatial_kernel, distances, config.theta_s).sum(axis=1)
    female = rng.random(config.n_subjects) < 0.5
    eta = config.alpha + config.delta_sex * female + config.beta * exposure
    y = _draw_outcome(rng, config, eta)
    subjects = pd.DataFrame({
        SUBJECT_ID: np.arange(1, config.n_subjects + 1),
        "sex": np.where(female, "F", "M"),
        "y": y,
    })
    table = _distance_table(subjects[[SUBJECT_ID]], distances, config.bef_name)
    log.info("Simulated %d subjects and %d distance rows", len(subjects), len(table))
    return SimulatedData(subjects, table, None, exposure)


def simulate_longitudinal(config: Optional[SimConfig] = None) -> SimulatedData:
    """Repeated measurements with subject random intercepts and a spatial-temporal exposure.

    Every subject has a first visit; later visits happen with ``revisit_probability``. Between
    visits a subject relocates with ``relocation_probability``. Each BEF's time at the current
    location is uniform on ``[0, max_time]``.
    """
    config = config or SimConfig.longitudinal()
    if config.theta_t is None:
        raise ConfigError("A longitudinal simulation needs a temporal scale")
    rng = make_rng(config.seed)
    befs_xy = _uniform_square(rng, config.n_befs, config.bef_side)
    home = _uniform_square(rng, config.n_subjects, config.subject_side)
    intercepts = rng.normal(0.0, config.tau, size=config.n_subjects)
    sex = (rng.random(config.n_subjects) < 0.5).astype(int)

    subject_ids, measure_ids, locations = [], [], []
    for subject in range(config.n_subjects):
        location = home[subject]
        for visit in range(config.visits):
            if visit > 0:
                if rng.random() >= config.revisit_probability:
                    break
                if rng.random() < config.relocation_probability:
                    location = _uniform_square(rng, 1, config.subject_side)[0]
            subject_ids.append(subject)
            measure_ids.append(visit + 1)
            locations.append(location)
    subject_index = np.array(subject_ids)
    distances = _pairwise(np.array(locations), befs_xy)
    times = rng.uniform(0.0, config.max_time, size=distances.shape)
    exposure = (
        weight(config.spatial_kernel, distances, config.theta_s)
        * weight(config.temporal_kernel, times, config.theta_t)
    ).sum(axis=1)
    n_obs = len(subject_index)
    eta = (
        config.alpha + config.delta_sex * sex[subject_index] + config.beta * exposure
        + intercepts[subject_index]
    )
    y = _draw_outcome(rng, config, eta)
    subjects = pd.DataFrame({
        SUBJECT_ID: subject_index + 1,
        MEASURE_ID: measure_ids,
        "sex": sex[subject_index],
        "y": y,
    })
    keys = subjects[[SUBJECT_ID, MEASURE_ID]]
    distance_table = _distance_table(keys, distances, config.bef_name)
    time_table = distance_table.drop(columns="Distance")
    time_table["Time"] = times.ravel()
    log.info("Simulated %d measurements of %d subjects", n_obs, config.n_subjects)
    return SimulatedData(subjects, distance_table, time_table, exposure)


def simulate_grouped_binomial(config: Optional[SimConfig] = None) -> SimulatedData:
    """Binomial counts per school and gender with a school random intercept.

    ``delta_sex`` is the log odds difference of the ``Male`` rows.
    """
    config = config or SimConfig.grouped_binomial()
    rng = make_rng(config.seed)
    befs_xy = _uniform_square(rng, config.n_befs, config.bef_side)
    schools_xy = _uniform_square(rng, config.n_subjects, config.subject_side)
    intercepts = rng.normal(0.0, config.tau, size=config.n_subjects)
    school_distances = _pairwise(schools_xy, befs_xy)
    school_exposure = weight(config.spatial_kernel, school_distances, config.theta_s).sum(axis=1)

    school_index = np.repeat(np.arange(config.n_subjects), 2)
    male = np.tile([0, 1], config.n_subjects)
    exposure = school_exposure[school_index]
    eta = config.alpha + config.delta_sex * male + config.beta * exposure + intercepts[school_index]
    trials = rng.poisson(config.mean_trials, size=school_index.shape[0]) + 1
    successes = rng.binomial(trials, special.expit(eta))
    subjects = pd.DataFrame({
        SCHOOL_ID: school_index + 1,
        GENDER: np.where(male == 1, "Male", "Female"),
        "overweight": successes,
        "not_overweight": trials - successes,
    })
    table = _distance_table(
        subjects[[SCHOOL_ID, GENDER]], school_distances[school_index], config.bef_name
    )
    log.info("Simulated %d school-gender rows", len(subjects))
    return SimulatedData(subjects, table, None, exposure)


def outer_diameter(config: SimConfig) -> float:
    """Largest possible subject to BEF distance."""
    return (config.bef_side + config.subject_side) / 2 * math.sqrt(2)
