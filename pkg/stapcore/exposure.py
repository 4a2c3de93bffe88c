# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""Aggregated exposure covariates, their scale gradients and per-evaluation standardization."""
from __future__ import annotations

from typing import Dict, Iterable, Mapping, NamedTuple, Optional
import logging
import math

from attr import dataclass
import numpy as np

from .errors import KernelDomainError, ResponseError
from .ingest import ExposureIndex, TermIndex
from .kernels import DEFAULT_BOUND_QUANTILE, ThetaBound, dweight_dtheta, theta_upper_bound, weight
from .types import KernelKind, StapTerm, ThetaComponent

DEGENERATE_SCALE = 1e-12

Thetas = Dict[ThetaComponent, float]
Bounds = Dict[ThetaComponent, ThetaBound]

log = logging.getLogger("stapcore.exposure")


class Standardization(NamedTuple):
    values: np.ndarray
    center: float
    scale: float
    degenerate: bool


@dataclass(frozen=True, eq=False)
class ExposureValue:
    term: StapTerm
    raw: np.ndarray
    standardized: np.ndarray
    center: float
    scale: float
    degenerate: bool = False
    # d(raw)/d(theta) and d(standardized)/d(theta) per scale component.
    gradient: Optional[Dict[ThetaComponent, np.ndarray]] = None
    standardized_gradient: Optional[Dict[ThetaComponent, np.ndarray]] = None


def _resolve_thetas(
    term: StapTerm,
    theta_s: float | None,
    theta_t: float | None,
    bounds: Bounds | None,
) -> Thetas:
    given = {ThetaComponent.SPATIAL: theta_s, ThetaComponent.TEMPORAL: theta_t}
    thetas = {}
    for component, _ in term.kernels:
        theta = given.pop(component)
        if theta is None:
            raise KernelDomainError(f"{term.render()} needs a {component.value} scale")
        if not theta > 0:
            raise KernelDomainError(f"{component.value} scale of {term.render()} must be positive, got {theta}")
        bound = (bounds or {}).get(component)
        if bound is not None and theta > bound.upper:
            raise KernelDomainError(
                f"{component.value} scale {theta} of {term.render()} exceeds its upper bound "
                f"{bound.upper}"
            )
        thetas[component] = theta
    extra = [component.value for component, theta in given.items() if theta is not None]
    if extra:
        raise KernelDomainError(f"{term.render()} has no {' or '.join(extra)} component")
    return thetas


def index_bounds(
    index: ExposureIndex,
    kinds: Mapping[ThetaComponent, Iterable[KernelKind]],
    quantile: float = DEFAULT_BOUND_QUANTILE,
) -> Bounds:
    """Scale upper bounds anchored at the index's ``max_distance`` and ``max_time``.

    Without a finite ``max_distance`` the largest retained distance anchors the spatial bound.
    """
    bounds = {}
    spatial_kinds = list(kinds.get(ThetaComponent.SPATIAL, ()))
    temporal_kinds = list(kinds.get(ThetaComponent.TEMPORAL, ()))
    if spatial_kinds:
        max_distance = index.max_distance
        if not math.isfinite(max_distance):
            observed = [
                float(term.distances[term.mask].max())
                for term in index.terms
                if term.distances is not None and term.total
            ]
            max_distance = max(observed, default=1.0)
            log.warning("No finite max_distance given, bounding spatial scales by the largest "
                        "observed distance %g", max_distance)
        bounds[ThetaComponent.SPATIAL] = theta_upper_bound(spatial_kinds, max_distance, quantile)
    if temporal_kinds:
        if not index.max_time:
            raise ResponseError("A temporal scale bound needs max_time or observed positive times")
        bounds[ThetaComponent.TEMPORAL] = theta_upper_bound(temporal_kinds, index.max_time, quantile)
    return bounds


def _component_values(term_index: TermIndex, component: ThetaComponent) -> np.ndarray:
    return term_index.distances if component == ThetaComponent.SPATIAL else term_index.times


def evaluate_term(
    term_index: TermIndex, thetas: Thetas, with_gradient: bool = False
) -> tuple[np.ndarray, Dict[ThetaComponent, np.ndarray]]:
    """Raw exposure of one term and, optionally, its gradient per scale component.

    Spatial-temporal terms use the separable product of the spatial and temporal weights.
    """
    mask = term_index.mask
    weights = {}
    derivatives = {}
    for component, kernel in term_index.term.kernels:
        values = _component_values(term_index, component)
        weights[component] = np.where(mask, weight(kernel, values, thetas[component]), 0.0)
        if with_gradient:
            derivatives[component] = np.where(
                mask, dweight_dtheta(kernel, values, thetas[component]), 0.0
            )
    product = np.ones(mask.shape)
    for component_weights in weights.values():
        product = product * component_weights
    raw = product.sum(axis=1)
    gradient = {}
    for component, derivative in derivatives.items():
        others = np.ones(mask.shape)
        for other, other_weights in weights.items():
            if other != component:
                others = others * other_weights
        gradient[component] = (derivative * others).sum(axis=1)
    return raw, gradient


def _term_bounds(index: ExposureIndex, term: StapTerm, bounds: Bounds | None) -> Bounds:
    if bounds is not None:
        return bounds
    kinds: Dict[ThetaComponent, list] = {}
    for component, kernel in term.kernels:
        kinds.setdefault(component, []).append(kernel)
    return index_bounds(index, kinds)


def compute_exposure(
    index: ExposureIndex,
    term: StapTerm,
    theta_s: float | None = None,
    theta_t: float | None = None,
    bounds: Bounds | None = None,
) -> ExposureValue:
    """Raw and standardized exposure of one term.

    Scales are checked against ``bounds``, derived from the index when not given.
    """
    thetas = _resolve_thetas(term, theta_s, theta_t, _term_bounds(index, term, bounds))
    raw, _ = evaluate_term(index.for_term(term), thetas)
    standardization = standardize(raw)
    return ExposureValue(
        term=term,
        raw=raw,
        standardized=standardization.values,
        center=standardization.center,
        scale=standardization.scale,
        degenerate=standardization.degenerate,
    )


def compute_exposure_gradient(
    index: ExposureIndex,
    term: StapTerm,
    theta_s: float | None = None,
    theta_t: float | None = None,
    bounds: Bounds | None = None,
) -> Dict[ThetaComponent, np.ndarray]:
    thetas = _resolve_thetas(term, theta_s, theta_t, _term_bounds(index, term, bounds))
    _, gradient = evaluate_term(index.for_term(term), thetas, with_gradient=True)
    return gradient


def standardize(raw: np.ndarray) -> Standardization:
    """Center by the sample mean and scale by the sample standard deviation.

    A (near) constant vector, or one with fewer than two entries, keeps scale 1 and is flagged
    as degenerate.
    """
    raw = np.asarray(raw, dtype=float)
    n = raw.shape[0]
    center = float(raw.mean()) if n else 0.0
    scale = float(raw.std(ddof=1)) if n > 1 else 0.0
    degenerate = not scale >= DEGENERATE_SCALE
    if degenerate:
        scale = 1.0
    return Standardization((raw - center) / scale, center, scale, degenerate)


def standardize_gradient(
    raw: np.ndarray, raw_gradient: np.ndarray, standardization: Standardization
) -> np.ndarray:
    """Gradient of the standardized exposure, including the moving center and scale."""
    n = raw.shape[0]
    if n == 0:
        return np.zeros(0)
    d_center = raw_gradient.mean()
    centered_gradient = raw_gradient - d_center
    if standardization.degenerate:
        return centered_gradient
    s = standardization.scale
    deviation = raw - standardization.center
    d_scale = float(deviation @ centered_gradient) / ((n - 1) * s)
    return centered_gradient / s - deviation * d_scale / (s * s)


def exposure_value(
    term_index: TermIndex, thetas: Thetas, with_gradient: bool = True
) -> ExposureValue:
    """Full evaluation used by the model: raw and standardized values with their gradients."""
    raw, gradient = evaluate_term(term_index, thetas, with_gradient=with_gradient)
    standardization = standardize(raw)
    standardized_gradient = {
        component: standardize_gradient(raw, component_gradient, standardization)
        for component, component_gradient in gradient.items()
    }
    return ExposureValue(
        term=term_index.term,
        raw=raw,
        standardized=standardization.values,
        center=standardization.center,
        scale=standardization.scale,
        degenerate=standardization.degenerate,
        gradient=gradient if with_gradient else None,
        standardized_gradient=standardized_gradient if with_gradient else None,
    )
