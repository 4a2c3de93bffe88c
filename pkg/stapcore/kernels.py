# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""Exposure weight functions, their scale derivatives and the scale upper bound.

Spatial kernels decay from 1 at distance zero towards 0, temporal kernels rise from 0 at time zero
towards 1. Every function accepts scalars or numpy arrays for ``x`` and broadcasts.
"""
from __future__ import annotations

from typing import Iterable
import math

from attr import dataclass
from scipy import special
import numpy as np

from .errors import KernelDomainError
from .types import KernelKind

TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
DEFAULT_BOUND_QUANTILE = 0.975


@dataclass(frozen=True)
class ThetaBound:
    upper: float
    lower: float = 0.0

    def __attrs_post_init__(self) -> None:
        if not self.upper > 0 or not math.isfinite(self.upper):
            raise KernelDomainError(f"Scale upper bound must be positive and finite, got {self.upper}")

    def contains(self, theta: float) -> bool:
        return self.lower < theta <= self.upper


def _check_theta(theta: float) -> None:
    if not theta > 0:
        raise KernelDomainError(f"Kernel scale theta must be positive, got {theta}")


def weight(kind: KernelKind, x: float | np.ndarray, theta: float) -> float | np.ndarray:
    _check_theta(theta)
    u = np.asarray(x, dtype=float) / theta
    if kind == KernelKind.SPATIAL_ERFC:
        value = special.erfc(u)
    elif kind == KernelKind.SPATIAL_EXP:
        value = np.exp(-u)
    elif kind == KernelKind.TEMPORAL_ERF:
        value = special.erf(u)
    elif kind == KernelKind.TEMPORAL_CEXP:
        value = -np.expm1(-u)
    else:
        raise KernelDomainError(f"Unknown kernel kind {kind!r}")
    return value if value.ndim else float(value)


def dweight_dtheta(kind: KernelKind, x: float | np.ndarray, theta: float) -> float | np.ndarray:
    """Closed-form derivative of :func:`weight` with respect to ``theta``."""
    _check_theta(theta)
    x = np.asarray(x, dtype=float)
    u = x / theta
    scale = x / (theta * theta)
    if kind == KernelKind.SPATIAL_ERFC:
        value = TWO_OVER_SQRT_PI * np.exp(-u * u) * scale
    elif kind == KernelKind.SPATIAL_EXP:
        value = np.exp(-u) * scale
    elif kind == KernelKind.TEMPORAL_ERF:
        value = -TWO_OVER_SQRT_PI * np.exp(-u * u) * scale
    elif kind == KernelKind.TEMPORAL_CEXP:
        value = -np.exp(-u) * scale
    else:
        raise KernelDomainError(f"Unknown kernel kind {kind!r}")
    return value if value.ndim else float(value)


def unit_quantile(kind: KernelKind, quantile: float = DEFAULT_BOUND_QUANTILE) -> float:
    """Abscissa (at unit scale) where the kernel has covered ``quantile`` of its range.

    Spatial kernels solve ``K(d*) = 1 - quantile``, temporal kernels solve ``K(t*) = quantile``.
    """
    if not 0 < quantile < 1:
        raise KernelDomainError(f"Bound quantile must be in (0, 1), got {quantile}")
    if kind in (KernelKind.SPATIAL_ERFC, KernelKind.TEMPORAL_ERF):
        return float(special.erfinv(quantile))
    return float(-math.log1p(-quantile))


def theta_upper_bound(
    kinds: Iterable[KernelKind], max_distance: float, quantile: float = DEFAULT_BOUND_QUANTILE
) -> ThetaBound:
    kinds = list(kinds)
    if not kinds:
        raise KernelDomainError("At least one kernel is needed to compute a scale bound")
    if not max_distance > 0:
        raise KernelDomainError(f"max_distance must be positive, got {max_distance}")
    return ThetaBound(upper=max_distance / min(unit_quantile(kind, quantile) for kind in kinds))


def termination_distance(kind: KernelKind, theta: float, exposure_limit: float) -> float:
    """Distance at which a spatial kernel with scale ``theta`` has decayed to ``exposure_limit``."""
    _check_theta(theta)
    if not kind.is_spatial:
        raise KernelDomainError(f"Termination distance is only defined for spatial kernels, not {kind.value}")
    if not 0 < exposure_limit < 1:
        raise KernelDomainError(f"Exposure limit must be in (0, 1), got {exposure_limit}")
    if kind == KernelKind.SPATIAL_ERFC:
        return theta * float(special.erfcinv(exposure_limit))
    return -theta * math.log(exposure_limit)
