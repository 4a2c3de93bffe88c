# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""Families, priors and the joint log posterior of a STAP model with its analytic gradient.

Sampler coordinates are laid out as::

    alpha | delta (fixed) | beta (standardized STAP) | eta_theta | log sigma | z (groups) | log tau

Scales are mapped to ``(0, upper)`` with a scaled logistic and random intercepts are
non-centered (``b = tau * z``).
"""
from __future__ import annotations

from typing import Any, Dict, List, NamedTuple, Optional, Tuple
import logging
import math

from attr import dataclass
from scipy import special
import attr
import numpy as np
import pandas as pd

from mautrix.types import SerializableAttrs, SerializableEnum, field

from .errors import MissingColumnError, NonNumericValueError, PriorError, ResponseError
from .exposure import ExposureValue, exposure_value, index_bounds
from .ingest import HEADER_LINES, ExposureIndex, require_values, to_numeric_column
from .kernels import DEFAULT_BOUND_QUANTILE, ThetaBound
from .types import Family, FormulaSpec, KernelKind, ThetaComponent

log = logging.getLogger("stapcore.model")

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


class PriorDistribution(SerializableEnum):
    NORMAL = "normal"
    LOG_NORMAL = "log_normal"
    FOLDED_NORMAL = "folded_normal"
    CAUCHY = "cauchy"

    @classmethod
    def parse(cls, value: str) -> PriorDistribution:
        key = str(value).strip().lower().replace("-", "_")
        key = {
            "lognormal": "log_normal",
            "foldednormal": "folded_normal",
            "half_cauchy": "cauchy",
            "half_normal": "normal",
        }.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise PriorError(f"Unknown prior distribution {value!r}") from None


@dataclass(frozen=True)
class Prior(SerializableAttrs):
    distribution: PriorDistribution
    location: float = 0.0
    scale: float = 1.0
    autoscale: bool = False

    def __attrs_post_init__(self) -> None:
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise PriorError(f"Prior scale must be positive and finite, got {self.scale}")
        if not math.isfinite(self.location):
            raise PriorError(f"Prior location must be finite, got {self.location}")

    def __str__(self) -> str:
        return f"{self.distribution.value}(location = {self.location:g}, scale = {self.scale:g})"

    def scaled(self, factor: float) -> Prior:
        return attr.evolve(self, scale=self.scale * factor)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], what: str = "prior") -> Prior:
        if not isinstance(data, dict) or "distribution" not in data:
            raise PriorError(f"{what} must be a mapping with a 'distribution' key, got {data!r}")
        try:
            return cls(
                distribution=PriorDistribution.parse(data["distribution"]),
                location=float(data.get("location", 0.0)),
                scale=float(data.get("scale", 1.0)),
                autoscale=bool(data.get("autoscale", False)),
            )
        except (TypeError, ValueError) as e:
            raise PriorError(f"Invalid {what} {data!r}: {e}") from e


def normal(location: float = 0.0, scale: float = 1.0, autoscale: bool = False) -> Prior:
    return Prior(PriorDistribution.NORMAL, location, scale, autoscale)


def log_normal(location: float = 0.0, scale: float = 1.0) -> Prior:
    return Prior(PriorDistribution.LOG_NORMAL, location, scale)


def folded_normal(location: float = 0.0, scale: float = 1.0) -> Prior:
    return Prior(PriorDistribution.FOLDED_NORMAL, location, scale)


def cauchy(location: float = 0.0, scale: float = 1.0, autoscale: bool = False) -> Prior:
    return Prior(PriorDistribution.CAUCHY, location, scale, autoscale)


def prior_log_density(prior: Prior, x: float, positive: bool = False) -> Tuple[float, float]:
    """Log density of ``prior`` at ``x`` and its derivative.

    ``positive`` restricts normal and Cauchy priors to the positive half line (renormalized).
    """
    mu, sigma = prior.location, prior.scale
    dist = prior.distribution
    if dist == PriorDistribution.NORMAL:
        u = (x - mu) / sigma
        value = -0.5 * u * u - math.log(sigma) - HALF_LOG_2PI
        if positive:
            value -= float(special.log_ndtr(mu / sigma))
        return value, -u / sigma
    elif dist == PriorDistribution.CAUCHY:
        u = (x - mu) / sigma
        value = -math.log(math.pi * sigma) - math.log1p(u * u)
        if positive:
            value -= math.log(0.5 + math.atan(mu / sigma) / math.pi)
        return value, -2 * (x - mu) / (sigma * sigma + (x - mu) ** 2)
    elif dist == PriorDistribution.LOG_NORMAL:
        log_x = math.log(x)
        u = (log_x - mu) / sigma
        value = -log_x - math.log(sigma) - HALF_LOG_2PI - 0.5 * u * u
        return value, -(1 + u / sigma) / x
    elif dist == PriorDistribution.FOLDED_NORMAL:
        a = -0.5 * ((x - mu) / sigma) ** 2
        b = -0.5 * ((x + mu) / sigma) ** 2
        value = float(np.logaddexp(a, b)) - math.log(sigma) - HALF_LOG_2PI
        weight_a = float(special.expit(a - b))
        derivative = -(weight_a * (x - mu) + (1 - weight_a) * (x + mu)) / (sigma * sigma)
        return value, derivative
    raise PriorError(f"Unsupported prior distribution {dist!r}")


THETA_DISTRIBUTIONS = (PriorDistribution.LOG_NORMAL, PriorDistribution.FOLDED_NORMAL)
COEFFICIENT_DISTRIBUTIONS = (PriorDistribution.NORMAL, PriorDistribution.CAUCHY)
SCALE_DISTRIBUTIONS = (PriorDistribution.CAUCHY, PriorDistribution.NORMAL)


@dataclass(frozen=True)
class PriorSpec(SerializableAttrs):
    intercept: Prior = normal(0, 10)
    coefficients: Prior = normal(0, 2.5, autoscale=True)
    stap: Prior = normal(0, 2.5)
    theta: Prior = log_normal(1, 1)
    # BEF name -> component ("spatial"/"temporal") -> prior
    theta_terms: Dict[str, Dict[str, Prior]] = field(factory=dict)
    aux: Prior = cauchy(0, 5)
    group_sd: Prior = cauchy(0, 2.5)

    def __attrs_post_init__(self) -> None:
        for name in ("intercept", "coefficients", "stap"):
            prior = getattr(self, name)
            if prior.distribution not in COEFFICIENT_DISTRIBUTIONS:
                raise PriorError(f"The {name} prior must be normal or cauchy, not {prior}")
        for name in ("aux", "group_sd"):
            prior = getattr(self, name)
            if prior.distribution not in SCALE_DISTRIBUTIONS:
                raise PriorError(f"The {name} prior must be (half) cauchy or normal, not {prior}")
        for prior in [self.theta, *(p for c in self.theta_terms.values() for p in c.values())]:
            if prior.distribution not in THETA_DISTRIBUTIONS:
                raise PriorError(
                    f"Scale priors must be log_normal or folded_normal, not {prior.distribution.value}"
                )
        for components in self.theta_terms.values():
            for component in components:
                if component not in ("spatial", "temporal"):
                    raise PriorError(f"Unknown scale component {component!r} in theta prior")

    def theta_prior(self, bef_name: str, component: ThetaComponent) -> Prior:
        return self.theta_terms.get(bef_name, {}).get(component.value, self.theta)

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> PriorSpec:
        """Build from the ``priors`` config block; absent keys keep their defaults.

        ``theta`` is either a single prior for every scale or a mapping of BEF name to a prior
        (shared by both components) or to ``{spatial: prior, temporal: prior}``.
        """
        data = dict(data or {})
        kwargs = {}
        for name in ("intercept", "coefficients", "stap", "aux", "group_sd"):
            if data.get(name) is not None:
                kwargs[name] = Prior.from_dict(data[name], f"{name} prior")
        theta = data.get("theta")
        if isinstance(theta, dict) and "distribution" in theta:
            kwargs["theta"] = Prior.from_dict(theta, "theta prior")
        elif isinstance(theta, dict):
            terms = {}
            for bef_name, value in theta.items():
                if bef_name == "default":
                    kwargs["theta"] = Prior.from_dict(value, "default theta prior")
                elif isinstance(value, dict) and "distribution" in value:
                    prior = Prior.from_dict(value, f"theta prior of {bef_name}")
                    terms[bef_name] = {"spatial": prior, "temporal": prior}
                elif isinstance(value, dict):
                    terms[bef_name] = {
                        component: Prior.from_dict(prior, f"{component} theta prior of {bef_name}")
                        for component, prior in value.items()
                    }
                else:
                    raise PriorError(f"Invalid theta prior for {bef_name}: {value!r}")
            kwargs["theta_terms"] = terms
        elif theta is not None:
            raise PriorError(f"Invalid theta prior {theta!r}")
        return cls(**kwargs)


@dataclass(frozen=True)
class ThetaSlot:
    term: int
    component: ThetaComponent
    kernel: KernelKind
    label: str


@dataclass(frozen=True, eq=False)
class ParameterLayout:
    n_fixed: int
    n_stap: int
    theta_slots: List[ThetaSlot]
    has_aux: bool
    n_groups: int = 0

    @property
    def fixed(self) -> slice:
        return slice(1, 1 + self.n_fixed)

    @property
    def stap(self) -> slice:
        return slice(self.fixed.stop, self.fixed.stop + self.n_stap)

    @property
    def theta(self) -> slice:
        return slice(self.stap.stop, self.stap.stop + len(self.theta_slots))

    @property
    def aux(self) -> Optional[int]:
        return self.theta.stop if self.has_aux else None

    @property
    def groups(self) -> slice:
        start = self.theta.stop + int(self.has_aux)
        return slice(start, start + self.n_groups)

    @property
    def log_tau(self) -> Optional[int]:
        return self.groups.stop if self.n_groups else None

    @property
    def dim(self) -> int:
        return self.groups.stop + (1 if self.n_groups else 0)


class Parameters(NamedTuple):
    alpha: float
    delta: np.ndarray
    beta: np.ndarray
    eta_theta: np.ndarray
    log_sigma: Optional[float]
    z: np.ndarray
    log_tau: Optional[float]

    @property
    def sigma(self) -> Optional[float]:
        return None if self.log_sigma is None else math.exp(self.log_sigma)

    @property
    def tau(self) -> Optional[float]:
        return None if self.log_tau is None else math.exp(self.log_tau)


def map_theta(eta: float, bound: ThetaBound) -> Tuple[float, float]:
    """Map an unconstrained coordinate to ``(0, upper)`` and return the log Jacobian."""
    theta = bound.upper * float(special.expit(eta))
    log_jacobian = (
        math.log(bound.upper) - float(np.logaddexp(0.0, -eta)) - float(np.logaddexp(0.0, eta))
    )
    return theta, log_jacobian


def unmap_theta(theta: float, bound: ThetaBound) -> float:
    return float(special.logit(theta / bound.upper))


@dataclass(frozen=True, eq=False)
class ModelContext:
    family: Family
    spec: FormulaSpec
    y: np.ndarray
    trials: Optional[np.ndarray]
    design: np.ndarray
    fixed_names: List[str]
    index: ExposureIndex
    priors: PriorSpec
    bounds: Dict[ThetaComponent, ThetaBound]
    layout: ParameterLayout
    intercept_prior: Prior
    coefficient_priors: List[Prior]
    stap_priors: List[Prior]
    theta_priors: List[Prior]
    aux_prior: Optional[Prior] = None
    group_sd_prior: Optional[Prior] = None
    group_index: Optional[np.ndarray] = None
    group_levels: List[str] = attr.ib(factory=list)
    log_normalizer: Optional[np.ndarray] = None

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def stap_labels(self) -> List[str]:
        return self.spec.term_labels()

    @property
    def grouping_factor(self) -> Optional[str]:
        return self.spec.group_terms[0].grouping_factor if self.spec.group_terms else None

    def unpack(self, params: np.ndarray) -> Parameters:
        layout = self.layout
        return Parameters(
            alpha=float(params[0]),
            delta=params[layout.fixed],
            beta=params[layout.stap],
            eta_theta=params[layout.theta],
            log_sigma=None if layout.aux is None else float(params[layout.aux]),
            z=params[layout.groups],
            log_tau=None if layout.log_tau is None else float(params[layout.log_tau]),
        )

    def thetas(self, eta_theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Scale values and log Jacobians per theta slot."""
        pairs = [
            map_theta(float(eta), self.bounds[slot.component])
            for eta, slot in zip(eta_theta, self.layout.theta_slots)
        ]
        if not pairs:
            return np.zeros(0), np.zeros(0)
        theta, log_jacobian = zip(*pairs)
        return np.array(theta), np.array(log_jacobian)

    def exposures(self, theta: np.ndarray, with_gradient: bool = False) -> List[ExposureValue]:
        per_term: List[Dict[ThetaComponent, float]] = [{} for _ in self.spec.stap_terms]
        for value, slot in zip(theta, self.layout.theta_slots):
            per_term[slot.term][slot.component] = float(value)
        return [
            exposure_value(term_index, thetas, with_gradient=with_gradient)
            for term_index, thetas in zip(self.index.terms, per_term)
        ]

    def coordinate_names(self) -> List[str]:
        names = ["(Intercept)", *self.fixed_names, *self.stap_labels]
        names += [f"eta[{slot.label}]" for slot in self.layout.theta_slots]
        if self.layout.has_aux:
            names.append("log_sigma")
        names += [f"z[(Intercept) {self.grouping_factor}:{level}]" for level in self.group_levels]
        if self.layout.n_groups:
            names.append(f"log_sd[{self.grouping_factor}:(Intercept)]")
        return names

    def log_density_gradient(self, params: np.ndarray) -> Tuple[float, np.ndarray]:
        return _evaluate(params, self, with_gradient=True)


def _response(
    subjects: pd.DataFrame, spec: FormulaSpec, family: Family
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    for column in spec.response:
        if column not in subjects.columns:
            raise MissingColumnError(column, "subject")
    values = [to_numeric_column(subjects[column], column, "subject").to_numpy() for column in spec.response]
    if spec.is_binomial_pair:
        if family != Family.BINOMIAL:
            raise ResponseError(f"cbind() responses need the binomial family, not {family.value}")
        successes, failures = values
        trials = successes + failures
        y = successes
    else:
        y = values[0]
        trials = np.ones_like(y) if family in (Family.BINOMIAL, Family.BERNOULLI) else None
    if family in (Family.BINOMIAL, Family.BERNOULLI, Family.POISSON):
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise ResponseError(f"The {family.value} response must be non-negative integer counts")
    if trials is not None:
        if np.any(trials != np.round(trials)) or np.any(y > trials):
            bad = int(np.argmax(y > trials)) if np.any(y > trials) else 0
            raise ResponseError(
                f"Binomial successes exceed the number of trials (observation {bad + 1})"
            )
        if spec.is_binomial_pair and np.any(values[1] < 0):
            raise ResponseError("Binomial failure counts must be non-negative")
    return y.astype(float), None if trials is None else trials.astype(float)


def _design(
    subjects: pd.DataFrame, spec: FormulaSpec, reference_levels: Dict[str, str]
) -> Tuple[np.ndarray, List[str]]:
    columns = []
    names = []
    for term in spec.fixed_terms:
        if term not in subjects.columns:
            raise MissingColumnError(term, "subject")
        raw = subjects[term]
        text = require_values(raw, term, "subject")
        numeric = pd.to_numeric(raw if pd.api.types.is_numeric_dtype(raw) else text, errors="coerce")
        is_number = numeric.notna().to_numpy()
        if term not in reference_levels:
            if is_number.all():
                columns.append(numeric.to_numpy(dtype=float))
                names.append(term)
                continue
            if is_number.any():
                # a column is categorical only when no cell parses as a number
                row = int(np.argmin(is_number))
                raise NonNumericValueError(term, row + HEADER_LINES, text.iloc[row], "subject")
        if isinstance(raw.dtype, pd.CategoricalDtype):
            levels = [str(level) for level in raw.cat.categories]
        else:
            levels = sorted(text.unique())
        reference = str(reference_levels.get(term, levels[0] if levels else ""))
        if levels and reference not in levels:
            raise ResponseError(f"Reference level {reference!r} does not occur in column {term!r}")
        for level in levels:
            if level == reference:
                continue
            columns.append((text == level).to_numpy(dtype=float))
            names.append(f"{term}{level}")
    design = np.column_stack(columns) if columns else np.zeros((len(subjects), 0))
    return design, names


def _autoscale_factor(family: Family, y: np.ndarray, column: Optional[np.ndarray]) -> float:
    if y.shape[0] < 2:
        return 1.0
    factor = 1.0
    if column is not None:
        column_sd = float(np.std(column, ddof=1))
        if column_sd > 0:
            factor /= column_sd
    if family == Family.GAUSSIAN:
        y_sd = float(np.std(y, ddof=1))
        if y_sd > 0:
            factor *= y_sd
    return factor


def build_context(
    subjects: pd.DataFrame,
    index: ExposureIndex,
    spec: FormulaSpec,
    family: Family = Family.GAUSSIAN,
    priors: Optional[PriorSpec] = None,
    bound_quantile: float = DEFAULT_BOUND_QUANTILE,
    reference_levels: Optional[Dict[str, str]] = None,
) -> ModelContext:
    priors = priors or PriorSpec()
    reference_levels = reference_levels or {}
    if len(subjects) != index.n_obs:
        raise ResponseError(
            f"Subject table has {len(subjects)} rows but the exposure index {index.n_obs}"
        )
    y, trials = _response(subjects, spec, family)
    design, fixed_names = _design(subjects, spec, reference_levels)

    slots = []
    labels = spec.term_labels()
    for term_number, (term, label) in enumerate(zip(spec.stap_terms, labels)):
        for component, kernel in term.kernels:
            slots.append(ThetaSlot(term_number, component, kernel, f"{label}_{component.value}_scale"))
    kinds: Dict[ThetaComponent, List[KernelKind]] = {}
    for slot in slots:
        kinds.setdefault(slot.component, []).append(slot.kernel)
    bounds = index_bounds(index, kinds, bound_quantile)
    for component, bound in bounds.items():
        log.info("Upper bound for %s scales: %.6g", component.value, bound.upper)

    group_index = None
    group_levels: List[str] = []
    factor = spec.group_terms[0].grouping_factor if spec.group_terms else None
    if factor is not None:
        if factor not in subjects.columns:
            raise MissingColumnError(factor, "subject")
        codes, uniques = pd.factorize(require_values(subjects[factor], factor, "subject"), sort=True)
        group_index = codes.astype(int)
        group_levels = [str(level) for level in uniques]

    intercept_prior = priors.intercept
    if intercept_prior.autoscale:
        intercept_prior = intercept_prior.scaled(_autoscale_factor(family, y, None))
    coefficient_priors = [
        priors.coefficients.scaled(_autoscale_factor(family, y, design[:, k]))
        if priors.coefficients.autoscale else priors.coefficients
        for k in range(design.shape[1])
    ]
    stap_prior = priors.stap
    if stap_prior.autoscale:
        stap_prior = stap_prior.scaled(_autoscale_factor(family, y, None))
    theta_priors = [
        priors.theta_prior(spec.stap_terms[slot.term].bef_name, slot.component) for slot in slots
    ]
    aux_prior = None
    if family.has_aux:
        aux_prior = priors.aux
        if aux_prior.autoscale:
            aux_prior = aux_prior.scaled(_autoscale_factor(family, y, None))

    log_normalizer = None
    if family == Family.BINOMIAL or family == Family.BERNOULLI:
        log_normalizer = (
            special.gammaln(trials + 1) - special.gammaln(y + 1) - special.gammaln(trials - y + 1)
        )
    elif family == Family.POISSON:
        log_normalizer = -special.gammaln(y + 1)

    layout = ParameterLayout(
        n_fixed=design.shape[1],
        n_stap=len(spec.stap_terms),
        theta_slots=slots,
        has_aux=family.has_aux,
        n_groups=len(group_levels),
    )
    log.debug("Parameter layout has %d coordinates", layout.dim)
    return ModelContext(
        family=family,
        spec=spec,
        y=y,
        trials=trials,
        design=design,
        fixed_names=fixed_names,
        index=index,
        priors=priors,
        bounds=bounds,
        layout=layout,
        intercept_prior=intercept_prior,
        coefficient_priors=coefficient_priors,
        stap_priors=[stap_prior] * len(spec.stap_terms),
        theta_priors=theta_priors,
        aux_prior=aux_prior,
        group_sd_prior=priors.group_sd if factor is not None else None,
        group_index=group_index,
        group_levels=group_levels,
        log_normalizer=log_normalizer,
    )


def _predictor(
    params: Parameters, ctx: ModelContext, exposures: List[ExposureValue]
) -> np.ndarray:
    eta = np.full(ctx.n_obs, params.alpha)
    if ctx.design.shape[1]:
        eta = eta + ctx.design @ params.delta
    for beta, exposure in zip(params.beta, exposures):
        eta = eta + beta * exposure.standardized
    if ctx.group_index is not None:
        eta = eta + (params.tau * params.z)[ctx.group_index]
    return eta


def linear_predictor(params: np.ndarray, ctx: ModelContext) -> np.ndarray:
    unpacked = ctx.unpack(np.asarray(params, dtype=float))
    theta, _ = ctx.thetas(unpacked.eta_theta)
    return _predictor(unpacked, ctx, ctx.exposures(theta))


def _pointwise(
    eta: np.ndarray, ctx: ModelContext, sigma: Optional[float]
) -> np.ndarray:
    y = ctx.y
    if ctx.family == Family.GAUSSIAN:
        u = (y - eta) / sigma
        return -HALF_LOG_2PI - math.log(sigma) - 0.5 * u * u
    elif ctx.family == Family.POISSON:
        return y * eta - np.exp(eta) + ctx.log_normalizer
    return y * eta - ctx.trials * np.logaddexp(0.0, eta) + ctx.log_normalizer


def _score(eta: np.ndarray, ctx: ModelContext, sigma: Optional[float]) -> np.ndarray:
    if ctx.family == Family.GAUSSIAN:
        return (ctx.y - eta) / (sigma * sigma)
    elif ctx.family == Family.POISSON:
        return ctx.y - np.exp(eta)
    return ctx.y - ctx.trials * special.expit(eta)


def log_likelihood_pointwise(params: np.ndarray, ctx: ModelContext) -> np.ndarray:
    unpacked = ctx.unpack(np.asarray(params, dtype=float))
    return _pointwise(linear_predictor(params, ctx), ctx, unpacked.sigma)


def _evaluate(
    params: np.ndarray, ctx: ModelContext, with_gradient: bool
) -> Tuple[float, Optional[np.ndarray]]:
    params = np.asarray(params, dtype=float)
    layout = ctx.layout
    p = ctx.unpack(params)
    theta, log_jacobian = ctx.thetas(p.eta_theta)
    exposures = ctx.exposures(theta, with_gradient=with_gradient)
    eta = _predictor(p, ctx, exposures)
    sigma = p.sigma
    lp = float(_pointwise(eta, ctx, sigma).sum())
    grad = np.zeros(layout.dim) if with_gradient else None
    score = _score(eta, ctx, sigma) if with_gradient else None

    value, derivative = prior_log_density(ctx.intercept_prior, p.alpha)
    lp += value
    if with_gradient:
        grad[0] = score.sum() + derivative

    for k, prior in enumerate(ctx.coefficient_priors):
        value, derivative = prior_log_density(prior, float(p.delta[k]))
        lp += value
        if with_gradient:
            grad[layout.fixed.start + k] = float(ctx.design[:, k] @ score) + derivative

    for j, prior in enumerate(ctx.stap_priors):
        value, derivative = prior_log_density(prior, float(p.beta[j]))
        lp += value
        if with_gradient:
            grad[layout.stap.start + j] = float(exposures[j].standardized @ score) + derivative

    for k, slot in enumerate(layout.theta_slots):
        value, derivative = prior_log_density(ctx.theta_priors[k], float(theta[k]))
        lp += value + float(log_jacobian[k])
        if with_gradient:
            s = float(special.expit(p.eta_theta[k]))
            dtheta_deta = ctx.bounds[slot.component].upper * s * (1 - s)
            d_exposure = exposures[slot.term].standardized_gradient[slot.component]
            likelihood_part = float(p.beta[slot.term]) * float(d_exposure @ score)
            grad[layout.theta.start + k] = (
                (likelihood_part + derivative) * dtheta_deta + (1 - 2 * s)
            )

    if layout.has_aux:
        value, derivative = prior_log_density(ctx.aux_prior, sigma, positive=True)
        lp += value + p.log_sigma
        if with_gradient:
            residual = (ctx.y - eta) / sigma
            grad[layout.aux] = float(np.sum(residual * residual)) - ctx.n_obs + derivative * sigma + 1

    if layout.n_groups:
        tau = p.tau
        lp += float(-0.5 * (p.z @ p.z)) - layout.n_groups * HALF_LOG_2PI
        value, derivative = prior_log_density(ctx.group_sd_prior, tau, positive=True)
        lp += value + p.log_tau
        if with_gradient:
            group_score = np.bincount(ctx.group_index, weights=score, minlength=layout.n_groups)
            grad[layout.groups] = tau * group_score - p.z
            grad[layout.log_tau] = tau * float(p.z @ group_score) + derivative * tau + 1

    return lp, grad


def log_posterior(params: np.ndarray, ctx: ModelContext) -> float:
    return _evaluate(params, ctx, with_gradient=False)[0]


def grad_log_posterior(params: np.ndarray, ctx: ModelContext) -> np.ndarray:
    return _evaluate(params, ctx, with_gradient=True)[1]


def log_likelihood_matrix(draws: np.ndarray, ctx: ModelContext) -> np.ndarray:
    """Pointwise log likelihood for every draw (draws x observations)."""
    draws = np.atleast_2d(draws)
    return np.vstack([log_likelihood_pointwise(row, ctx) for row in draws]) if len(draws) else \
        np.zeros((0, ctx.n_obs))


def natural_scale_names(ctx: ModelContext) -> List[str]:
    names = ["(Intercept)", *ctx.fixed_names, *ctx.stap_labels]
    names += [slot.label for slot in ctx.layout.theta_slots]
    if ctx.layout.has_aux:
        names.append("sigma")
    if ctx.layout.n_groups:
        names += [f"b[(Intercept) {ctx.grouping_factor}:{level}]" for level in ctx.group_levels]
        names.append(f"sd[{ctx.grouping_factor}:(Intercept)]")
    return names


def natural_scale_report(draws: np.ndarray, ctx: ModelContext) -> pd.DataFrame:
    """Per-draw parameters on the scale of the raw exposures.

    ``beta_j = beta~_j / s_j`` and the intercept absorbs ``sum_j beta~_j m_j / s_j``, where
    ``m_j`` and ``s_j`` are the standardization constants at that draw's scales.
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    rows = []
    for row in draws:
        p = ctx.unpack(row)
        theta, _ = ctx.thetas(p.eta_theta)
        exposures = ctx.exposures(theta)
        centers = np.array([exposure.center for exposure in exposures])
        scales = np.array([exposure.scale for exposure in exposures])
        beta = p.beta / scales
        alpha = p.alpha - float(np.sum(p.beta * centers / scales))
        values = [alpha, *p.delta, *beta, *theta]
        if ctx.layout.has_aux:
            values.append(p.sigma)
        if ctx.layout.n_groups:
            values += [*(p.tau * p.z), p.tau]
        rows.append(values)
    return pd.DataFrame(
        np.array(rows).reshape(len(rows), -1), columns=natural_scale_names(ctx)
    )
