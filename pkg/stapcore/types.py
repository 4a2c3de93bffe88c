# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
from typing import Dict, List, Optional, Tuple

from attr import dataclass

from mautrix.types import SerializableAttrs, SerializableEnum, field


class StapKind(SerializableEnum):
    SPATIAL = "spatial"
    TEMPORAL = "temporal"
    SPATIAL_TEMPORAL = "spatial-temporal"

    @property
    def keyword(self) -> str:
        return {
            StapKind.SPATIAL: "sap",
            StapKind.TEMPORAL: "tap",
            StapKind.SPATIAL_TEMPORAL: "stap",
        }[self]

    @property
    def has_spatial(self) -> bool:
        return self != StapKind.TEMPORAL

    @property
    def has_temporal(self) -> bool:
        return self != StapKind.SPATIAL

    @classmethod
    def from_keyword(cls, keyword: str) -> "StapKind":
        return {"sap": cls.SPATIAL, "tap": cls.TEMPORAL, "stap": cls.SPATIAL_TEMPORAL}[keyword]


class KernelKind(SerializableEnum):
    SPATIAL_ERFC = "spatial-erfc"
    SPATIAL_EXP = "spatial-exp"
    TEMPORAL_ERF = "temporal-erf"
    TEMPORAL_CEXP = "temporal-cexp"

    @property
    def is_spatial(self) -> bool:
        return self in (KernelKind.SPATIAL_ERFC, KernelKind.SPATIAL_EXP)

    @property
    def keyword(self) -> str:
        """The formula keyword that selects this kernel."""
        return {
            KernelKind.SPATIAL_ERFC: "erf",
            KernelKind.SPATIAL_EXP: "exp",
            KernelKind.TEMPORAL_ERF: "erf",
            KernelKind.TEMPORAL_CEXP: "cexp",
        }[self]


class Family(SerializableEnum):
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"
    BINOMIAL = "binomial"
    POISSON = "poisson"

    @property
    def link(self) -> str:
        if self == Family.GAUSSIAN:
            return "identity"
        elif self == Family.POISSON:
            return "log"
        return "logit"

    @property
    def human_str(self) -> str:
        return f"{self.value} [{self.link}]"

    @property
    def has_aux(self) -> bool:
        return self == Family.GAUSSIAN

    @classmethod
    def parse(cls, value: str) -> "Family":
        """Accept both ``gaussian`` and the tagged ``gaussian-identity`` spelling."""
        name = value.strip().lower().split("-", 1)[0].split("(", 1)[0]
        return cls(name)


class ThetaComponent(SerializableEnum):
    SPATIAL = "spatial"
    TEMPORAL = "temporal"


@dataclass(frozen=True)
class StapTerm(SerializableAttrs):
    bef_name: str
    kind: StapKind
    spatial_kernel: Optional[KernelKind] = None
    temporal_kernel: Optional[KernelKind] = None

    @property
    def kernels(self) -> List[Tuple[ThetaComponent, KernelKind]]:
        kernels = []
        if self.spatial_kernel is not None:
            kernels.append((ThetaComponent.SPATIAL, self.spatial_kernel))
        if self.temporal_kernel is not None:
            kernels.append((ThetaComponent.TEMPORAL, self.temporal_kernel))
        return kernels

    def render(self) -> str:
        args = [self.bef_name] + [kernel.keyword for _, kernel in self.kernels]
        return f"{self.kind.keyword}({', '.join(args)})"


@dataclass(frozen=True)
class GroupTerm(SerializableAttrs):
    grouping_factor: str
    terms: List[str] = field(factory=lambda: ["(Intercept)"])

    def render(self) -> str:
        return f"(1 | {self.grouping_factor})"


@dataclass(frozen=True)
class FormulaSpec(SerializableAttrs):
    response: List[str]
    fixed_terms: List[str]
    stap_terms: List[StapTerm]
    group_terms: List[GroupTerm] = field(factory=lambda: [])
    intercept: bool = True

    @property
    def is_binomial_pair(self) -> bool:
        return len(self.response) == 2

    @property
    def has_temporal(self) -> bool:
        return any(term.kind.has_temporal for term in self.stap_terms)

    @property
    def has_spatial(self) -> bool:
        return any(term.kind.has_spatial for term in self.stap_terms)

    def count(self, kind: StapKind) -> int:
        return sum(1 for term in self.stap_terms if term.kind == kind)

    def term_labels(self) -> List[str]:
        """Coefficient labels per STAP term, disambiguated when a BEF appears in several terms."""
        names = [term.bef_name for term in self.stap_terms]
        return [
            name if names.count(name) == 1 else f"{name}_{term.kind.keyword}"
            for name, term in zip(names, self.stap_terms)
        ]

    def render(self) -> str:
        if self.is_binomial_pair:
            lhs = f"cbind({self.response[0]}, {self.response[1]})"
        else:
            lhs = self.response[0]
        rhs = [*self.fixed_terms]
        rhs += [term.render() for term in self.stap_terms]
        rhs += [term.render() for term in self.group_terms]
        return f"{lhs} ~ {' + '.join(rhs)}"


@dataclass
class ParameterDiagnostics(SerializableAttrs):
    rhat: Optional[float] = None
    ess: Optional[float] = None
    mcse: Optional[float] = None
    ess_exceeds_draws: bool = False

    @property
    def degenerate(self) -> bool:
        return self.rhat is None or self.ess is None


@dataclass
class WaicResult(SerializableAttrs):
    waic: float
    lppd: float
    p_waic: float

    @property
    def elpd_waic(self) -> float:
        return self.lppd - self.p_waic


@dataclass
class ParameterSummary(SerializableAttrs):
    name: str
    mean: float
    sd: float
    median: float
    mad_sd: float
    quantiles: Dict[str, float]
    diagnostics: ParameterDiagnostics = field(factory=lambda: ParameterDiagnostics())


@dataclass
class ModelHeader(SerializableAttrs):
    function: str
    family: str
    formula: str
    observations: int
    intercept: bool
    fixed_predictors: int
    spatial_predictors: int
    temporal_predictors: int
    spatial_temporal_predictors: int
    posterior_sample_size: int = 0
    group_levels: Dict[str, int] = field(factory=lambda: {})


@dataclass
class ErrorTerm(SerializableAttrs):
    group: str
    name: str
    std_dev: float


@dataclass
class FitSummary(SerializableAttrs):
    header: ModelHeader
    estimates: List[ParameterSummary]
    auxiliary: List[ParameterSummary] = field(factory=lambda: [])
    error_terms: List[ErrorTerm] = field(factory=lambda: [])
    mean_ppd: Optional[ParameterSummary] = None
    log_posterior: Optional[ParameterSummary] = None
    waic: Optional[WaicResult] = None
    engine_version: str = ""
    seed: Optional[int] = None


@dataclass(frozen=True)
class TerminationRow(SerializableAttrs):
    label: str
    lower: float
    median: float
    upper: float
    prob: float = 0.95

    @property
    def column_names(self) -> List[str]:
        lower = 100 * (1 - self.prob) / 2
        upper = 100 * (1 + self.prob) / 2
        return [f"{lower:g}%", "50%", f"{upper:g}%"]


@dataclass
class EnergyDiagnostics(SerializableAttrs):
    chain: int
    e_bfmi: Optional[float]
    marginal_counts: List[int]
    marginal_edges: List[float]
    transition_counts: List[int]
    transition_edges: List[float]
    divergences: int = 0
    max_treedepth_hits: int = 0
