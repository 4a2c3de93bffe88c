# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""Multinomial No-U-Turn sampler with dual averaging and a windowed diagonal metric."""
from __future__ import annotations

from typing import Callable, List, NamedTuple, Optional, Protocol, Tuple
import logging
import math

from attr import dataclass
import numpy as np

from mautrix.types import SerializableAttrs

from .errors import (
    AllDivergentWarmupError,
    ConfigError,
    InitializationError,
    StepSizeError,
)

GradientFn = Callable[[np.ndarray], Tuple[float, np.ndarray]]

MAX_DELTA_H = 1000.0
INIT_RADIUS = 2.0
INIT_ATTEMPTS = 100
MAX_STEP_SIZE = 1e7


class Target(Protocol):
    dim: int

    def log_density_gradient(self, params: np.ndarray) -> Tuple[float, np.ndarray]:
        ...


@dataclass(frozen=True)
class SamplerConfig(SerializableAttrs):
    iter: int = 2000
    warmup: int = 1000
    chains: int = 4
    cores: int = 1
    adapt_delta: float = 0.8
    max_treedepth: int = 10
    seed: int = 0

    def __attrs_post_init__(self) -> None:
        if self.iter < 1:
            raise ConfigError(f"iter must be positive, got {self.iter}")
        if not 0 <= self.warmup < self.iter:
            raise ConfigError(f"warmup must be in [0, iter), got {self.warmup} with iter {self.iter}")
        if self.chains < 1 or self.cores < 1:
            raise ConfigError("chains and cores must be positive")
        if not 0 < self.adapt_delta < 1:
            raise ConfigError(f"adapt_delta must be in (0, 1), got {self.adapt_delta}")
        if self.max_treedepth < 1:
            raise ConfigError(f"max_treedepth must be positive, got {self.max_treedepth}")
        if not 0 <= self.seed < 2**63:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed}")

    @property
    def draws(self) -> int:
        return self.iter - self.warmup


@dataclass(eq=False)
class ChainOutput:
    chain_id: int
    draws: np.ndarray
    divergent: np.ndarray
    treedepth: np.ndarray
    accept_stat: np.ndarray
    energy: np.ndarray
    n_leapfrog: np.ndarray
    lp: np.ndarray
    step_size: float
    inv_metric: np.ndarray
    max_treedepth: int
    warmup_divergences: int = 0

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def divergences(self) -> int:
        return int(self.divergent.sum())

    @property
    def max_treedepth_hits(self) -> int:
        return int((self.treedepth >= self.max_treedepth).sum())


class PhasePoint(NamedTuple):
    position: np.ndarray
    momentum: np.ndarray
    log_density: float
    gradient: np.ndarray


def safe_evaluate(gradient_fn: GradientFn, position: np.ndarray) -> Tuple[float, np.ndarray]:
    """Evaluate the target, mapping numerical failures to zero density."""
    try:
        with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
            log_density, gradient = gradient_fn(position)
    except (ArithmeticError, ValueError):
        return -math.inf, np.zeros_like(position)
    if not math.isfinite(log_density) or not np.all(np.isfinite(gradient)):
        return -math.inf, np.zeros_like(position)
    return float(log_density), np.asarray(gradient, dtype=float)


def leapfrog(
    position: np.ndarray,
    momentum: np.ndarray,
    step_size: float,
    gradient_fn: GradientFn,
    inv_metric: Optional[np.ndarray] = None,
    gradient: Optional[np.ndarray] = None,
) -> PhasePoint:
    """Half kick, drift, half kick under a diagonal metric."""
    if inv_metric is None:
        inv_metric = np.ones_like(position)
    if gradient is None:
        _, gradient = safe_evaluate(gradient_fn, position)
    half = momentum + 0.5 * step_size * gradient
    new_position = position + step_size * inv_metric * half
    log_density, new_gradient = safe_evaluate(gradient_fn, new_position)
    new_momentum = half + 0.5 * step_size * new_gradient
    return PhasePoint(new_position, new_momentum, log_density, new_gradient)


def hamiltonian(point: PhasePoint, inv_metric: np.ndarray) -> float:
    value = -point.log_density + 0.5 * float(point.momentum @ (inv_metric * point.momentum))
    return value if not math.isnan(value) else math.inf


def _no_u_turn(p_sharp_minus: np.ndarray, p_sharp_plus: np.ndarray, rho: np.ndarray) -> bool:
    return float(p_sharp_plus @ rho) > 0 and float(p_sharp_minus @ rho) > 0


class DualAveraging:
    gamma: float = 0.05
    kappa: float = 0.75
    t0: float = 10.0

    def __init__(self, delta: float) -> None:
        self.delta = delta
        self.restart(1.0)

    def restart(self, step_size: float) -> None:
        self.mu = math.log(10 * step_size)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def learn(self, adapt_stat: float) -> float:
        self.counter += 1
        adapt_stat = min(1.0, adapt_stat)
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1 - eta) * self.s_bar + eta * (self.delta - adapt_stat)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        x_eta = self.counter ** -self.kappa
        self.x_bar = (1 - x_eta) * self.x_bar + x_eta * x
        return math.exp(x)

    @property
    def final_step_size(self) -> float:
        return math.exp(self.x_bar)


class WindowedAdaptation:
    """Schedule of slow adaptation windows for the diagonal metric.

    A fast initial buffer, a series of doubling windows and a fast terminal buffer. Short warmups
    shrink the buffers to 15% and 10% of the warmup.
    """

    log: logging.Logger = logging.getLogger("stapcore.nuts.adapt")

    init_buffer: int = 75
    term_buffer: int = 50
    base_window: int = 25

    def __init__(self, warmup: int, dim: int) -> None:
        self.warmup = warmup
        self.counter = 0
        self.samples: List[np.ndarray] = []
        self.enabled = warmup >= 20
        init_buffer, term_buffer, base_window = self.init_buffer, self.term_buffer, self.base_window
        if init_buffer + base_window + term_buffer > warmup:
            init_buffer = int(0.15 * warmup)
            term_buffer = int(0.1 * warmup)
            base_window = warmup - (init_buffer + term_buffer)
        self.init_buffer, self.term_buffer, self.base_window = init_buffer, term_buffer, base_window
        self.window_size = base_window
        self.next_window = init_buffer + base_window - 1
        self.dim = dim

    def _in_window(self) -> bool:
        return (
            self.init_buffer <= self.counter < self.warmup - self.term_buffer
            and self.counter != self.warmup
        )

    def _window_end(self) -> bool:
        return self.counter == self.next_window and self.counter != self.warmup

    def _compute_next_window(self) -> None:
        last = self.warmup - self.term_buffer - 1
        if self.next_window == last:
            return
        self.window_size *= 2
        self.next_window = self.counter + self.window_size
        if self.next_window != last:
            boundary = self.next_window + 2 * self.window_size
            if boundary >= self.warmup - self.term_buffer:
                self.next_window = last

    def learn(self, position: np.ndarray) -> Optional[np.ndarray]:
        """Record a warmup position; return a new inverse metric at the end of a window."""
        if not self.enabled:
            self.counter += 1
            return None
        if self._in_window():
            self.samples.append(np.array(position))
        if self._window_end():
            self._compute_next_window()
            n = len(self.samples)
            variance = np.var(np.array(self.samples), axis=0, ddof=1) if n > 1 else np.ones(self.dim)
            variance = (n / (n + 5.0)) * variance + 1e-3 * (5.0 / (n + 5.0))
            self.log.debug("Metric window of %d draws ended at warmup iteration %d", n, self.counter)
            self.samples = []
            self.counter += 1
            return variance
        self.counter += 1
        return None


class _Subtree(NamedTuple):
    valid: bool
    divergent: bool
    last: PhasePoint
    proposal: PhasePoint
    log_sum_weight: float
    rho: np.ndarray
    p_beg: np.ndarray
    p_end: np.ndarray
    p_sharp_beg: np.ndarray
    p_sharp_end: np.ndarray
    n_leapfrog: int
    sum_metro_prob: float


class NutsSampler:
    log: logging.Logger = logging.getLogger("stapcore.nuts")

    target: Target
    config: SamplerConfig
    chain_id: int
    rng: np.random.Generator
    step_size: float
    inv_metric: np.ndarray

    def __init__(self, target: Target, config: SamplerConfig, chain_id: int) -> None:
        self.target = target
        self.config = config
        self.chain_id = chain_id
        self.rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([config.seed, chain_id])))
        self.step_size = 1.0
        self.inv_metric = np.ones(target.dim)

    def _evaluate(self, position: np.ndarray) -> Tuple[float, np.ndarray]:
        return safe_evaluate(self.target.log_density_gradient, position)

    def _sample_momentum(self) -> np.ndarray:
        return self.rng.standard_normal(self.target.dim) / np.sqrt(self.inv_metric)

    def _leapfrog(self, point: PhasePoint, step_size: float) -> PhasePoint:
        return leapfrog(
            point.position, point.momentum, step_size, self.target.log_density_gradient,
            self.inv_metric, point.gradient,
        )

    def initial_point(self) -> Tuple[np.ndarray, float, np.ndarray]:
        for _ in range(INIT_ATTEMPTS):
            position = self.rng.uniform(-INIT_RADIUS, INIT_RADIUS, self.target.dim)
            log_density, gradient = self._evaluate(position)
            if math.isfinite(log_density):
                return position, log_density, gradient
        raise InitializationError(
            f"Chain {self.chain_id}: no finite log density after {INIT_ATTEMPTS} initial values "
            f"drawn uniformly from (-{INIT_RADIUS}, {INIT_RADIUS})"
        )

    def init_step_size(self, position: np.ndarray, log_density: float, gradient: np.ndarray) -> None:
        """Double or halve the step size until one leapfrog step crosses 80% acceptance."""
        threshold = math.log(0.8)

        def delta_h() -> float:
            start = PhasePoint(position, self._sample_momentum(), log_density, gradient)
            h0 = hamiltonian(start, self.inv_metric)
            return h0 - hamiltonian(self._leapfrog(start, self.step_size), self.inv_metric)

        direction = 1 if delta_h() > threshold else -1
        while True:
            dh = delta_h()
            if direction == 1 and not dh > threshold:
                break
            elif direction == -1 and not dh < threshold:
                break
            self.step_size = self.step_size * 2 if direction == 1 else self.step_size / 2
            if self.step_size > MAX_STEP_SIZE:
                raise StepSizeError(
                    "Step size grew without bound during initialization; the posterior may be "
                    "improper"
                )
            if self.step_size == 0:
                raise StepSizeError("No acceptably small step size could be found")

    def _build_tree(
        self, point: PhasePoint, depth: int, direction: int, h0: float
    ) -> _Subtree:
        if depth == 0:
            new = self._leapfrog(point, direction * self.step_size)
            h = hamiltonian(new, self.inv_metric)
            divergent = h - h0 > MAX_DELTA_H
            log_weight = h0 - h
            p_sharp = self.inv_metric * new.momentum
            return _Subtree(
                valid=not divergent,
                divergent=divergent,
                last=new,
                proposal=new,
                log_sum_weight=log_weight,
                rho=new.momentum.copy(),
                p_beg=new.momentum,
                p_end=new.momentum,
                p_sharp_beg=p_sharp,
                p_sharp_end=p_sharp,
                n_leapfrog=1,
                sum_metro_prob=1.0 if log_weight > 0 else math.exp(log_weight),
            )

        init = self._build_tree(point, depth - 1, direction, h0)
        if not init.valid:
            return init
        final = self._build_tree(init.last, depth - 1, direction, h0)
        n_leapfrog = init.n_leapfrog + final.n_leapfrog
        sum_metro_prob = init.sum_metro_prob + final.sum_metro_prob
        if not final.valid:
            return final._replace(n_leapfrog=n_leapfrog, sum_metro_prob=sum_metro_prob)

        log_sum_weight = float(np.logaddexp(init.log_sum_weight, final.log_sum_weight))
        proposal = init.proposal
        if final.log_sum_weight > log_sum_weight:
            proposal = final.proposal
        elif self.rng.uniform() < math.exp(final.log_sum_weight - log_sum_weight):
            proposal = final.proposal

        rho = init.rho + final.rho
        persist = _no_u_turn(init.p_sharp_beg, final.p_sharp_end, rho)
        persist &= _no_u_turn(init.p_sharp_beg, final.p_sharp_beg, init.rho + final.p_beg)
        persist &= _no_u_turn(init.p_sharp_end, final.p_sharp_end, final.rho + init.p_end)
        return _Subtree(
            valid=persist,
            divergent=False,
            last=final.last,
            proposal=proposal,
            log_sum_weight=log_sum_weight,
            rho=rho,
            p_beg=init.p_beg,
            p_end=final.p_end,
            p_sharp_beg=init.p_sharp_beg,
            p_sharp_end=final.p_sharp_end,
            n_leapfrog=n_leapfrog,
            sum_metro_prob=sum_metro_prob,
        )

    def transition(
        self, position: np.ndarray, log_density: float, gradient: np.ndarray
    ) -> Tuple[PhasePoint, dict]:
        start = PhasePoint(position, self._sample_momentum(), log_density, gradient)
        h0 = hamiltonian(start, self.inv_metric)
        forward = backward = start
        p = start.momentum
        p_sharp = self.inv_metric * p
        p_fwd_fwd = p_fwd_bck = p_bck_fwd = p_bck_bck = p
        p_sharp_fwd_fwd = p_sharp_fwd_bck = p_sharp_bck_fwd = p_sharp_bck_bck = p_sharp
        rho = p.copy()
        log_sum_weight = 0.0
        sample = start
        depth = 0
        n_leapfrog = 0
        sum_metro_prob = 0.0
        divergent = False

        while depth < self.config.max_treedepth:
            if self.rng.uniform() > 0.5:
                rho_bck = rho
                p_bck_fwd, p_sharp_bck_fwd = p_fwd_bck, p_sharp_fwd_bck
                tree = self._build_tree(forward, depth, 1, h0)
                rho_fwd = tree.rho
                p_fwd_bck, p_sharp_fwd_bck = tree.p_beg, tree.p_sharp_beg
                p_fwd_fwd, p_sharp_fwd_fwd = tree.p_end, tree.p_sharp_end
                forward = tree.last
            else:
                rho_fwd = rho
                p_fwd_bck, p_sharp_fwd_bck = p_bck_fwd, p_sharp_bck_fwd
                tree = self._build_tree(backward, depth, -1, h0)
                rho_bck = tree.rho
                p_bck_fwd, p_sharp_bck_fwd = tree.p_beg, tree.p_sharp_beg
                p_bck_bck, p_sharp_bck_bck = tree.p_end, tree.p_sharp_end
                backward = tree.last
            n_leapfrog += tree.n_leapfrog
            sum_metro_prob += tree.sum_metro_prob
            if not tree.valid:
                divergent = tree.divergent
                break
            depth += 1
            if tree.log_sum_weight > log_sum_weight:
                sample = tree.proposal
            elif self.rng.uniform() < math.exp(tree.log_sum_weight - log_sum_weight):
                sample = tree.proposal
            log_sum_weight = float(np.logaddexp(log_sum_weight, tree.log_sum_weight))

            rho = rho_bck + rho_fwd
            persist = _no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho)
            persist &= _no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_bck + p_fwd_bck)
            persist &= _no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_fwd + p_bck_fwd)
            if not persist:
                break

        stats = {
            "divergent": divergent,
            "treedepth": depth,
            "accept_stat": sum_metro_prob / n_leapfrog if n_leapfrog else 0.0,
            "energy": hamiltonian(sample, self.inv_metric),
            "n_leapfrog": n_leapfrog,
        }
        return sample, stats

    def run(self, init: Optional[np.ndarray] = None) -> ChainOutput:
        config = self.config
        if init is None:
            position, log_density, gradient = self.initial_point()
        else:
            position = np.asarray(init, dtype=float)
            log_density, gradient = self._evaluate(position)
            if not math.isfinite(log_density):
                raise InitializationError(f"Chain {self.chain_id}: initial value has zero density")
        self.log.info("Chain %d: starting %d warmup and %d sampling iterations",
                      self.chain_id, config.warmup, config.draws)
        self.init_step_size(position, log_density, gradient)
        step_adaptation = DualAveraging(config.adapt_delta)
        step_adaptation.restart(self.step_size)
        metric_adaptation = WindowedAdaptation(config.warmup, self.target.dim)

        warmup_divergences = 0
        for _ in range(config.warmup):
            point, stats = self.transition(position, log_density, gradient)
            position, log_density, gradient = point.position, point.log_density, point.gradient
            warmup_divergences += int(stats["divergent"])
            self.step_size = step_adaptation.learn(stats["accept_stat"])
            variance = metric_adaptation.learn(position)
            if variance is not None:
                self.inv_metric = variance
                self.init_step_size(position, log_density, gradient)
                step_adaptation.restart(self.step_size)
        if config.warmup:
            if warmup_divergences == config.warmup:
                raise AllDivergentWarmupError(self.chain_id, config.warmup)
            self.step_size = step_adaptation.final_step_size
            self.log.info("Chain %d: warmup done, step size %.4g, %d warmup divergences",
                          self.chain_id, self.step_size, warmup_divergences)
        if not self.step_size > 0 or not math.isfinite(self.step_size):
            raise StepSizeError(f"Chain {self.chain_id}: adapted step size {self.step_size} is invalid")

        n = config.draws
        draws = np.empty((n, self.target.dim))
        telemetry = {
            "divergent": np.zeros(n, dtype=bool),
            "treedepth": np.zeros(n, dtype=int),
            "accept_stat": np.zeros(n),
            "energy": np.zeros(n),
            "n_leapfrog": np.zeros(n, dtype=int),
        }
        lp = np.zeros(n)
        for iteration in range(n):
            point, stats = self.transition(position, log_density, gradient)
            position, log_density, gradient = point.position, point.log_density, point.gradient
            draws[iteration] = position
            lp[iteration] = log_density
            for key, value in stats.items():
                telemetry[key][iteration] = value

        output = ChainOutput(
            chain_id=self.chain_id,
            draws=draws,
            lp=lp,
            step_size=self.step_size,
            inv_metric=self.inv_metric.copy(),
            max_treedepth=config.max_treedepth,
            warmup_divergences=warmup_divergences,
            **telemetry,
        )
        if output.divergences:
            self.log.warning("Chain %d: %d divergent transitions after warmup",
                             self.chain_id, output.divergences)
        if output.max_treedepth_hits:
            self.log.warning("Chain %d: %d transitions hit the maximum tree depth of %d",
                             self.chain_id, output.max_treedepth_hits, config.max_treedepth)
        self.log.info("Chain %d: finished", self.chain_id)
        return output


def sample_chain(
    target: Target, config: SamplerConfig, chain_id: int, init: Optional[np.ndarray] = None
) -> ChainOutput:
    return NutsSampler(target, config, chain_id).run(init)
