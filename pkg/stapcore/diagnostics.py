# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""Convergence and model comparison statistics over chains of draws."""
from __future__ import annotations

from typing import Optional, Sequence, Union
import logging
import math

from scipy import fft, special
import numpy as np

from .errors import DiagnosticsError
from .model import ModelContext, linear_predictor
from .nuts import ChainOutput
from .types import EnergyDiagnostics, Family, ParameterDiagnostics, WaicResult

log = logging.getLogger("stapcore.diagnostics")

Chains = Union[np.ndarray, Sequence[Sequence[float]]]


def as_chains(chains: Chains) -> np.ndarray:
    """Validate per-chain draws and return a (chains x draws) array."""
    try:
        array = np.asarray(chains, dtype=float)
    except ValueError:
        raise DiagnosticsError("Chains must all have the same number of draws") from None
    if array.ndim == 1:
        array = array[np.newaxis, :]
    if array.ndim != 2 or array.shape[0] == 0 or array.shape[1] == 0:
        raise DiagnosticsError(f"Expected a (chains x draws) array, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise DiagnosticsError("Draws contain non-finite values")
    return array


def split_chains(chains: Chains) -> np.ndarray:
    """Split every chain in half, dropping the middle draw of odd-length chains."""
    array = as_chains(chains)
    half = array.shape[1] // 2
    return np.vstack([array[:, :half], array[:, array.shape[1] - half:]])


def split_rhat(chains: Chains) -> Optional[float]:
    """Potential scale reduction on split chains.

    Returns ``None`` for constant draws and ``inf`` when every chain half is constant but the
    halves disagree.
    """
    split = split_chains(chains)
    n = split.shape[1]
    if n < 2:
        return None
    within = float(np.mean(np.var(split, axis=1, ddof=1)))
    between = n * float(np.var(split.mean(axis=1), ddof=1))
    if within == 0:
        return None if between == 0 else math.inf
    var_hat = (n - 1) / n * within + between / n
    return math.sqrt(var_hat / within)


def autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of a 1-d series via FFT."""
    n = x.shape[0]
    centered = x - x.mean()
    size = fft.next_fast_len(2 * n)
    transformed = np.fft.rfft(centered, n=size)
    return np.fft.irfft(transformed * np.conjugate(transformed), n=size)[:n] / n


def ess(chains: Chains) -> Optional[float]:
    """Effective sample size from split chains with Geyer's initial monotone sequence."""
    split = split_chains(chains)
    m, n = split.shape
    if n < 4:
        return None
    acov = np.vstack([autocovariance(chain) for chain in split])
    chain_mean = split.mean(axis=1)
    mean_var = float(np.mean(acov[:, 0])) * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += float(np.var(chain_mean, ddof=1))
    if not var_plus > 0:
        return None

    rho = np.zeros(n)
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - float(np.mean(acov[:, 1]))) / var_plus
    rho[0] = rho_even
    rho[1] = rho_odd
    t = 1
    while t < n - 3 and rho_even + rho_odd > 0:
        rho_even = 1.0 - (mean_var - float(np.mean(acov[:, t + 1]))) / var_plus
        rho_odd = 1.0 - (mean_var - float(np.mean(acov[:, t + 2]))) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0:
        rho[max_t + 1] = rho_even
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2
            rho[t + 2] = rho[t + 1]
        t += 2

    total = m * n
    tau = -1.0 + 2.0 * float(np.sum(rho[: max_t + 1])) + float(np.sum(rho[max_t + 1: max_t + 2]))
    tau = max(tau, 1 / math.log10(total))
    return total / tau


def mcse(chains: Chains) -> Optional[float]:
    effective = ess(chains)
    if effective is None:
        return None
    return float(np.std(as_chains(chains), ddof=1)) / math.sqrt(effective)


def parameter_diagnostics(chains: Chains) -> ParameterDiagnostics:
    array = as_chains(chains)
    effective = ess(array)
    return ParameterDiagnostics(
        rhat=split_rhat(array),
        ess=effective,
        mcse=None if effective is None else float(np.std(array, ddof=1)) / math.sqrt(effective),
        ess_exceeds_draws=effective is not None and effective > array.size,
    )


def waic(pointwise_loglik: np.ndarray) -> WaicResult:
    """WAIC on the deviance scale from a (draws x observations) log likelihood matrix."""
    ll = np.asarray(pointwise_loglik, dtype=float)
    if ll.ndim != 2 or ll.shape[0] < 2:
        raise DiagnosticsError(
            f"WAIC needs a (draws x observations) matrix with at least 2 draws, got {ll.shape}"
        )
    if not np.all(np.isfinite(ll)):
        raise DiagnosticsError("Pointwise log likelihood contains non-finite values")
    n_draws = ll.shape[0]
    lppd = float(np.sum(special.logsumexp(ll, axis=0) - math.log(n_draws)))
    variances = np.var(ll, axis=0, ddof=1)
    p_waic = float(np.sum(variances))
    if np.any(variances > 0.4):
        log.warning(
            "%d observations have a pointwise log likelihood variance above 0.4; WAIC may be "
            "unreliable", int(np.sum(variances > 0.4)),
        )
    return WaicResult(waic=-2 * (lppd - p_waic), lppd=lppd, p_waic=p_waic)


def posterior_predict(
    draws: np.ndarray, ctx: ModelContext, rng: np.random.Generator
) -> np.ndarray:
    """Simulate one outcome vector per draw (draws x observations)."""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    replicates = np.empty((draws.shape[0], ctx.n_obs))
    for row, params in enumerate(draws):
        eta = linear_predictor(params, ctx)
        if ctx.family == Family.GAUSSIAN:
            sigma = math.exp(params[ctx.layout.aux])
            replicates[row] = rng.normal(eta, sigma)
        elif ctx.family == Family.POISSON:
            replicates[row] = rng.poisson(np.exp(eta))
        else:
            trials = ctx.trials.astype(np.int64)
            replicates[row] = rng.binomial(trials, special.expit(eta))
    return replicates


def mean_ppd(replicates: np.ndarray) -> np.ndarray:
    replicates = np.atleast_2d(replicates)
    return replicates.mean(axis=1)


def energy_diagnostics(chain: ChainOutput, bins: int = 20) -> EnergyDiagnostics:
    """E-BFMI and histograms of the centered marginal energy and of energy transitions."""
    energy = np.asarray(chain.energy, dtype=float)
    e_bfmi = None
    marginal_counts, marginal_edges = [], []
    transition_counts, transition_edges = [], []
    if energy.shape[0] >= 2 and np.all(np.isfinite(energy)):
        transitions = np.diff(energy)
        centered = energy - energy.mean()
        denominator = float(centered @ centered)
        if denominator > 0:
            e_bfmi = float(transitions @ transitions) / denominator
        counts, edges = np.histogram(centered, bins=bins)
        marginal_counts, marginal_edges = counts.tolist(), edges.tolist()
        counts, edges = np.histogram(transitions, bins=bins)
        transition_counts, transition_edges = counts.tolist(), edges.tolist()
    if e_bfmi is not None and e_bfmi < 0.3:
        log.warning("Chain %d: E-BFMI %.3f is below 0.3", chain.chain_id, e_bfmi)
    return EnergyDiagnostics(
        chain=chain.chain_id,
        e_bfmi=e_bfmi,
        marginal_counts=marginal_counts,
        marginal_edges=marginal_edges,
        transition_counts=transition_counts,
        transition_edges=transition_edges,
        divergences=chain.divergences,
        max_treedepth_hits=chain.max_treedepth_hits,
    )
