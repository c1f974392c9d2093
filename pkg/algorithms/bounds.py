"""
Closed-form guarantee and lower-bound curves, evaluated on a concrete instance

These are reporting helpers: the harness prints them next to measured errors.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import EpochSchedule
from mdp_core import MdpInstance, QTable, policy_eval_direct
from operators import ComplexityMeasures, complexity_measures, effective_variance, linf_norm, span_seminorm

def cq_error_bound(mdp: MdpInstance, theta0: QTable, theta_star: QTable, step: float, n_iters: int) -> float:
    """
    Expected l-inf error of cascade Q-learning after n_iters constant steps:
        2||Θ0-Θ*|| / ((1-γ)λN)
      + (2/3) γ/(1-γ) λ² log(2D) ||Θ*||_span
      + 2λ/(1-γ) sqrt(2 log 2D) (sqrt||σ(Θ*)|| + σ_r)
    """
    if not (0.0 < step <= 1.0) or n_iters < 1: raise ValueError(f"need step in (0,1] and n_iters >= 1, got ({step}, {n_iters})")
    g, log2d = mdp.gamma, math.log(2 * mdp.D)
    init = 2.0 * linf_norm(np.asarray(theta0) - theta_star) / ((1.0 - g) * step * n_iters)
    span = (2.0 / 3.0) * g / (1.0 - g) * step ** 2 * log2d * span_seminorm(theta_star)
    noise = 2.0 * step / (1.0 - g) * math.sqrt(2.0 * log2d) * (math.sqrt(effective_variance(mdp, theta_star).norm) + mdp.sigma_r)
    return float(init + span + noise)

def instance_upper_bound(mdp: MdpInstance, theta0: QTable, N: int, phi: float) -> float:
    """Expected error of budgeted VRCQ on a single-action instance, in terms of v, ρ and the span of Θ*"""
    if not (0.75 < phi < 1.0): raise ValueError(f"the bound needs phi in (3/4, 1), got {phi}")
    if N < 1: raise ValueError(f"N must be positive, got {N}")
    measures = complexity_measures(mdp)
    theta_star = policy_eval_direct(mdp)
    g, log2d = mdp.gamma, math.log(2 * mdp.D)
    contraction = 8.0 * math.sqrt(g * log2d) / (math.sqrt(N) * math.sqrt(1.0 - phi ** 2) * (1.0 - g))
    exponent = 1.0 + math.log(9.0 / (6.0 + phi)) / math.log(1.0 / phi)
    init = contraction ** exponent * linf_norm(np.asarray(theta0) - theta_star)
    span = 2.0 * measures.span_theta * log2d / ((4.0 / 3.0 - 1.0 / phi) * (1.0 - phi ** 2) * (1.0 - g) * N)
    local = 13.0 / math.sqrt(1.0 - phi ** 2) * (measures.rho + g * measures.v) * math.sqrt(log2d / N)
    return float(init + span + local)

def lower_bound_curve(measures: ComplexityMeasures, gamma: float, c: float = 1.0, samples: int | None = None) -> float:
    """c(γv + ρ); divided by sqrt(samples) when given, which puts it on the scale of an l-inf error"""
    value = c * (gamma * measures.v + measures.rho)
    return value / math.sqrt(samples) if samples else value

def min_sample_size(measures: ComplexityMeasures, gamma: float) -> float:
    """Sample size from which the local lower bound applies: max{γ², span²/v²} / (1-γ)²"""
    if measures.v > 0: ratio = (measures.span_theta / measures.v) ** 2
    else: ratio = math.inf if measures.span_theta > 0 else 0.0
    return max(gamma ** 2, ratio) / (1.0 - gamma) ** 2

@dataclass(frozen=True)
class MinimaxBudget:
    epoch_samples: int
    recenter_samples: int
    @property
    def total(self) -> int: return self.epoch_samples + self.recenter_samples

def minimax_sample_bound(init: EpochSchedule, late: EpochSchedule) -> MinimaxBudget:
    """Draws of a two-phase minimax run, split into inner-loop and recentering parts"""
    return MinimaxBudget(init.epoch_samples + late.epoch_samples, init.recenter_samples + late.recenter_samples)