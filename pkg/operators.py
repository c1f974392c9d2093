"""
operators - exact and sampled Bellman operators, norms and instance complexity

Q-tables may carry a leading trial axis; norms then reduce per trial.
"""
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy import linalg

import log95
from mdp_core import MdpError, MdpInstance, QTable, policy_eval_direct
from sampling import GenerativeModel, GenerativeSample, RngStream, as_model

logger = log95.log95("OPS")

@dataclass(frozen=True, eq=False)
class EffectiveVariance:
    values: npt.NDArray[np.float64]
    @property
    def norm(self) -> float: return float(self.values.max())

@dataclass(frozen=True)
class ComplexityMeasures:
    v: float
    rho: float
    span_theta: float

def next_values(values: npt.NDArray[np.float64], sample: GenerativeSample) -> npt.NDArray[np.float64]:
    """values[x'] looked up at every sampled successor; values is (|X|,) or (trials, |X|)"""
    if sample.gather_index is not None: return values.reshape(-1)[sample.gather_index]
    return values[sample.next_state]

def bellman(mdp: MdpInstance, q: QTable) -> QTable:
    # tensordot keeps any leading trial axis of q in front
    return mdp.rewards + mdp.gamma * np.tensordot(q.max(axis=-1), mdp.transitions, axes=([-1], [-1]))

def empirical_bellman(sample: GenerativeSample, q: QTable, mdp: MdpInstance) -> QTable:
    return sample.reward_obs + mdp.gamma * next_values(q.max(axis=-1), sample)

def recentered_bellman(sample: GenerativeSample, q: QTable, anchor: QTable, anchor_image: QTable, mdp: MdpInstance) -> QTable:
    """
    T_n(q) - T_n(anchor) + anchor_image with both empirical applications on the same sample.
    The observed rewards cancel, so only the successor terms are evaluated; q == anchor gives anchor_image exactly.
    """
    return anchor_image + mdp.gamma * (next_values(q.max(axis=-1), sample) - next_values(anchor.max(axis=-1), sample))

def monte_carlo_bellman(mdp: MdpInstance, anchor: QTable, n_recenter: int, source: RngStream | GenerativeModel) -> QTable:
    """Average of n_recenter empirical Bellman images of anchor, each on a fresh draw"""
    if n_recenter < 1: raise ValueError(f"n_recenter must be at least 1, got {n_recenter}")
    model = as_model(mdp, source)
    anchor_values = anchor.max(axis=-1)
    mean = np.zeros(model.shape)
    for k in range(1, n_recenter + 1):
        sample = model.draw()
        mean += (sample.reward_obs + mdp.gamma * next_values(anchor_values, sample) - mean) / k
    if not isinstance(source, GenerativeModel): model.settle()
    return mean

def _per_trial(reduced: npt.NDArray[np.float64]) -> float | npt.NDArray[np.float64]:
    return float(reduced) if reduced.ndim == 0 else reduced

def linf_norm(q: QTable) -> float | npt.NDArray[np.float64]:
    return _per_trial(np.abs(q).max(axis=(-2, -1)))

def span_seminorm(q: QTable) -> float | npt.NDArray[np.float64]:
    return _per_trial(q.max(axis=(-2, -1)) - q.min(axis=(-2, -1)))

def effective_variance(mdp: MdpInstance, q: QTable) -> EffectiveVariance:
    """γ² Var[max_u' q(x', u')] under P(.|x, u), in centered form so degenerate rows give exact zeros"""
    values = q.max(axis=-1)
    mean = mdp.transitions @ values
    spread = (values[None, None, :] - mean[..., None]) ** 2
    return EffectiveVariance(mdp.gamma ** 2 * (mdp.transitions * spread).sum(axis=-1))

def _resolvent(mdp: MdpInstance) -> npt.NDArray[np.float64]:
    """(I - γP)^-1 column by column from one LU factorisation"""
    n = mdp.num_states
    lu = linalg.lu_factor(np.eye(n) - mdp.gamma * mdp.transitions[:, 0, :])
    return linalg.lu_solve(lu, np.eye(n))

def complexity_measures(mdp: MdpInstance) -> ComplexityMeasures:
    if mdp.num_actions != 1: raise MdpError(f"complexity measures are defined for single-action instances, got |U|={mdp.num_actions}")
    theta = policy_eval_direct(mdp)[:, 0]
    P = mdp.transitions[:, 0, :]
    successor_var = (P * (theta[None, :] - (P @ theta)[:, None]) ** 2).sum(axis=-1)
    squared = _resolvent(mdp) ** 2
    v = float(np.sqrt((squared @ successor_var).max()))
    rho = float(mdp.sigma_r * np.sqrt(squared.sum(axis=-1).max()))
    span = float(theta.max() - theta.min())
    logger.debug(f"complexity v={v:.6g} rho={rho:.6g} span={span:.6g}")
    return ComplexityMeasures(v, rho, span)
