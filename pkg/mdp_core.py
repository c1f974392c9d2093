"""
mdp_core - finite discounted MDP instances, the benchmark families and the exact oracles

An instance holds the transition tensor P[x][u][x'], the reward table r[x][u],
the discount and the reward-noise scale. Q-tables are plain float64 arrays of
shape (|X|, |U|); algorithm code may put a leading trial axis in front.
"""
import json, math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import numpy.typing as npt
from scipy import linalg

import log95

logger = log95.log95("MDP")

QTable = npt.NDArray[np.float64]

ROW_TOLERANCE = 1e-6 # rows further than this from 1 are rejected, closer ones are renormalised
STOCHASTIC_CHECK = 1e-12
VI_CAP_FACTOR = 10

class MdpError(ValueError): ...
class NumericError(ArithmeticError): ...

@dataclass(frozen=True, eq=False)
class MdpInstance:
    transitions: npt.NDArray[np.float64]
    rewards: npt.NDArray[np.float64]
    gamma: float
    sigma_r: float = 0.0

    @property
    def num_states(self) -> int: return self.rewards.shape[0]
    @property
    def num_actions(self) -> int: return self.rewards.shape[1]
    @property
    def dims(self) -> tuple[int, int]: return self.num_states, self.num_actions
    @property
    def D(self) -> int:
        """Number of state-action pairs, the next-state samples per synchronous draw"""
        return self.num_states * self.num_actions
    @property
    def r_max(self) -> float: return float(np.abs(self.rewards).max())

    @cached_property
    def cdf(self) -> npt.NDArray[np.float64]:
        """Cumulative successor distribution per (x, u), last column pinned to 1"""
        cdf = np.cumsum(self.transitions, axis=-1)
        cdf[..., -1] = 1.0
        cdf.flags.writeable = False
        return cdf

    def to_json(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "gamma": self.gamma,
            "sigma_r": self.sigma_r,
            "rewards": self.rewards.tolist(),
            "transitions": self.transitions.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "MdpInstance":
        try:
            n, m = int(data["num_states"]), int(data["num_actions"])
            rewards = np.asarray(data["rewards"], dtype=np.float64)
            transitions = np.asarray(data["transitions"], dtype=np.float64)
            gamma, sigma_r = float(data["gamma"]), float(data.get("sigma_r", 0.0))
        except (KeyError, TypeError, ValueError) as e: raise MdpError(f"malformed instance json: {e}") from e
        if rewards.size != n * m: raise MdpError(f"rewards has {rewards.size} entries, expected {n}*{m}")
        if transitions.size != n * m * n: raise MdpError(f"transitions has {transitions.size} entries, expected {n}*{m}*{n}")
        return make_mdp(transitions.reshape(n, m, n), rewards.reshape(n, m), gamma, sigma_r)

    def save(self, path: Path) -> None:
        temp_file = path.with_suffix(path.suffix + ".tmp")
        temp_file.write_text(json.dumps(self.to_json()))
        temp_file.replace(path)

    @classmethod
    def load(cls, path: Path) -> "MdpInstance":
        try: data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e: raise MdpError(f"cannot read instance {path}: {e}") from e
        return cls.from_json(data)

@dataclass(frozen=True)
class Policy:
    action_of: tuple[int, ...]
    def __getitem__(self, state: int) -> int: return self.action_of[state]
    def __len__(self) -> int: return len(self.action_of)

def make_mdp(transitions, rewards, gamma: float, sigma_r: float = 0.0) -> MdpInstance:
    P = np.array(transitions, dtype=np.float64, copy=True)
    r = np.array(rewards, dtype=np.float64, copy=True)

    if r.ndim != 2 or r.shape[0] < 1 or r.shape[1] < 1: raise MdpError(f"rewards must be a non-empty |X|x|U| table, got shape {r.shape}")
    n, m = r.shape
    if P.shape != (n, m, n): raise MdpError(f"transitions shape {P.shape} does not match rewards {r.shape}, expected {(n, m, n)}")
    if not (0.0 < gamma < 1.0): raise MdpError(f"gamma must lie in (0,1), got {gamma}")
    if not (sigma_r >= 0.0) or not math.isfinite(sigma_r): raise MdpError(f"sigma_r must be a finite nonnegative real, got {sigma_r}")
    if not np.isfinite(r).all():
        x, u = np.argwhere(~np.isfinite(r))[0]
        raise MdpError(f"reward not finite at (x={x},u={u})")
    if not np.isfinite(P).all() or (P < 0).any():
        x, u, y = np.argwhere(~np.isfinite(P) | (P < 0))[0]
        raise MdpError(f"negative probability at (x={x},u={u},x'={y})")

    sums = P.sum(axis=-1)
    if (bad := np.abs(sums - 1.0) > ROW_TOLERANCE).any():
        x, u = np.argwhere(bad)[0]
        raise MdpError(f"row not stochastic at (x={x},u={u}): sums to {sums[x, u]!r}")
    if (off := np.abs(sums - 1.0) > STOCHASTIC_CHECK).any():
        logger.verbose(f"renormalising {int(off.sum())} transition rows")
        P /= sums[..., None]
    if (np.abs(P.sum(axis=-1) - 1.0) > STOCHASTIC_CHECK).any(): raise NumericError("renormalised rows still not stochastic")

    P.flags.writeable = False
    r.flags.writeable = False
    return MdpInstance(P, r, float(gamma), float(sigma_r))

def garnet(num_states: int, num_actions: int, branching: int, seed: int, gamma: float = 0.9, sigma_r: float = 0.0) -> MdpInstance:
    """
    Random Garnet instance: every (x, u) gets `branching` distinct successors picked uniformly
    without replacement, weighted by the gaps between branching-1 sorted uniform cut points.
    Rewards are i.i.d. Uniform[0, 1].
    """
    if num_states < 1 or num_actions < 1: raise MdpError(f"garnet needs at least one state and action, got {num_states}x{num_actions}")
    if not (1 <= branching <= num_states): raise MdpError(f"branching {branching} must lie in [1, {num_states}]")
    rng = np.random.default_rng(seed)
    P = np.zeros((num_states, num_actions, num_states))
    for x in range(num_states):
        for u in range(num_actions):
            successors = rng.choice(num_states, size=branching, replace=False)
            cuts = np.sort(rng.uniform(size=branching - 1))
            P[x, u, successors] = np.diff(np.concatenate(([0.0], cuts, [1.0])))
    rewards = rng.uniform(size=(num_states, num_actions))
    logger.debug(f"garnet({num_states}, {num_actions}, {branching}, seed={seed})")
    return make_mdp(P, rewards, gamma, sigma_r)

def hard_two_state(gamma: float, beta: float) -> MdpInstance:
    """Two states, one action; state 0 stays with p = (4γ-1)/(3γ), state 1 is absorbing. r = ((1-γ)^β, 0), noiseless rewards."""
    if not (0.25 < gamma < 1.0): raise MdpError(f"hard_two_state needs gamma in (1/4, 1), got {gamma}")
    if not beta >= 0: raise MdpError(f"beta must be nonnegative, got {beta}")
    p = (4 * gamma - 1) / (3 * gamma)
    P = [[[p, 1 - p]], [[0.0, 1.0]]]
    r = [[(1 - gamma) ** beta], [0.0]]
    return make_mdp(P, r, gamma, 0.0)

def deterministic_mdp(successor, rewards, gamma: float) -> MdpInstance:
    """Point-mass transitions: successor[x][u] is the only next state of (x, u)"""
    succ = np.asarray(successor, dtype=np.int64)
    n = succ.shape[0]
    P = np.zeros(succ.shape + (n,))
    np.put_along_axis(P, succ[..., None], 1.0, axis=-1)
    return make_mdp(P, rewards, gamma, 0.0)

def _bellman(mdp: MdpInstance, q: QTable) -> QTable:
    return mdp.rewards + mdp.gamma * (mdp.transitions @ q.max(axis=-1))

def exact_optimal_q(mdp: MdpInstance, tol: float = 1e-10) -> QTable:
    """Value iteration from 0 with the exact Bellman operator, stopped once ||Q - T(Q)|| <= tol(1-γ)"""
    if not tol > 0: raise ValueError(f"tol must be positive, got {tol}")
    q = np.zeros(mdp.dims)
    if mdp.r_max == 0.0: return q
    target = tol * (1 - mdp.gamma)
    cap = VI_CAP_FACTOR * max(1.0, math.log(mdp.r_max / (tol * (1 - mdp.gamma) ** 2)) / math.log(1 / mdp.gamma))
    iterations = 0
    while True:
        image = _bellman(mdp, q)
        if np.abs(q - image).max() <= target:
            logger.debug(f"value iteration converged after {iterations} iterations")
            return q
        iterations += 1
        if iterations > cap: raise NumericError(f"value iteration did not reach tol={tol} within {int(cap)} iterations")
        q = image

def policy_eval_direct(mdp: MdpInstance) -> QTable:
    """Solves (I - γP)Θ = r by LU with partial pivoting; single-action instances only"""
    if mdp.num_actions != 1: raise MdpError("direct solve requires policy-evaluation instance")
    A = np.eye(mdp.num_states) - mdp.gamma * mdp.transitions[:, 0, :]
    r = mdp.rewards[:, 0]
    theta = linalg.lu_solve(linalg.lu_factor(A), r)
    residual = np.abs(A @ theta - r).max()
    if residual > 1e-10 * max(np.abs(r).max(), np.finfo(float).tiny): raise NumericError(f"direct solve residual {residual:.3e} too large")
    return theta[:, None]

def greedy_policy(q: QTable) -> Policy:
    """np.argmax returns the first maximum, so ties go to the lowest action index"""
    return Policy(tuple(int(a) for a in np.argmax(q, axis=-1)))
