"""
sampling - the synchronous generative model

Every draw returns one successor and one noisy reward for each state-action
pair. Randomness comes from Philox streams keyed by (root_seed, trial_id), so a
trial replays identically no matter which worker runs it or which other trials
share its batch.
"""
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

import log95
from mdp_core import MdpInstance

logger = log95.log95("SAMPLER")

BLOCK_ELEMENTS = 1 << 18
MAX_BLOCK = 4096

@dataclass(frozen=True, eq=False)
class GenerativeSample:
    next_state: npt.NDArray[np.int64]
    reward_obs: npt.NDArray[np.float64]
    gather_index: npt.NDArray[np.int64] | None = None # batched draws only: next_state offset into the flattened trials x |X| value array

@dataclass
class SampleCounter:
    draws: int = 0
    def add(self, n: int = 1) -> None:
        if n < 0: raise ValueError("sample counter only moves forward")
        self.draws += n

@dataclass(eq=False)
class RngStream:
    root_seed: int
    trial_id: int
    generator: np.random.Generator = field(repr=False)
    counter: SampleCounter = field(default_factory=SampleCounter)

def spawn_stream(root_seed: int, trial_id: int) -> RngStream:
    """Counter-based child stream; the trial id is part of the seed sequence's spawn key"""
    if root_seed < 0 or trial_id < 0: raise ValueError(f"seed and trial id must be nonnegative, got ({root_seed}, {trial_id})")
    seq = np.random.SeedSequence(root_seed, spawn_key=(trial_id,))
    return RngStream(root_seed, trial_id, np.random.Generator(np.random.Philox(seq)))

def successors(mdp: MdpInstance, uniforms: npt.NDArray[np.float64]) -> npt.NDArray[np.int64]:
    """Inverse-CDF lookup; uniforms has shape (..., |X|, |U|)"""
    return (uniforms[..., None] >= mdp.cdf).sum(axis=-1)

def _generate(mdp: MdpInstance, generator: np.random.Generator, k: int) -> GenerativeSample:
    shape = (k,) + mdp.dims
    next_state = successors(mdp, generator.random(shape))
    reward_obs = np.broadcast_to(mdp.rewards, shape).copy()
    if mdp.sigma_r > 0: reward_obs += mdp.sigma_r * generator.standard_normal(shape)
    return GenerativeSample(next_state, reward_obs)

def draw_block(mdp: MdpInstance, stream: RngStream, k: int) -> GenerativeSample:
    """k consecutive synchronous draws stacked on a leading axis"""
    block = _generate(mdp, stream.generator, k)
    stream.counter.add(k)
    return block

def draw_sample(mdp: MdpInstance, stream: RngStream) -> GenerativeSample:
    block = draw_block(mdp, stream, 1)
    return GenerativeSample(block.next_state[0], block.reward_obs[0])

def block_size(mdp: MdpInstance) -> int:
    """Depends on the instance dimensions only, so the draw sequence of a stream is fixed"""
    return max(1, min(MAX_BLOCK, BLOCK_ELEMENTS // (mdp.D * mdp.num_states)))

class GenerativeModel:
    """
    Buffered simulator for one instance.
    Given a single stream it yields |X|x|U| samples; given a sequence of streams it yields
    trials x |X| x |U| samples, one row per stream, each row identical to what that stream
    would produce on its own.
    Stream counters are credited on settle(), the model's own `draws` is always current.
    """
    def __init__(self, mdp: MdpInstance, streams: RngStream | Sequence[RngStream]) -> None:
        self.mdp = mdp
        self.batched = not isinstance(streams, RngStream)
        self.streams: list[RngStream] = list(streams) if self.batched else [streams] # type: ignore
        if not self.streams: raise ValueError("GenerativeModel needs at least one stream")
        self.block = block_size(mdp)
        self.draws = 0
        self._settled = 0
        self._pos = self._len = 0
        self._next: npt.NDArray[np.int64] = np.empty(0, dtype=np.int64)
        self._rewards: npt.NDArray[np.float64] = np.empty(0)
        self._index: npt.NDArray[np.int64] | None = None
        self._offsets = (np.arange(len(self.streams)) * mdp.num_states)[:, None, None]

    @property
    def trials(self) -> int: return len(self.streams)
    @property
    def shape(self) -> tuple[int, ...]: return ((self.trials,) if self.batched else ()) + self.mdp.dims

    def _refill(self) -> None:
        blocks = [_generate(self.mdp, stream.generator, self.block) for stream in self.streams]
        if self.batched:
            self._next = np.stack([b.next_state for b in blocks], axis=1)
            self._rewards = np.stack([b.reward_obs for b in blocks], axis=1)
            self._index = self._next + self._offsets
        else:
            self._next, self._rewards = blocks[0].next_state, blocks[0].reward_obs
        self._pos, self._len = 0, self.block

    def draw(self) -> GenerativeSample:
        if self._pos == self._len: self._refill()
        i = self._pos
        self._pos += 1
        self.draws += 1
        return GenerativeSample(self._next[i], self._rewards[i], None if self._index is None else self._index[i])

    def settle(self) -> None:
        """Credit consumed draws to every stream's SampleCounter"""
        delta = self.draws - self._settled
        for stream in self.streams: stream.counter.add(delta)
        self._settled = self.draws

def as_model(mdp: MdpInstance, source: "RngStream | Sequence[RngStream] | GenerativeModel") -> GenerativeModel:
    if isinstance(source, GenerativeModel):
        if source.mdp is not mdp: logger.warning("generative model was built for a different instance object")
        return source
    return GenerativeModel(mdp, source)
