import abc
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import numpy.typing as npt

import log95
from mdp_core import MdpInstance, QTable
from operators import linf_norm
from sampling import GenerativeModel, GenerativeSample, RngStream, as_model

logger = log95.log95("ALGO")

CHECKPOINT_EVERY = 1000

Source = RngStream | Sequence[RngStream] | GenerativeModel
Operator = Callable[[GenerativeSample, QTable], QTable]

class ScheduleError(ValueError): ...

@dataclass(frozen=True)
class EpochEntry:
    step: float
    epoch_len: int
    recenter: int

@dataclass(frozen=True)
class EpochSchedule:
    """Per-epoch (step, epoch length, recentering draws) for m = 0..M-1, plus the target rate φ"""
    rate: float
    entries: tuple[EpochEntry, ...]
    label: str = "custom"

    def __post_init__(self) -> None:
        if not (0.0 < self.rate < 1.0): raise ScheduleError(f"rate phi must lie in (0,1), got {self.rate}")
        for m, e in enumerate(self.entries):
            if not (0.0 < e.step <= 1.0): raise ScheduleError(f"epoch {m}: step {e.step} outside (0,1]")
            if e.epoch_len < 1 or e.recenter < 1: raise ScheduleError(f"epoch {m}: epoch_len={e.epoch_len}, recenter={e.recenter} must be >= 1")

    @property
    def num_epochs(self) -> int: return len(self.entries)
    @property
    def epoch_samples(self) -> int: return sum(e.epoch_len for e in self.entries)
    @property
    def recenter_samples(self) -> int: return sum(e.recenter for e in self.entries)
    @property
    def total_samples(self) -> int: return self.epoch_samples + self.recenter_samples

    def describe(self) -> dict:
        return {"label": self.label, "rate": self.rate, "epochs": [[e.step, e.epoch_len, e.recenter] for e in self.entries]}

@dataclass(frozen=True)
class ScheduleScale:
    """Multipliers on the epoch length, recentering size and step constants (1.0 keeps the guarantee's constants)"""
    epoch_len: float = 1.0
    recenter: float = 1.0
    step: float = 1.0
    def __post_init__(self) -> None:
        for name in ("epoch_len", "recenter", "step"):
            if not getattr(self, name) > 0: raise ScheduleError(f"scale {name} must be positive, got {getattr(self, name)}")
    @property
    def unit(self) -> bool: return self.epoch_len == self.recenter == self.step == 1.0

@dataclass(frozen=True)
class StepPolicy:
    kind: Literal["constant", "rescaled_linear", "polynomial"]
    value: float = 0.0

    def __post_init__(self) -> None:
        match self.kind:
            case "constant":
                if not (0.0 < self.value <= 1.0): raise ValueError(f"constant step must lie in (0,1], got {self.value}")
            case "polynomial":
                if not self.value < 0: raise ValueError(f"polynomial exponent must be negative, got {self.value}")
            case "rescaled_linear": pass
            case _: raise ValueError(f"unknown step policy {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "StepPolicy":
        """'constant:0.5', 'rescaled_linear' or 'polynomial:-0.5'"""
        kind, _, arg = text.strip().partition(":")
        kind = kind.strip().lower()
        if kind == "rescaled_linear":
            if arg: raise ValueError("rescaled_linear takes no parameter")
            return cls(kind)
        if kind not in ("constant", "polynomial"): raise ValueError(f"unknown step policy {text!r}")
        try: value = float(arg)
        except ValueError: raise ValueError(f"step policy {text!r} needs a numeric parameter") from None
        return cls(kind, value) # type: ignore

    def __str__(self) -> str: return self.kind if self.kind == "rescaled_linear" else f"{self.kind}:{self.value:g}"

def step_size(policy: StepPolicy, n: int, gamma: float) -> float:
    if n < 1: raise ValueError(f"step index starts at 1, got {n}")
    match policy.kind:
        case "constant": return policy.value
        case "rescaled_linear": return 1.0 / (1.0 + (1.0 - gamma) * n)
        case "polynomial": return min(1.0, float(n) ** policy.value)
    raise ValueError(f"unknown step policy {policy.kind!r}")

Checkpoint = tuple[int, float | npt.NDArray[np.float64]]

@dataclass
class AlgoOutput:
    estimate: QTable
    samples_used: int
    checkpoints: list[Checkpoint] = field(default_factory=list)

@dataclass(frozen=True, eq=False)
class RunPlan:
    """Everything an algorithm needs besides the instance and the randomness; unused fields are ignored"""
    theta0: QTable | None = None
    schedule: EpochSchedule | None = None
    step: StepPolicy | None = None
    n_iters: int = 0
    checkpoint_every: int = CHECKPOINT_EVERY

class Algorithm(abc.ABC):
    name: str = ""
    epoch_based: bool = False
    @abc.abstractmethod
    def run(self, mdp: MdpInstance, source: Source, plan: RunPlan, oracle: QTable | None = None) -> AlgoOutput:
        """source may be a single stream, a batch of streams or an already built model"""
    def budget(self, plan: RunPlan) -> int:
        """Draws the plan will consume"""
        if self.epoch_based: return plan.schedule.total_samples if plan.schedule else 0
        return plan.n_iters

class Checkpoints:
    """Records (draws so far, l-inf error) pairs when an oracle is supplied"""
    def __init__(self, model: GenerativeModel, oracle: QTable | None) -> None:
        self.model = model
        self.oracle = oracle
        self.origin = model.draws
        self.points: list[Checkpoint] = []
    @property
    def samples(self) -> int: return self.model.draws - self.origin
    def record(self, estimate: QTable) -> None:
        if self.oracle is None: return
        if self.points and self.points[-1][0] == self.samples: return
        self.points.append((self.samples, linf_norm(estimate - self.oracle)))

class PolyakAverage:
    """Running mean of the iterates, updated as avg += (x - avg)/n"""
    def __init__(self, shape: tuple[int, ...]) -> None:
        self.value = np.zeros(shape)
        self.count = 0
    def update(self, iterate: QTable) -> None:
        self.count += 1
        self.value += (iterate - self.value) / self.count

def open_model(mdp: MdpInstance, source: Source) -> tuple[GenerativeModel, bool]:
    """Returns the model and whether this run owns it (and so must settle the stream counters)"""
    return as_model(mdp, source), not isinstance(source, GenerativeModel)

def start_point(theta0: QTable | None, model: GenerativeModel) -> QTable:
    if theta0 is None: return np.zeros(model.shape)
    theta0 = np.asarray(theta0, dtype=np.float64)
    if theta0.shape[-2:] != model.mdp.dims: raise ValueError(f"theta0 shape {theta0.shape} does not match instance {model.mdp.dims}")
    return np.broadcast_to(theta0, model.shape).copy()

def cascade_epoch(model: GenerativeModel, start: QTable, step: float, n_iters: int, operator: Operator, tracker: Checkpoints | None = None, every: int = 0) -> QTable:
    """
    Cascade recursion from Y_1 = Z_1 = start:
        Y_{n+1} = (1-λ)Y_n + λZ_n
        Z_{n+1} = (1-λ)Z_n + λ op_n(Y_{n+1})
    returning the average of Y_2..Y_{N+1}. One draw per iteration.
    """
    if n_iters < 1: raise ValueError(f"n_iters must be at least 1, got {n_iters}")
    y, z = start.copy(), start.copy()
    average = PolyakAverage(start.shape)
    for n in range(1, n_iters + 1):
        y += step * (z - y)
        z += step * (operator(model.draw(), y) - z)
        average.update(y)
        if tracker and every and n % every == 0: tracker.record(average.value)
    return average.value

def finish(model: GenerativeModel, owned: bool, estimate: QTable, tracker: Checkpoints) -> AlgoOutput:
    tracker.record(estimate)
    if owned: model.settle()
    return AlgoOutput(estimate, tracker.samples, tracker.points)

# This file is a part of cascade-q

# This is free and unencumbered software released into the public domain.

# Anyone is free to copy, modify, publish, use, compile, sell, or
# distribute this software, either in source code form or as a compiled
# binary, for any purpose, commercial or non-commercial, and by any
# means.

# For more information, please refer to <https://unlicense.org/>
