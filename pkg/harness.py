"""
harness - experiment orchestration

A config names an instance family, one or more algorithms and a grid of
discounts (and β for the two-state family). Every grid point runs `trials`
independent trials; trial i always draws from the stream (seed, i), so the
aggregates do not depend on the worker count, the batch size or the order in
which work units finish.
"""
import concurrent.futures, csv, importlib, itertools, json, math, os, signal
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

import log95
from algorithms import Algorithm, AlgoOutput, RunPlan, ScheduleError, ScheduleScale, StepPolicy
from algorithms.bounds import lower_bound_curve
from algorithms.schedules import build_schedule
from mdp_core import MdpInstance, QTable, exact_optimal_q, garnet, hard_two_state, make_mdp, policy_eval_direct
from operators import ComplexityMeasures, complexity_measures, linf_norm
from sampling import GenerativeModel, spawn_stream

logger = log95.log95("HARNESS")

ALGORITHMS_PACKAGE = "algorithms"
ALGORITHMS_DIR = Path(__file__).resolve().parent / ALGORITHMS_PACKAGE
SEED_ENV = "VRCQ_SEED"
AGGREGATE_HEADER = ["gamma", "beta", "algorithm", "trials", "total_samples", "mean_linf_error", "std_linf_error", "lower_bound"]
RAW_HEADER = ["gamma", "beta", "algorithm", "trial_id", "seed", "samples_used", "final_linf_error"]
FULL_SCALE_GAMMAS = (0.96, 0.97, 0.98, 0.99, 0.995, 0.997)
FULL_SCALE_TRIALS = 500

class ConfigError(ValueError): ...

class AlgorithmManager:
    """Imports every module of the algorithms package and collects its module-level `algorithm` object(s)"""
    def __init__(self) -> None:
        self.algorithms: dict[str, Algorithm] = {}
        self.logger = log95.log95("ALGOS")
    def load(self) -> "AlgorithmManager":
        for file in sorted(ALGORITHMS_DIR.glob("*.py")):
            if file.name == "__init__.py": continue
            module = importlib.import_module(f"{ALGORITHMS_PACKAGE}.{file.stem}")
            if (found := getattr(module, "algorithm", None)) is None: continue
            for algo in found if isinstance(found, list) else [found]:
                if not isinstance(algo, Algorithm):
                    self.logger.error(f"{file.stem}: {algo!r} does not inherit from Algorithm, skipping")
                    continue
                if algo.name in self.algorithms: raise ConfigError(f"algorithm name {algo.name!r} registered twice")
                self.algorithms[algo.name] = algo
        self.logger.debug(f"loaded algorithms: {', '.join(sorted(self.algorithms))}")
        return self
    def get(self, name: str) -> Algorithm:
        if name not in self.algorithms: raise ConfigError(f"unknown algorithm {name!r}, expected one of {sorted(self.algorithms)}")
        return self.algorithms[name]

@lru_cache(maxsize=1)
def algorithm_manager() -> AlgorithmManager: return AlgorithmManager().load()

def load_dict_from_custom_format(file_path: str | Path) -> dict[str, str]:
    """`key: value` lines; blank lines and lines starting with ; are skipped"""
    result: dict[str, str] = {}
    try:
        with open(file_path, "r") as file:
            for number, line in enumerate(file, 1):
                if line.strip() == "" or line.lstrip().startswith(";"): continue
                if ":" not in line: raise ConfigError(f"{file_path}:{number}: expected 'key: value', got {line.strip()!r}")
                key, value = line.split(":", 1)
                result[key.strip().lower()] = value.strip()
    except OSError as e: raise ConfigError(f"cannot read config {file_path}: {e.strerror or e}") from e
    return result

@dataclass(frozen=True)
class ExperimentConfig:
    instance: str = "garnet" # garnet | hard | file
    states: int = 20
    actions: int = 2
    branch: int = 2
    instance_seed: int = 0
    instance_file: str = ""
    sigma_r: float = 0.0
    gammas: tuple[float, ...] = ()
    betas: tuple[float, ...] = (0.0,)
    algorithms: tuple[str, ...] = ("vrcq",)
    schedule: str = "expected"
    phi: float = 0.9
    epochs: int = 3
    delta: float = 0.1
    epsilon: float = 0.1
    budget: float = 0.0 # N = budget / (1-γ)²
    iterations: int = 0
    steps: tuple[str, ...] = ()
    scale_epoch_len: float = 1.0
    scale_recenter: float = 1.0
    scale_step: float = 1.0
    trials: int = 100
    seed: int = 0
    workers: int = 1
    batch: int = 50
    checkpoint_every: int = 1000
    output: str = ""
    format: str = "csv"
    raw: bool = False

    def __post_init__(self) -> None:
        if self.instance not in ("garnet", "hard", "file"): raise ConfigError(f"instance: unknown family {self.instance!r}")
        if self.instance == "file" and not self.instance_file: raise ConfigError("instance_file: required for instance: file")
        if self.instance == "hard" and not self.gammas: raise ConfigError("gamma: the hard instance needs a discount grid")
        if any(not (0.0 < g < 1.0) for g in self.gammas): raise ConfigError(f"gamma: grid must lie in (0,1), got {self.gammas}")
        if any(b < 0 for b in self.betas) or not self.betas: raise ConfigError(f"beta: values must be nonnegative, got {self.betas}")
        if not self.algorithms: raise ConfigError("algorithm: at least one algorithm is required")
        if self.trials < 1: raise ConfigError(f"trials: must be at least 1, got {self.trials}")
        if self.seed < 0: raise ConfigError(f"seed: must be nonnegative, got {self.seed}")
        if self.budget < 0: raise ConfigError(f"budget: must be positive, got {self.budget}")
        if self.iterations < 0: raise ConfigError(f"iterations: must be nonnegative, got {self.iterations}")
        if self.workers < 0 or self.batch < 1: raise ConfigError(f"workers/batch: got workers={self.workers}, batch={self.batch}")
        if self.format not in ("csv", "json"): raise ConfigError(f"format: expected csv or json, got {self.format!r}")
        if self.checkpoint_every < 0: raise ConfigError(f"checkpoint_every: must be nonnegative, got {self.checkpoint_every}")
        for text in self.steps:
            try: StepPolicy.parse(text)
            except ValueError as e: raise ConfigError(f"step: {e}") from e
        try: self.scale
        except ScheduleError as e: raise ConfigError(f"scale: {e}") from e

    @property
    def scale(self) -> ScheduleScale: return ScheduleScale(self.scale_epoch_len, self.scale_recenter, self.scale_step)
    @property
    def step_policies(self) -> tuple[StepPolicy | None, ...]:
        return tuple(StepPolicy.parse(s) for s in self.steps) or (None,)

    def grid(self) -> list["GridPoint"]:
        points = []
        manager = algorithm_manager()
        for gamma, beta, name in itertools.product(self.gammas or (None,), self.betas, self.algorithms):
            steps = (None,) if manager.get(name).epoch_based else self.step_policies
            points += [GridPoint(gamma, beta, name, step) for step in steps]
        return points

    def to_json(self) -> dict:
        return {f.name: list(v) if isinstance(v := getattr(self, f.name), tuple) else v for f in fields(self)}

_ALIASES = {"gamma": "gammas", "beta": "betas", "algorithm": "algorithms", "step": "steps"}

def _convert(name: str, text: str, kind: object):
    try:
        if kind == tuple[float, ...]: return tuple(float(v) for v in text.split(",") if v.strip())
        if kind == tuple[str, ...]: return tuple(v.strip() for v in text.split(",") if v.strip())
        if kind is bool: return text.strip().lower() in ("1", "true", "yes", "on")
        if kind is int or kind is float: return kind(text.strip()) # type: ignore[operator]
        return text.strip()
    except ValueError: raise ConfigError(f"{name}: cannot parse {text!r}") from None

def parse_config(raw: dict[str, str], overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Defaults < config file < environment < command line; every value arrives as text"""
    merged = dict(raw)
    if (env_seed := os.environ.get(SEED_ENV)) is not None: merged["seed"] = env_seed
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    values = {}
    for key, text in merged.items():
        name = _ALIASES.get(key, key)
        if name not in kinds: raise ConfigError(f"{key}: unknown config key")
        values[name] = _convert(key, str(text), kinds[name])
    return ExperimentConfig(**values)

def load_config(path: str | Path | None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    return parse_config(load_dict_from_custom_format(path) if path else {}, overrides)

def full_scale(config: ExperimentConfig) -> ExperimentConfig:
    return replace(config, gammas=FULL_SCALE_GAMMAS, trials=max(config.trials, FULL_SCALE_TRIALS))

@dataclass(frozen=True)
class GridPoint:
    gamma: float | None
    beta: float
    algorithm: str
    step: StepPolicy | None = None
    @property
    def label(self) -> str: return self.algorithm if self.step is None else f"{self.algorithm}[{self.step}]"

@dataclass(frozen=True, eq=False)
class PreparedPoint:
    point: GridPoint
    mdp: MdpInstance
    oracle: QTable
    algorithm: Algorithm
    plan: RunPlan
    measures: ComplexityMeasures | None
    @property
    def budget(self) -> int: return self.algorithm.budget(self.plan)

def build_instance(config: ExperimentConfig, gamma: float | None, beta: float) -> MdpInstance:
    match config.instance:
        case "garnet": return garnet(config.states, config.actions, config.branch, config.instance_seed, 0.9 if gamma is None else gamma, config.sigma_r)
        case "hard":
            mdp = hard_two_state(gamma, beta) # type: ignore[arg-type]
            return make_mdp(mdp.transitions, mdp.rewards, mdp.gamma, config.sigma_r) if config.sigma_r else mdp
        case _:
            mdp = MdpInstance.load(Path(config.instance_file))
            return mdp if gamma is None else make_mdp(mdp.transitions, mdp.rewards, gamma, mdp.sigma_r)

def oracle_for(mdp: MdpInstance) -> QTable:
    return policy_eval_direct(mdp) if mdp.num_actions == 1 else exact_optimal_q(mdp)

def _schedule(config: ExperimentConfig, mdp: MdpInstance):
    return build_schedule(
        config.schedule, phi=config.phi, gamma=mdp.gamma, D=mdp.D, M=config.epochs, delta=config.delta,
        epsilon=config.epsilon, r_max=mdp.r_max or 1.0, budget=_budget_rule(config, mdp.gamma), scale=config.scale,
    )

def _budget_rule(config: ExperimentConfig, gamma: float) -> int:
    return math.floor(config.budget / (1.0 - gamma) ** 2) if config.budget else 0

@lru_cache(maxsize=16)
def prepare(config: ExperimentConfig, point: GridPoint) -> PreparedPoint:
    algorithm = algorithm_manager().get(point.algorithm)
    mdp = build_instance(config, point.gamma, point.beta)
    oracle = oracle_for(mdp)
    if algorithm.epoch_based: plan = RunPlan(schedule=_schedule(config, mdp))
    else:
        # explicit iterations, else the budget rule, else the draws the configured schedule would use
        n_iters = config.iterations or _budget_rule(config, mdp.gamma) or _schedule(config, mdp).total_samples
        plan = RunPlan(step=point.step, n_iters=n_iters, checkpoint_every=config.checkpoint_every)
    measures = complexity_measures(mdp) if mdp.num_actions == 1 else None
    logger.verbose(f"{point.label} at gamma={mdp.gamma:g}: {algorithm.budget(plan)} draws per trial")
    return PreparedPoint(point, mdp, oracle, algorithm, plan, measures)

@dataclass
class TrialTrace:
    trial_id: int
    seed: int
    samples_used: int
    final_error: float
    checkpoints: list[tuple[int, float]] = field(default_factory=list)
    def to_json(self) -> dict: return {"trial_id": self.trial_id, "seed": self.seed, "samples_used": self.samples_used, "final_error": self.final_error, "checkpoints": [list(c) for c in self.checkpoints]}

def _traces(output: AlgoOutput, oracle: QTable, seed: int, trial_ids: Sequence[int]) -> list[TrialTrace]:
    errors = np.atleast_1d(linf_norm(output.estimate - oracle))
    per_trial = lambda value, i: float(np.atleast_1d(value)[i])
    return [
        TrialTrace(trial_id, seed, output.samples_used, float(errors[i]), [(s, per_trial(e, i)) for s, e in output.checkpoints])
        for i, trial_id in enumerate(trial_ids)
    ]

def run_trial(config: ExperimentConfig, trial_id: int, point: GridPoint | None = None) -> TrialTrace:
    prepared = prepare(config, point or config.grid()[0])
    stream = spawn_stream(config.seed, trial_id)
    output = prepared.algorithm.run(prepared.mdp, stream, prepared.plan, prepared.oracle)
    if stream.counter.draws != output.samples_used: raise RuntimeError(f"trial {trial_id}: counter {stream.counter.draws} != reported {output.samples_used}")
    return _traces(output, prepared.oracle, config.seed, [trial_id])[0]

def run_trials_batch(config: ExperimentConfig, point: GridPoint, trial_ids: Sequence[int]) -> list[TrialTrace]:
    """Same traces as calling run_trial for each id, computed with one batched model"""
    prepared = prepare(config, point)
    streams = [spawn_stream(config.seed, i) for i in trial_ids]
    model = GenerativeModel(prepared.mdp, streams)
    output = prepared.algorithm.run(prepared.mdp, model, prepared.plan, prepared.oracle)
    model.settle()
    return _traces(output, prepared.oracle, config.seed, trial_ids)

class RunningStats:
    """Welford mean and sample variance"""
    def __init__(self) -> None:
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0
    def push(self, value: float) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (value - self.mean)
    @property
    def std(self) -> float: return math.sqrt(self._m2 / (self.count - 1)) if self.count > 1 else 0.0

@dataclass
class PointResult:
    point: GridPoint
    gamma: float
    trials: int
    total_samples: int
    mean_error: float
    std_error: float
    lower_bound: float | None = None
    traces: list[TrialTrace] = field(default_factory=list)

@dataclass
class SweepResult:
    points: list[PointResult] = field(default_factory=list)
    slopes: dict[str, tuple[float, float]] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    partial: bool = False

def fit_loglog_slope(points: Iterable[tuple[float, float]]) -> tuple[float, float]:
    """Least squares on (log x, log y); returns (slope, intercept)"""
    data = np.asarray(list(points), dtype=np.float64).reshape(-1, 2)
    if (data <= 0).any(): raise ValueError("log-log fit needs positive coordinates")
    if len(np.unique(data[:, 0])) < 2: raise ValueError("log-log fit needs at least two distinct x values")
    slope, intercept = np.polyfit(np.log(data[:, 0]), np.log(data[:, 1]), 1)
    return float(slope), float(intercept)

def _aggregate(prepared: PreparedPoint, traces: list[TrialTrace]) -> PointResult:
    stats = RunningStats()
    for trace in sorted(traces, key=lambda t: t.trial_id): stats.push(trace.final_error)
    samples = traces[0].samples_used if traces else prepared.budget
    return PointResult(prepared.point, prepared.mdp.gamma, stats.count, samples, stats.mean, stats.std, traces=sorted(traces, key=lambda t: t.trial_id))

def _attach_lower_bounds(results: list[PointResult], measures: dict[int, ComplexityMeasures]) -> None:
    """c(γv+ρ)/sqrt(N) per group of points sharing (algorithm, β), with c matched to the group's first point"""
    groups: dict[tuple[str, float], list[int]] = {}
    for i, r in enumerate(results):
        if i in measures and r.trials: groups.setdefault((r.point.label, r.point.beta), []).append(i)
    for members in groups.values():
        first = results[members[0]]
        unit = lower_bound_curve(measures[members[0]], first.gamma, 1.0, first.total_samples)
        c = first.mean_error / unit if unit > 0 else 0.0
        for i in members: results[i].lower_bound = lower_bound_curve(measures[i], results[i].gamma, c, results[i].total_samples)

def _fit_slopes(results: list[PointResult]) -> dict[str, tuple[float, float]]:
    groups: dict[str, list[tuple[float, float]]] = {}
    for r in results:
        if r.trials and r.mean_error > 0: groups.setdefault(f"{r.point.label}@beta={r.point.beta:g}", []).append((1.0 / (1.0 - r.gamma), r.mean_error))
    slopes = {}
    for label, pts in groups.items():
        if len({x for x, _ in pts}) >= 2: slopes[label] = fit_loglog_slope(pts)
    return slopes

def _worker_init(level: log95.log95Levels) -> None:
    signal.signal(signal.SIGINT, signal.SIG_IGN)
    log95.configure(level=level)

def _run_unit(config: ExperimentConfig, index: int, point: GridPoint, trial_ids: tuple[int, ...]) -> tuple[int, list[TrialTrace]]:
    return index, run_trials_batch(config, point, trial_ids)

def run_sweep(config: ExperimentConfig, should_stop: Callable[[], bool] = lambda: False) -> SweepResult:
    """Runs trials x grid; work units are (grid point, batch of trial ids)"""
    grid = config.grid()
    prepared = [prepare(config, p) for p in grid]
    ids = range(config.trials)
    units = [(index, point, tuple(ids[s:s + config.batch])) for index, point in enumerate(grid) for s in range(0, config.trials, config.batch)]
    collected: dict[int, list[TrialTrace]] = {i: [] for i in range(len(grid))}
    workers = config.workers or os.cpu_count() or 1
    partial = False
    logger.info(f"sweep: {len(grid)} grid points x {config.trials} trials in {len(units)} work units, {workers} worker(s)")

    if workers == 1:
        for index, point, batch in units:
            if should_stop():
                partial = True
                break
            collected[index] += run_trials_batch(config, point, batch)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers, initializer=_worker_init, initargs=(log95.threshold(),)) as executor:
            futures = [executor.submit(_run_unit, config, *unit) for unit in units]
            pending = set(futures)
            while pending:
                done, pending = concurrent.futures.wait(pending, timeout=0.5, return_when=concurrent.futures.FIRST_COMPLETED)
                for future in done:
                    index, traces = future.result()
                    collected[index] += traces
                if pending and should_stop():
                    partial = True
                    for future in pending: future.cancel()
                    break

    results = []
    measures: dict[int, ComplexityMeasures] = {}
    for index, prep in enumerate(prepared):
        result = _aggregate(prep, collected[index])
        if result.trials and prep.measures is not None: measures[len(results)] = prep.measures
        if result.trials:
            results.append(result)
            logger.info(f"{result.point.label} gamma={result.gamma:g} beta={result.point.beta:g}: mean {result.mean_error:.4e} std {result.std_error:.2e} over {result.trials} trials")
    if partial: logger.warning(f"sweep interrupted, keeping {sum(r.trials for r in results)} finished trials")
    _attach_lower_bounds(results, measures)
    metadata = {"config": config.to_json(), "schedules": {p.point.label + f"@gamma={p.mdp.gamma:g}": p.plan.schedule.describe() for p in prepared if p.plan.schedule}}
    return SweepResult(results, _fit_slopes(results), metadata, partial)

def _format(value: float | None) -> str: return "" if value is None else repr(float(value))

def _write_atomic(path: Path, write: Callable[[object], None]) -> None:
    temp_file = path.with_suffix(path.suffix + ".tmp")
    try:
        with open(temp_file, "w", newline="") as handle: write(handle)
        temp_file.replace(path)
    except OSError as e:
        temp_file.unlink(missing_ok=True)
        raise OSError(e.errno, f"cannot write results: {e.strerror or e}", str(path)) from e

def emit_results(result: SweepResult, path: str | Path, format: str = "csv", raw: bool = False) -> None:
    path = Path(path)
    if format == "json":
        payload = {
            "partial": result.partial,
            "metadata": result.metadata,
            "slopes": {k: {"slope": s, "intercept": c} for k, (s, c) in result.slopes.items()},
            "points": [
                {"gamma": r.gamma, "beta": r.point.beta, "algorithm": r.point.label, "trials": r.trials, "total_samples": r.total_samples,
                 "mean_linf_error": r.mean_error, "std_linf_error": r.std_error, "lower_bound": r.lower_bound, "traces": [t.to_json() for t in r.traces]}
                for r in result.points
            ],
        }
        _write_atomic(path, lambda handle: json.dump(payload, handle, indent=1)) # type: ignore[arg-type]
    elif format == "csv":
        def write(handle) -> None:
            writer = csv.writer(handle)
            if raw:
                writer.writerow(RAW_HEADER)
                for r in result.points:
                    for t in r.traces: writer.writerow([repr(r.gamma), repr(r.point.beta), r.point.label, t.trial_id, t.seed, t.samples_used, repr(t.final_error)])
            else:
                writer.writerow(AGGREGATE_HEADER)
                for r in result.points:
                    writer.writerow([repr(r.gamma), repr(r.point.beta), r.point.label, r.trials, r.total_samples, repr(r.mean_error), repr(r.std_error), _format(r.lower_bound)])
        _write_atomic(path, write)
    else: raise ConfigError(f"format: expected csv or json, got {format!r}")
    logger.info(f"wrote {len(result.points)} grid points to {path}")

def load_results(path: str | Path) -> list[dict]:
    """Aggregate rows back from an emitted CSV or JSON file, numbers parsed"""
    path = Path(path)
    if path.suffix == ".json":
        return [{k: v for k, v in p.items() if k != "traces"} for p in json.loads(path.read_text())["points"]]
    rows = []
    with open(path, newline="") as handle:
        for row in csv.DictReader(handle):
            rows.append({
                k: (v if k == "algorithm" else None if v == "" else int(v) if k in ("trials", "total_samples", "trial_id", "seed", "samples_used") else float(v))
                for k, v in row.items()
            })
    return rows

def emit_traces(config: ExperimentConfig, traces: list[TrialTrace], path: str | Path) -> None:
    """Per-trial checkpoint paths plus their mean and std at every checkpoint"""
    summary = []
    if traces and all(len(t.checkpoints) == len(traces[0].checkpoints) for t in traces):
        for k, (samples, _) in enumerate(traces[0].checkpoints):
            stats = RunningStats()
            for t in traces: stats.push(t.checkpoints[k][1])
            summary.append({"samples": samples, "mean": stats.mean, "std": stats.std})
    payload = {"config": config.to_json(), "summary": summary, "traces": [t.to_json() for t in traces]}
    _write_atomic(Path(path), lambda handle: json.dump(payload, handle, indent=1)) # type: ignore[arg-type]
    logger.info(f"wrote {len(traces)} traces to {path}")
