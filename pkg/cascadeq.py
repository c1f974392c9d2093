import argparse, json, sys, signal, time, types
from pathlib import Path
from threading import Lock

import numpy as np

import log95
from algorithms import ScheduleError
from harness import ConfigError, ExperimentConfig, emit_results, emit_traces, full_scale, load_config, prepare, run_sweep, run_trials_batch
from mdp_core import MdpError, MdpInstance, NumericError, exact_optimal_q, garnet, greedy_policy, hard_two_state, policy_eval_direct
from operators import complexity_measures
from algorithms.bounds import min_sample_size

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INTERRUPTED = 0, 2, 3, 130

logger = log95.log95("CLI")

class Interrupts:
    """First Ctrl+C asks for a graceful stop, a second one within 5 seconds quits at once"""
    def __init__(self) -> None:
        self.exit_pending = False
        self.intr_time = 0.0
        self.exit_lock = Lock()
    def handle_sigint(self, signum: int, frame: types.FrameType | None) -> None:
        with self.exit_lock:
            logger.info("Received CTRL+C (SIGINT)")
            if (now := time.monotonic()) and ((now - self.intr_time) > 5):
                self.intr_time = now
                logger.info("Will stop after the running work units, results so far will be written.")
                self.exit_pending = True
            else:
                logger.warning("Force-Quit pending")
                raise SystemExit(EXIT_INTERRUPTED)
    def stop_requested(self) -> bool: return self.exit_pending

def _print_json(data) -> None: print(json.dumps(data, indent=1))

def cmd_solve(args: argparse.Namespace, interrupts: Interrupts) -> int:
    mdp = MdpInstance.load(args.instance)
    q = policy_eval_direct(mdp) if mdp.num_actions == 1 else exact_optimal_q(mdp, args.tol)
    _print_json({"q": q.tolist(), "policy": list(greedy_policy(q).action_of)})
    return EXIT_OK

def cmd_measures(args: argparse.Namespace, interrupts: Interrupts) -> int:
    mdp = MdpInstance.load(args.instance)
    measures = complexity_measures(mdp)
    _print_json({"v": measures.v, "rho": measures.rho, "span": measures.span_theta, "min_samples": min_sample_size(measures, mdp.gamma)})
    return EXIT_OK

def _config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {"seed": args.seed, "trials": args.trials, "workers": getattr(args, "workers", None), "output": args.output}
    if getattr(args, "format", None): overrides["format"] = args.format
    if getattr(args, "raw", False): overrides["raw"] = "true"
    config = load_config(args.config, {k: None if v is None else str(v) for k, v in overrides.items()})
    return full_scale(config) if getattr(args, "full_scale", False) else config

def cmd_run(args: argparse.Namespace, interrupts: Interrupts) -> int:
    config = _config(args)
    point = config.grid()[0]
    prepared = prepare(config, point)
    logger.info(f"running {point.label} on {prepared.mdp.num_states}x{prepared.mdp.num_actions}, gamma={prepared.mdp.gamma:g}, {config.trials} trials of {prepared.budget} draws")
    traces = []
    for start in range(0, config.trials, config.batch):
        if interrupts.stop_requested():
            logger.warning(f"interrupted after {len(traces)} trials")
            break
        traces += run_trials_batch(config, point, range(start, min(config.trials, start + config.batch)))
    errors = np.array([t.final_error for t in traces])
    _print_json({"algorithm": point.label, "gamma": prepared.mdp.gamma, "trials": len(traces), "samples_used": prepared.budget,
                 "mean_linf_error": float(errors.mean()) if len(errors) else None, "std_linf_error": float(errors.std(ddof=1)) if len(errors) > 1 else 0.0})
    if config.output: emit_traces(config, traces, config.output)
    return EXIT_INTERRUPTED if interrupts.stop_requested() else EXIT_OK

def cmd_sweep(args: argparse.Namespace, interrupts: Interrupts) -> int:
    config = _config(args)
    result = run_sweep(config, interrupts.stop_requested)
    for label, (slope, intercept) in result.slopes.items(): logger.info(f"{label}: log-log slope {slope:.3f} (intercept {intercept:.3f})")
    if config.output: emit_results(result, config.output, config.format, config.raw)
    else: _print_json({"slopes": {k: v[0] for k, v in result.slopes.items()}, "points": [[r.point.label, r.gamma, r.point.beta, r.mean_error, r.std_error] for r in result.points]})
    return EXIT_INTERRUPTED if result.partial else EXIT_OK

def cmd_garnet(args: argparse.Namespace, interrupts: Interrupts) -> int:
    mdp = garnet(args.states, args.actions, args.branch, args.instance_seed, args.gamma, args.sigma_r)
    mdp.save(Path(args.output))
    logger.info(f"wrote garnet({args.states}, {args.actions}, {args.branch}) to {args.output}")
    return EXIT_OK

def cmd_hard(args: argparse.Namespace, interrupts: Interrupts) -> int:
    hard_two_state(args.gamma, args.beta).save(Path(args.output))
    logger.info(f"wrote the two-state instance (gamma={args.gamma:g}, beta={args.beta:g}) to {args.output}")
    return EXIT_OK

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascade-q", description="Cascade Q-learning experiments under a synchronous generative model")
    parser.add_argument("--seed", type=int, help="root seed (overrides VRCQ_SEED and the config file)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more log output, twice for debug")
    parser.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="print the optimal Q-table of an instance")
    p.add_argument("instance", type=Path)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("measures", help="print the complexity measures of a single-action instance")
    p.add_argument("instance", type=Path)
    p.set_defaults(func=cmd_measures)

    for name, func, description in (("run", cmd_run, "run one algorithm at the first grid point and write checkpoint traces"), ("sweep", cmd_sweep, "run the whole grid and write aggregates")):
        p = sub.add_parser(name, help=description)
        p.add_argument("config", type=Path)
        p.add_argument("--trials", type=int)
        p.add_argument("-o", "--output")
        if name == "sweep":
            p.add_argument("--workers", type=int, help="0 uses every core")
            p.add_argument("--format", choices=("csv", "json"))
            p.add_argument("--raw", action="store_true", help="one csv row per trial")
            p.add_argument("--full-scale", action="store_true", help="gamma grid up to 0.997 and at least 500 trials")
        p.set_defaults(func=func)

    p = sub.add_parser("garnet", help="write a random Garnet instance as json")
    p.add_argument("--states", type=int, required=True)
    p.add_argument("--actions", type=int, required=True)
    p.add_argument("--branch", type=int, required=True)
    p.add_argument("--seed", dest="instance_seed", type=int, default=0, help="instance seed")
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--sigma-r", type=float, default=0.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_garnet)

    p = sub.add_parser("hard", help="write the two-state instance as json")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_hard)
    return parser

def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.quiet: log95.configure(level=log95.log95Levels.WARN)
    elif args.verbose: log95.configure(level=log95.log95Levels.DEBUG if args.verbose > 1 else log95.log95Levels.VERBOSE)
    interrupts = Interrupts()
    previous = signal.signal(signal.SIGINT, interrupts.handle_sigint)
    try: return args.func(args, interrupts)
    except NumericError as e:
        logger.critical_error(f"numeric failure: {e}")
        return EXIT_NUMERIC
    except (ConfigError, MdpError, ScheduleError, ValueError, OSError) as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except KeyboardInterrupt: return EXIT_INTERRUPTED
    finally: signal.signal(signal.SIGINT, previous)

if __name__ == "__main__": sys.exit(main())

# This file is a part of cascade-q

# This is free and unencumbered software released into the public domain.

# Anyone is free to copy, modify, publish, use, compile, sell, or
# distribute this software, either in source code form or as a compiled
# binary, for any purpose, commercial or non-commercial, and by any
# means.

# For more information, please refer to <https://unlicense.org>
