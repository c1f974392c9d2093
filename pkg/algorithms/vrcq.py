"""
Variance-reduced cascade Q-learning

Each epoch m estimates T(Θ_m) from N_T(m) fresh draws, then runs the cascade
recursion for N_e(m) iterations on the recentered operator
    T_n(Y) - T_n(Θ_m) + T~(Θ_m)
starting from Y_1 = Z_1 = Θ_m. The epoch's averaged output becomes Θ_{m+1}.
"""
from . import Algorithm, AlgoOutput, Checkpoints, EpochSchedule, RunPlan, Source, cascade_epoch, finish, logger, open_model, start_point
from mdp_core import MdpInstance, QTable
from operators import monte_carlo_bellman, recentered_bellman

def vrcq_run(mdp: MdpInstance, source: Source, theta0: QTable | None, schedule: EpochSchedule, oracle: QTable | None = None) -> AlgoOutput:
    model, owned = open_model(mdp, source)
    tracker = Checkpoints(model, oracle)
    theta = start_point(theta0, model)
    tracker.record(theta)
    for m, entry in enumerate(schedule.entries):
        image = monte_carlo_bellman(mdp, theta, entry.recenter, model)
        anchor = theta
        theta = cascade_epoch(model, anchor, entry.step, entry.epoch_len, lambda sample, y: recentered_bellman(sample, y, anchor, image, mdp))
        tracker.record(theta)
        logger.debug(f"vrcq epoch {m}: N_T={entry.recenter} N_e={entry.epoch_len} step={entry.step:.4g}")
    return finish(model, owned, theta, tracker)

class VarianceReducedCascadeQ(Algorithm):
    name = "vrcq"
    epoch_based = True
    def run(self, mdp: MdpInstance, source: Source, plan: RunPlan, oracle: QTable | None = None) -> AlgoOutput:
        if plan.schedule is None: raise ValueError("vrcq needs an epoch schedule")
        return vrcq_run(mdp, source, plan.theta0, plan.schedule, oracle)

algorithm = VarianceReducedCascadeQ()
