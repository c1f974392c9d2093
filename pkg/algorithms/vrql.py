"""
Variance-reduced Q-learning baseline

Same epochs and recentering as vrcq, but the inner loop is plain Q-learning on
the recentered operator with rescaled-linear steps restarted every epoch; the
epoch's last iterate becomes the next anchor.
"""
from . import Algorithm, AlgoOutput, Checkpoints, EpochSchedule, RunPlan, Source, StepPolicy, finish, logger, open_model, start_point, step_size
from mdp_core import MdpInstance, QTable
from operators import monte_carlo_bellman, recentered_bellman

INNER_STEP = StepPolicy("rescaled_linear")

def vr_q_learning_run(mdp: MdpInstance, source: Source, theta0: QTable | None, schedule: EpochSchedule, oracle: QTable | None = None) -> AlgoOutput:
    model, owned = open_model(mdp, source)
    tracker = Checkpoints(model, oracle)
    theta = start_point(theta0, model)
    tracker.record(theta)
    for m, entry in enumerate(schedule.entries):
        anchor = theta
        image = monte_carlo_bellman(mdp, anchor, entry.recenter, model)
        for n in range(1, entry.epoch_len + 1):
            step = step_size(INNER_STEP, n, mdp.gamma)
            theta = (1.0 - step) * theta + step * recentered_bellman(model.draw(), theta, anchor, image, mdp)
        tracker.record(theta)
        logger.debug(f"vrql epoch {m}: N_T={entry.recenter} N_e={entry.epoch_len}")
    return finish(model, owned, theta, tracker)

class VarianceReducedQLearning(Algorithm):
    name = "vrql"
    epoch_based = True
    def run(self, mdp: MdpInstance, source: Source, plan: RunPlan, oracle: QTable | None = None) -> AlgoOutput:
        if plan.schedule is None: raise ValueError("vrql needs an epoch schedule")
        return vr_q_learning_run(mdp, source, plan.theta0, plan.schedule, oracle)

algorithm = VarianceReducedQLearning()
