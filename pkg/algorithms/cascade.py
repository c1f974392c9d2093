from . import Algorithm, AlgoOutput, Checkpoints, RunPlan, Source, StepPolicy, CHECKPOINT_EVERY, cascade_epoch, finish, logger, open_model, start_point
from mdp_core import MdpInstance, QTable
from operators import empirical_bellman

def cq_run(mdp: MdpInstance, source: Source, theta0: QTable | None, step: float, n_iters: int, oracle: QTable | None = None, checkpoint_every: int = CHECKPOINT_EVERY) -> AlgoOutput:
    """Cascade Q-learning with a constant step, returning the average of the filtered iterates"""
    if not (0.0 < step <= 1.0): raise ValueError(f"cascade step must lie in (0,1], got {step}")
    model, owned = open_model(mdp, source)
    tracker = Checkpoints(model, oracle)
    start = start_point(theta0, model)
    estimate = cascade_epoch(model, start, step, n_iters, lambda sample, y: empirical_bellman(sample, y, mdp), tracker, checkpoint_every)
    logger.debug(f"cq: {n_iters} iterations at step {step:g}")
    return finish(model, owned, estimate, tracker)

class CascadeQ(Algorithm):
    name = "cq"
    def run(self, mdp: MdpInstance, source: Source, plan: RunPlan, oracle: QTable | None = None) -> AlgoOutput:
        if plan.n_iters < 1: raise ValueError(f"cq needs n_iters >= 1, got {plan.n_iters}")
        step = plan.step or StepPolicy("constant", plan.n_iters ** -0.5)
        if step.kind != "constant": raise ValueError(f"cq runs with a constant step, got {step}")
        return cq_run(mdp, source, plan.theta0, step.value, plan.n_iters, oracle, plan.checkpoint_every)

algorithm = CascadeQ()
