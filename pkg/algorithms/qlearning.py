from . import Algorithm, AlgoOutput, Checkpoints, PolyakAverage, RunPlan, Source, StepPolicy, CHECKPOINT_EVERY, finish, logger, open_model, start_point, step_size
from mdp_core import MdpInstance, QTable
from operators import empirical_bellman

def q_learning_run(mdp: MdpInstance, source: Source, theta0: QTable | None, step_policy: StepPolicy, n_iters: int, pr_average: bool = False, oracle: QTable | None = None, checkpoint_every: int = CHECKPOINT_EVERY) -> AlgoOutput:
    """
    Synchronous Q-learning, Θ_{n+1} = (1-λ_n)Θ_n + λ_n T_n(Θ_n).
    With pr_average the running mean of Θ_2..Θ_{N+1} is returned instead of the last iterate.
    """
    if n_iters < 1: raise ValueError(f"n_iters must be at least 1, got {n_iters}")
    model, owned = open_model(mdp, source)
    tracker = Checkpoints(model, oracle)
    theta = start_point(theta0, model)
    average = PolyakAverage(theta.shape) if pr_average else None
    for n in range(1, n_iters + 1):
        step = step_size(step_policy, n, mdp.gamma)
        theta = (1.0 - step) * theta + step * empirical_bellman(model.draw(), theta, mdp)
        if average: average.update(theta)
        if checkpoint_every and n % checkpoint_every == 0: tracker.record(average.value if average else theta)
    logger.debug(f"q-learning: {n_iters} iterations, step {step_policy}, averaged={pr_average}")
    return finish(model, owned, average.value if average else theta, tracker)

class QLearning(Algorithm):
    def __init__(self, name: str, pr_average: bool) -> None:
        self.name = name
        self.pr_average = pr_average
    def run(self, mdp: MdpInstance, source: Source, plan: RunPlan, oracle: QTable | None = None) -> AlgoOutput:
        step = plan.step or (StepPolicy("polynomial", -0.5) if self.pr_average else StepPolicy("rescaled_linear"))
        return q_learning_run(mdp, source, plan.theta0, step, plan.n_iters, self.pr_average, oracle, plan.checkpoint_every)

algorithm = [QLearning("ql", False), QLearning("ql_pr", True)]
