import numpy as np

from sfmpy.function_approx import AdamState, adam_step, check_finite
from sfmpy.mdp_core import TransitionBatch, demonstration_batch
from sfmpy.policy_opt import GaussianActor

BC_LEARNING_RATE = 1e-2
BC_EPOCHS = 2000


def bc_loss(actor, batch: TransitionBatch) -> float:
    prediction = actor.actions(batch.states)
    return float(np.mean(np.sum((prediction - batch.actions) ** 2, axis=1)))


def bc_train(demos, actor, epochs: int, learning_rate: float = BC_LEARNING_RATE):
    """
    Behaviour cloning: full-batch Adam on the mean squared action error over all demonstration pairs,
    the learning rate decaying linearly to zero. Gaussian actors fit their mean head only.

    :param demos: list of Trajectory, a DemonstrationSet or a TransitionBatch
    :param actor: DeterministicActor or GaussianActor, updated in place
    :param epochs: number of full-batch steps
    """
    if epochs < 0:
        raise ValueError(f'Epochs must be non-negative, got {epochs}')
    batch = demos if isinstance(demos, TransitionBatch) else demonstration_batch(getattr(demos, 'trajectories', demos))
    if not batch.has_actions:
        raise ValueError('actions required: behaviour cloning needs demonstrations with actions')
    targets = np.asarray(batch.actions, dtype=np.float64).reshape(len(batch), -1)
    if targets.shape[1] != actor.action_dim:
        raise ValueError(f'Demonstration actions have dimension {targets.shape[1]}, the actor has {actor.action_dim}')

    net = actor.mean_head if isinstance(actor, GaussianActor) else actor.net
    adam = AdamState(learning_rate=learning_rate)
    for epoch in range(epochs):
        prediction, cache = net.forward_with_cache(batch.states)
        error = prediction - targets
        grad, _ = net.backward(batch.states, 2 * error / len(error), cache=cache)
        net.params, adam = adam_step(adam, net.params, grad, learning_rate=learning_rate * (1 - epoch / epochs))
    check_finite(net.params, 'behaviour cloning parameters')
    return actor
