import json
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from sfmpy.base_features import FeatureLearner, make_feature_learner, feature_params_hash, save_feature_checkpoint
from sfmpy.function_approx import NonFiniteError, check_finite
from sfmpy.mdp_core import Trajectory, DemonstrationSet, make_environment, generate_expert_demonstrations, load_demonstrations, \
    check_demonstrations_match_env, collect_episode, discounted_tail_mass, TAIL_MASS_WARNING
from sfmpy.policy_opt import make_actor, GaussianActor, ActorPolicy, policy_gradient_step, save_actor_checkpoint
from sfmpy.sf_estimator import SfNet, sf_td_update, smoothed_next_actions, save_sf_checkpoint
from sfmpy.trainer.behaviour_cloning import bc_train
from sfmpy.trainer.evaluation import evaluate, reference_returns
from sfmpy.trainer.replay_buffer import ReplayBuffer
from sfmpy.witness import ExpertSfTracker, Witness, expert_sf_from_demos, agent_sf_estimate, compute_witness

METRIC_COLUMNS = ['step', 'episode_return', 'normalized_return', 'feature_gap', 'sf_td_loss', 'feature_loss', 'witness_norm',
                  'checkpoint_score']
TRAINING_STAGES = ['env_step', 'expert_sf', 'sample', 'sf_update', 'witness', 'actor_update', 'feature_update']
ALGORITHMS = ['sfm', 'bc']

_EVAL_SEED_OFFSET = 10000
_CHECKPOINT_SEED_OFFSET = 20000


class RewardFreeEnv:
    """The environment as the learner sees it: dynamics only, the ground-truth reward withheld."""

    def __init__(self, env):
        self._env = env
        self.name = env.name
        self.is_tabular = env.is_tabular
        self.state_dim = env.state_dim
        self.action_dim = env.action_dim
        self.horizon = env.horizon

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return self._env.reset(rng)

    def step(self, state, action, rng: np.random.Generator) -> np.ndarray:
        return self._env.step(state, action, rng)

    def reward(self, state):
        raise RuntimeError(f'The ground-truth reward of {self.name} is not available to the learner')


@dataclass
class TrainState:
    step: int
    config: object
    seed: int
    env: RewardFreeEnv
    demos: List[Trajectory]
    feature_learner: FeatureLearner
    sf_net: SfNet
    actor: object
    expert_tracker: ExpertSfTracker
    buffer: ReplayBuffer
    rng_env: np.random.Generator
    rng_update: np.random.Generator
    rng_eval: np.random.Generator
    episode_state: np.ndarray = None
    episode_step: int = 0
    witness: Optional[Witness] = None
    last_losses: dict = field(default_factory=lambda: {'sf_td_loss': np.nan, 'feature_loss': np.nan})
    best_actor_params: np.ndarray = None
    best_score: float = -np.inf

    @property
    def expert_states(self) -> np.ndarray:
        return np.concatenate([d.states for d in self.demos])


def _demo_trajectories(demos) -> List[Trajectory]:
    if isinstance(demos, DemonstrationSet):
        return demos.trajectories
    return list(demos)


def make_configured_environment(config):
    return make_environment(config.experiment.env, gamma=config.experiment.gamma, noise_std=config.env.noise_std)


def resolve_demonstrations(config, env, seed: int, demos=None) -> List[Trajectory]:
    """Demos passed in, else the file at demos.path, else expert demos generated in memory."""
    if demos is None and config.demos.path:
        demos = load_demonstrations(config.demos.path)
    if isinstance(demos, DemonstrationSet):
        check_demonstrations_match_env(demos, env)
        if demos.gamma != config.experiment.gamma:
            print(f'WARNING: demonstrations were recorded with gamma={demos.gamma}, training uses {config.experiment.gamma}')
    if demos is None:
        demos = generate_expert_demonstrations(env, config.demos.count, seed=seed, state_only=config.demos.state_only,
                                               length=config.demos.length)
    trajectories = _demo_trajectories(demos)
    if len(trajectories) == 0:
        raise ValueError('Training needs at least one demonstration')
    for i, t in enumerate(trajectories):
        if t.states.shape[1] != env.state_dim:
            raise ValueError(f'Demonstration {i} has state dimension {t.states.shape[1]}, {env.name} has {env.state_dim}')
    tail = discounted_tail_mass(trajectories, config.experiment.gamma)
    if tail > TAIL_MASS_WARNING:
        print(f'WARNING: demonstrations leave {tail:.3f} of the discounted feature mass beyond their last state')
    return trajectories


def init_train_state(config, seed: int = None, demos=None) -> TrainState:
    if seed is None:
        seed = config.experiment.seeds[0]
    experiment = config.experiment
    env = make_configured_environment(config)
    trajectories = resolve_demonstrations(config, env, seed, demos)

    env_sequence, update_sequence, eval_sequence, buffer_sequence = np.random.SeedSequence(seed).spawn(4)
    network_seed = 100 * int(seed)
    learner = make_feature_learner(config.features.kind, env.state_dim, env.action_dim, d=config.features.dim,
                                   hidden=config.features.hidden, seed=network_seed + 1,
                                   learning_rate=config.features.learning_rate, gamma=experiment.gamma,
                                   expectile=config.features.expectile, polyak=config.features.polyak,
                                   adversarial_lr_scale=config.features.adversarial_lr_scale)
    sf_net = SfNet(env.state_dim, env.action_dim, config.features.dim, hidden=config.sf.hidden, mode=config.sf.mode,
                   seed=network_seed + 10, learning_rate=config.sf.learning_rate, update_interval=config.sf.update_interval,
                   polyak=config.sf.polyak)
    actor = make_actor(config.actor.kind, env.state_dim, env.action_dim, hidden=config.actor.hidden, seed=network_seed + 20,
                       learning_rate=config.actor.learning_rate, exploration_noise=config.actor.exploration_noise,
                       entropy_coeff=config.actor.entropy_coeff)
    return TrainState(step=0, config=config, seed=seed, env=RewardFreeEnv(env), demos=trajectories, feature_learner=learner,
                      sf_net=sf_net, actor=actor,
                      expert_tracker=ExpertSfTracker(gamma=experiment.gamma, ema_rate=config.witness.ema_rate),
                      buffer=ReplayBuffer(env.state_dim, env.action_dim, capacity=config.buffer.capacity, seed=buffer_sequence),
                      rng_env=np.random.default_rng(env_sequence), rng_update=np.random.default_rng(update_sequence),
                      rng_eval=np.random.default_rng(eval_sequence))


def _target_policy(state: TrainState):
    actor = state.actor
    if isinstance(actor, GaussianActor):
        return actor.sample_actions
    return lambda next_states, rng: smoothed_next_actions(actor.actions, next_states, rng, noise=state.config.sf.target_noise,
                                                          noise_clip=state.config.sf.target_noise_clip)


def _witness_policy(state: TrainState):
    actor = state.actor
    if isinstance(actor, GaussianActor):
        return actor.sample_actions
    return actor.actions


def _record(trace, step: int, stage: str):
    if trace is not None:
        trace.append((step, stage))


def environment_step(state: TrainState):
    """Act (uniformly at random during warmup, else with exploration noise), store the transition, reset at the horizon."""
    if state.episode_state is None:
        state.episode_state = state.env.reset(state.rng_env)
        state.episode_step = 0
    if state.step < state.config.experiment.warmup_steps:
        action = state.rng_env.uniform(-1, 1, size=state.env.action_dim)
    else:
        action = state.actor.act(state.episode_state, 'explore', state.rng_env)
    next_state = state.env.step(state.episode_state, action, state.rng_env)
    state.buffer.push(state.episode_state, action, next_state)
    state.episode_step += 1
    if state.episode_step == state.env.horizon:
        state.episode_state = None
    else:
        state.episode_state = next_state


def training_step(state: TrainState, trace: list = None):
    """One pass of the loop; learning stages run once the warmup is over."""
    config = state.config
    gamma = config.experiment.gamma
    step = state.step
    environment_step(state)
    _record(trace, step, 'env_step')

    if step >= config.experiment.warmup_steps:
        learner = state.feature_learner
        state.expert_tracker.update(state.demos, learner.features)
        _record(trace, step, 'expert_sf')

        batch = state.buffer.sample(config.buffer.batch_size, 'd')
        witness_batch = state.buffer.sample(config.buffer.batch_size, 'd_prime')
        _record(trace, step, 'sample')

        sf_loss, _ = sf_td_update(state.sf_net, learner.features, _target_policy(state), batch, gamma, state.rng_update)
        _record(trace, step, 'sf_update')

        agent_sf = agent_sf_estimate(state.sf_net, _witness_policy(state), witness_batch, gamma, state.rng_update)
        state.witness = compute_witness(state.expert_tracker.ema, agent_sf, normalize=config.witness.normalize,
                                        B=config.witness.bound)
        _record(trace, step, 'witness')

        policy_gradient_step(state.actor, state.sf_net, state.witness, batch.states, state.rng_update)
        _record(trace, step, 'actor_update')

        feature_loss = learner.update(batch, state.expert_states, state.rng_update,
                                      progress=step / max(config.experiment.steps, 1))
        _record(trace, step, 'feature_update')

        check_finite([sf_loss, feature_loss], f'training loss at step {step}')
        state.last_losses = {'sf_td_loss': float(sf_loss), 'feature_loss': float(feature_loss)}

    state.step += 1
    return state


def checkpoint_score(state: TrainState, env, n_episodes: int) -> float:
    """
    Reward-free checkpoint proxy: minus the squared distance between the discounted feature sums of
    deterministic-mode rollouts and of the demonstrations, rollouts as long as the longest demonstration.
    The best actor so far is kept on the state.
    """
    if n_episodes < 1:
        raise ValueError(f'checkpoint_score needs at least one episode, got {n_episodes}')
    gamma = state.config.experiment.gamma
    features = state.feature_learner.features
    rng = np.random.default_rng(_CHECKPOINT_SEED_OFFSET + int(state.seed))
    policy = ActorPolicy(state.actor, 'deterministic')
    n_steps = max(max(len(d.states) for d in state.demos) - 1, 1)
    rollouts = [collect_episode(env, policy, rng, keep_actions=False, n_steps=n_steps) for _ in range(n_episodes)]
    gap = expert_sf_from_demos(rollouts, features, gamma) - expert_sf_from_demos(state.demos, features, gamma)
    score = -float(gap @ gap)
    if score > state.best_score:
        state.best_score = score
        state.best_actor_params = state.actor.params.copy()
    return score


def feature_gap(state: TrainState) -> float:
    """Gap between expert and agent expected SFs on a fresh batch; NaN while the buffer is empty."""
    if len(state.buffer) == 0:
        return np.nan
    config = state.config
    learner = state.feature_learner
    batch = state.buffer.sample(config.buffer.batch_size, rng=state.rng_eval)
    agent_sf = agent_sf_estimate(state.sf_net, _witness_policy(state), batch, config.experiment.gamma, state.rng_eval)
    expert_sf = expert_sf_from_demos(state.demos, learner.features, config.experiment.gamma)
    return float(np.linalg.norm(expert_sf - agent_sf))


def _evaluation_row(state: TrainState, eval_env, references) -> dict:
    config = state.config
    episode_return, normalized = evaluate(state.actor, eval_env, config.experiment.eval_episodes,
                                          seed=_EVAL_SEED_OFFSET + int(state.seed), random_return=references[0],
                                          expert_return=references[1])
    return {'step': state.step,
            'episode_return': episode_return,
            'normalized_return': normalized,
            'feature_gap': feature_gap(state),
            'sf_td_loss': state.last_losses['sf_td_loss'],
            'feature_loss': state.last_losses['feature_loss'],
            'witness_norm': np.nan if state.witness is None else state.witness.norm,
            'checkpoint_score': checkpoint_score(state, state.env, config.experiment.checkpoint_episodes)}


def _nan_dump(state: TrainState, error: Exception) -> dict:
    return {'step': state.step,
            'error': str(error),
            'last_losses': state.last_losses,
            'witness': None if state.witness is None else state.witness.w.tolist(),
            'clip_low': state.sf_net.clip_low.tolist(),
            'clip_high': state.sf_net.clip_high.tolist()}


def write_run_outputs(state: TrainState, metrics: pd.DataFrame, out_dir: str, start_hash: str):
    os.makedirs(out_dir, exist_ok=True)
    metrics.to_csv(os.path.join(out_dir, 'metrics.csv'), index=False)
    save_actor_checkpoint(os.path.join(out_dir, 'actor.sfm'), state.actor)
    if state.best_actor_params is not None:
        current = state.actor.params.copy()
        state.actor.params = state.best_actor_params
        save_actor_checkpoint(os.path.join(out_dir, 'best_actor.sfm'), state.actor)
        state.actor.params = current
    save_sf_checkpoint(os.path.join(out_dir, 'sf.sfm'), state.sf_net)
    save_feature_checkpoint(os.path.join(out_dir, 'features.sfm'), state.feature_learner)

    summary = {'algo': 'sfm',
               'seed': int(state.seed),
               'steps': int(state.step),
               'feature_kind': state.feature_learner.kind,
               'final': None if len(metrics) == 0 else json.loads(metrics.iloc[-1].to_json()),
               'best_normalized_return': None if len(metrics) == 0 else float(metrics['normalized_return'].max()),
               'best_checkpoint_score': None if state.best_actor_params is None else state.best_score,
               'feature_params_hash_start': start_hash,
               'feature_params_hash_end': feature_params_hash(state.feature_learner)}
    with open(os.path.join(out_dir, 'summary.json'), 'w', encoding='utf8') as f:
        json.dump(summary, f, indent=2)


def train(config, demos=None, out_dir: str = None, trace: list = None, progress: bool = True, seed: int = None):
    """
    Run the imitation loop for config.experiment.steps environment steps.

    Each step after the warmup: push the transition, EMA-update the expert SF, draw D and D' from
    independent streams, TD-update the SF twins on D, form the witness from D', take a policy-gradient
    step on D with the witness fixed, then update the base features on D.

    :param config: ExperimentConfig
    :param demos: DemonstrationSet or list of Trajectory; defaults to demos.path or in-memory expert demos
    :param out_dir: when given, metrics.csv, summary.json and checkpoints are written there
    :param trace: optional list receiving (step, stage) tuples in execution order
    :param progress: show a tqdm bar
    :param seed: defaults to the first configured seed
    :return: (final TrainState, metrics DataFrame)
    """
    state = init_train_state(config, seed, demos)
    experiment = config.experiment
    eval_env = make_configured_environment(config)
    start_hash = feature_params_hash(state.feature_learner)
    rows = []

    try:
        if experiment.steps > 0:
            references = reference_returns(eval_env, experiment.eval_episodes, seed=_EVAL_SEED_OFFSET + int(state.seed))
            rows.append(_evaluation_row(state, eval_env, references))
            for _ in tqdm(range(experiment.steps), desc=f'Training seed {state.seed}', ascii=False, ncols=80, disable=not progress):
                training_step(state, trace)
                if state.step % experiment.eval_interval == 0:
                    rows.append(_evaluation_row(state, eval_env, references))
            if state.step % experiment.eval_interval != 0:
                rows.append(_evaluation_row(state, eval_env, references))
    except NonFiniteError as error:
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, 'nan_dump.json'), 'w', encoding='utf8') as f:
                json.dump(_nan_dump(state, error), f, indent=2)
        print(f'WARNING: numeric abort at step {state.step}: {error}')
        raise

    metrics = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    if out_dir is not None:
        write_run_outputs(state, metrics, out_dir, start_hash)
    return state, metrics


def _bc_row(actor, env, step: int, n_episodes: int, seed: int, references) -> dict:
    episode_return, normalized = evaluate(actor, env, n_episodes, seed=_EVAL_SEED_OFFSET + int(seed),
                                          random_return=references[0], expert_return=references[1])
    return {'step': step, 'episode_return': episode_return, 'normalized_return': normalized}


def train_bc(config, demos=None, out_dir: str = None, seed: int = None):
    """
    Behaviour-cloning baseline on demonstrations with actions: bc.epochs full-batch steps on a fresh actor,
    evaluated before and after. Only the return columns of the metrics are filled.

    :return: (actor, metrics DataFrame with rows at step 0 and step bc.epochs)
    """
    if seed is None:
        seed = config.experiment.seeds[0]
    experiment = config.experiment
    env = make_configured_environment(config)
    if demos is None and not config.demos.path:
        demos = generate_expert_demonstrations(env, config.demos.count, seed=seed, length=config.demos.length)
    trajectories = resolve_demonstrations(config, env, seed, demos)
    actor = make_actor(config.actor.kind, env.state_dim, env.action_dim, hidden=config.actor.hidden, seed=100 * int(seed) + 20,
                       learning_rate=config.actor.learning_rate, exploration_noise=config.actor.exploration_noise,
                       entropy_coeff=config.actor.entropy_coeff)

    references = reference_returns(env, experiment.eval_episodes, seed=_EVAL_SEED_OFFSET + int(seed))
    rows = [_bc_row(actor, env, 0, experiment.eval_episodes, seed, references)]
    bc_train(trajectories, actor, config.bc.epochs, config.bc.learning_rate)
    rows.append(_bc_row(actor, env, config.bc.epochs, experiment.eval_episodes, seed, references))
    metrics = pd.DataFrame(rows, columns=METRIC_COLUMNS)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics.to_csv(os.path.join(out_dir, 'metrics.csv'), index=False)
        save_actor_checkpoint(os.path.join(out_dir, 'actor.sfm'), actor)
        summary = {'algo': 'bc',
                   'seed': int(seed),
                   'epochs': int(config.bc.epochs),
                   'final': json.loads(metrics.iloc[-1].to_json()),
                   'best_normalized_return': float(metrics['normalized_return'].max())}
        with open(os.path.join(out_dir, 'summary.json'), 'w', encoding='utf8') as f:
            json.dump(summary, f, indent=2)
    return actor, metrics
