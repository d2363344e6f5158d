import json
import os
import tempfile
import unittest

import numpy as np

from sfmpy.function_approx import NonFiniteError
from sfmpy.mdp_core import PointMassEnv, make_chain_env, make_gridworld_env, make_environment, rollout, make_expert, TabularPolicy, \
    uniform_policy_table, oracle_state_occupancy, collect_episode, trajectory_return, generate_expert_demonstrations, \
    save_demonstrations, load_demonstrations, check_demonstrations_match_env, transitions_to_batch, discounted_tail_mass, \
    DEMO_LENGTH, TAIL_MASS_WARNING


class RolloutTests(unittest.TestCase):

    def test_zero_policy(self):
        env = PointMassEnv()
        transitions = rollout(env, lambda s, rng: np.zeros(2), rng_seed=0, n_steps=10)
        self.assertEqual(len(transitions), 10)
        for t in transitions:
            np.testing.assert_array_equal(t.action, np.zeros(2))
            self.assertEqual(t.state.shape, (4,))

    def test_determinism(self):
        env = PointMassEnv(noise_std=0.01, start_noise=0.1)
        policy = lambda s, rng: rng.uniform(-1, 1, size=2)
        first = transitions_to_batch(rollout(env, policy, rng_seed=3, n_steps=250))
        second = transitions_to_batch(rollout(env, policy, rng_seed=3, n_steps=250))
        np.testing.assert_array_equal(first.states, second.states)
        np.testing.assert_array_equal(first.actions, second.actions)
        np.testing.assert_array_equal(first.next_states, second.next_states)

    def test_truncation(self):
        env = make_chain_env(horizon=5)
        transitions = rollout(env, TabularPolicy(env, uniform_policy_table(env.mdp)), rng_seed=1, n_steps=12)
        self.assertEqual([t.truncated for t in transitions].count(True), 2)
        assert transitions[4].truncated and transitions[9].truncated
        # every episode restarts in the chain's first state
        np.testing.assert_array_equal(transitions[5].state, env.embedding[0])

    def test_visitation_matches_occupancy(self):
        env = make_chain_env(4, gamma=0.5, horizon=20)
        policy = TabularPolicy(env, uniform_policy_table(env.mdp), continuous_actions=False)
        transitions = rollout(env, policy, rng_seed=7, n_steps=20000)

        per_episode = []
        weights = np.zeros(4)
        t_episode = 0
        for t in transitions:
            weights[env.state_index(t.state)] += env.mdp.gamma ** t_episode
            t_episode += 1
            if t.truncated:
                per_episode.append(weights / weights.sum())
                weights = np.zeros(4)
                t_episode = 0
        per_episode = np.array(per_episode)
        empirical = per_episode.mean(axis=0)
        exact = oracle_state_occupancy(env.mdp, policy.table)

        self.assertLess(0.5 * np.abs(empirical - exact).sum(), 0.05)
        standard_errors = per_episode.std(axis=0, ddof=1) / np.sqrt(len(per_episode))
        assert np.all(np.abs(empirical - exact) <= 3 * standard_errors + 1e-5)

    def test_non_finite_action(self):
        env = PointMassEnv()
        calls = []

        def policy(state, rng):
            calls.append(1)
            return np.array([np.nan, 0.0]) if len(calls) == 4 else np.zeros(2)

        with self.assertRaises(NonFiniteError) as context:
            rollout(env, policy, rng_seed=0, n_steps=10)
        self.assertIn('step 3', str(context.exception))

    def test_action_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            rollout(PointMassEnv(), lambda s, rng: np.zeros(3), rng_seed=0, n_steps=2)


class ExpertTests(unittest.TestCase):

    def test_chain_expert(self):
        env = make_chain_env(4)
        expert = make_expert(env)
        np.testing.assert_array_equal(expert.table.argmax(axis=1), [1, 1, 1, 1])
        for s in range(4):
            self.assertEqual(env.decode_action(expert(env.embedding[s], np.random.default_rng(0))), 1)

    def test_gridworld_expert(self):
        env = make_gridworld_env()
        episode = collect_episode(env, make_expert(env), np.random.default_rng(0))
        # 14 moves to the far corner, then it stays there
        self.assertEqual(trajectory_return(env, episode), env.horizon - 14 + 1)

    def test_pointmass_expert_at_goal(self):
        env = PointMassEnv(start=(0.0, 0.0))
        expert = make_expert(env)
        np.testing.assert_array_equal(expert(env.reset(np.random.default_rng(0)), None), np.zeros(2))

    def test_pointmass_expert_reaches_goal(self):
        env = PointMassEnv()
        episode = collect_episode(env, make_expert(env), np.random.default_rng(0))
        self.assertLess(np.linalg.norm(episode.states[-1][:2]), 1e-2)

    def test_grid_action_codes(self):
        env = make_gridworld_env()
        for a in range(4):
            self.assertEqual(env.decode_action(env.encode_action(a)), a)
        chain = make_environment('chain')
        for a in range(2):
            self.assertEqual(chain.decode_action(chain.encode_action(a)), a)


class DemonstrationTests(unittest.TestCase):

    def test_state_only_gridworld(self):
        env = make_gridworld_env()
        demos = generate_expert_demonstrations(env, 1, seed=0, state_only=True)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'demos.json')
            save_demonstrations(path, env.name, 0.99, demos)
            with open(path) as f:
                content = json.load(f)
            self.assertEqual(len(content['trajectories']), 1)
            self.assertIsNone(content['trajectories'][0]['actions'])
            loaded = load_demonstrations(path)
        assert loaded.state_only
        self.assertEqual(loaded.trajectories[0].states.shape, (env.horizon + 1, 2))
        check_demonstrations_match_env(loaded, env)

    def test_pointmass_with_actions(self):
        env = PointMassEnv()
        demos = generate_expert_demonstrations(env, 5, seed=0)
        self.assertEqual(len(demos), 5)
        for d in demos:
            self.assertEqual(d.actions.shape, (env.horizon, 2))

    def test_byte_identical(self):
        env = PointMassEnv(noise_std=0.01)
        with tempfile.TemporaryDirectory() as tmp:
            contents = []
            for name in ['a.json', 'b.json']:
                path = os.path.join(tmp, name)
                save_demonstrations(path, env.name, 0.99, generate_expert_demonstrations(env, 2, seed=4))
                with open(path, 'rb') as f:
                    contents.append(f.read())
        self.assertEqual(contents[0], contents[1])

    def test_env_mismatch(self):
        env = make_gridworld_env()
        demos = generate_expert_demonstrations(env, 1, seed=0)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'demos.json')
            save_demonstrations(path, env.name, 0.99, demos)
            loaded = load_demonstrations(path)
        with self.assertRaises(ValueError):
            check_demonstrations_match_env(loaded, PointMassEnv())

    def test_explicit_length(self):
        env = make_gridworld_env()
        demos = generate_expert_demonstrations(env, 2, seed=0, length=300)
        for d in demos:
            self.assertEqual(d.states.shape, (301, 2))
            self.assertEqual(d.actions.shape, (300, 2))
        # the expert sits in the goal corner after 14 moves
        np.testing.assert_array_equal(demos[0].states[-1], demos[0].states[14])
        with self.assertRaises(ValueError):
            collect_episode(env, make_expert(env), np.random.default_rng(0), n_steps=0)

    def test_tail_mass(self):
        env = make_gridworld_env()
        short = generate_expert_demonstrations(env, 1, seed=0)
        self.assertAlmostEqual(discounted_tail_mass(short, 0.99), 0.99 ** (env.horizon + 1), delta=1e-15)
        full = generate_expert_demonstrations(env, 1, seed=0, length=DEMO_LENGTH)
        self.assertLess(discounted_tail_mass(full, 0.99), TAIL_MASS_WARNING)
        self.assertGreater(discounted_tail_mass(short, 0.99), TAIL_MASS_WARNING)


class EnvironmentFactoryTests(unittest.TestCase):

    def test_position_noise(self):
        self.assertEqual(make_environment('pointmass', noise_std=0.1).noise_std, 0.1)
        self.assertEqual(make_environment('pointmass').noise_std, 0.0)
        with self.assertRaises(ValueError):
            make_environment('gridworld', noise_std=0.1)
        with self.assertRaises(ValueError):
            make_environment('pointmass', noise_std=-0.1)

    def test_gridworld_horizon(self):
        self.assertEqual(make_gridworld_env().horizon, 100)


if __name__ == '__main__':
    unittest.main()
