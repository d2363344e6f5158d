import os
import tempfile
import unittest

import numpy as np

from sfmpy.function_approx import AdamState, adam_step, NonFiniteError, TargetCopy, make_target, Mlp, save_mlp_checkpoint, \
    load_mlp_checkpoint, write_checkpoint, read_checkpoint, mlp_record, vector_record, CHECKPOINT_MAGIC


class AdamTests(unittest.TestCase):

    def test_zero_learning_rate(self):
        params = np.array([1.0, -2.0, 3.0])
        state = AdamState(learning_rate=0.0)
        new_params, state = adam_step(state, params, np.array([0.5, 0.5, -1.0]))
        np.testing.assert_array_equal(new_params, params)

    def test_quadratic_bowl(self):
        params = np.array([0.6, -0.8])
        state = AdamState(learning_rate=1e-2)
        for _ in range(500):
            params, state = adam_step(state, params, 2 * params)
        self.assertLess(np.linalg.norm(params), 1e-3)

    def test_step_counter(self):
        state = AdamState()
        params = np.zeros(2)
        for i in range(1, 4):
            params, state = adam_step(state, params, np.ones(2))
            self.assertEqual(state.step, i)

    def test_errors(self):
        state = AdamState()
        with self.assertRaises(NonFiniteError):
            adam_step(state, np.zeros(2), np.array([np.inf, 0.0]))
        with self.assertRaises(ValueError):
            adam_step(state, np.zeros(2), np.zeros(3))


class TargetCopyTests(unittest.TestCase):

    def test_polyak_geometric_convergence(self):
        tracked = np.array([1.0, 2.0, -3.0])
        target = make_target(np.zeros(3), 'polyak', alpha=0.995)
        initial_gap = np.linalg.norm(target.params - tracked)
        for k in range(1, 301):
            target.update(tracked)
            assert np.linalg.norm(target.params - tracked) <= 0.995 ** k * initial_gap + 1e-12

    def test_hard_refresh(self):
        target = TargetCopy(params=np.zeros(2), mode='hard', interval=3)
        online = np.zeros(2)
        snapshots = []
        for k in range(1, 10):
            online = online + 1.0
            target.update(online)
            snapshots.append(target.params.copy())
            assert target.updates_since_refresh < 3
        # refreshed on updates 3, 6 and 9
        np.testing.assert_array_equal(snapshots[1], np.zeros(2))
        np.testing.assert_array_equal(snapshots[2], np.full(2, 3.0))
        np.testing.assert_array_equal(snapshots[4], np.full(2, 3.0))
        np.testing.assert_array_equal(snapshots[8], np.full(2, 9.0))

    def test_bad_mode(self):
        with self.assertRaises(ValueError):
            TargetCopy(params=np.zeros(2), mode='soft')


class CheckpointTests(unittest.TestCase):

    def test_mlp_checkpoint(self):
        net = Mlp([3, 5, 2], ['layernorm-tanh', 'l2norm'], rng_seed=9)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'phi.sfm')
            save_mlp_checkpoint(path, net, tag='features:fdm')
            with open(path, 'rb') as f:
                self.assertEqual(f.read(4), CHECKPOINT_MAGIC)
            loaded = load_mlp_checkpoint(path)
        self.assertEqual(loaded.layer_sizes, net.layer_sizes)
        self.assertEqual(loaded.activations, net.activations)
        np.testing.assert_array_equal(loaded.params, net.params)

    def test_multiple_records(self):
        net = Mlp([2, 2], ['identity'], rng_seed=1)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'sf.sfm')
            write_checkpoint(path, [mlp_record('psi1', net), vector_record('clip_low', np.array([-1.0, -2.0]))])
            records = read_checkpoint(path)
        self.assertEqual([r.tag for r in records], ['psi1', 'clip_low'])
        np.testing.assert_array_equal(records[1].values, [-1.0, -2.0])
        self.assertEqual(records[1].activations, [])

    def test_bad_magic(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'bad.sfm')
            with open(path, 'wb') as f:
                f.write(b'NOPE0000')
            with self.assertRaises(ValueError):
                read_checkpoint(path)


if __name__ == '__main__':
    unittest.main()
