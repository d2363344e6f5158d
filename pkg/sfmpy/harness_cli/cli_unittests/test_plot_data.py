import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from sfmpy.harness_cli.plot_data import aggregate_learning_curves, bootstrap_mean_ci, write_plot_data


def _write_run(root, name, normalized, steps=(0, 20, 40)):
    run_dir = os.path.join(root, name)
    os.makedirs(run_dir)
    pd.DataFrame({'step': list(steps), 'normalized_return': normalized, 'feature_gap': [np.nan, 2.0, 1.0][:len(steps)]}).to_csv(
        os.path.join(run_dir, 'metrics.csv'), index=False)
    return run_dir


class PlotDataTests(unittest.TestCase):

    def test_single_run_degenerate(self):
        with tempfile.TemporaryDirectory() as tmp:
            run_dir = _write_run(tmp, 'seed_0', [0.1, 0.5, 0.8])
            out_df = aggregate_learning_curves([run_dir])
        self.assertEqual(out_df['step'].tolist(), [0, 20, 40])
        self.assertEqual(out_df['n_runs'].tolist(), [1, 1, 1])
        for suffix in ['mean', 'ci_low', 'ci_high']:
            np.testing.assert_array_equal(out_df[f'normalized_return_{suffix}'], [0.1, 0.5, 0.8])

    def test_identical_runs_zero_width(self):
        with tempfile.TemporaryDirectory() as tmp:
            run_dirs = [_write_run(tmp, f'seed_{i}', [0.1, 0.5, 0.8]) for i in range(5)]
            out_df = aggregate_learning_curves(run_dirs)
        np.testing.assert_array_equal(out_df['normalized_return_ci_high'] - out_df['normalized_return_ci_low'], 0.0)
        np.testing.assert_allclose(out_df['normalized_return_mean'], [0.1, 0.5, 0.8])
        assert np.isnan(out_df['feature_gap_mean'].iloc[0])
        np.testing.assert_allclose(out_df['feature_gap_mean'].iloc[1:], [2.0, 1.0])

    def test_ci_brackets_mean(self):
        rng = np.random.default_rng(0)
        with tempfile.TemporaryDirectory() as tmp:
            run_dirs = [_write_run(tmp, f'seed_{i}', rng.uniform(size=3).tolist()) for i in range(5)]
            out_path = os.path.join(tmp, 'curves', 'plot.csv')
            write_plot_data(run_dirs, out_path)
            out_df = pd.read_csv(out_path)
        assert np.all(out_df['normalized_return_ci_low'] <= out_df['normalized_return_mean'] + 1e-12)
        assert np.all(out_df['normalized_return_mean'] <= out_df['normalized_return_ci_high'] + 1e-12)
        assert np.all(out_df['normalized_return_ci_low'] < out_df['normalized_return_ci_high'])

    def test_reproducible(self):
        values = np.random.default_rng(1).normal(size=(4, 6))
        first, second = bootstrap_mean_ci(values), bootstrap_mean_ci(values)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)

    def test_baseline_columns(self):
        with tempfile.TemporaryDirectory() as tmp:
            run_dirs = [_write_run(tmp, f'seed_{i}', [0.1, 0.5, 0.8]) for i in range(2)]
            baseline_dirs = [_write_run(tmp, f'bc_{i}', [0.0, value], steps=(0, 2000)) for i, value in enumerate([0.2, 0.4])]
            out_path = os.path.join(tmp, 'plot.csv')
            write_plot_data(run_dirs, out_path, baseline_dirs=baseline_dirs)
            out_df = pd.read_csv(out_path)
        self.assertEqual(out_df['step'].tolist(), [0, 20, 40])
        self.assertEqual(out_df['bc_n_runs'].tolist(), [2, 2, 2])
        np.testing.assert_allclose(out_df['bc_normalized_return_mean'], 0.3)
        assert np.all(out_df['bc_normalized_return_ci_low'] >= 0.2 - 1e-12)
        assert np.all(out_df['bc_normalized_return_ci_high'] <= 0.4 + 1e-12)
        np.testing.assert_allclose(out_df['normalized_return_mean'], [0.1, 0.5, 0.8])

    def test_no_baseline_columns_by_default(self):
        with tempfile.TemporaryDirectory() as tmp:
            out_df = aggregate_learning_curves([_write_run(tmp, 'seed_0', [0.1, 0.5, 0.8])])
        assert not any(column.startswith('bc_') for column in out_df.columns)

    def test_mismatched_steps(self):
        with tempfile.TemporaryDirectory() as tmp:
            first = _write_run(tmp, 'seed_0', [0.1, 0.5, 0.8])
            second = _write_run(tmp, 'seed_1', [0.1, 0.5, 0.8], steps=(0, 10, 20))
            with self.assertRaises(ValueError):
                aggregate_learning_curves([first, second])
            with self.assertRaises(ValueError):
                aggregate_learning_curves([os.path.join(tmp, 'missing')])
        with self.assertRaises(ValueError):
            aggregate_learning_curves([])


if __name__ == '__main__':
    unittest.main()
