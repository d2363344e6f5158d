import os
from typing import List

import numpy as np
import pandas as pd

N_BOOTSTRAP = 1000
CI_PERCENTILES = (2.5, 97.5)


def read_run_metrics(run_dirs: List[str], same_steps: bool = True) -> List[pd.DataFrame]:
    frames = []
    for run_dir in run_dirs:
        path = os.path.join(run_dir, 'metrics.csv')
        if not os.path.isfile(path):
            raise ValueError(f'No metrics.csv in {run_dir}')
        frames.append(pd.read_csv(path))
    if len(frames) == 0:
        raise ValueError('Plot data needs at least one run directory')
    steps = frames[0]['step'].tolist()
    for run_dir, frame in zip(run_dirs, frames):
        if same_steps and frame['step'].tolist() != steps:
            raise ValueError(f'Evaluation steps in {run_dir} differ from those in {run_dirs[0]}')
    return frames


def bootstrap_mean_ci(values: np.ndarray, n_resamples: int = N_BOOTSTRAP, seed: int = 0):
    """
    Mean over runs and percentile bootstrap CI of that mean, for every column of values.

    :param values: (n_runs, n_points) array
    :param n_resamples: number of resamples of the runs, with replacement
    :param seed: bootstrap generator seed
    :return: (mean, ci_low, ci_high), each of length n_points
    """
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    rng = np.random.default_rng(seed)
    resampled = rng.integers(0, len(values), size=(n_resamples, len(values)))
    means = values[resampled].mean(axis=1)
    low, high = np.percentile(means, CI_PERCENTILES, axis=0)
    return values.mean(axis=0), low, high


def aggregate_learning_curves(run_dirs: List[str], n_resamples: int = N_BOOTSTRAP, seed: int = 0,
                              baseline_dirs: List[str] = None) -> pd.DataFrame:
    """
    Per evaluation step: number of runs, then mean and 95% bootstrap CI of every metric column.
    With baseline_dirs (behaviour-cloning runs), the mean and CI of their final normalized return are
    repeated on every row as bc_normalized_return_* next to the SFM curve, with bc_n_runs.
    """
    frames = read_run_metrics(run_dirs)
    out_df = pd.DataFrame({'step': frames[0]['step'].values, 'n_runs': len(frames)})
    for column in frames[0].columns:
        if column == 'step':
            continue
        stacked = np.stack([frame[column].to_numpy(dtype=np.float64) for frame in frames])
        mean, low, high = bootstrap_mean_ci(stacked, n_resamples, seed)
        out_df[f'{column}_mean'] = mean
        out_df[f'{column}_ci_low'] = low
        out_df[f'{column}_ci_high'] = high
    if baseline_dirs:
        baseline = read_run_metrics(baseline_dirs, same_steps=False)
        finals = np.array([[frame['normalized_return'].to_numpy(dtype=np.float64)[-1]] for frame in baseline])
        mean, low, high = bootstrap_mean_ci(finals, n_resamples, seed)
        out_df['bc_n_runs'] = len(baseline)
        out_df['bc_normalized_return_mean'] = mean[0]
        out_df['bc_normalized_return_ci_low'] = low[0]
        out_df['bc_normalized_return_ci_high'] = high[0]
    return out_df


def write_plot_data(run_dirs: List[str], out_path: str, baseline_dirs: List[str] = None) -> pd.DataFrame:
    out_df = aggregate_learning_curves(run_dirs, baseline_dirs=baseline_dirs)
    directory = os.path.dirname(out_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    out_df.to_csv(out_path, index=False)
    return out_df
