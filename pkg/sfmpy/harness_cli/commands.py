import argparse
import json
import multiprocessing
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from datetime import datetime, timezone
from typing import List

import pandas as pd

from sfmpy.base_features import FEATURE_KINDS
from sfmpy.function_approx import NonFiniteError
from sfmpy.harness_cli.config import ConfigError, ExperimentConfig, load_config, apply_overrides, validate_config, save_config, \
    serialize_config, parse_config_text, copy_config, config_hash, RunManifest
from sfmpy.harness_cli.plot_data import write_plot_data
from sfmpy.harness_cli.verification import SUITE_CHOICES, VerificationFailure, run_suite, write_report, raise_on_failure
from sfmpy.mdp_core import ENVIRONMENT_NAMES, DEMO_LENGTH, make_environment, generate_expert_demonstrations, save_demonstrations, \
    load_demonstrations, check_demonstrations_match_env
from sfmpy.policy_opt import load_actor_checkpoint
from sfmpy.trainer import ALGORITHMS, train, train_bc, evaluate, make_configured_environment

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_VERIFICATION_FAILURE = 3
EXIT_NUMERIC_ABORT = 4

CONFIG_COPY_NAME = 'config.ini'
MANIFEST_NAME = 'manifest.json'
ABLATION_REPORT_NAME = 'ablation_report.csv'


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def cmd_gen_demos(env_name: str, n_demos: int, out_path: str, state_only: bool = False, seed: int = 0, gamma: float = 0.99,
                  length: int = DEMO_LENGTH) -> str:
    if env_name not in ENVIRONMENT_NAMES:
        raise ConfigError(f'Unknown environment: {env_name}. Choose from {ENVIRONMENT_NAMES}')
    if n_demos < 1:
        raise ConfigError(f'Need at least one demonstration, got {n_demos}')
    if length < 1:
        raise ConfigError(f'Demonstrations need at least one step, got length {length}')
    env = make_environment(env_name, gamma=gamma)
    trajectories = generate_expert_demonstrations(env, n_demos, seed=seed, state_only=state_only, length=length)
    save_demonstrations(out_path, env_name, gamma, trajectories)
    print(f'Wrote {n_demos} {"state-only " if state_only else ""}demonstrations for {env_name} to {out_path}')
    return out_path


def _check_demo_file(config: ExperimentConfig):
    if not config.demos.path:
        return
    try:
        demos = load_demonstrations(config.demos.path)
        check_demonstrations_match_env(demos, make_configured_environment(config))
    except (ValueError, KeyError, json.JSONDecodeError) as error:
        raise ConfigError(f'Unusable demonstration file {config.demos.path}: {error}')
    if config.experiment.algo == 'bc' and demos.state_only:
        raise ConfigError(f'Behaviour cloning needs demonstrations with actions, {config.demos.path} is state-only')


def _process_run(args):
    (config_text, seed, run_dir, progress) = args
    config = parse_config_text(config_text)
    start_time = time.time()
    print(f'doing run: {run_dir}')
    os.makedirs(run_dir, exist_ok=True)
    save_config(config, os.path.join(run_dir, CONFIG_COPY_NAME))
    manifest = RunManifest(config_hash=config_hash(config), seed=seed, started=_now())
    manifest.write(os.path.join(run_dir, MANIFEST_NAME))

    if config.experiment.algo == 'bc':
        train_bc(config, out_dir=run_dir, seed=seed)
    else:
        train(config, out_dir=run_dir, progress=progress, seed=seed)

    manifest.finished = _now()
    manifest.outputs = {name: os.path.join(run_dir, name)
                        for name in ['metrics.csv', 'summary.json', 'actor.sfm', 'best_actor.sfm', 'sf.sfm', 'features.sfm',
                                     CONFIG_COPY_NAME]
                        if os.path.isfile(os.path.join(run_dir, name))}
    manifest.write(os.path.join(run_dir, MANIFEST_NAME))
    print(f'run: {run_dir} took {time.time() - start_time} seconds')
    return run_dir


def _run_jobs(jobs: list, workers: int) -> List[str]:
    if workers <= 1 or len(jobs) <= 1:
        return [_process_run(job) for job in jobs]
    num_cpus = max(min(workers, multiprocessing.cpu_count() - 1), 1)
    run_dirs = []
    with ProcessPoolExecutor(max_workers=num_cpus) as executor:
        futures = [executor.submit(_process_run, job) for job in jobs]
        for future in as_completed(futures):
            run_dirs.append(future.result())
    # completion order varies between workers
    return sorted(run_dirs)


def _ablation_report(out_dir: str, run_dirs: List[str]) -> pd.DataFrame:
    rows = []
    for run_dir in run_dirs:
        with open(os.path.join(run_dir, 'summary.json'), 'r', encoding='utf8') as f:
            summary = json.load(f)
        final = summary['final'] or {}
        rows.append({'kind': summary['feature_kind'],
                     'seed': summary['seed'],
                     'final_normalized_return': final.get('normalized_return'),
                     'best_normalized_return': summary['best_normalized_return'],
                     'final_feature_gap': final.get('feature_gap'),
                     'feature_params_unchanged': summary['feature_params_hash_start'] == summary['feature_params_hash_end']})
    report = pd.DataFrame(rows, columns=['kind', 'seed', 'final_normalized_return', 'best_normalized_return', 'final_feature_gap',
                                         'feature_params_unchanged'])
    report = report.sort_values(['kind', 'seed']).reset_index(drop=True)
    report.to_csv(os.path.join(out_dir, ABLATION_REPORT_NAME), index=False)
    return report


def cmd_train(config, out_dir: str, seed: int = None, overrides=None, workers: int = 1, feature_sweep: bool = False,
              progress: bool = True, algo: str = None) -> List[str]:
    """
    Train one run per seed into <out_dir>/seed_<n>/, each holding a config copy, manifest.json and the
    trainer outputs. With feature_sweep, every feature kind gets its own <out_dir>/<kind>/ tree and an
    ablation report is written to out_dir.

    :param config: path to a config file or an ExperimentConfig
    :param out_dir: output root
    :param seed: run only this seed instead of experiment.seeds
    :param overrides: JSON object (or dict) of dotted keys applied after the file
    :param workers: number of processes for the sweep
    :param feature_sweep: run all feature kinds
    :param progress: show tqdm bars
    :param algo: replaces experiment.algo; 'bc' trains the behaviour-cloning baseline instead
    :return: run directories
    """
    if isinstance(config, ExperimentConfig):
        config = copy_config(config)
        if overrides:
            apply_overrides(config, overrides)
        validate_config(config)
    else:
        config = load_config(config, overrides)
    if algo is not None:
        if algo not in ALGORITHMS:
            raise ConfigError(f'Unknown algorithm: {algo}. Choose from {ALGORITHMS}')
        config.experiment.algo = algo
    if feature_sweep and config.experiment.algo != 'sfm':
        raise ConfigError('The feature sweep only applies to sfm runs')
    _check_demo_file(config)
    if seed is not None and seed < 0:
        raise ConfigError(f'Seeds must be non-negative, got {seed}')
    seeds = [seed] if seed is not None else config.experiment.seeds

    jobs = []
    if feature_sweep:
        for kind in FEATURE_KINDS:
            kind_config = copy_config(config)
            kind_config.features.kind = kind
            jobs += [(serialize_config(kind_config), s, os.path.join(out_dir, kind, f'seed_{s}'), progress) for s in seeds]
    else:
        jobs = [(serialize_config(config), s, os.path.join(out_dir, f'seed_{s}'), progress) for s in seeds]

    run_dirs = _run_jobs(jobs, workers)
    if feature_sweep:
        _ablation_report(out_dir, run_dirs)
    return run_dirs


def cmd_verify(suite: str = 'all', out_path: str = None, corrupt_check: str = None, progress: bool = True):
    """Run a verification suite, print one line per check and write the JSON report; failures raise VerificationFailure."""
    results = run_suite(suite, corrupt_check=corrupt_check, progress=progress)
    for r in results:
        print(f'{"PASS" if r.passed else "FAIL"} {r.suite}.{r.name}: max error {r.max_error:.3g} (tolerance {r.tolerance:.3g}, '
              f'{r.instances} instances)')
    if out_path is not None:
        write_report(results, out_path)
    raise_on_failure(results)
    return results


def cmd_plotdata(run_dirs: List[str], out_path: str, baseline_dirs: List[str] = None) -> pd.DataFrame:
    return write_plot_data(run_dirs, out_path, baseline_dirs=baseline_dirs)


def cmd_eval(run_dir: str, n_episodes: int = 10, seed: int = 0) -> dict:
    """Evaluate the run's best actor (the last actor when no best was recorded) and print a JSON record."""
    config_path = os.path.join(run_dir, CONFIG_COPY_NAME)
    config = load_config(config_path)
    actor_path = os.path.join(run_dir, 'best_actor.sfm')
    if not os.path.isfile(actor_path):
        actor_path = os.path.join(run_dir, 'actor.sfm')
    if not os.path.isfile(actor_path):
        raise ConfigError(f'No actor checkpoint in {run_dir}')
    env = make_configured_environment(config)
    episode_return, normalized = evaluate(load_actor_checkpoint(actor_path), env, n_episodes, seed=seed)
    record = {'run_dir': run_dir, 'algo': config.experiment.algo, 'checkpoint': os.path.basename(actor_path),
              'env': config.experiment.env,
              'episodes': n_episodes, 'seed': seed, 'episode_return': episode_return, 'normalized_return': normalized}
    print(json.dumps(record))
    return record


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='sfmpy', description='Reward-free imitation by successor feature matching.')
    verbs = parser.add_subparsers(dest='verb', required=True)

    gen = verbs.add_parser('gen-demos', help='Write expert demonstrations to a JSON file.')
    gen.add_argument('--env', choices=ENVIRONMENT_NAMES, default='gridworld')
    gen.add_argument('--count', type=int, default=1)
    gen.add_argument('--out', required=True)
    gen.add_argument('--state-only', action='store_true')
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--length', type=int, default=DEMO_LENGTH, help='Steps per demonstration.')

    train_verb = verbs.add_parser('train', help='Train one run per seed from a config file.')
    train_verb.add_argument('--config', required=True)
    train_verb.add_argument('--out', required=True)
    train_verb.add_argument('--seed', type=int, default=None)
    train_verb.add_argument('--override', default=None, help='JSON object of dotted keys, e.g. \'{"features.kind": "idm"}\'')
    train_verb.add_argument('--workers', type=int, default=1)
    train_verb.add_argument('--feature-sweep', action='store_true')
    train_verb.add_argument('--algo', choices=ALGORITHMS, default=None, help='Overrides experiment.algo.')
    train_verb.add_argument('--quiet', action='store_true')

    verify = verbs.add_parser('verify', help='Run the oracle and gradient verification suites.')
    verify.add_argument('--suite', choices=SUITE_CHOICES, default='all')
    verify.add_argument('--out', default=None)
    verify.add_argument('--quiet', action='store_true')
    verify.add_argument('--corrupt-check', default=None, help=argparse.SUPPRESS)

    plot = verbs.add_parser('plotdata', help='Aggregate learning curves across runs.')
    plot.add_argument('run_dirs', nargs='+')
    plot.add_argument('--out', required=True)
    plot.add_argument('--baseline', nargs='+', default=None, help='Behaviour-cloning run directories.')

    eval_verb = verbs.add_parser('eval', help='Evaluate the best actor of a run.')
    eval_verb.add_argument('run_dir')
    eval_verb.add_argument('--episodes', type=int, default=10)
    eval_verb.add_argument('--seed', type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == 'gen-demos':
            cmd_gen_demos(args.env, args.count, args.out, state_only=args.state_only, seed=args.seed, length=args.length)
        elif args.verb == 'train':
            cmd_train(args.config, args.out, seed=args.seed, overrides=args.override, workers=args.workers,
                      feature_sweep=args.feature_sweep, progress=not args.quiet, algo=args.algo)
        elif args.verb == 'verify':
            cmd_verify(args.suite, out_path=args.out, corrupt_check=args.corrupt_check, progress=not args.quiet)
        elif args.verb == 'plotdata':
            cmd_plotdata(args.run_dirs, args.out, baseline_dirs=args.baseline)
        elif args.verb == 'eval':
            cmd_eval(args.run_dir, n_episodes=args.episodes, seed=args.seed)
    except ConfigError as error:
        print(f'ERROR: configuration: {error}', file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except VerificationFailure as error:
        print(f'ERROR: {error}', file=sys.stderr)
        return EXIT_VERIFICATION_FAILURE
    except NonFiniteError as error:
        print(f'ERROR: numeric abort: {error}', file=sys.stderr)
        return EXIT_NUMERIC_ABORT
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
