#!/usr/bin/env python
"""
Edge Sentinel - Desk-Scale Acceptance Runs
Measures the long-running trend targets (determinism, training, improvement
ratio, SLO reduction, optimisation descent, arrival-rate sweep) and prints
each measured value next to its target with a PASS/FAIL verdict
"""

import argparse
import filecmp
import os
import sys
import time
from dataclasses import replace

import numpy as np
import pandas as pd

# Add src to python path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'src')))

from edge_sentinel.core.baselines import RandomPolicy
from edge_sentinel.core.episode import run_episode
from edge_sentinel.core.experiment import run_experiment, sweep_lambda
from edge_sentinel.core.trainer import Artifacts, save_artifacts, train_offline
from edge_sentinel.data.dataset import dataset_from_episodes
from edge_sentinel.utils.config import ExperimentConfig
from edge_sentinel.utils.log_setup import setup_logging

VERDICTS = []


def verdict(name: str, measured, target: str, passed: bool, seconds: float) -> None:
    VERDICTS.append(passed)
    status = "PASS" if passed else "FAIL"
    print(f"[{status}] {name}: measured {measured} (target {target}) in {seconds:.1f}s")


def check_determinism(config: ExperimentConfig, workdir: str) -> None:
    started = time.perf_counter()
    base = config.with_overrides(policy='random', T=100, seeds=(0,))
    paths = []
    for attempt in (1, 2):
        out = os.path.join(workdir, f'determinism_{attempt}')
        run_experiment(base, output=out)
        paths.append(os.path.join(out, 'seed_0', 'metrics.csv'))
    same = filecmp.cmp(paths[0], paths[1], shallow=False)
    verdict("determinism of metrics.csv", same, "identical files", same, time.perf_counter() - started)


def check_training(config: ExperimentConfig, workdir: str):
    started = time.perf_counter()
    logs = []
    seed = 1000
    while sum(len(log) for log in logs) < 500:
        logs.append(run_episode(replace(config.sim_config(seed=seed), T=100), RandomPolicy()))
        seed += 1
    dataset = dataset_from_episodes(logs)
    result = train_offline(dataset, config)
    checkpoint = os.path.join(workdir, 'checkpoint')
    save_artifacts(checkpoint, result, config)
    ratio = result.final_loss / result.first_loss
    f1 = result.curves[-1]['f1']
    verdict("training loss ratio", f"{ratio:.3f}", "<= 0.5", ratio <= 0.5, time.perf_counter() - started)
    verdict("training detection F1", f"{f1:.3f}", ">= 0.80", f1 >= 0.80, 0.0)
    return result


def check_closed_loop(config: ExperimentConfig, result, workdir: str) -> None:
    artifacts = Artifacts(result.model, result.stats, result.detector, result.scaler, config)
    started = time.perf_counter()
    loop = config.with_overrides(lam=5.0, T=100, seeds=(0, 1, 2, 3, 4))
    surrogate = run_experiment(loop.with_overrides(policy='surrogate'), artifacts,
                               os.path.join(workdir, 'surrogate'))
    ratio = surrogate.summary['improvement_ratio']['mean']
    verdict("improvement ratio vs greedy_ref", f"{ratio:.3f}", "> 0.55", ratio > 0.55,
            time.perf_counter() - started)

    reference = run_experiment(loop.with_overrides(policy='greedy_ref'), None, os.path.join(workdir, 'greedy'))
    ours = surrogate.summary['slo_fraction']['mean']
    theirs = reference.summary['slo_fraction']['mean']
    verdict("SLO violation fraction", f"{ours:.3f} vs {theirs:.3f}", "<= 0.9 x greedy_ref",
            ours <= 0.9 * theirs, 0.0)

    descents = []
    for seed_dir in sorted(os.listdir(os.path.join(workdir, 'surrogate'))):
        path = os.path.join(workdir, 'surrogate', seed_dir, 'trajectory.csv')
        if not os.path.exists(path):
            continue
        frame = pd.read_csv(path)
        for _, group in frame.groupby('t'):
            group = group.sort_values('iteration')
            descents.append(group['L_O'].iloc[-1] <= group['L_O'].iloc[0])
    share = float(np.mean(descents)) if descents else 0.0
    verdict("optimisation descent share", f"{share:.3f}", ">= 0.90", share >= 0.90, 0.0)


def check_sweep(config: ExperimentConfig, result, workdir: str) -> None:
    artifacts = Artifacts(result.model, result.stats, result.detector, result.scaler, config)
    started = time.perf_counter()
    report = sweep_lambda(config.with_overrides(policy='surrogate', T=100), (1.0, 5.0, 10.0, 15.0), artifacts,
                          os.path.join(workdir, 'sweep'))
    f1 = [report['means'][f'{lam:g}'].get('f1', {}).get('mean', float('nan')) for lam in report['lams']]
    rho = report['spearman'].get('energy_per_task', float('nan'))
    verdict("F1 at lambda=15 vs lambda=1", f"{f1[-1]:.3f} vs {f1[0]:.3f}", "non-increasing", f1[-1] <= f1[0],
            time.perf_counter() - started)
    verdict("Spearman rho(lambda, energy/task)", f"{rho:.3f}", "> 0", rho > 0, 0.0)


def main():
    parser = argparse.ArgumentParser(description="Desk-scale acceptance runs")
    parser.add_argument('--workdir', default='acceptance_results')
    parser.add_argument('--skip-sweep', action='store_true')
    args = parser.parse_args()
    setup_logging('WARNING')
    config = ExperimentConfig(m=8, lam=3.0).validate()

    check_determinism(config, args.workdir)
    result = check_training(config, args.workdir)
    check_closed_loop(config, result, args.workdir)
    if not args.skip_sweep:
        check_sweep(config, result, args.workdir)

    print()
    print(f"{sum(VERDICTS)}/{len(VERDICTS)} checks passed")
    return 0 if all(VERDICTS) else 1


if __name__ == "__main__":
    sys.exit(main())
