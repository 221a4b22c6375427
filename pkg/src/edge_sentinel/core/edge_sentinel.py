"""
Edge Sentinel - Main Pipeline
Fault-tolerant scheduling for simulated edge clusters: dataset generation,
offline surrogate training, detector evaluation, closed-loop runs and sweeps
"""

import argparse
import os
import sys
from typing import List, Optional

from .episode import load_episode, save_episode
from .experiment import baseline_episode, evaluate, run_experiment, sweep_lambda
from .surrogate import parameter_report
from .trainer import load_artifacts, save_artifacts, train_offline
from ..data.dataset import DatasetStore, load_dataset, records_from_episode
from ..errors import EdgeSentinelError
from ..utils.config import ExperimentConfig, add_config_arguments, config_from_args
from ..utils.exporter import write_json
from ..utils.log_setup import setup_logging


def banner(title: str) -> None:
    print("=" * 80)
    print(title)
    print("=" * 80)
    print()


class EdgeSentinel:
    """
    Drives every stage of the system from one ExperimentConfig
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        banner("EDGE SENTINEL - Fault-Tolerant Edge Scheduling")
        print(f"Cluster: m={config.m} hosts, lambda={config.lam}, T={config.T}, seeds={list(config.seeds)}")
        print()

    def generate_dataset(self) -> DatasetStore:
        config = self.config
        banner("PHASE 1: DATASET GENERATION")
        policy_name = config.policy if config.policy != 'surrogate' else 'random'
        store = DatasetStore(config.m, config.n, config.k)
        for seed in config.seeds:
            log = baseline_episode(config, seed, policy_name)
            for record in records_from_episode(log):
                store.append(record)
            print(f"  seed {seed}: {len(log)} intervals with {policy_name} placement")
        store.fit_scaler()
        store.save(config.dataset)
        faulty = sum(r.faulty for r in store)
        print()
        print("Dataset Summary:")
        print("-" * 40)
        print(f"  Records: {len(store)}")
        print(f"  Intervals with faults: {faulty} ({faulty / max(len(store), 1):.1%})")
        print(f"  Saved to: {config.dataset}/")
        print()
        return store

    def train(self):
        config = self.config
        banner("PHASE 2: OFFLINE TRAINING")
        dataset = load_dataset(config.dataset)
        print(f"Loaded {len(dataset)} records from {config.dataset}/")
        result = train_offline(dataset, config)
        save_artifacts(config.checkpoint, result, config)
        last = result.curves[-1]
        print()
        print("Training Summary:")
        print("-" * 40)
        print(f"  Epochs run: {len(result.curves)} (best epoch {result.best_epoch})")
        print(f"  Reconstruction loss: {result.first_loss:.5f} -> {result.final_loss:.5f}")
        print(f"  Detection F1 on training data: {last['f1']:.3f}")
        print(f"  POT threshold: {result.detector.pot.threshold:.5f}")
        print(f"  Parameter checksum: {result.checksum[:16]}")
        print(f"  Checkpoint: {config.checkpoint}/")
        print()
        return result

    def evaluate(self):
        config = self.config
        banner("PHASE 3: DETECTION AND DIAGNOSIS")
        artifacts = load_artifacts(config.checkpoint)
        if config.episode:
            log = load_episode(config.episode)
            print(f"Replaying logged episode {config.episode}")
        else:
            log = baseline_episode(config, config.seed, 'greedy_ref')
            save_episode(log, os.path.join(config.output, 'evaluation_episode'))
            print(f"Replaying a fresh greedy_ref episode (seed {log.config.seed})")
        report = evaluate(artifacts, log)
        write_json(report.metrics, os.path.join(config.output, 'evaluation.json'))
        metrics = report.metrics
        print()
        print("Detection:")
        print(f"  Accuracy {metrics['accuracy']:.3f}  Precision {metrics['precision']:.3f}  "
              f"Recall {metrics['recall']:.3f}  F1 {metrics['f1']:.3f}")
        print("Diagnosis:")
        print(f"  HitRate@100% {metrics['hit_rate']:.3f}  NDCG@100% {metrics['ndcg']:.3f}")
        print(f"  Class consistency {metrics['class_consistency']:.3f}")
        print()
        return report

    def run(self):
        config = self.config
        banner(f"PHASE 4: CLOSED LOOP ({config.policy})")
        result = run_experiment(config, output=config.output)
        print("Run Summary (mean +/- std over seeds):")
        print("-" * 40)
        for key in ('improvement_ratio', 'overhead_ratio', 'energy_per_task', 'art_seconds', 'slo_fraction',
                    'fairness', 'migrations', 'f1', 'hit_rate', 'ndcg'):
            if key in result.summary:
                stat = result.summary[key]
                print(f"  {key:<18} {stat['mean']:.4f} +/- {stat['std']:.4f}")
        print()
        print(f"All results saved to: {config.output}/")
        print()
        return result

    def sweep(self):
        config = self.config
        banner("PHASE 5: ARRIVAL-RATE SWEEP")
        report = sweep_lambda(config, config.lams, output=config.output)
        for lam in report['lams']:
            means = report['means'][f'{lam:g}']
            line = f"  lambda={lam:<6g}"
            for key in ('f1', 'energy_per_task', 'slo_fraction'):
                if key in means:
                    line += f" {key}={means[key]['mean']:.4f}"
            print(line)
        for metric, rho in report['spearman'].items():
            print(f"  Spearman rho(lambda, {metric}) = {rho:.3f}")
        print()
        return report

    def params(self):
        banner("MODEL SIZE")
        report = parameter_report(self.config.model_config())
        print(f"  Parameters at m={report['m']}: {report['parameters']}")
        print(f"  Growth per added host: {report['host_growth']:.2%}")
        for p, touched in report['touched_by_p'].items():
            print(f"  Parameters used with p={p}: {touched}")
        print(f"  Independent of task count: {report['p_independent']}")
        write_json(report, os.path.join(self.config.output, 'params.json'))
        print()
        return report


COMMANDS = {
    'gen-dataset': ('generate a training dataset from baseline episodes', EdgeSentinel.generate_dataset),
    'train': ('train the surrogate offline and write a checkpoint', EdgeSentinel.train),
    'evaluate': ('detection and diagnosis of a checkpoint on a logged episode', EdgeSentinel.evaluate),
    'run': ('closed-loop episodes with the chosen policy', EdgeSentinel.run),
    'sweep': ('arrival-rate sweep of closed-loop runs', EdgeSentinel.sweep),
    'params': ('parameter-count report of the surrogate', EdgeSentinel.params),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Edge Sentinel - Fault-tolerant scheduling for edge clusters"
    )
    commands = parser.add_subparsers(dest='command', required=True)
    for name, (help_text, _) in COMMANDS.items():
        add_config_arguments(commands.add_parser(name, help=help_text))
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        setup_logging(config.log_level)
        sentinel = EdgeSentinel(config)
        COMMANDS[args.command][1](sentinel)
    except EdgeSentinelError as exc:
        print(f"Error: {exc}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
