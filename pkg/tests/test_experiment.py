import filecmp
import math
import os

import pandas as pd
import pytest

from edge_sentinel.core import edge_sentinel
from edge_sentinel.core.baselines import RandomPolicy
from edge_sentinel.core.edge_sentinel import main
from edge_sentinel.core.episode import calibrate_slo_deadlines, load_episode, run_episode
from edge_sentinel.core.experiment import (METRIC_COLUMNS, TRAJECTORY_COLUMNS, baseline_episode, episode_metrics,
                                           evaluate, run_experiment, sweep_lambda)
from edge_sentinel.core.trainer import load_artifacts, save_artifacts, train_offline
from edge_sentinel.data.dataset import dataset_from_episodes


def assert_same_bundle(a, b):
    assert set(a) == set(b)
    for key in a:
        if isinstance(a[key], float) and math.isnan(a[key]):
            assert math.isnan(b[key]), key
        else:
            assert a[key] == pytest.approx(b[key], rel=1e-12), key


@pytest.fixture
def trained(tiny_experiment_config):
    log = run_episode(tiny_experiment_config.sim_config(), RandomPolicy())
    result = train_offline(dataset_from_episodes([log]), tiny_experiment_config)
    save_artifacts(tiny_experiment_config.checkpoint, result, tiny_experiment_config)
    return load_artifacts(tiny_experiment_config.checkpoint)


class TestRunExperiment:
    def test_random_policy_reruns_match(self, tiny_experiment_config, tmp_path):
        config = tiny_experiment_config.with_overrides(policy='random')
        first = run_experiment(config, output=str(tmp_path / 'a'))
        run_experiment(config, output=str(tmp_path / 'b'))
        assert filecmp.cmp(tmp_path / 'a' / 'seed_0' / 'metrics.csv', tmp_path / 'b' / 'seed_0' / 'metrics.csv',
                           shallow=False)
        bundle = first.bundles[0]
        assert 0.0 <= bundle['improvement_ratio'] <= 1.0
        assert 'f1' not in bundle
        assert (tmp_path / 'a' / 'summary.json').exists()

    def test_metrics_recomputed_from_saved_episode(self, tiny_experiment_config, tmp_path):
        config = tiny_experiment_config.with_overrides(policy='reactive_threshold')
        result = run_experiment(config, output=str(tmp_path))
        loaded = load_episode(str(tmp_path / 'seed_0' / 'episode'))
        assert_same_bundle(episode_metrics(loaded), result.bundles[0])
        frame = pd.read_csv(tmp_path / 'seed_0' / 'metrics.csv')
        assert tuple(frame.columns) == METRIC_COLUMNS
        assert len(frame) == config.T

    def test_surrogate_closed_loop(self, tiny_experiment_config, trained, tmp_path):
        result = run_experiment(tiny_experiment_config, trained, output=str(tmp_path))
        bundle = result.bundles[0]
        assert {'f1', 'hit_rate', 'ndcg', 'improvement_ratio', 'class_consistency'} <= set(bundle)
        trajectory = pd.read_csv(tmp_path / 'seed_0' / 'trajectory.csv')
        assert tuple(trajectory.columns) == TRAJECTORY_COLUMNS
        assert len(trajectory) == tiny_experiment_config.T * tiny_experiment_config.opt_iterations
        assert (tmp_path / 'seed_0' / 'attention.csv').exists()
        assert (tmp_path / 'seed_0' / 'prototypes.csv').exists()

    def test_surrogate_run_leaves_artifacts_untouched(self, tiny_experiment_config, trained):
        threshold = trained.detector.pot.threshold
        run_experiment(tiny_experiment_config, trained)
        assert trained.detector.pot.threshold == threshold


class TestEvaluate:
    def test_replay_labels_every_interval(self, tiny_experiment_config, trained):
        log = run_episode(tiny_experiment_config.sim_config(seed=5), RandomPolicy())
        report = evaluate(trained, log)
        assert len(report.assessments) == len(log)
        assert 0.0 <= report.metrics['f1'] <= 1.0
        assert 0.0 <= report.metrics['ndcg'] <= 1.0
        assert all(len(a.diagnosis.ranking) == tiny_experiment_config.m for a in report.assessments)


class TestSweep:
    def test_single_rate(self, tiny_experiment_config, tmp_path):
        config = tiny_experiment_config.with_overrides(policy='random')
        report = sweep_lambda(config, [1.0], output=str(tmp_path))
        assert report['lams'] == [1.0]
        assert report['spearman'] == {}
        assert {row['lam'] for row in report['rows']} == {1.0}
        assert (tmp_path / 'sweep.csv').exists()
        assert (tmp_path / 'lam_1' / 'seed_0' / 'metrics.csv').exists()

    def test_rows_follow_requested_order(self, tiny_experiment_config):
        config = tiny_experiment_config.with_overrides(policy='random')
        report = sweep_lambda(config, [2.0, 0.5])
        assert report['lams'] == [2.0, 0.5]
        assert report['rows'][0]['lam'] == 2.0
        assert report['rows'][-1]['lam'] == 0.5
        assert set(report['means']) == {'2', '0.5'}


TINY_FLAGS = ['--m', '2', '--T', '12', '--k', '2', '--hidden-dim', '4', '--heads', '2', '--proto-dim', '3',
              '--graph-rounds', '1', '--pot-init', '8', '--epochs', '1', '--fault-classes', '2',
              '--val-fraction', '0', '--opt-iterations', '1', '--log-level', 'WARNING']


class TestCommandLine:
    def test_params(self, tmp_path):
        assert main(['params', '--output', str(tmp_path), '--m', '3']) == 0
        assert (tmp_path / 'params.json').exists()

    @pytest.mark.slow
    def test_pipeline(self, tmp_path):
        paths = ['--dataset', str(tmp_path / 'data'), '--checkpoint', str(tmp_path / 'ckpt'),
                 '--output', str(tmp_path / 'out')]
        assert main(['gen-dataset', '--policy', 'random'] + TINY_FLAGS + paths) == 0
        assert main(['train'] + TINY_FLAGS + paths) == 0
        assert main(['run', '--policy', 'surrogate'] + TINY_FLAGS + paths) == 0
        assert os.path.exists(tmp_path / 'out' / 'seed_0' / 'trajectory.csv')

    def test_dataset_episodes_use_calibrated_deadlines(self, tiny_experiment_config, monkeypatch):
        logs = []

        def recording(*args):
            log = baseline_episode(*args)
            logs.append(log)
            return log

        monkeypatch.setattr(edge_sentinel, 'baseline_episode', recording)
        store = edge_sentinel.EdgeSentinel(tiny_experiment_config).generate_dataset()
        assert len(store) > 0
        assert [log.deadlines for log in logs] == [calibrate_slo_deadlines(tiny_experiment_config.sim_config(0))]
        assert logs[0].policy == 'random'

    def test_missing_dataset_is_reported(self, tmp_path, capsys):
        code = main(['train', '--dataset', str(tmp_path / 'none'), '--log-level', 'WARNING'])
        assert code == 1
        assert 'Error:' in capsys.readouterr().out

    def test_invalid_configuration(self, tmp_path):
        assert main(['params', '--alpha', '0.8', '--beta', '0.8', '--output', str(tmp_path)]) == 1
