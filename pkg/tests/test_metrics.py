import math

import numpy as np
import pytest

from edge_sentinel.core.cluster import Completion
from edge_sentinel.errors import DimensionError
from edge_sentinel.utils.metrics import (detection_metrics, diagnosis_metrics, improvement_ratio, overhead_ratio,
                                         qos_suite, summarize_runs)


class TestDetectionMetrics:
    def test_counts_example(self):
        truth = [True] * 10 + [False] * 90
        predicted = [True] * 8 + [False] * 2 + [True] * 2 + [False] * 88
        report = detection_metrics(predicted, truth)
        assert (report.tp, report.fp, report.fn, report.tn) == (8, 2, 2, 88)
        assert report.precision == pytest.approx(0.8)
        assert report.recall == pytest.approx(0.8)
        assert report.f1 == pytest.approx(0.8)
        assert report.accuracy == pytest.approx(0.96)
        assert not report.undefined

    def test_perfect_prediction(self):
        labels = [True, False, True, False]
        report = detection_metrics(labels, labels)
        assert report.to_dict()['f1'] == 1.0 and report.accuracy == 1.0

    def test_no_positive_predictions(self):
        report = detection_metrics([False] * 4, [True, False, True, False])
        assert report.recall == 0.0 and report.precision == 0.0 and report.f1 == 0.0
        assert report.undefined

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            detection_metrics([True], [True, False])


class TestDiagnosisMetrics:
    def test_true_hosts_ranked_first(self):
        assert diagnosis_metrics([[2, 0, 1, 3]], [{0, 2}]) == (1.0, 1.0)

    def test_miss_then_hit(self):
        hit_rate, ndcg = diagnosis_metrics([[1, 0, 2]], [[0, 2]])
        assert hit_rate == pytest.approx(0.5)
        expected = (1 / math.log2(3)) / (1 + 1 / math.log2(3))
        assert ndcg == pytest.approx(expected)
        assert ndcg == pytest.approx(0.387, abs=1e-3)

    def test_intervals_without_faults_are_skipped(self):
        assert diagnosis_metrics([[0, 1], [1, 0]], [[], [1]]) == (1.0, 1.0)
        assert diagnosis_metrics([[0, 1]], [[]]) == (0.0, 0.0)


class TestRatios:
    def test_improvement_against_itself_is_zero(self):
        qos = np.random.default_rng(0).uniform(size=20)
        assert improvement_ratio(qos, qos) == 0.0

    @pytest.mark.parametrize('qos, reference, expected', [
        ([0.9, 0.8], [0.1, 0.2], 1.0),
        ([0.9, 0.1], [0.5, 0.5], 0.5),
        ([], [], 0.0),
    ])
    def test_improvement_examples(self, qos, reference, expected):
        assert improvement_ratio(qos, reference) == expected

    def test_overhead_ratio(self):
        assert overhead_ratio([1.0, 2.0], [0.5, 1.0]) == pytest.approx(2.0)
        assert math.isnan(overhead_ratio([1.0], [0.0]))


class Outcome:
    """Minimal interval outcome carrying the fields the QoS suite reads"""

    def __init__(self, completed, energy=10.0, migrations=0, migration_time=0.0):
        self.completed = completed
        self.energy = energy
        self.migrations = migrations
        self.migration_time = migration_time
        self.mean_cpu = 0.5
        self.mean_ram = 0.25
        self.active_tasks = 3


def completion(task_id, response, profile='compute', violated=False):
    return Completion(task_id=task_id, app_profile=profile, response_time=response, violated=violated)


class TestQosSuite:
    def test_suite_values(self):
        outcomes = [
            Outcome([completion(0, 300.0), completion(1, 900.0, 'memory', True)], migrations=2,
                    migration_time=300.0),
            Outcome([completion(2, 600.0)]),
        ]
        suite = qos_suite(outcomes, 300.0)
        assert suite['completed_tasks'] == 3
        assert suite['energy_per_task'] == pytest.approx(20.0 / 3)
        assert suite['art_seconds'] == pytest.approx(600.0)
        assert suite['slo_fraction'] == pytest.approx(1 / 3)
        assert suite['art_seconds_compute'] == pytest.approx(450.0)
        assert suite['slo_fraction_memory'] == 1.0
        assert math.isnan(suite['art_seconds_balanced'])
        assert suite['avg_migration_time'] == pytest.approx(150.0)
        assert suite['fairness'] == pytest.approx(1800.0 ** 2 / (3 * (300.0 ** 2 + 900.0 ** 2 + 600.0 ** 2)))

    def test_no_completions(self):
        suite = qos_suite([Outcome([])], 300.0)
        assert math.isnan(suite['energy_per_task'])
        assert suite['slo_fraction'] == 0.0


def test_summarize_runs_ignores_nan_and_text():
    summary = summarize_runs([
        {'f1': 0.5, 'energy_per_task': float('nan'), 'policy': 'random'},
        {'f1': 0.7, 'energy_per_task': 2.0, 'policy': 'random'},
    ])
    assert 'policy' not in summary
    assert summary['f1']['mean'] == pytest.approx(0.6)
    assert summary['f1']['std'] == pytest.approx(0.1)
    assert summary['energy_per_task'] == {'mean': 2.0, 'std': 0.0}
