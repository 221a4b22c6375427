import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'src')))

from edge_sentinel.core.baselines import RandomPolicy  # noqa: E402
from edge_sentinel.core.cluster import ClusterState, TaskSpec, build_fleet  # noqa: E402
from edge_sentinel.core.episode import run_episode  # noqa: E402
from edge_sentinel.core.surrogate import SurrogateModel  # noqa: E402
from edge_sentinel.utils.config import ExperimentConfig, ModelConfig, SimConfig  # noqa: E402


@pytest.fixture
def tiny_model_config():
    return ModelConfig(m=2, n=3, k=2, hidden_dim=4, heads=2, proto_dim=3, graph_rounds=2, seed=0)


@pytest.fixture
def tiny_model(tiny_model_config):
    return SurrogateModel(tiny_model_config).eval()


@pytest.fixture
def tiny_inputs():
    """Normalised window, relaxed decision and placement for m=2, p=2, n=3, k=2"""
    rng = np.random.default_rng(7)
    window = rng.uniform(0.0, 1.0, size=(4, 3, 2))
    schedule = np.array([[0.7, 0.3], [0.2, 0.8]])
    placement = np.array([1, -1])
    return window, schedule, placement


def make_task(task_id, demand, host=-1, total_work=1.0, arrival=0, profile='compute'):
    return TaskSpec(id=task_id, app_profile=profile, total_work=total_work,
                    demand=np.asarray(demand, dtype=np.float64), arrival_interval=arrival,
                    slo_deadline=1800.0, host=host)


@pytest.fixture
def task_factory():
    return make_task


@pytest.fixture
def small_state():
    """Four hosts, two placed tasks and one new arrival"""
    hosts = build_fleet(4)
    tasks = [
        make_task(0, [0.3, 0.2, 0.1], host=0),
        make_task(1, [0.2, 0.3, 0.1], host=1),
        make_task(2, [0.25, 0.1, 0.1]),
    ]
    return ClusterState(t=3, hosts=hosts, tasks=tasks, utilization=np.full((4, 3), 0.2))


@pytest.fixture
def sim_config():
    return SimConfig(m=4, T=20, lam=2.0, seed=3)


@pytest.fixture
def random_episode(sim_config):
    return run_episode(sim_config, RandomPolicy())


@pytest.fixture
def tiny_experiment_config(tmp_path):
    return ExperimentConfig(
        m=2, T=12, lam=1.0, seeds=(0,), k=2, hidden_dim=4, heads=2, proto_dim=3, graph_rounds=1,
        pot_init=8, epochs=2, patience=2, val_fraction=0.0, fault_classes=2,
        opt_iterations=2, output=str(tmp_path / 'out'), checkpoint=str(tmp_path / 'ckpt'),
        dataset=str(tmp_path / 'data'), log_level='WARNING',
    ).validate()
