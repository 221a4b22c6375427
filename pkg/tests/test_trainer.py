import numpy as np
import pytest

from edge_sentinel.autodiff.tensor import Tensor
from edge_sentinel.core.baselines import RandomPolicy
from edge_sentinel.core.episode import run_episode
from edge_sentinel.core.prototypes import PrototypeStats, proto_distance, triplet_loss
from edge_sentinel.core.surrogate import SurrogateModel
from edge_sentinel.core.trainer import (CURVE_COLUMNS, compute_class_stats, load_artifacts, parameter_checksum,
                                        reconstruction_loss, save_artifacts, train_offline)
from edge_sentinel.data.dataset import DatasetStore, dataset_from_episodes
from edge_sentinel.errors import DatasetError, DimensionError, UndefinedInputError


@pytest.fixture
def tiny_dataset(tiny_experiment_config):
    log = run_episode(tiny_experiment_config.sim_config(), RandomPolicy())
    return dataset_from_episodes([log])


class TestLosses:
    def test_reconstruction_example(self):
        assert reconstruction_loss(np.array([[0.5]]), np.array([[0.6]])) == pytest.approx(0.01)

    def test_reconstruction_is_symmetric(self):
        rng = np.random.default_rng(0)
        a, b = rng.uniform(size=(3, 2, 2)), rng.uniform(size=(3, 2, 2))
        assert reconstruction_loss(a, b) == pytest.approx(reconstruction_loss(b, a))

    def test_tensor_path_keeps_gradient(self):
        predicted = Tensor(np.array([0.2, 0.4]), requires_grad=True)
        loss = reconstruction_loss(predicted, np.array([0.5, 0.5]))
        assert loss.item() == pytest.approx(0.09 + 0.01)
        loss.backward()
        np.testing.assert_allclose(predicted.grad, [-0.6, -0.2])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            reconstruction_loss(np.zeros((2, 2)), np.zeros((3, 2)))

    def test_triplet_gradient_pulls_toward_own_class(self):
        # j=1, one dimension: L_T = (P - 0)^2 / 2 - (P - 1)^2 / 2, so dL_T/dP = 1
        stats = PrototypeStats(np.array([[0.0], [1.0]]), np.array([[1.0], [1.0]]))
        prototype = Tensor(np.array([0.4]), requires_grad=True)
        loss = triplet_loss(prototype, 0, stats)
        assert loss.item() == pytest.approx(0.08 - 0.18)
        loss.backward()
        np.testing.assert_allclose(prototype.grad, [1.0])
        stepped = prototype.data - 0.1 * prototype.grad
        before = [proto_distance(prototype.data, stats.mu[i], stats.sigma[i]) for i in range(2)]
        after = [proto_distance(stepped, stats.mu[i], stats.sigma[i]) for i in range(2)]
        assert after[0] < before[0]
        assert after[1] > before[1]


class TestClassStats:
    def test_bootstrap_deals_faulty_records_round_robin(self, tiny_dataset, tiny_experiment_config):
        model = SurrogateModel(tiny_experiment_config.model_config())
        stats = PrototypeStats.initial(2, tiny_experiment_config.proto_dim)
        labelled = compute_class_stats(model, tiny_dataset.records, tiny_dataset.scaler, stats,
                                       tiny_experiment_config.pot_config(), bootstrap=True)
        faulty = labelled.classes[labelled.labels]
        assert faulty.tolist() == [i % 2 + 1 for i in range(len(faulty))]
        assert np.all(labelled.classes[~labelled.labels] == 0)
        assert labelled.prototypes.shape == (len(tiny_dataset), tiny_experiment_config.proto_dim)

    def test_assignment_is_idempotent(self, tiny_dataset, tiny_experiment_config):
        model = SurrogateModel(tiny_experiment_config.model_config())
        stats = PrototypeStats.initial(2, tiny_experiment_config.proto_dim)
        first, second = (compute_class_stats(model, tiny_dataset.records, tiny_dataset.scaler, stats,
                                             tiny_experiment_config.pot_config()) for _ in range(2))
        np.testing.assert_array_equal(first.labels, second.labels)
        np.testing.assert_array_equal(first.classes, second.classes)
        np.testing.assert_array_equal(first.stats.mu, second.stats.mu)
        np.testing.assert_array_equal(stats.mu, PrototypeStats.initial(2, tiny_experiment_config.proto_dim).mu)

    def test_no_records(self, tiny_experiment_config):
        model = SurrogateModel(tiny_experiment_config.model_config())
        with pytest.raises(UndefinedInputError):
            compute_class_stats(model, [], None, PrototypeStats.initial(2, 3), tiny_experiment_config.pot_config())


class TestTrainOffline:
    def test_training_is_deterministic(self, tiny_dataset, tiny_experiment_config):
        first = train_offline(tiny_dataset, tiny_experiment_config)
        second = train_offline(tiny_dataset, tiny_experiment_config)
        assert first.checksum == second.checksum
        assert first.checksum == parameter_checksum(first.model)
        np.testing.assert_array_equal(first.stats.mu, second.stats.mu)

    def test_curves(self, tiny_dataset, tiny_experiment_config):
        result = train_offline(tiny_dataset, tiny_experiment_config)
        assert 1 <= len(result.curves) <= tiny_experiment_config.epochs
        for row in result.curves:
            assert tuple(row) == CURVE_COLUMNS
            assert np.isfinite(row['L_R'])
        assert 0 <= result.best_epoch < len(result.curves)
        assert not result.model.training

    def test_artifacts_round_trip(self, tiny_dataset, tiny_experiment_config, tmp_path):
        result = train_offline(tiny_dataset, tiny_experiment_config)
        directory = str(tmp_path / 'ckpt')
        save_artifacts(directory, result, tiny_experiment_config)
        loaded = load_artifacts(directory)
        assert parameter_checksum(loaded.model) == result.checksum
        np.testing.assert_array_equal(loaded.stats.mu, result.stats.mu)
        np.testing.assert_array_equal(loaded.stats.sigma, result.stats.sigma)
        assert loaded.detector.pot.threshold == result.detector.pot.threshold
        np.testing.assert_array_equal(loaded.scaler.max, result.scaler.max)
        assert loaded.config == tiny_experiment_config
        assert (tmp_path / 'ckpt' / 'loss_curves.csv').exists()

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(DatasetError):
            load_artifacts(str(tmp_path / 'nothing'))

    def test_empty_dataset(self, tiny_experiment_config):
        with pytest.raises(UndefinedInputError):
            train_offline(DatasetStore(2, 3, 2), tiny_experiment_config)

    def test_host_count_mismatch(self, tiny_dataset, tiny_experiment_config):
        with pytest.raises(DimensionError):
            train_offline(tiny_dataset, tiny_experiment_config.with_overrides(m=3))
