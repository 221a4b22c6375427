import numpy as np
import pytest

from edge_sentinel.core.episode import load_episode, next_window_at, save_episode, window_at
from edge_sentinel.data.dataset import DatasetStore, dataset_from_episodes, load_dataset, records_from_episode
from edge_sentinel.data.telemetry import Scaler, StateMatrix, align_rows, build_window, state_matrix
from edge_sentinel.errors import DatasetError, DimensionError, UndefinedInputError


def host_only(value, m=2, n=3):
    return StateMatrix(np.full((m, n), float(value)), (), m)


class TestWindows:
    def test_start_is_replicated(self):
        history = [host_only(1.0)]
        window = build_window(history, 0, 5)
        assert window.shape == (2, 3, 5)
        assert np.all(window == 1.0)

    def test_partial_padding(self):
        history = [host_only(v) for v in (0.0, 1.0, 2.0)]
        window = build_window(history, 2, 5)
        assert window[0, 0].tolist() == [0.0, 0.0, 0.0, 1.0, 2.0]

    def test_full_history_is_an_exact_slice(self):
        history = [host_only(v) for v in range(8)]
        window = build_window(history, 7, 3)
        assert window[1, 2].tolist() == [5.0, 6.0, 7.0]

    def test_new_task_row_repeats_its_first_observation(self):
        history = [
            StateMatrix(np.zeros((2, 3)), (), 2),
            StateMatrix(np.vstack([np.zeros((2, 3)), np.full((1, 3), 0.5)]), (4,), 2),
            StateMatrix(np.vstack([np.zeros((2, 3)), np.full((1, 3), 0.7), np.full((1, 3), 0.9)]), (4, 6), 2),
        ]
        window = build_window(history, 2, 3)
        assert window.shape == (4, 3, 3)
        assert window[2, 0].tolist() == [0.5, 0.5, 0.7]
        assert window[3, 0].tolist() == [0.9, 0.9, 0.9]

    def test_empty_history(self):
        with pytest.raises(UndefinedInputError):
            build_window([], 0, 3)

    def test_row_count_checked(self):
        with pytest.raises(DimensionError):
            StateMatrix(np.zeros((3, 3)), (1, 2), 2)

    def test_align_rows_keeps_survivors_in_prediction_order(self):
        pred_idx, next_idx = align_rows((5, 7, 9), (9, 5), 2)
        assert pred_idx.tolist() == [0, 1, 2, 4]
        assert next_idx.tolist() == [0, 1, 3, 2]


class TestStateMatrix:
    def test_basic_layout(self, small_state):
        matrix = state_matrix(small_state)
        assert matrix.values.shape == (4 + 3, 3)
        assert matrix.task_ids == (0, 1, 2)
        np.testing.assert_allclose(matrix.values[:4], small_state.utilization)

    def test_extended_features(self, small_state):
        small_state.utilization[1, 1] = 1.3
        matrix = state_matrix(small_state, 'extended')
        assert matrix.n == 5
        assert matrix.values[1, 3] == pytest.approx(0.3)
        # task 1 lives on host 1 and inherits its pressure columns
        assert matrix.values[4 + 1, 3] == pytest.approx(0.3)
        assert matrix.values[4 + 2, 3:].tolist() == [0.0, 0.0]


class TestScaler:
    def test_minimum_maps_to_zero(self):
        scaler = Scaler().fit([np.array([[0.0, 1.0, 2.0], [1.0, 3.0, 2.0]])])
        np.testing.assert_allclose(scaler.normalize(np.array([[0.0, 1.0, 2.0]])), 0.0)

    def test_constant_feature_maps_to_zero_and_overflow_clamps(self):
        scaler = Scaler().fit([np.array([[0.0, 5.0], [2.0, 5.0]])])
        scaled = scaler.normalize(np.array([[4.0, 5.0], [1.0, 9.0]]))
        assert scaled.tolist() == [[1.0, 0.0], [0.5, 0.0]]

    def test_window_axis(self):
        scaler = Scaler().fit([np.arange(12.0).reshape(2, 3, 2)])
        scaled = scaler.normalize(np.arange(12.0).reshape(2, 3, 2))
        assert scaled.min() == 0.0 and scaled.max() == 1.0

    def test_unit_range_is_idempotent(self):
        scaler = Scaler(np.zeros(3), np.ones(3))
        rng = np.random.default_rng(3)
        for _ in range(1000):
            window = rng.uniform(-0.5, 1.5, size=(4, 3, 2))
            once = scaler.normalize(window)
            np.testing.assert_array_equal(scaler.normalize(once), once)

    def test_unfitted_scaler(self):
        with pytest.raises(UndefinedInputError):
            Scaler().normalize(np.zeros((1, 3)))

    def test_save_and_load(self, tmp_path):
        scaler = Scaler(np.array([0.1, 0.2]), np.array([0.9, 1.7]))
        path = str(tmp_path / 'scaler')
        scaler.save(path)
        loaded = Scaler.load(path)
        assert np.array_equal(loaded.min, scaler.min) and np.array_equal(loaded.max, scaler.max)


class TestDataset:
    def test_one_record_per_interval(self, random_episode, sim_config):
        records = records_from_episode(random_episode)
        assert len(records) == sim_config.T
        for record in records:
            assert record.window.shape == (sim_config.m + record.p, 3, sim_config.k)
            assert record.next_window.shape == (sim_config.m + len(record.next_task_ids), 3, sim_config.k)
            assert set(record.next_task_ids) <= set(record.task_ids)

    def test_next_window_matches_following_utilization(self, random_episode, sim_config):
        nxt = next_window_at(random_episode, 4)
        np.testing.assert_allclose(nxt[:sim_config.m, :, -1], random_episode.records[5].matrix.values[:sim_config.m])
        np.testing.assert_allclose(nxt[:sim_config.m, :, -2], window_at(random_episode, 4)[:sim_config.m, :, -1])

    def test_save_and_load_is_exact(self, random_episode, tmp_path):
        store = dataset_from_episodes([random_episode])
        store.save(str(tmp_path / 'data'))
        loaded = load_dataset(str(tmp_path / 'data'))
        assert len(loaded) == len(store)
        for a, b in zip(store, loaded):
            assert a.task_ids == b.task_ids and a.next_task_ids == b.next_task_ids
            assert np.array_equal(a.window, b.window)
            assert np.array_equal(a.next_window, b.next_window)
            assert np.array_equal(a.schedule, b.schedule)
            assert np.array_equal(a.fault_flags, b.fault_flags)
            assert a.fault_kinds == b.fault_kinds
        assert np.array_equal(loaded.scaler.max, store.scaler.max)

    def test_wrong_feature_count_rejected(self, random_episode):
        record = records_from_episode(random_episode)[3]
        store = DatasetStore(random_episode.config.m, 5, random_episode.config.k)
        with pytest.raises(DimensionError):
            store.append(record)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(str(tmp_path / 'absent'))

    def test_episode_log_round_trip(self, random_episode, tmp_path):
        save_episode(random_episode, str(tmp_path / 'episode'))
        loaded = load_episode(str(tmp_path / 'episode'))
        assert len(loaded) == len(random_episode)
        for a, b in zip(random_episode.records, loaded.records):
            assert a.task_ids == b.task_ids
            assert np.array_equal(a.matrix.values, b.matrix.values)
            assert a.outcome.energy == b.outcome.energy
            assert [c.response_time for c in a.outcome.completed] == [c.response_time for c in b.outcome.completed]
