import numpy as np
import pytest

from edge_sentinel.autodiff import functional as F
from edge_sentinel.autodiff.gradcheck import grad_check
from edge_sentinel.autodiff.tensor import Tensor
from edge_sentinel.core.migration_graph import build_migration_graph
from edge_sentinel.core.surrogate import SurrogateModel, parameter_report, relaxed_schedule
from edge_sentinel.errors import DimensionError
from edge_sentinel.utils.config import ModelConfig


class TestMigrationGraph:
    def test_no_moves_no_edges(self):
        graph = build_migration_graph(np.eye(3), [0, 1, 2])
        assert graph.edges() == []
        assert not graph.in_adjacency().any()

    def test_single_move(self):
        graph = build_migration_graph(np.array([[0.0, 1.0, 0.0]]), [0])
        assert graph.edges() == [(0, 1)]
        assert graph.in_neighbors(1) == [0]
        assert graph.in_adjacency()[1, 0] == 1.0

    def test_swap_and_new_tasks(self):
        schedule = np.array([[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]])
        graph = build_migration_graph(schedule, [0, 1, -1])
        assert graph.edges() == [(0, 1), (1, 0)]

    def test_relabel_permutes_edges(self):
        graph = build_migration_graph(np.array([[0.0, 1.0, 0.0]]), [0]).relabel([2, 0, 1])
        assert graph.edges() == [(2, 0)]

    def test_row_mismatch(self):
        with pytest.raises(DimensionError):
            build_migration_graph(np.eye(2), [0])


class TestSurrogate:
    def test_output_shapes_and_range(self, tiny_model, tiny_inputs, tiny_model_config):
        window, schedule, placement = tiny_inputs
        out = tiny_model(window, schedule, placement)
        assert out.window.shape == (4, 3, 2)
        assert out.prototype.shape == (tiny_model_config.proto_dim,)
        assert np.all((out.window.data > 0) & (out.window.data < 1))
        assert np.all((out.prototype.data > 0) & (out.prototype.data < 1))
        assert set(out.attention) == {'state', 'temporal', 'decision'}

    def test_forward_is_deterministic(self, tiny_model_config, tiny_inputs):
        window, schedule, placement = tiny_inputs
        a = SurrogateModel(tiny_model_config).eval()(window, schedule, placement)
        b = SurrogateModel(tiny_model_config).eval()(window, schedule, placement)
        assert np.array_equal(a.window.data, b.window.data)
        assert np.array_equal(a.prototype.data, b.prototype.data)

    def test_eval_forward_keeps_no_call_state(self, tiny_model, tiny_inputs):
        window, schedule, placement = tiny_inputs
        tiny_model.eval()
        modules = (tiny_model.window_attention, tiny_model.decision_attention)
        before = [{name: id(value) for name, value in vars(module).items()} for module in modules]
        first = tiny_model(window, schedule, placement)
        kept = {source: weights.copy() for source, weights in first.attention.items()}
        second = tiny_model(1.0 - window, schedule, placement)
        for source, weights in kept.items():
            np.testing.assert_array_equal(first.attention[source], weights)
        assert not np.array_equal(first.attention['state'], second.attention['state'])
        assert [{name: id(value) for name, value in vars(module).items()} for module in modules] == before

    def test_no_tasks(self, tiny_model):
        out = tiny_model(np.zeros((2, 3, 2)), np.zeros((0, 2)), np.zeros(0, dtype=np.int64))
        assert out.window.shape == (2, 3, 2)
        assert 'decision' not in out.attention

    def test_window_shape_checked(self, tiny_model, tiny_inputs):
        _, schedule, placement = tiny_inputs
        with pytest.raises(DimensionError):
            tiny_model(np.zeros((3, 3, 2)), schedule, placement)

    def test_zero_decoder_gives_one_half(self, tiny_model, tiny_inputs):
        window, schedule, placement = tiny_inputs
        tiny_model.decoder.weight.data[...] = 0.0
        tiny_model.decoder.bias.data[...] = 0.0
        out = tiny_model(window, schedule, placement)
        np.testing.assert_allclose(out.window.data, 0.5)

    def test_causal_encoding_ignores_later_steps(self, tiny_model, tiny_inputs):
        window = tiny_inputs[0]
        changed = window.copy()
        changed[:, :, -1] += 0.5
        before = tiny_model.encode_window(window)[0].data
        after = tiny_model.encode_window(changed)[0].data
        np.testing.assert_allclose(before[:, 0], after[:, 0])
        assert not np.allclose(before[:, -1], after[:, -1])

    def test_empty_graph_rounds_start_from_input_embedding(self, tiny_model, tiny_inputs):
        features = tiny_inputs[0][:2, :, -1]
        none = tiny_model.graph_encode(np.zeros((2, 2)), features, rounds=0).data
        expected = np.tanh(features @ tiny_model.graph_input.weight.data + tiny_model.graph_input.bias.data)
        np.testing.assert_allclose(none, expected)

    def test_graph_encoder_is_permutation_equivariant(self, tiny_model, tiny_inputs):
        features = tiny_inputs[0][:2, :, -1]
        adjacency = np.array([[0.0, 1.0], [0.0, 0.0]])
        swap = np.array([1, 0])
        original = tiny_model.graph_encode(adjacency, features).data
        permuted = tiny_model.graph_encode(adjacency[np.ix_(swap, swap)], features[swap]).data
        np.testing.assert_allclose(permuted, original[swap])

    def test_decision_pooling_ignores_task_order(self, tiny_model, tiny_inputs):
        window, schedule, placement = tiny_inputs
        out = tiny_model(window, schedule, placement)
        swapped = tiny_model(window[[0, 1, 3, 2]], schedule[::-1], placement[::-1])
        np.testing.assert_allclose(swapped.prototype.data, out.prototype.data)
        np.testing.assert_allclose(swapped.window.data[[0, 1, 3, 2]], out.window.data)

    def test_parameter_gradients_match_finite_differences(self, tiny_model, tiny_inputs):
        window, schedule, placement = tiny_inputs
        rng = np.random.default_rng(11)
        weights = Tensor(rng.normal(size=(4, 3, 2)))
        proto_weights = Tensor(rng.normal(size=(3,)))

        def objective(*_):
            out = tiny_model(window, schedule, placement)
            return (out.window * weights).sum() + (out.prototype * proto_weights).sum()

        report = grad_check(objective, tiny_model.parameters(), eps=1e-6, tol=1e-4)
        assert report.passed, {k: v for k, v in report.errors.items() if v >= 1e-4}

    def test_fault_score_gradient_wrt_decision(self, tiny_model, tiny_inputs):
        window, schedule, placement = tiny_inputs
        target = Tensor(np.clip(window + 0.3, 0.0, 1.0))
        logits = Tensor(np.log(schedule))

        def objective(logits):
            out = tiny_model(window, relaxed_schedule(logits), placement)
            return F.squared_relu_gap(target, out.window)

        report = grad_check(objective, logits, eps=1e-6, tol=1e-4)
        assert report.passed, report.errors
        assert np.all(np.isfinite(logits.grad))


class TestParameterReport:
    def test_independent_of_task_count(self, tiny_model_config):
        report = parameter_report(tiny_model_config)
        assert report['p_independent']
        assert set(report['touched_by_p']) == {1, 10, 100}

    def test_default_dims_growth_per_host(self):
        report = parameter_report(ModelConfig(m=8))
        assert 0 < report['host_growth'] <= 0.05
        assert report['parameters_plus_one_host'] - report['parameters'] == 32
