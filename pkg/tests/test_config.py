import argparse

import numpy as np
import pytest

from edge_sentinel.errors import ParameterError
from edge_sentinel.utils.config import (ExperimentConfig, OptConfig, TrainConfig, add_config_arguments,
                                        config_from_args, read_key_values)
from edge_sentinel.utils.seeding import COMPONENTS, derive_rng


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / 'experiment.conf'
    path.write_text("# cluster\nm=4\nlam=2.0  # per interval\n\nseeds=0,1,2\nfine_tune=off\n")
    return str(path)


class TestSources:
    def test_defaults(self):
        config = ExperimentConfig.from_sources(environ={})
        assert config == ExperimentConfig()

    def test_file_values(self, config_file):
        config = ExperimentConfig.from_sources(config_file, environ={})
        assert config.m == 4 and config.lam == 2.0
        assert config.seeds == (0, 1, 2) and config.seed == 0
        assert config.fine_tune is False

    def test_precedence(self, config_file):
        config = ExperimentConfig.from_sources(config_file, environ={'EDGE_SENTINEL_LAM': '3.5',
                                                                     'EDGE_SENTINEL_M': '6'},
                                               overrides={'m': '5', 'T': None})
        assert config.lam == 3.5
        assert config.m == 5
        assert config.T == ExperimentConfig().T

    def test_command_line_flags(self):
        parser = argparse.ArgumentParser()
        add_config_arguments(parser)
        args = parser.parse_args(['--hidden-dim', '16', '--lams', '1,2.5'])
        config = config_from_args(args)
        assert config.hidden_dim == 16
        assert config.lams == (1.0, 2.5)

    def test_text_round_trip(self):
        config = ExperimentConfig(m=3, seeds=(4, 5), lams=(0.5, 7.0), fine_tune=False, episode='')
        restored = ExperimentConfig.from_mapping(dict(line.split('=', 1)
                                                      for line in config.to_text().splitlines()))
        assert restored == config


class TestParsing:
    def test_unknown_key(self):
        with pytest.raises(ParameterError):
            ExperimentConfig.from_mapping({'hosts': '4'})

    @pytest.mark.parametrize('key, text', [('m', 'four'), ('lam', 'fast'), ('fine_tune', 'maybe'),
                                           ('seeds', '1,x')])
    def test_unparseable_values(self, key, text):
        with pytest.raises(ParameterError):
            ExperimentConfig.from_mapping({key: text})

    def test_malformed_file(self, tmp_path):
        path = tmp_path / 'broken.conf'
        path.write_text("m=4\njust words\n")
        with pytest.raises(ParameterError):
            read_key_values(str(path))


class TestValidation:
    @pytest.mark.parametrize('changes', [
        {'m': 0}, {'T': 0}, {'lam': -1.0}, {'alpha': 0.7, 'beta': 0.6}, {'features': 'gpu'},
        {'policy': 'oracle'}, {'seeds': ()}, {'hidden_dim': 30, 'heads': 4}, {'val_fraction': 1.0},
        {'fault_classes': 0}, {'opt_iterations': 0}, {'temperature': 0.0},
    ])
    def test_rejected(self, changes):
        with pytest.raises(ParameterError):
            ExperimentConfig(**changes).validate()

    def test_views(self):
        config = ExperimentConfig(m=3, features='extended', k=4, seeds=(9,), lam=2.0)
        sim = config.sim_config(seed=1, lam=6.0)
        assert (sim.m, sim.n, sim.k, sim.seed, sim.lam) == (3, 5, 4, 1, 6.0)
        model = config.model_config()
        assert (model.m, model.n, model.k, model.seed) == (3, 5, 4, 9)
        assert config.pot_config().risk == config.pot_risk

    def test_frozen_views_check_themselves(self):
        with pytest.raises(ParameterError):
            TrainConfig(lr=0.0)
        with pytest.raises(ParameterError):
            OptConfig(iterations=0)


class TestSeeding:
    def test_streams_are_reproducible(self):
        a = derive_rng(3, 'cosim', 7).uniform(size=5)
        b = derive_rng(3, 'cosim', 7).uniform(size=5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ_by_component_and_counter(self):
        base = derive_rng(3, 'cosim', 7).uniform(size=5)
        assert not np.array_equal(base, derive_rng(3, 'cosim', 8).uniform(size=5))
        assert not np.array_equal(base, derive_rng(3, 'workload', 7).uniform(size=5))
        assert not np.array_equal(base, derive_rng(4, 'cosim', 7).uniform(size=5))

    def test_unknown_component(self):
        with pytest.raises(KeyError):
            derive_rng(0, 'weather')

    def test_every_component_has_a_consumer(self):
        assert set(COMPONENTS) == {'workload', 'interference', 'model', 'scheduler', 'cosim', 'calibration'}
        assert len(set(COMPONENTS.values())) == len(COMPONENTS)
        with pytest.raises(KeyError):
            derive_rng(0, 'optimizer')
