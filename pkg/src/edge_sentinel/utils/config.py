"""
Configuration
A single flat ExperimentConfig fed from defaults, a key=value file, environment
variables and command-line flags, plus the typed views each module consumes
"""

import argparse
import os
from dataclasses import dataclass, field, fields, asdict, replace
from typing import Dict, Mapping, Optional, Tuple

from ..errors import ParameterError

ENV_PREFIX = 'EDGE_SENTINEL_'

PROFILES = ('compute', 'memory', 'balanced')
FEATURE_SETS = {
    'basic': ('cpu', 'ram', 'disk'),
    'extended': ('cpu', 'ram', 'disk', 'ram_swap', 'io_wait'),
}
POLICIES = ('surrogate', 'random', 'reactive_threshold', 'greedy_ref')


@dataclass(frozen=True)
class SimConfig:
    m: int = 8
    features: str = 'basic'
    interval_seconds: float = 300.0
    lam: float = 3.0
    T: int = 100
    seed: int = 0
    k: int = 5
    migration_downtime: float = 0.5
    threshold_kappa: float = 3.0
    static_cap: float = 0.9
    interference_prob: float = 0.05
    art_max_seconds: float = 2400.0
    warmup: int = 10
    alpha: float = 0.5
    beta: float = 0.5
    slo_deadlines: Tuple[float, ...] = (1800.0, 1800.0, 1800.0)

    @property
    def feature_names(self) -> Tuple[str, ...]:
        return FEATURE_SETS[self.features]

    @property
    def n(self) -> int:
        return len(self.feature_names)


@dataclass(frozen=True)
class ModelConfig:
    m: int = 8
    n: int = 3
    k: int = 5
    hidden_dim: int = 32
    heads: int = 4
    proto_dim: int = 8
    graph_rounds: int = 2
    seed: int = 0


@dataclass(frozen=True)
class PotConfig:
    n_init: int = 120
    level: float = 0.98
    risk: float = 1e-2


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    fault_classes: int = 3
    k: int = 5
    epochs: int = 30
    max_records: int = 0
    patience: int = 5
    batch_size: int = 1
    val_fraction: float = 0.1
    sigma_floor: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.fault_classes < 1:
            raise ParameterError(f"fault_classes must be >= 1, got {self.fault_classes}")
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if self.lr <= 0:
            raise ParameterError(f"learning rate must be > 0, got {self.lr}")


@dataclass(frozen=True)
class OptConfig:
    iterations: int = 20
    lr: float = 0.5
    period: int = 10
    mult: int = 1
    temperature: float = 1.0
    init_logit_scale: float = 3.0
    fine_tune: bool = True
    fine_tune_lr: float = 1e-4
    ema_decay: float = 0.99

    def __post_init__(self):
        if self.iterations < 1:
            raise ParameterError(f"optimisation iterations must be >= 1, got {self.iterations}")
        if self.temperature <= 0:
            raise ParameterError(f"temperature must be > 0, got {self.temperature}")


@dataclass
class ExperimentConfig:
    """
    Every tunable of the system in one flat record; field names double as
    config-file keys, environment suffixes and CLI flags.
    """
    # cluster and workload
    m: int = 8
    features: str = 'basic'
    interval_seconds: float = 300.0
    lam: float = 3.0
    T: int = 100
    seeds: Tuple[int, ...] = (0,)
    migration_downtime: float = 0.5
    threshold_kappa: float = 3.0
    static_cap: float = 0.9
    interference_prob: float = 0.05
    calibration_T: int = 50
    # QoS
    alpha: float = 0.5
    beta: float = 0.5
    art_max_seconds: float = 2400.0
    warmup: int = 10
    # surrogate model
    k: int = 5
    hidden_dim: int = 32
    heads: int = 4
    proto_dim: int = 8
    graph_rounds: int = 2
    # POT
    pot_init: int = 120
    pot_level: float = 0.98
    pot_risk: float = 1e-2
    # offline training
    lr: float = 1e-4
    weight_decay: float = 1e-4
    fault_classes: int = 3
    epochs: int = 30
    max_records: int = 0
    patience: int = 5
    batch_size: int = 1
    val_fraction: float = 0.1
    sigma_floor: float = 1e-2
    # decision optimisation and online fine-tuning
    opt_iterations: int = 20
    opt_lr: float = 0.5
    opt_period: int = 10
    opt_mult: int = 1
    temperature: float = 1.0
    init_logit_scale: float = 3.0
    fine_tune: bool = True
    fine_tune_lr: float = 1e-4
    ema_decay: float = 0.99
    # harness
    policy: str = 'surrogate'
    output: str = 'output'
    checkpoint: str = 'checkpoint'
    dataset: str = 'dataset'
    episode: str = ''
    lams: Tuple[float, ...] = (1.0, 5.0, 10.0, 15.0)
    workers: int = 1
    log_level: str = 'INFO'

    @property
    def seed(self) -> int:
        return self.seeds[0]

    @property
    def n(self) -> int:
        return len(FEATURE_SETS[self.features])

    def validate(self) -> 'ExperimentConfig':
        if self.m < 1:
            raise ParameterError(f"m must be >= 1, got {self.m}")
        if self.T < 1:
            raise ParameterError(f"T must be >= 1, got {self.T}")
        if self.lam < 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta > 1:
            raise ParameterError(f"QoS weights must satisfy alpha, beta >= 0 and alpha + beta <= 1, "
                                 f"got alpha={self.alpha}, beta={self.beta}")
        if self.features not in FEATURE_SETS:
            raise ParameterError(f"features must be one of {sorted(FEATURE_SETS)}, got '{self.features}'")
        if self.policy not in POLICIES:
            raise ParameterError(f"policy must be one of {POLICIES}, got '{self.policy}'")
        if not self.seeds:
            raise ParameterError("at least one seed is required")
        if self.hidden_dim % self.heads != 0:
            raise ParameterError(f"hidden_dim ({self.hidden_dim}) must be divisible by heads ({self.heads})")
        if not 0 <= self.val_fraction < 1:
            raise ParameterError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")
        # the frozen views run their own checks
        self.train_config()
        self.opt_config()
        return self

    def sim_config(self, seed: Optional[int] = None, lam: Optional[float] = None) -> SimConfig:
        return SimConfig(
            m=self.m, features=self.features, interval_seconds=self.interval_seconds,
            lam=self.lam if lam is None else lam, T=self.T,
            seed=self.seed if seed is None else seed, k=self.k,
            migration_downtime=self.migration_downtime, threshold_kappa=self.threshold_kappa,
            static_cap=self.static_cap, interference_prob=self.interference_prob,
            art_max_seconds=self.art_max_seconds, warmup=self.warmup,
            alpha=self.alpha, beta=self.beta,
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(m=self.m, n=self.n, k=self.k, hidden_dim=self.hidden_dim, heads=self.heads,
                           proto_dim=self.proto_dim, graph_rounds=self.graph_rounds, seed=self.seed)

    def pot_config(self) -> PotConfig:
        return PotConfig(n_init=self.pot_init, level=self.pot_level, risk=self.pot_risk)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, weight_decay=self.weight_decay, fault_classes=self.fault_classes,
                           k=self.k, epochs=self.epochs, max_records=self.max_records,
                           patience=self.patience, batch_size=self.batch_size,
                           val_fraction=self.val_fraction, sigma_floor=self.sigma_floor, seed=self.seed)

    def opt_config(self) -> OptConfig:
        return OptConfig(iterations=self.opt_iterations, lr=self.opt_lr, period=self.opt_period,
                         mult=self.opt_mult, temperature=self.temperature,
                         init_logit_scale=self.init_logit_scale, fine_tune=self.fine_tune,
                         fine_tune_lr=self.fine_tune_lr, ema_decay=self.ema_decay)

    def with_overrides(self, **changes) -> 'ExperimentConfig':
        return replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, (tuple, list)):
                value = ','.join(str(v) for v in value)
            lines.append(f"{key}={value}")
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_sources(cls, config_file: Optional[str] = None,
                     environ: Optional[Mapping[str, str]] = None,
                     overrides: Optional[Mapping[str, str]] = None) -> 'ExperimentConfig':
        """
        Merge defaults < key=value file < EDGE_SENTINEL_* environment < explicit overrides
        """
        raw: Dict[str, str] = {}
        if config_file:
            raw.update(read_key_values(config_file))
        environ = os.environ if environ is None else environ
        for f in fields(cls):
            env_key = ENV_PREFIX + f.name.upper()
            if env_key in environ:
                raw[f.name] = environ[env_key]
        if overrides:
            raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(raw).validate()

    @classmethod
    def from_mapping(cls, raw: Mapping[str, str]) -> 'ExperimentConfig':
        known = {f.name: f for f in fields(cls)}
        values = {}
        for key, text in raw.items():
            if key not in known:
                raise ParameterError(f"Unknown configuration key '{key}'")
            values[key] = parse_value(known[key].type, text, key)
        return cls(**values)


def parse_value(field_type, text, key: str):
    if not isinstance(text, str):
        return text
    text = text.strip()
    try:
        if field_type is bool:
            lowered = text.lower()
            if lowered in ('1', 'true', 'yes', 'on'):
                return True
            if lowered in ('0', 'false', 'no', 'off'):
                return False
            raise ValueError(text)
        if field_type is int:
            return int(text)
        if field_type is float:
            return float(text)
        if field_type == Tuple[int, ...]:
            return tuple(int(v) for v in text.split(',') if v.strip())
        if field_type == Tuple[float, ...]:
            return tuple(float(v) for v in text.split(',') if v.strip())
    except ValueError:
        raise ParameterError(f"Cannot parse '{text}' for configuration key '{key}'")
    return text


def read_key_values(path: str) -> Dict[str, str]:
    """
    Read a flat key=value text file; blank lines and '#' comments are ignored
    """
    values = {}
    with open(path) as handle:
        for lineno, line in enumerate(handle, 1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ParameterError(f"{path}:{lineno}: expected key=value, got '{line}'")
            key, value = line.split('=', 1)
            values[key.strip()] = value.strip()
    return values


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    """
    One --flag per ExperimentConfig field; unset flags stay None so lower
    precedence sources win
    """
    parser.add_argument('--config', type=str, default=None, help='key=value configuration file')
    for f in fields(ExperimentConfig):
        flag = '--' + f.name.replace('_', '-')
        parser.add_argument(flag, dest=f.name, type=str, default=None,
                            help=f"{f.name} (default: {f.default})")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {f.name: getattr(args, f.name, None) for f in fields(ExperimentConfig)}
    return ExperimentConfig.from_sources(getattr(args, 'config', None), overrides=overrides)
