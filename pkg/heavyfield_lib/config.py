"""
Configuration loading and validation
"""

import copy
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .errors import ConfigError
from .models import DataSpec, Hyper, InitSpec
from .network import ACTIVATIONS, LOSSES, make_network
from .utils import deep_merge

# Defaults and constants
OUTPUT_DIR_ENV = 'HEAVYFIELD_OUTPUT_DIR'
DEFAULT_OUTPUT_DIR = 'results'
DEFAULT_CONFIG_FILE = 'heavyfield.yaml'

EXPERIMENTS = ('train', 'couple', 'chaos', 'dropout-scan', 'connect', 'noisy')
MODELS = ('2l', '3l')
DYNAMICS = ('shb', 'hb', 'pd', 'noisy')
COUPLED_MEMBERS = ('proxy', 'pd', 'hb', 'shb')
LABEL_MODELS = ('teacher2l', 'teacher3l', 'sign-linear')
INIT_LAWS = ('product', 'joint')
OUTPUT_LAWS = ('uniform', 'sign')
MIN_REF_FACTOR = 4

DEFAULTS: Dict[str, Any] = {
    'experiment': 'train',
    'model': '2l',
    'widths': [64],
    'seeds': [0],
    'hyper': {'gamma': 2.0, 'eps': 0.05, 'lam': 0.0, 'beta_inv': 0.0, 'horizon': 1.0},
    'data': {'dim': 10, 'radius': None, 'label_model': 'teacher2l', 'label_clip': 1.0,
             'teacher_width': 4, 'teacher_seed': 1234},
    'init': {'w1_std': None, 'k_init': 1.0, 'k_init3': None, 'w2_law': 'uniform', 'law': 'product'},
    'network': {'activation': 'tanh', 'activation2': None, 'loss': 'logistic', 'huber_delta': 1.0,
                'unsafe_assumptions': False},
    'training': {'dynamics': 'shb', 'batch_size': 1, 'pool_size': 4096, 'pd_substeps': 16,
                 'snapshot_times': None},
    'coupling': {'dynamics': list(COUPLED_MEMBERS), 'n_ref': None, 'ref_factor': 16, 'proxy_substeps': 16,
                 'wasserstein': True},
    'envelope': {'enabled': False, 'u0': 1.0, 'k': 1.0},
    'chaos': {'eps_list': [0.04, 0.02]},
    'dropout': {'fraction': 0.5, 'subsets': 10, 'eval_times': None},
    'connect': {'steps_per_segment': 64, 'pair_seed_offset': 1000},
    'output': {'directory': None},
}


@dataclass(frozen=True)
class NetworkConfig:
    activation: str = 'tanh'
    activation2: Optional[str] = None
    loss: str = 'logistic'
    huber_delta: float = 1.0
    unsafe_assumptions: bool = False

    def build(self, model: str):
        return make_network(model, self.activation, self.activation2, self.loss, self.huber_delta,
                            self.unsafe_assumptions)


@dataclass(frozen=True)
class TrainingConfig:
    dynamics: str = 'shb'
    batch_size: int = 1
    pool_size: int = 4096
    pd_substeps: int = 16
    snapshot_times: Optional[Tuple[float, ...]] = None

    @property
    def protocol_mode(self) -> bool:
        """Minibatch steps instead of the one-sample-per-step algorithm"""
        return self.batch_size > 1


@dataclass(frozen=True)
class CouplingConfig:
    dynamics: Tuple[str, ...] = COUPLED_MEMBERS
    n_ref: Optional[int] = None
    ref_factor: int = 16
    proxy_substeps: int = 16
    wasserstein: bool = True


@dataclass(frozen=True)
class EnvelopeConfig:
    enabled: bool = False
    u0: float = 1.0
    k: float = 1.0


@dataclass(frozen=True)
class DropoutConfig:
    fraction: float = 0.5
    subsets: int = 10
    eval_times: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class ConnectConfig:
    steps_per_segment: int = 64
    pair_seed_offset: int = 1000


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; derived quantities live on Hyper"""
    experiment: str
    model: str
    widths: Tuple[int, ...]
    seeds: Tuple[int, ...]
    hyper: Hyper
    data: DataSpec
    init: InitSpec
    network: NetworkConfig
    training: TrainingConfig
    coupling: CouplingConfig
    envelope: EnvelopeConfig
    eps_list: Tuple[float, ...]
    dropout: DropoutConfig
    connect: ConnectConfig
    output_directory: Optional[str] = None
    resolved: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)


def _tuple(value) -> Optional[tuple]:
    return None if value is None else tuple(value)


def resolve(config: Dict[str, Any]) -> ExperimentConfig:
    """Build the typed config from a merged, validated dict"""
    hyper = config['hyper']
    data = config['data']
    init = config['init']
    training = config['training']
    coupling = config['coupling']
    dropout = config['dropout']
    return ExperimentConfig(
        experiment=config['experiment'],
        model=config['model'],
        widths=tuple(int(w) for w in config['widths']),
        seeds=tuple(int(s) for s in config['seeds']),
        hyper=Hyper(gamma=float(hyper['gamma']), eps=float(hyper['eps']), lam=float(hyper['lam']),
                    beta_inv=float(hyper['beta_inv']), T=float(hyper['horizon'])),
        data=DataSpec(**data),
        init=InitSpec(**init),
        network=NetworkConfig(**config['network']),
        training=TrainingConfig(**{**training, 'snapshot_times': _tuple(training['snapshot_times'])}),
        coupling=CouplingConfig(**{**coupling, 'dynamics': tuple(coupling['dynamics'])}),
        envelope=EnvelopeConfig(**config['envelope']),
        eps_list=tuple(float(e) for e in config['chaos']['eps_list']),
        dropout=DropoutConfig(**{**dropout, 'eval_times': _tuple(dropout['eval_times'])}),
        connect=ConnectConfig(**config['connect']),
        output_directory=config['output']['directory'],
        resolved=copy.deepcopy(config),
    )


def output_directory(cli_out: Optional[str], config: Dict[str, Any]) -> Path:
    """--out, then output.directory, then $HEAVYFIELD_OUTPUT_DIR, then 'results'"""
    for candidate in (cli_out, (config.get('output') or {}).get('directory'), os.getenv(OUTPUT_DIR_ENV)):
        if candidate:
            return Path(candidate)
    return Path(DEFAULT_OUTPUT_DIR)


class ConfigLoader:
    """Loads and manages configuration files"""

    def __init__(self, config_file: str = DEFAULT_CONFIG_FILE):
        self.config_file = Path(config_file)
        self.raw = None
        self.config = None

    def load(self):
        """Load the experiment file and layer it over the defaults"""
        if not self.config_file.exists():
            raise ConfigError([f"{self.config_file}: configuration file not found "
                               f"(run 'heavyfield init' to create one)"])
        with open(self.config_file) as f:
            try:
                raw = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise ConfigError([f"{self.config_file}: invalid YAML ({e})"])
        self.load_dict(raw or {})

    def load_dict(self, raw: Dict[str, Any]):
        if not isinstance(raw, dict):
            raise ConfigError([f"{self.config_file}: top level must be a mapping"])
        self.raw = raw
        self.config = copy.deepcopy(DEFAULTS)
        deep_merge(self.config, copy.deepcopy(raw))

    def apply_overrides(self, experiment: Optional[str] = None, seed: Optional[int] = None,
                        out: Optional[str] = None):
        """Command-line overrides: the subcommand, a single seed and the output directory"""
        if experiment is not None:
            self.config['experiment'] = experiment
        if seed is not None:
            self.config['seeds'] = [seed]
        output = self.config.get('output')
        if isinstance(output, dict):
            output['directory'] = str(output_directory(out, self.config))


class ConfigValidator:
    """Validates an experiment configuration, reporting every problem with its field path"""

    def __init__(self, raw: Dict[str, Any], config: Dict[str, Any]):
        self.raw = raw
        self.config = config
        self.errors: List[str] = []

    def validate(self) -> bool:
        """Raise ConfigError listing all problems; True when the config is valid"""
        self.errors = []
        self._unknown_keys(self.raw, DEFAULTS, '')
        if not self.errors:
            self._check_values()
        if self.errors:
            raise ConfigError(self.errors)
        return True

    def _unknown_keys(self, raw: Dict[str, Any], schema: Dict[str, Any], prefix: str):
        for key, value in raw.items():
            path = f"{prefix}{key}"
            if key not in schema:
                self.errors.append(f"{path}: unknown key")
            elif isinstance(schema[key], dict):
                if not isinstance(value, dict):
                    self.errors.append(f"{path}: must be a mapping")
                else:
                    self._unknown_keys(value, schema[key], f"{path}.")

    # value checks

    def _error(self, path: str, message: str):
        self.errors.append(f"{path}: {message}")

    def _get(self, path: str):
        node = self.config
        for part in path.split('.'):
            node = node[part]
        return node

    def _number(self, path: str, minimum: Optional[float] = None, strict: bool = False,
                optional: bool = False) -> Optional[float]:
        value = self._get(path)
        if value is None and optional:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self._error(path, "must be a finite number")
            return None
        if minimum is not None:
            if strict and not value > minimum:
                self._error(path, f"must be > {minimum:g}")
                return None
            if not strict and value < minimum:
                self._error(path, f"must be >= {minimum:g}")
                return None
        return float(value)

    def _integer(self, path: str, minimum: Optional[int] = None, optional: bool = False) -> Optional[int]:
        value = self._get(path)
        if value is None and optional:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            self._error(path, "must be an integer")
            return None
        if minimum is not None and value < minimum:
            self._error(path, f"must be >= {minimum}")
            return None
        return value

    def _choice(self, path: str, options: Tuple[str, ...], optional: bool = False) -> Optional[str]:
        value = self._get(path)
        if value is None and optional:
            return None
        if value not in options:
            self._error(path, f"unknown value '{value}' (expected one of {', '.join(options)})")
            return None
        return value

    def _boolean(self, path: str):
        if not isinstance(self._get(path), bool):
            self._error(path, "must be true or false")

    def _int_list(self, path: str, minimum: int, non_empty: bool = True) -> List[int]:
        value = self._get(path)
        if not isinstance(value, list) or (non_empty and not value):
            self._error(path, "must be a non-empty list of integers")
            return []
        if any(isinstance(v, bool) or not isinstance(v, int) or v < minimum for v in value):
            self._error(path, f"entries must be integers >= {minimum}")
            return []
        return value

    def _time_list(self, path: str):
        value = self._get(path)
        if value is None:
            return
        if not isinstance(value, list) or not value:
            self._error(path, "must be a non-empty list of times or null")
        elif any(isinstance(v, bool) or not isinstance(v, (int, float)) or not v >= 0 for v in value):
            self._error(path, "times must be numbers >= 0")

    def _check_values(self):
        experiment = self._choice('experiment', EXPERIMENTS)
        model = self._choice('model', MODELS)
        widths = self._int_list('widths', 1)
        self._int_list('seeds', 0)

        gamma = self._number('hyper.gamma', 0, strict=True)
        eps = self._number('hyper.eps', 0, strict=True)
        self._number('hyper.lam', 0)
        self._number('hyper.beta_inv', 0)
        self._number('hyper.horizon', 0)

        eps_list = self._get('chaos.eps_list')
        if not isinstance(eps_list, list) or not eps_list or any(
                isinstance(e, bool) or not isinstance(e, (int, float)) or not e > 0 for e in eps_list):
            self._error('chaos.eps_list', "must be a non-empty list of numbers > 0")
            eps_list = []
        if gamma is not None:
            for path, value in [('hyper.eps', eps)] + [(f'chaos.eps_list[{i}]', e) for i, e in enumerate(eps_list)]:
                if value is not None and not gamma * value < 1:
                    self._error(path, f"gamma * eps = {gamma * value:g} must be < 1")

        self._integer('data.dim', 1)
        self._number('data.radius', 0, optional=True)
        self._choice('data.label_model', LABEL_MODELS)
        self._number('data.label_clip', 0, strict=True)
        self._integer('data.teacher_width', 1)
        self._integer('data.teacher_seed', 0)

        self._number('init.w1_std', 0, strict=True, optional=True)
        self._number('init.k_init', 0)
        self._number('init.k_init3', 0, optional=True)
        self._choice('init.w2_law', OUTPUT_LAWS)
        law = self._choice('init.law', INIT_LAWS)
        if model == '3l' and law == 'joint':
            self._error('init.law', "three-layer networks require independent layers ('product')")

        self._choice('network.activation', ACTIVATIONS)
        self._choice('network.activation2', ACTIVATIONS, optional=True)
        loss = self._choice('network.loss', LOSSES)
        self._number('network.huber_delta', 0, strict=True)
        self._boolean('network.unsafe_assumptions')
        if loss == 'square' and self._get('network.unsafe_assumptions') is not True:
            self._error('network.loss', "square loss requires network.unsafe_assumptions: true")

        self._choice('training.dynamics', DYNAMICS)
        self._integer('training.batch_size', 1)
        self._integer('training.pool_size', 1)
        self._integer('training.pd_substeps', 1)
        self._time_list('training.snapshot_times')

        members = self._get('coupling.dynamics')
        if not isinstance(members, list) or not members or any(m not in COUPLED_MEMBERS for m in members):
            self._error('coupling.dynamics', f"must be a non-empty list drawn from {', '.join(COUPLED_MEMBERS)}")
        n_ref = self._integer('coupling.n_ref', 1, optional=True)
        self._integer('coupling.ref_factor', MIN_REF_FACTOR)
        self._integer('coupling.proxy_substeps', 1)
        self._boolean('coupling.wasserstein')
        if n_ref is not None and widths and n_ref < MIN_REF_FACTOR * max(widths):
            self._error('coupling.n_ref', f"must be at least {MIN_REF_FACTOR} x the largest width ({max(widths)})")

        self._boolean('envelope.enabled')
        self._number('envelope.u0', 0)
        self._number('envelope.k', 0)

        fraction = self._number('dropout.fraction', 0)
        if fraction is not None and not fraction < 1:
            self._error('dropout.fraction', "must be < 1")
        self._integer('dropout.subsets', 1)
        self._time_list('dropout.eval_times')

        self._integer('connect.steps_per_segment', 2)
        self._integer('connect.pair_seed_offset', 1)
        if experiment == 'connect':
            if model == '3l':
                self._error('model', "connect builds two-layer paths only")
            if any(w % 2 for w in widths):
                self._error('widths', "connect needs even widths")

        directory = self._get('output.directory')
        if directory is not None and not isinstance(directory, str):
            self._error('output.directory', "must be a path string")


class ConfigInitializer:
    """Creates new configuration files"""

    @staticmethod
    def init(config_file: Path, experiment: str = 'train'):
        """Write an example configuration for one experiment kind"""
        if experiment not in EXPERIMENTS:
            raise ConfigError([f"experiment: unknown value '{experiment}' (expected one of {', '.join(EXPERIMENTS)})"])
        if config_file.exists():
            raise ConfigError([f"{config_file}: configuration already exists"])

        config = {
            'experiment': experiment,
            'model': '2l',
            'widths': [64],
            'seeds': [0, 1, 2],
            'hyper': copy.deepcopy(DEFAULTS['hyper']),
            'data': {'dim': 10, 'label_model': 'teacher2l', 'label_clip': 1.0},
            'network': {'activation': 'tanh', 'loss': 'logistic'},
            'training': {'dynamics': 'shb', 'pool_size': 1024},
            'output': {'directory': DEFAULT_OUTPUT_DIR},
        }
        if experiment in ('couple', 'chaos'):
            config['coupling'] = {'dynamics': list(COUPLED_MEMBERS), 'ref_factor': 16}
        if experiment == 'chaos':
            config['widths'] = [64, 256, 1024]
            config['chaos'] = {'eps_list': [0.04, 0.02]}
        if experiment == 'dropout-scan':
            config['widths'] = [100, 200, 400, 800, 1600]
            config['dropout'] = {'fraction': 0.5, 'subsets': 10}
        if experiment == 'connect':
            config['widths'] = [100, 800]
            config['connect'] = {'steps_per_segment': 64}
        if experiment == 'noisy':
            config['hyper'].update({'gamma': 1.0, 'eps': 0.01, 'lam': 0.1, 'beta_inv': 0.01, 'horizon': 5.0})

        with open(config_file, 'w') as f:
            yaml.dump(config, f, default_flow_style=False, sort_keys=False)

        print(f"✅ Initialized heavyfield experiment: {config_file}")
        print(f"Edit the configuration and run 'heavyfield {experiment} --config {config_file}'")
