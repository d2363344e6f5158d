import configparser
import hashlib
import json
import os
import subprocess
from dataclasses import dataclass, field, fields, asdict
from typing import List

from sfmpy import __version__
from sfmpy.base_features import FEATURE_KINDS
from sfmpy.mdp_core import ENVIRONMENT_NAMES, DEMO_LENGTH
from sfmpy.policy_opt import ACTOR_KINDS
from sfmpy.sf_estimator import SF_MODES
from sfmpy.trainer import ALGORITHMS, BC_EPOCHS, BC_LEARNING_RATE


class ConfigError(ValueError):
    """Unknown key, bad type, out-of-range value or unusable demonstration file."""
    pass


@dataclass
class ExperimentSection:
    env: str = 'gridworld'
    algo: str = 'sfm'
    seeds: List[int] = field(default_factory=lambda: [0])
    steps: int = 60000
    warmup_steps: int = 1000
    eval_interval: int = 2000
    eval_episodes: int = 10
    checkpoint_episodes: int = 1
    gamma: float = 0.99


@dataclass
class EnvSection:
    noise_std: float = 0.0


@dataclass
class FeaturesSection:
    kind: str = 'fdm'
    dim: int = 32
    hidden: int = 64
    learning_rate: float = 5e-4
    expectile: float = 0.9
    polyak: float = 0.995
    adversarial_lr_scale: float = 0.2


@dataclass
class DemosSection:
    path: str = ''
    count: int = 1
    length: int = DEMO_LENGTH
    state_only: bool = True


@dataclass
class ActorSection:
    kind: str = 'deterministic'
    hidden: int = 64
    learning_rate: float = 5e-4
    exploration_noise: float = 0.1
    entropy_coeff: float = 1e-3


@dataclass
class SfSection:
    mode: str = 'td7'
    hidden: int = 64
    learning_rate: float = 5e-4
    target_noise: float = 0.2
    target_noise_clip: float = 0.5
    update_interval: int = 250
    polyak: float = 0.995


@dataclass
class WitnessSection:
    normalize: bool = False
    bound: float = 1.0
    ema_rate: float = 0.01


@dataclass
class BufferSection:
    capacity: int = 100000
    batch_size: int = 256


@dataclass
class BcSection:
    epochs: int = BC_EPOCHS
    learning_rate: float = BC_LEARNING_RATE


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    env: EnvSection = field(default_factory=EnvSection)
    features: FeaturesSection = field(default_factory=FeaturesSection)
    demos: DemosSection = field(default_factory=DemosSection)
    actor: ActorSection = field(default_factory=ActorSection)
    sf: SfSection = field(default_factory=SfSection)
    witness: WitnessSection = field(default_factory=WitnessSection)
    buffer: BufferSection = field(default_factory=BufferSection)
    bc: BcSection = field(default_factory=BcSection)


SECTION_NAMES = [f.name for f in fields(ExperimentConfig)]

_CHOICES = {'experiment.env': ENVIRONMENT_NAMES,
            'experiment.algo': ALGORITHMS,
            'features.kind': FEATURE_KINDS,
            'actor.kind': ACTOR_KINDS,
            'sf.mode': SF_MODES}

# (low, high, low inclusive, high inclusive); None leaves a side open
_BOUNDS = {'experiment.steps': (0, None, True, False),
           'experiment.warmup_steps': (0, None, True, False),
           'experiment.eval_interval': (1, None, True, False),
           'experiment.eval_episodes': (1, None, True, False),
           'experiment.checkpoint_episodes': (1, None, True, False),
           'experiment.gamma': (0, 1, True, False),
           'env.noise_std': (0, None, True, False),
           'features.dim': (1, None, True, False),
           'features.hidden': (1, None, True, False),
           'features.learning_rate': (0, None, True, False),
           'features.expectile': (0, 1, False, False),
           'features.polyak': (0, 1, True, False),
           'features.adversarial_lr_scale': (0, 1, False, True),
           'demos.count': (1, None, True, False),
           'demos.length': (1, None, True, False),
           'actor.hidden': (1, None, True, False),
           'actor.learning_rate': (0, None, True, False),
           'actor.exploration_noise': (0, None, True, False),
           'actor.entropy_coeff': (0, None, True, False),
           'sf.hidden': (1, None, True, False),
           'sf.learning_rate': (0, None, True, False),
           'sf.target_noise': (0, None, True, False),
           'sf.target_noise_clip': (0, None, True, False),
           'sf.update_interval': (1, None, True, False),
           'sf.polyak': (0, 1, True, False),
           'witness.bound': (0, None, False, False),
           'witness.ema_rate': (0, 1, False, True),
           'buffer.capacity': (1, None, True, False),
           'buffer.batch_size': (1, None, True, False),
           'bc.epochs': (0, None, True, False),
           'bc.learning_rate': (0, None, False, False)}


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def config_keys() -> List[str]:
    config = default_config()
    return [f'{section}.{f.name}' for section in SECTION_NAMES for f in fields(getattr(config, section))]


def _split_key(dotted_key: str):
    if dotted_key not in config_keys():
        raise ConfigError(f'Unknown config key: {dotted_key}')
    return dotted_key.split('.', 1)


def get_value(config: ExperimentConfig, dotted_key: str):
    section, name = _split_key(dotted_key)
    return getattr(getattr(config, section), name)


def _parse_bool(text: str, dotted_key: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ['true', 'yes', '1', 'on']:
        return True
    if lowered in ['false', 'no', '0', 'off']:
        return False
    raise ConfigError(f'{dotted_key} expects a boolean, got "{text}"')


def _coerce(dotted_key: str, value, template):
    """Convert a file string or JSON value to the type of the default."""
    try:
        if isinstance(template, bool):
            if isinstance(value, bool):
                return value
            if isinstance(value, str):
                return _parse_bool(value, dotted_key)
            raise ConfigError(f'{dotted_key} expects a boolean, got {value!r}')
        if isinstance(template, list):
            if isinstance(value, str):
                items = [v.strip() for v in value.split(',') if v.strip() != '']
            elif isinstance(value, (list, tuple)):
                items = list(value)
            else:
                items = [value]
            parsed = []
            for item in items:
                if isinstance(item, float) and not item.is_integer():
                    raise ConfigError(f'{dotted_key} expects integers, got {item!r}')
                parsed.append(int(item))
            return parsed
        if isinstance(template, int):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ConfigError(f'{dotted_key} expects an integer, got {value!r}')
            return int(value)
        if isinstance(template, float):
            if isinstance(value, bool):
                raise ConfigError(f'{dotted_key} expects a number, got {value!r}')
            return float(value)
        if not isinstance(value, str):
            raise ConfigError(f'{dotted_key} expects text, got {value!r}')
        return value.strip()
    except (TypeError, ValueError) as error:
        if isinstance(error, ConfigError):
            raise
        raise ConfigError(f'Cannot read {dotted_key} from {value!r}: {error}')


def set_value(config: ExperimentConfig, dotted_key: str, value):
    section, name = _split_key(dotted_key)
    target = getattr(config, section)
    setattr(target, name, _coerce(dotted_key, value, getattr(getattr(default_config(), section), name)))


def _check_bound(dotted_key: str, value):
    low, high, low_inclusive, high_inclusive = _BOUNDS[dotted_key]
    if value != value:
        raise ConfigError(f'{dotted_key} is NaN')
    too_low = low is not None and (value < low if low_inclusive else value <= low)
    too_high = high is not None and (value > high if high_inclusive else value >= high)
    if too_low or too_high:
        left = '[' if low_inclusive else '('
        right = ']' if high_inclusive else ')'
        raise ConfigError(f'{dotted_key} = {value} is outside {left}{low}, {"inf" if high is None else high}{right}')


def validate_config(config: ExperimentConfig) -> ExperimentConfig:
    for dotted_key, choices in _CHOICES.items():
        value = get_value(config, dotted_key)
        if value not in choices:
            raise ConfigError(f'{dotted_key} = {value} is not one of {choices}')
    for dotted_key in _BOUNDS:
        _check_bound(dotted_key, get_value(config, dotted_key))
    seeds = config.experiment.seeds
    if len(seeds) == 0:
        raise ConfigError('experiment.seeds needs at least one seed')
    if any(s < 0 for s in seeds):
        raise ConfigError(f'experiment.seeds must be non-negative, got {seeds}')
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f'experiment.seeds contains duplicates: {seeds}')
    if config.env.noise_std > 0 and config.experiment.env != 'pointmass':
        raise ConfigError(f'env.noise_std only applies to pointmass, not {config.experiment.env}')
    if config.demos.path and not os.path.isfile(config.demos.path):
        raise ConfigError(f'Demonstration file not found: {config.demos.path}')
    return config


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as error:
        raise ConfigError(f'Malformed config: {error}')
    config = default_config()
    for section in parser.sections():
        if section not in SECTION_NAMES:
            raise ConfigError(f'Unknown config section: [{section}]')
        for name, value in parser.items(section):
            set_value(config, f'{section}.{name}', value)
    return config


def load_config(path: str, overrides=None) -> ExperimentConfig:
    if not os.path.isfile(path):
        raise ConfigError(f'Config file not found: {path}')
    with open(path, 'r', encoding='utf8') as f:
        config = parse_config_text(f.read())
    if overrides:
        apply_overrides(config, overrides)
    return validate_config(config)


def apply_overrides(config: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply a JSON object (or dict) of dotted keys, e.g. '{"features.kind": "ae", "experiment.steps": 500}'."""
    if isinstance(overrides, str):
        try:
            overrides = json.loads(overrides)
        except json.JSONDecodeError as error:
            raise ConfigError(f'Override is not valid JSON: {error}')
    if not isinstance(overrides, dict):
        raise ConfigError('Overrides must be a JSON object of dotted keys')
    for dotted_key, value in overrides.items():
        set_value(config, dotted_key, value)
    return config


def _format_value(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, list):
        return ','.join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config: ExperimentConfig) -> str:
    lines = []
    for section in SECTION_NAMES:
        lines.append(f'[{section}]')
        for f in fields(getattr(config, section)):
            lines.append(f'{f.name} = {_format_value(getattr(getattr(config, section), f.name))}')
        lines.append('')
    return '\n'.join(lines)


def save_config(config: ExperimentConfig, path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf8') as f:
        f.write(serialize_config(config))


def config_to_dict(config: ExperimentConfig) -> dict:
    nested = asdict(config)
    return {f'{section}.{name}': value for section in SECTION_NAMES for name, value in nested[section].items()}


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode('utf8')).hexdigest()


def copy_config(config: ExperimentConfig) -> ExperimentConfig:
    return parse_config_text(serialize_config(config))


def version_string() -> str:
    """git describe of the working tree when available, else the package version."""
    try:
        described = subprocess.run(['git', 'describe', '--tags', '--always', '--dirty'], capture_output=True, text=True,
                                   cwd=os.path.dirname(os.path.abspath(__file__)), timeout=5)
        if described.returncode == 0 and described.stdout.strip():
            return described.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f'v{__version__}'


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    started: str
    finished: str = None
    outputs: dict = field(default_factory=dict)
    version: str = field(default_factory=version_string)

    def write(self, path: str):
        with open(path, 'w', encoding='utf8') as f:
            json.dump(asdict(self), f, indent=2)


def read_manifest(path: str) -> RunManifest:
    with open(path, 'r', encoding='utf8') as f:
        return RunManifest(**json.load(f))
