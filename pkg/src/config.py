"""Flat ``key = value`` experiment configuration."""
from dataclasses import dataclass, fields, replace
from pathlib import Path

from loguru import logger

from src.utils import ConfigError

GENERATED_SOURCES = ('sines', 'odefix', 'odevar', 'ode', 'classes')
MODEL_KINDS = ('tkae', 'tae', 'encdec-ad', 'ffae', 'dae', 'pca')
RECURRENT_KINDS = ('tkae', 'tae', 'encdec-ad')
TRUE_WORDS = ('true', '1', 'yes')
FALSE_WORDS = ('false', '0', 'no')


@dataclass
class ExperimentConfig:
    # data
    source: str = 'sines'
    n_train: int = 200
    n_test: int = 1000
    n_variates: int = 10
    length: int = 100
    length_min: int = 0
    length_max: int = 0
    n_classes: int = 9
    ode_step: float = 0.1
    anomaly_seed: int = -1
    anomaly_fraction: float = 0.5
    nominal_label: int = -1
    missing_rate: float = 0.0
    impute: str = 'zero'
    # model
    model: str = 'tkae'
    cell: str = 'lstm'
    n_layers: int = 1
    code_size: int = 5
    bidirectional: bool = True
    hidden_size: int = 30
    tied_weights: bool = False
    decoder_activation: str = 'sigmoid'
    encoder_activation: str = 'tanh'
    corruption: float = 0.5
    # training
    l2: float = 0.001
    alignment: float = 0.1
    sampling_prob: float = 1.0
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 500
    masked_loss: bool = False
    kernel: str = ''
    # kernel ensemble
    tck_q: int = 30
    tck_c: int = 10
    tck_n_min_frac: float = 0.8
    tck_t_min: int = 6
    tck_v_min: int = 2
    tck_max_iter: int = 20
    tck_n_jobs: int = 1
    # evaluation and runs
    knn_k: int = 3
    n_runs: int = 1
    seed: int = 0
    out: str = 'results'

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f'unknown model {self.model!r}, expected one of {MODEL_KINDS}')
        if self.impute not in ('zero', 'mean', 'locf'):
            raise ConfigError(f'unknown imputation {self.impute!r}')
        if not 0.0 <= self.missing_rate <= 1.0 or not 0.0 < self.anomaly_fraction < 1.0:
            raise ConfigError('missing_rate must lie in [0, 1] and anomaly_fraction in (0, 1)')
        if self.n_runs < 1:
            raise ConfigError('n_runs must be at least 1')
        if (self.length_min > 0) != (self.length_max > 0) or self.length_min > self.length_max:
            raise ConfigError(f'invalid length range [{self.length_min}, {self.length_max}]')

    @property
    def is_recurrent(self):
        return self.model in RECURRENT_KINDS

    @property
    def length_range(self):
        return (self.length_min, self.length_max) if self.length_max > 0 else None

    def resolved(self):
        """Apply the constraints implied by the model kind."""
        if self.model == 'tae':
            return replace(self, alignment=0.0)
        if self.model == 'encdec-ad':
            return replace(self, alignment=0.0, bidirectional=False, n_layers=1)
        return self


def _coerce(name, kind, text):
    try:
        if kind is bool:
            word = text.lower()
            if word in TRUE_WORDS:
                return True
            if word in FALSE_WORDS:
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f'{name}: cannot read {text!r} as {kind.__name__}') from None


def _types():
    return {f.name: f.type for f in fields(ExperimentConfig)}


def parse_config(text, source='<config>', **overrides):
    types = _types()
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        key = key.strip()
        if not sep:
            raise ConfigError(f'{source}:{lineno}: expected key = value')
        if key not in types:
            logger.error(f'{source}:{lineno}: unknown key {key!r}')
            raise ConfigError(f'{source}:{lineno}: unknown configuration key {key!r}')
        values[key] = _coerce(key, types[key], value.strip())
    values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(values) - set(types)
    if unknown:
        raise ConfigError(f'unknown configuration keys {sorted(unknown)}')
    return ExperimentConfig(**values)


def load_config(path=None, **overrides):
    """Config from ``path`` (defaults when None) with non-None ``overrides`` applied on top."""
    if path is None:
        return parse_config('', **overrides)
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'config file not found: {path}')
    return parse_config(path.read_text(encoding='utf-8'), str(path), **overrides)


def format_config(cfg: ExperimentConfig):
    def fmt(v):
        return str(v).lower() if isinstance(v, bool) else str(v)
    items = sorted((f.name, getattr(cfg, f.name)) for f in fields(cfg))
    return ''.join(f'{k} = {fmt(v)}\n' for k, v in items)


def write_effective_config(cfg: ExperimentConfig, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / 'effective_config.txt'
    path.write_text(format_config(cfg), encoding='utf-8')
    return path
