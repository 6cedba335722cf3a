import pytest

from src.config import ExperimentConfig, format_config, load_config, parse_config, write_effective_config
from src.pipeline import tck_config
from src.utils import ConfigError
from tests.conftest import make_dataset


def test_defaults():
    cfg = load_config()
    assert cfg.model == 'tkae' and cfg.epochs == 500 and cfg.bidirectional is True
    assert cfg.length_range is None


def test_parse_with_comments_and_bools():
    cfg = parse_config('# experiment\nmodel = tae\nbidirectional = no  # single pass\n\nl2 = 0.01\n')
    assert cfg.model == 'tae' and cfg.bidirectional is False and cfg.l2 == 0.01


def test_overrides_win_and_none_is_ignored():
    cfg = parse_config('seed = 3\nepochs = 10\n', seed=7, epochs=None)
    assert cfg.seed == 7 and cfg.epochs == 10


@pytest.mark.parametrize('text', ['unknown = 1', 'epochs = ten', 'bidirectional = maybe', 'epochs 10',
                                  'model = lstm', 'missing_rate = 1.5', 'length_min = 5',
                                  'impute = median'])
def test_invalid_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / 'nope.cfg')


def test_resolved_model_kinds():
    assert ExperimentConfig(model='tae', alignment=0.5).resolved().alignment == 0.0
    enc = ExperimentConfig(model='encdec-ad', n_layers=3).resolved()
    assert (enc.alignment, enc.bidirectional, enc.n_layers) == (0.0, False, 1)
    assert ExperimentConfig(model='tkae', alignment=0.5).resolved().alignment == 0.5
    assert ExperimentConfig(model='encdec-ad', sampling_prob=0.5).resolved().sampling_prob == 0.5


def test_effective_config_is_sorted_and_reloadable(tmp_path):
    cfg = ExperimentConfig(model='dae', tied_weights=True, length_min=5, length_max=9)
    path = write_effective_config(cfg, tmp_path / 'out')
    lines = path.read_text().splitlines()
    assert lines == sorted(lines)
    assert 'tied_weights = true' in lines
    assert load_config(path) == cfg
    assert format_config(cfg) == path.read_text()


def test_tck_settings_reach_the_ensemble():
    cfg = parse_config('tck_q = 4\ntck_c = 3\ntck_n_jobs = 2\ntck_t_min = 50\n')
    tck = tck_config(cfg, make_dataset(n=3, v=2, lengths=(8,)))
    assert (tck.n_init, tck.max_components, tck.n_jobs) == (4, 3, 2)
    assert tck.t_min == 8 and tck.v_min == 2
