import numpy as np
import pytest
import torch

from src.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from src.config import load_config
from src.get_data import load_csv
from src.models import TkaeModel
from src.pipeline import build_model
from src.serialization import load_kernel, load_model

ODE = """
source = odefix
n_variates = 2
length = 8
n_train = 6
n_test = 4
code_size = 2
batch_size = 4
epochs = 2
tck_q = 1
tck_c = 2
"""


def _config(tmp_path, text, name='exp.cfg'):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _run(*argv):
    return main([str(a) for a in argv])


def test_gen_writes_requested_counts(tmp_path):
    cfg = _config(tmp_path, 'source = sines\nn_train = 3\nn_test = 2\nlength = 10\n')
    assert _run('gen', '--config', cfg, '--out', tmp_path / 'data') == EXIT_OK
    train = load_csv(tmp_path / 'data' / 'train.csv')
    test = load_csv(tmp_path / 'data' / 'test.csv')
    assert len(train) == 3 and len(test) == 2 and train.t_max == 10
    assert (tmp_path / 'data' / 'effective_config.txt').is_file()


def test_tck_then_train_tkae(tmp_path):
    cfg = _config(tmp_path, ODE + 'missing_rate = 0.2\n')
    assert _run('tck', '--config', cfg, '--out', tmp_path / 'tck') == EXIT_OK
    kernel = load_kernel(tmp_path / 'tck' / 'kernel.bin')
    assert kernel.values.shape == (6, 6)
    assert (tmp_path / 'tck' / 'kernel.csv').is_file()
    assert (tmp_path / 'tck' / 'tck_model.bin').is_file()

    cfg = _config(tmp_path, ODE + 'missing_rate = 0.2\nkernel = ' + str(tmp_path / 'tck' / 'kernel.csv') + '\n',
                  'train.cfg')
    assert _run('train', '--config', cfg, '--out', tmp_path / 'run', '--runs', 2) == EXIT_OK
    for i in range(2):
        assert isinstance(load_model(tmp_path / 'run' / f'model_{i}.bin'), TkaeModel)
        assert len((tmp_path / 'run' / f'loss_{i}.csv').read_text().splitlines()) == 3
        assert len((tmp_path / 'run' / f'representations_{i}.csv').read_text().splitlines()) == 5
    assert (tmp_path / 'run' / 'report.json').is_file()


def test_train_is_deterministic(tmp_path):
    cfg = _config(tmp_path, ODE + 'model = tae\nsampling_prob = 0.5\n')
    assert _run('train', '--config', cfg, '--out', tmp_path / 'a') == EXIT_OK
    assert _run('train', '--config', cfg, '--out', tmp_path / 'b') == EXIT_OK
    assert (tmp_path / 'a' / 'loss_0.csv').read_text() == (tmp_path / 'b' / 'loss_0.csv').read_text()


def test_zero_epochs_saves_initial_weights(tmp_path):
    cfg = _config(tmp_path, ODE + 'model = tae\n')
    assert _run('train', '--config', cfg, '--out', tmp_path / 'r', '--epochs', 0, '--seed', 5) == EXIT_OK
    loaded = load_model(tmp_path / 'r' / 'model_0.bin')
    fresh = build_model(load_config(cfg, seed=5), 2, 8, 5)
    for (_, p), (_, q) in zip(loaded.named_parameters(), fresh.named_parameters()):
        assert torch.equal(p, q)


def test_alignment_without_kernel_is_config_error(tmp_path):
    cfg = _config(tmp_path, ODE)
    assert _run('train', '--config', cfg, '--out', tmp_path / 'r') == EXIT_CONFIG


def test_unknown_key_is_config_error(tmp_path):
    cfg = _config(tmp_path, 'colour = blue\n')
    assert _run('gen', '--config', cfg, '--out', tmp_path / 'r') == EXIT_CONFIG


def test_missing_dataset_dir_is_data_error(tmp_path):
    cfg = _config(tmp_path, f'source = {tmp_path / "absent"}\nmodel = pca\n')
    assert _run('train', '--config', cfg, '--out', tmp_path / 'r') == EXIT_DATA


def test_train_from_dataset_directory(tmp_path):
    cfg = _config(tmp_path, ODE)
    assert _run('gen', '--config', cfg, '--out', tmp_path / 'data') == EXIT_OK
    cfg = _config(tmp_path, f'source = {tmp_path / "data"}\nmodel = pca\ncode_size = 2\n', 'pca.cfg')
    assert _run('train', '--config', cfg, '--out', tmp_path / 'r') == EXIT_OK
    assert load_model(tmp_path / 'r' / 'model_0.bin').n_components == 2


def test_impute_scores_every_imputer(tmp_path):
    cfg = _config(tmp_path, ODE + 'model = tae\nmissing_rate = 0.3\n')
    assert _run('impute', '--config', cfg, '--out', tmp_path / 'r') == EXIT_OK
    for name in ('mean', 'locf', 'dae', 'tae'):
        imputed = load_csv(tmp_path / 'r' / f'imputed_{name}.csv')
        assert imputed.is_complete and len(imputed) == 4
    text = (tmp_path / 'r' / 'report.csv').read_text()
    assert 'locf_mse' in text and 'tae_corr' in text


def test_oneclass_writes_scores_and_auc(tmp_path):
    cfg = _config(tmp_path, ODE + 'model = pca\n')
    assert _run('oneclass', '--config', cfg, '--out', tmp_path / 'r') == EXIT_OK
    scores = np.loadtxt(tmp_path / 'r' / 'scores_0.csv', delimiter=',', skiprows=1)
    assert scores.shape == (4, 2)
    assert sorted(scores[:, 1].tolist()) == [0.0, 0.0, 1.0, 1.0]
    assert 'auc' in (tmp_path / 'r' / 'report.json').read_text()


def test_classify_reports_accuracy(tmp_path):
    cfg = _config(tmp_path, 'source = classes\nn_classes = 2\nn_variates = 2\nn_train = 6\nn_test = 4\n'
                            'model = pca\ncode_size = 2\nknn_k = 1\n')
    assert _run('classify', '--config', cfg, '--out', tmp_path / 'r') == EXIT_OK
    lines = (tmp_path / 'r' / 'projection.csv').read_text().splitlines()
    assert lines[0] == 'sample_id,pc_1,pc_2,label' and len(lines) == 5
    assert 'accuracy' in (tmp_path / 'r' / 'report.json').read_text()


def test_classify_unlabeled_is_data_error(tmp_path):
    cfg = _config(tmp_path, ODE + 'model = pca\n')
    assert _run('classify', '--config', cfg, '--out', tmp_path / 'r') == EXIT_DATA


def test_missing_command_exits():
    with pytest.raises(SystemExit):
        main([])


def _same_outputs(a, b):
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        left, right = (a / name).read_bytes(), (b / name).read_bytes()
        if name == 'effective_config.txt':
            left, right = ([line for line in x.splitlines() if not line.startswith(b'out =')] for x in (left, right))
        assert left == right, name


def test_every_command_reruns_byte_identical(tmp_path):
    base = ODE + 'missing_rate = 0.2\n'
    cfg = _config(tmp_path, base)
    assert _run('tck', '--config', cfg, '--out', tmp_path / 'kernel') == EXIT_OK
    aligned = _config(tmp_path, base + f'kernel = {tmp_path / "kernel" / "kernel.bin"}\n', 'aligned.cfg')
    plain = _config(tmp_path, base + 'model = tae\n', 'plain.cfg')
    classes = _config(tmp_path, 'source = classes\nn_classes = 2\nn_variates = 2\nn_train = 6\nn_test = 4\n'
                                'model = tae\ncode_size = 2\nepochs = 2\nbatch_size = 4\nknn_k = 1\n', 'classes.cfg')
    runs = [('gen', cfg), ('tck', cfg), ('train', aligned), ('impute', plain), ('oneclass', plain),
            ('classify', classes)]
    for command, path in runs:
        for copy in ('a', 'b'):
            assert _run(command, '--config', path, '--out', tmp_path / copy / command) == EXIT_OK
        _same_outputs(tmp_path / 'a' / command, tmp_path / 'b' / command)
    assert (tmp_path / 'a' / 'train' / 'model_0.bin').is_file()
    assert (tmp_path / 'a' / 'tck' / 'tck_model.bin').is_file()
