"""Command-line entry point: ``tkae {gen,tck,train,impute,oneclass,classify}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from loguru import logger

from src.config import load_config, write_effective_config
from src.evaluation import (MetricReport, accuracy, alignment_gap, export_pca_projection, f1_score,
                            imputation_score, knn_classify, roc_auc)
from src.get_data import save_csv
from src.models import TkaeModel
from src.np_implementation.tck import build_kernel
from src.pipeline import (compare_imputers, dataset_mse, fit_model, generate, oneclass_splits, prepare,
                          representations, require_kernel, sample_errors, tck_config)
from src.serialization import (save_kernel, save_kernel_csv, save_loss_trace, save_model,
                               save_representations)
from src.utils import ConfigError, DataError, NumericError, setup_logging

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ProgramArguments(object):
    def __init__(self):
        self.command = None
        self.config = None
        self.seed = None
        self.out = None
        self.epochs = None
        self.runs = None


def _setup(args):
    cfg = load_config(args.config, seed=args.seed, out=args.out, epochs=args.epochs, n_runs=args.runs)
    out = Path(cfg.out)
    write_effective_config(cfg, out)
    logger.info(f'{args.command}: writing to {out}')
    return cfg, out


def _write_report(report: MetricReport, out, name='report'):
    report.to_json(out / f'{name}.json')
    report.to_csv(out / f'{name}.csv')
    for metric, s in sorted(report.summary().items()):
        logger.info(f'{metric}: {s["mean"]:.6f} +- {s["std"]:.6f} over {len(s["runs"])} runs')


def _complete(ds):
    """Mark every cell observed so ``save_csv`` writes the filled-in values."""
    return ds.with_samples(replace(s, mask=np.ones_like(s.mask)) for s in ds)


def cmd_gen(args):
    cfg, out = _setup(args)
    train, test = generate(cfg)
    save_csv(train, out / 'train.csv')
    save_csv(test, out / 'test.csv')
    logger.info(f'wrote {len(train)} train and {len(test)} test samples')


def cmd_tck(args):
    cfg, out = _setup(args)
    data = prepare(cfg)
    model, kernel = build_kernel(data.train_observed, tck_config(cfg, data.train_observed), seed=cfg.seed)
    save_kernel(kernel, out / 'kernel.bin')
    save_kernel_csv(kernel, out / 'kernel.csv')
    save_model(model, out / 'tck_model.bin')
    logger.info(f'kernel {kernel.values.shape}, min eigenvalue {kernel.min_eigenvalue():.3e}')


def cmd_train(args):
    cfg, out = _setup(args)
    kernel = require_kernel(cfg)
    data = prepare(cfg)
    report = MetricReport(config={'model': cfg.model, 'source': cfg.source})
    for i in range(cfg.n_runs):
        seed = cfg.seed + i
        model, history = fit_model(cfg, data.train, data.t_pad, seed, kernel)
        save_model(model, out / f'model_{i}.bin')
        save_loss_trace(history, out / f'loss_{i}.csv')
        metrics = {'test_mse': dataset_mse(model, data.test), 'train_mse': dataset_mse(model, data.train)}
        if history:
            metrics['final_loss'] = history[-1]
        if kernel is not None and isinstance(model, TkaeModel):
            z = representations(model, data.train, data.t_pad)
            metrics['train_alignment_gap'] = alignment_gap(z, kernel.block(kernel.index_of(data.train.ids)))
        save_representations(representations(model, data.test, data.t_pad), data.test.ids,
                             out / f'representations_{i}.csv')
        report.add_run(seed, metrics)
    _write_report(report, out)


def cmd_impute(args):
    cfg, out = _setup(args)
    if cfg.missing_rate == 0:
        logger.warning('missing_rate is 0: every imputer scores on an empty set of cells')
    data = prepare(replace(cfg, impute='zero'))
    kernel = require_kernel(replace(cfg, model=cfg.model if cfg.is_recurrent else 'tkae'))
    report = MetricReport(config={'missing_rate': str(cfg.missing_rate), 'source': cfg.source})
    for i in range(cfg.n_runs):
        seed = cfg.seed + i
        metrics = {}
        for name, imputed in compare_imputers(cfg, data, seed, kernel).items():
            mse, corr = imputation_score(data.test_clean, imputed, data.test_record)
            metrics[f'{name}_mse'], metrics[f'{name}_corr'] = mse, corr
            if i == 0:
                save_csv(_complete(imputed), out / f'imputed_{name}.csv')
        report.add_run(seed, metrics)
    _write_report(report, out)


def cmd_oneclass(args):
    cfg, out = _setup(args)
    kernel = require_kernel(cfg)
    data = prepare(cfg, oneclass_splits(cfg))
    labels = np.array(data.test.labels)
    report = MetricReport(config={'model': cfg.model, 'source': cfg.source})
    for i in range(cfg.n_runs):
        seed = cfg.seed + i
        model, _ = fit_model(cfg, data.train, data.t_pad, seed, kernel)
        scores = sample_errors(model, data.test)
        np.savetxt(out / f'scores_{i}.csv', np.column_stack([scores, labels]), delimiter=',',
                   header='score,label', comments='', fmt=['%.17g', '%d'])
        report.add_run(seed, {'auc': roc_auc(scores, labels)})
    _write_report(report, out)


def cmd_classify(args):
    cfg, out = _setup(args)
    kernel = require_kernel(cfg)
    data = prepare(cfg)
    if not (data.train.has_labels and data.test.has_labels):
        raise DataError('classification needs labeled train and test splits')
    report = MetricReport(config={'model': cfg.model, 'source': cfg.source})
    for i in range(cfg.n_runs):
        seed = cfg.seed + i
        model, _ = fit_model(cfg, data.train, data.t_pad, seed, kernel)
        z_train = representations(model, data.train, data.t_pad)
        z_test = representations(model, data.test, data.t_pad)
        predicted = knn_classify(z_train, data.train.labels, z_test, cfg.knn_k)
        save_representations(z_test, data.test.ids, out / f'representations_{i}.csv')
        if i == 0:
            export_pca_projection(z_test, data.test.ids, out / 'projection.csv', data.test.labels)
        report.add_run(seed, {'accuracy': accuracy(data.test.labels, predicted),
                              'f1': f1_score(data.test.labels, predicted)})
    _write_report(report, out)


COMMANDS = {
    'gen': cmd_gen,
    'tck': cmd_tck,
    'train': cmd_train,
    'impute': cmd_impute,
    'oneclass': cmd_oneclass,
    'classify': cmd_classify,
}


def parse_args(argv=None):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to a key = value experiment config. Default: built-in defaults.")
    common.add_argument("--seed", type=int, help="Base seed; run i uses seed + i. Overrides the config.")
    common.add_argument("--out", help="Output directory. Overrides the config.")
    common.add_argument("--epochs", type=int, help="Training epochs. Overrides the config.")
    common.add_argument("--runs", type=int, help="Number of independent runs. Overrides the config.")
    parser = argparse.ArgumentParser(prog='tkae', description="Temporal kernelized autoencoder experiments. "
                                                              "Log verbosity is read from TKAE_LOG_LEVEL.")
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('gen', parents=[common], help="Generate a synthetic dataset as CSV.")
    sub.add_parser('tck', parents=[common], help="Build the TCK prior kernel on the training split.")
    sub.add_parser('train', parents=[common], help="Train the configured model over n_runs seeds.")
    sub.add_parser('impute', parents=[common], help="Compare mean/LOCF/DAE/TKAE imputation.")
    sub.add_parser('oneclass', parents=[common], help="One-class classification by reconstruction error.")
    sub.add_parser('classify', parents=[common], help="kNN classification of learned representations.")

    program_arguments = ProgramArguments()
    parser.parse_args(argv, namespace=program_arguments)
    return program_arguments


def main(argv=None):
    setup_logging()
    args = parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as err:
        logger.error(f'configuration error: {err}')
        return EXIT_CONFIG
    except DataError as err:
        logger.error(f'data error: {err}')
        return EXIT_DATA
    except NumericError as err:
        logger.error(f'numeric failure: {err}')
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
