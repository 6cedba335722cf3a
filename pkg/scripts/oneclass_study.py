"""
One-class classification by reconstruction error: models are trained on trajectories of one ODE
system and score a test set mixing them with trajectories of a differently seeded system.
"""
import argparse
from dataclasses import replace
from pathlib import Path

from loguru import logger

from src.config import ExperimentConfig
from src.evaluation import MetricReport, roc_auc
from src.pipeline import fit_kernel, fit_model, oneclass_splits, prepare, sample_errors
from src.utils import setup_logging

KINDS = ('tkae', 'tae', 'encdec-ad', 'ffae', 'pca')


class ProgramArguments(object):
    def __init__(self):
        self.epochs = None
        self.runs = None
        self.seed = None


def main():
    args = parse_args()
    setup_logging()

    epochs = 500 if args.epochs is None else int(args.epochs)
    runs = 1 if args.runs is None else int(args.runs)
    seed = 0 if args.seed is None else int(args.seed)

    results_path = Path('./results/', 'oneclass')
    results_path.mkdir(parents=True, exist_ok=True)

    cfg = ExperimentConfig(source='odefix', n_variates=5, length=50, n_train=200, n_test=200,
                           code_size=5, epochs=epochs, seed=seed)
    data = prepare(cfg, oneclass_splits(cfg))
    kernel = fit_kernel(cfg, data)
    labels = data.test.labels
    report = MetricReport(config={'source': cfg.source, 'epochs': str(epochs)})
    for i in range(runs):
        metrics = {}
        for kind in KINDS:
            model, _ = fit_model(replace(cfg, model=kind), data.train, data.t_pad, seed + i, kernel)
            metrics[f'{kind}_auc'] = roc_auc(sample_errors(model, data.test), labels)
        untrained, _ = fit_model(replace(cfg, epochs=0), data.train, data.t_pad, seed + i, kernel)
        metrics['untrained_auc'] = roc_auc(sample_errors(untrained, data.test), labels)
        logger.info(f'run {i}: ' + ', '.join(f'{k}={v:.4f}' for k, v in metrics.items()))
        report.add_run(seed + i, metrics)
    report.to_json(results_path / 'report.json')
    report.to_csv(results_path / 'report.csv')


def parse_args():
    parser = argparse.ArgumentParser(description="AUC of reconstruction-error anomaly scores.")
    parser.add_argument("--epochs", help="Training epochs. Default: 500.")
    parser.add_argument("--runs", help="Number of independent runs. Default: 1.")
    parser.add_argument("--seed", help="Seed of the nominal system and of the first run. Default: 0.")

    program_arguments = ProgramArguments()
    parser.parse_args(namespace=program_arguments)

    return program_arguments


if __name__ == '__main__':
    main()
