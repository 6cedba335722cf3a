"""
Reconstruction MSE of PCA, a dense AE and the TAE on random sinusoids (D_z = 5).
"""
import argparse
from dataclasses import replace
from pathlib import Path

from loguru import logger

from src.config import ExperimentConfig
from src.evaluation import MetricReport
from src.pipeline import dataset_mse, fit_model, prepare
from src.utils import setup_logging


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

    results_path = Path('./results/', 'sines')
    results_path.mkdir(parents=True, exist_ok=True)

    cfg = ExperimentConfig(source='sines', n_train=200, n_test=1000, length=100, code_size=5,
                           epochs=epochs, alignment=0.0, l2=0.0, seed=seed)
    data = prepare(cfg)
    report = MetricReport(config={'source': 'sines', 'epochs': str(epochs)})
    for i in range(runs):
        metrics = {}
        for kind in ('pca', 'ffae', 'tae'):
            model, _ = fit_model(replace(cfg, model=kind), data.train, data.t_pad, seed + i)
            metrics[f'{kind}_mse'] = dataset_mse(model, data.test)
            logger.info(f'run {i}, {kind}: test MSE {metrics[f"{kind}_mse"]:.4f}')
        report.add_run(seed + i, metrics)
    report.to_json(results_path / 'report.json')
    report.to_csv(results_path / 'report.csv')


def parse_args():
    parser = argparse.ArgumentParser(description="Compare PCA, AE and TAE reconstructions of sinusoids.")
    parser.add_argument("--epochs", help="Training epochs for the AE and TAE. Default: 500.")
    parser.add_argument("--runs", help="Number of independent runs. Default: 1.")
    parser.add_argument("--seed", help="Seed of the dataset and of the first run. Default: 0.")

    program_arguments = ProgramArguments()
    parser.parse_args(namespace=program_arguments)

    return program_arguments


if __name__ == '__main__':
    main()
