"""
kNN accuracy and reconstruction MSE of TAE and TKAE representations as the share of missing
values grows, on the 9-class synthetic MTS set.
"""
import argparse
from dataclasses import replace
from pathlib import Path

from loguru import logger

from src.config import ExperimentConfig
from src.evaluation import MetricReport
from src.pipeline import classify_run, fit_kernel, prepare
from src.utils import setup_logging

RATES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


class ProgramArguments(object):
    def __init__(self):
        self.epochs = None
        self.runs = None
        self.seed = None
        self.alignment = None


def main():
    args = parse_args()
    setup_logging()

    epochs = 500 if args.epochs is None else int(args.epochs)
    runs = 5 if args.runs is None else int(args.runs)
    seed = 0 if args.seed is None else int(args.seed)
    alignment = 0.1 if args.alignment is None else float(args.alignment)

    results_path = Path('./results/', 'missingness')
    results_path.mkdir(parents=True, exist_ok=True)

    base = ExperimentConfig(source='classes', n_variates=12, n_train=270, n_test=370, code_size=10,
                            epochs=epochs, alignment=alignment, l2=0.001, seed=seed)
    for rate in RATES:
        cfg = replace(base, missing_rate=rate)
        data = prepare(cfg)
        kernel = fit_kernel(cfg, data)
        report = MetricReport(config={'missing_rate': str(rate), 'alignment': str(alignment)})
        for i in range(runs):
            metrics = {}
            for kind in ('tae', 'tkae'):
                acc, mse = classify_run(replace(cfg, model=kind), data, seed + i, kernel)
                metrics[f'{kind}_accuracy'], metrics[f'{kind}_mse'] = acc, mse
            logger.info(f'rate {rate}, run {i}: ' + ', '.join(f'{k}={v:.4f}' for k, v in metrics.items()))
            report.add_run(seed + i, metrics)
        report.to_json(results_path / f'rate_{int(round(rate * 100))}.json')


def parse_args():
    parser = argparse.ArgumentParser(description="TAE against TKAE for increasing shares of missing values.")
    parser.add_argument("--epochs", help="Training epochs. Default: 500.")
    parser.add_argument("--runs", help="Number of independent runs per rate. Default: 5.")
    parser.add_argument("--seed", help="Seed of the dataset and of the first run. Default: 0.")
    parser.add_argument("--alignment", help="Kernel alignment weight of the TKAE. Default: 0.1.")

    program_arguments = ProgramArguments()
    parser.parse_args(namespace=program_arguments)

    return program_arguments


if __name__ == '__main__':
    main()
