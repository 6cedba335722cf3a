"""
Sensitivity of TKAE accuracy and reconstruction MSE to the alignment weight (with lambda = 0)
or to the L2 weight (with alpha = 0.5), at 80% missing values on the 9-class synthetic set.
"""
import argparse
from dataclasses import replace
from pathlib import Path

from loguru import logger

from src.config import ExperimentConfig
from src.evaluation import MetricReport
from src.pipeline import classify_run, fit_kernel, prepare
from src.utils import ConfigError, setup_logging

GRIDS = {
    'alignment': (0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0),
    'l2': (0.0, 0.0001, 0.001, 0.01, 0.1),
}
FIXED = {'alignment': {'l2': 0.0}, 'l2': {'alignment': 0.5}}


class ProgramArguments(object):
    def __init__(self):
        self.param = None
        self.epochs = None
        self.runs = None
        self.seed = None


def main():
    args = parse_args()
    setup_logging()

    param = 'alignment' if args.param is None else args.param
    if param not in GRIDS:
        raise ConfigError(f'unknown parameter {param!r}, expected alignment or l2')
    epochs = 500 if args.epochs is None else int(args.epochs)
    runs = 5 if args.runs is None else int(args.runs)
    seed = 0 if args.seed is None else int(args.seed)

    results_path = Path('./results/', f'sensitivity_{param}')
    results_path.mkdir(parents=True, exist_ok=True)

    base = ExperimentConfig(source='classes', n_variates=12, n_train=270, n_test=370, code_size=10,
                            epochs=epochs, missing_rate=0.8, model='tkae', seed=seed, **FIXED[param])
    data = prepare(base)
    kernel = fit_kernel(base, data)
    for value in GRIDS[param]:
        cfg = replace(base, **{param: value})
        report = MetricReport(config={param: str(value)})
        for i in range(runs):
            acc, mse = classify_run(cfg, data, seed + i, kernel)
            logger.info(f'{param}={value}, run {i}: accuracy {acc:.4f}, MSE {mse:.4f}')
            report.add_run(seed + i, {'accuracy': acc, 'mse': mse})
        report.to_json(results_path / f'{param}_{value}.json')


def parse_args():
    parser = argparse.ArgumentParser(description="Sweep the alignment or the L2 weight of the TKAE.")
    parser.add_argument("--param", help="Parameter to sweep, 'alignment' or 'l2'. Default: 'alignment'.")
    parser.add_argument("--epochs", help="Training epochs. Default: 500.")
    parser.add_argument("--runs", help="Number of independent runs per value. Default: 5.")
    parser.add_argument("--seed", help="Seed of the dataset and of the first run. Default: 0.")

    program_arguments = ProgramArguments()
    parser.parse_args(namespace=program_arguments)

    return program_arguments


if __name__ == '__main__':
    main()
