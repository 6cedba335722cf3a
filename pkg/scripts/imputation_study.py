"""
Imputation MSE and CORR of mean, LOCF, DAE and TKAE imputers on the sine and ODE sets with
about half of the values removed.
"""
import argparse
from dataclasses import replace
from pathlib import Path

from loguru import logger

from src.config import ExperimentConfig
from src.evaluation import MetricReport, imputation_score
from src.pipeline import compare_imputers, fit_kernel, prepare
from src.utils import setup_logging

DATASETS = {
    'sines': {'source': 'sines', 'n_train': 200, 'n_test': 200, 'length': 100},
    'ode': {'source': 'odefix', 'n_train': 200, 'n_test': 200, 'length': 50, 'n_variates': 5},
}


class ProgramArguments(object):
    def __init__(self):
        self.epochs = None
        self.runs = None
        self.seed = None
        self.missing_rate = None


def main():
    args = parse_args()
    setup_logging()

    epochs = 500 if args.epochs is None else int(args.epochs)
    runs = 1 if args.runs is None else int(args.runs)
    seed = 0 if args.seed is None else int(args.seed)
    missing_rate = 0.5 if args.missing_rate is None else float(args.missing_rate)

    results_path = Path('./results/', 'imputation')
    results_path.mkdir(parents=True, exist_ok=True)

    for name, overrides in DATASETS.items():
        cfg = ExperimentConfig(model='tkae', code_size=5, epochs=epochs, missing_rate=missing_rate,
                               corruption=0.5, seed=seed, **overrides)
        data = prepare(replace(cfg, impute='zero'))
        kernel = fit_kernel(cfg, data)
        report = MetricReport(config={'dataset': name, 'missing_rate': str(missing_rate)})
        for i in range(runs):
            metrics = {}
            for imputer, imputed in compare_imputers(cfg, data, seed + i, kernel).items():
                mse, corr = imputation_score(data.test_clean, imputed, data.test_record)
                metrics[f'{imputer}_mse'], metrics[f'{imputer}_corr'] = mse, corr
            logger.info(f'{name}, run {i}: ' + ', '.join(f'{k}={v:.4f}' for k, v in metrics.items()))
            report.add_run(seed + i, metrics)
        report.to_json(results_path / f'{name}.json')
        report.to_csv(results_path / f'{name}.csv')


def parse_args():
    parser = argparse.ArgumentParser(description="Compare imputers on data with injected missing values.")
    parser.add_argument("--epochs", help="Training epochs of the DAE and TKAE. Default: 500.")
    parser.add_argument("--runs", help="Number of independent runs. Default: 1.")
    parser.add_argument("--seed", help="Seed of the dataset and of the first run. Default: 0.")
    parser.add_argument("--missing_rate", help="Share of values removed from every sample. Default: 0.5.")

    program_arguments = ProgramArguments()
    parser.parse_args(namespace=program_arguments)

    return program_arguments


if __name__ == '__main__':
    main()
