"""
Reconstruction MSE of PCA, a dense AE and the TAE on ODE trajectories.

--study fixvar:   ODEfix (T = 90) against ODEvar (T in [30, 90]), V = 10
--study variates: V in {5, 10, 15, 20}, T = 50
--study length:   T in {50, 75, ..., 200}, V = 15
"""
import argparse
from dataclasses import replace
from pathlib import Path

from loguru import logger

from src.config import ExperimentConfig
from src.evaluation import MetricReport
from src.pipeline import dataset_mse, fit_model, prepare
from src.utils import ConfigError, setup_logging

KINDS = ('pca', 'ffae', 'tae')


class ProgramArguments(object):
    def __init__(self):
        self.study = None
        self.epochs = None
        self.runs = None
        self.seed = None


def _settings(study):
    if study == 'fixvar':
        return {'ODEfix': {'source': 'odefix', 'length': 90, 'n_variates': 10},
                'ODEvar': {'source': 'odevar', 'length_min': 30, 'length_max': 90, 'n_variates': 10}}
    elif study == 'variates':
        return {f'ODE{v}': {'source': 'odefix', 'length': 50, 'n_variates': v} for v in (5, 10, 15, 20)}
    elif study == 'length':
        return {f'ODE-T{t}': {'source': 'odefix', 'length': t, 'n_variates': 15} for t in range(50, 201, 25)}
    raise ConfigError(f'unknown study {study!r}, expected fixvar, variates or length')


def main():
    args = parse_args()
    setup_logging()

    study = 'fixvar' if args.study is None else args.study
    epochs = 500 if args.epochs is None else int(args.epochs)
    runs = 5 if args.runs is None else int(args.runs)
    seed = 0 if args.seed is None else int(args.seed)

    results_path = Path('./results/', f'ode_{study}')
    results_path.mkdir(parents=True, exist_ok=True)

    base = ExperimentConfig(n_train=400, n_test=1000, code_size=5, epochs=epochs, alignment=0.0, l2=0.0)
    for name, overrides in _settings(study).items():
        report = MetricReport(config={'dataset': name, 'epochs': str(epochs)})
        for i in range(runs):
            # each run draws a new system and new trajectories
            cfg = replace(base, seed=seed + i, **overrides)
            data = prepare(cfg)
            metrics = {}
            for kind in KINDS:
                model, _ = fit_model(replace(cfg, model=kind), data.train, data.t_pad, seed + i)
                metrics[f'{kind}_mse'] = dataset_mse(model, data.test)
                if hasattr(model, 'parameters'):
                    metrics[f'{kind}_n_params'] = sum(p.numel() for p in model.parameters())
            logger.info(f'{name}, run {i}: ' + ', '.join(f'{k}={v:.4f}' for k, v in metrics.items()))
            report.add_run(seed + i, metrics)
        report.to_json(results_path / f'{name}.json')
        report.to_csv(results_path / f'{name}.csv')


def parse_args():
    parser = argparse.ArgumentParser(description="Reconstruction of ODE trajectories with fixed or variable length, "
                                                 "and with growing numbers of variates or time steps.")
    parser.add_argument("--study", help="One of 'fixvar', 'variates' or 'length'. Default: 'fixvar'.")
    parser.add_argument("--epochs", help="Training epochs for the AE and TAE. Default: 500.")
    parser.add_argument("--runs", help="Number of independent runs (datasets). Default: 5.")
    parser.add_argument("--seed", help="Seed of the first run. Default: 0.")

    program_arguments = ProgramArguments()
    parser.parse_args(namespace=program_arguments)

    return program_arguments


if __name__ == '__main__':
    main()
