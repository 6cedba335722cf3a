import os
import sys

import numpy as np
import torch
import torch.nn as nn
from loguru import logger

LOG_LEVEL_ENV = 'TKAE_LOG_LEVEL'


class TkaeError(Exception):
    """Base class of every error raised by the package."""


class ConfigError(TkaeError, ValueError):
    pass


class DataError(TkaeError, ValueError):
    pass


class NumericError(TkaeError, ArithmeticError):
    pass


def setup_logging(level=None):
    """Route loguru to stderr at the level given by TKAE_LOG_LEVEL (default INFO)."""
    level = (level or os.environ.get(LOG_LEVEL_ENV, 'INFO')).upper()
    logger.remove()
    logger.add(sys.stderr, level=level,
               format='<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {name}:{function} - {message}')
    return level


def progress_disabled():
    return os.environ.get(LOG_LEVEL_ENV, 'INFO').upper() not in ('TRACE', 'DEBUG', 'INFO')


def to_np(x):
    return x.cpu().detach().numpy()


def to_torch(x, device='cpu'):
    return torch.from_numpy(np.ascontiguousarray(x, dtype=np.float64)).to(device)


class Tanh(nn.Module):
    def forward(self, inp):
        return torch.tanh(inp)


class Sigmoid(nn.Module):
    def forward(self, inp):
        return torch.sigmoid(inp)


class Linear(nn.Module):
    def forward(self, inp):
        return inp


def get_nonlin(name):
    if name == 'linear':
        return Linear()
    elif name == 'tanh':
        return Tanh()
    elif name == 'sigmoid':
        return Sigmoid()
    logger.error(f'Invalid activation: {name}. Only "linear", "tanh" or "sigmoid" allowed.')
    raise ConfigError(f'no such nonlinearity: {name}')
