"""Numeric core shared by every learning module.

All arithmetic is float64. Reverse-mode differentiation runs on torch autograd; ``GradTape``
only fixes which leaves are differentiated and that a tape is consumed once.
"""
import hashlib
import math

import numpy as np
import torch
import torch.nn as nn
from loguru import logger

from src.utils import NumericError

torch.set_default_dtype(torch.float64)

_SEED_MASK = (1 << 64) - 1


def _key_to_int(key):
    if isinstance(key, (int, np.integer)):
        return int(key) & _SEED_MASK
    digest = hashlib.sha256(str(key).encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little')


class Rng:
    """Seeded random stream on NumPy's counter-based Philox bit generator.

    The seed is expanded with ``SeedSequence`` so equal seeds give bit-identical
    integer streams. Normal variates use Box-Muller on the uniform stream, each pair of
    uniforms producing (r cos, r sin) in that order; an odd trailing variate drops its twin.
    """

    def __init__(self, seed=0):
        if isinstance(seed, (list, tuple)):
            self.entropy = tuple(_key_to_int(s) for s in seed)
        else:
            self.entropy = (_key_to_int(seed),)
        self.seed = self.entropy[0]
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(list(self.entropy))))

    def derive(self, *keys):
        """Independent child stream identified by the parent entropy plus ``keys``."""
        return Rng(list(self.entropy) + [_key_to_int(k) for k in keys])

    def random(self, size=None):
        return self._gen.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return low + (high - low) * self._gen.random(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        n = 1 if size is None else int(np.prod(size))
        pairs = (n + 1) // 2
        u1 = 1.0 - self._gen.random(pairs)
        u2 = self._gen.random(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        z = loc + scale * z[:n]
        return float(z[0]) if size is None else z.reshape(size)

    def integers(self, low, high=None, size=None):
        """Integers in [low, high); ``integers(n)`` draws from [0, n)."""
        if high is None:
            low, high = 0, low
        return self._gen.integers(low, high, size=size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, n, k, replace=False):
        return np.sort(self._gen.choice(n, size=k, replace=replace))


def _check_finite(x, what):
    finite = torch.isfinite(x).all().item() if torch.is_tensor(x) else np.isfinite(x).all()
    if not finite:
        logger.error(f'{what} produced non-finite values')
        raise NumericError(f'{what} produced non-finite values')


def matmul(a, b):
    """Matrix product of two 2-D arrays; tensors stay on the autograd tape."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise NumericError(f'cannot multiply {tuple(a.shape)} by {tuple(b.shape)}')
    if torch.is_tensor(a) or torch.is_tensor(b):
        out = torch.matmul(torch.as_tensor(a), torch.as_tensor(b))
    else:
        out = np.asarray(a, dtype=np.float64) @ np.asarray(b, dtype=np.float64)
    _check_finite(out, 'matmul')
    return out


def spectral_radius(a, tol=1e-10):
    """Largest absolute eigenvalue of a square matrix (dense LAPACK eigensolver)."""
    a = np.asarray(a, dtype=np.float64)
    if tol <= 0:
        raise NumericError('tol must be positive')
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NumericError(f'spectral radius needs a square matrix, got {a.shape}')
    try:
        eig = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as err:
        logger.error(f'eigensolver did not converge: {err}')
        raise NumericError('eigensolver did not converge') from err
    return float(np.max(np.abs(eig)))


class GradTape:
    """Registry of leaf tensors whose gradients a single backward pass returns."""

    def __init__(self):
        self.leaves = {}
        self.consumed = False

    @classmethod
    def from_module(cls, module: nn.Module):
        tape = cls()
        for name, p in module.named_parameters():
            tape.leaves[name] = p
        return tape

    def watch(self, name, value):
        leaf = torch.as_tensor(value, dtype=torch.float64).detach().clone().requires_grad_(True)
        self.leaves[name] = leaf
        return leaf


def backward(tape: GradTape, loss):
    """Gradient of a scalar ``loss`` w.r.t. every leaf on ``tape``; unreachable leaves get 0."""
    if tape.consumed:
        raise NumericError('tape already consumed')
    if loss.numel() != 1:
        raise NumericError(f'loss must be scalar, got shape {tuple(loss.shape)}')
    names = list(tape.leaves)
    leaves = [tape.leaves[n] for n in names]
    if loss.requires_grad:
        grads = torch.autograd.grad(loss.reshape(()), leaves, allow_unused=True)
    else:
        grads = [None] * len(leaves)
    tape.consumed = True
    return {n: torch.zeros_like(p) if g is None else g for n, p, g in zip(names, leaves, grads)}


class AdamState:
    """Adam moments and step counter for a named set of parameters (torch.optim.Adam)."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.step = 0
        self.optimizer = torch.optim.Adam(list(self.params.values()), lr=lr, betas=betas, eps=eps,
                                          foreach=False)

    def moments(self, name):
        state = self.optimizer.state.get(self.params[name], {})
        p = self.params[name]
        return (state.get('exp_avg', torch.zeros_like(p)),
                state.get('exp_avg_sq', torch.zeros_like(p)))


def adam_step(state: AdamState, params, grads):
    """One bias-corrected Adam update, in place. Non-finite gradients skip the step."""
    params = dict(params)
    if set(params) != set(state.params) or set(grads) != set(state.params):
        raise NumericError('parameter/gradient names do not match the Adam state')
    for name, p in params.items():
        if p is not state.params[name] or grads[name].shape != p.shape:
            raise NumericError(f'shape mismatch for parameter {name}')
    if not all(torch.isfinite(g).all().item() for g in grads.values()):
        logger.warning(f'non-finite gradient at Adam step {state.step + 1}, step skipped')
        return params
    for name, p in params.items():
        p.grad = grads[name].detach().clone()
    state.optimizer.step()
    state.optimizer.zero_grad(set_to_none=True)
    state.step += 1
    return params


def gradient_check(forward_fn, params, h=1e-5, eps=1e-5):
    """Max relative error between autograd and central-difference gradients.

    ``forward_fn`` takes no arguments and returns a scalar tensor computed from ``params``
    (an iterable of leaf tensors requiring grad). It must be deterministic.
    """
    if h <= 0:
        raise NumericError('h must be positive')
    params = list(params)
    loss = forward_fn()
    if loss.item() != forward_fn().item():
        raise NumericError('forward function is not deterministic')
    analytic = torch.autograd.grad(loss, params, allow_unused=True) if loss.requires_grad \
        else [None] * len(params)
    worst = 0.0
    with torch.no_grad():
        for p, g in zip(params, analytic):
            g = torch.zeros_like(p) if g is None else g
            flat, gflat = p.view(-1), g.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                f_plus = forward_fn().item()
                flat[i] = orig - h
                f_minus = forward_fn().item()
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * h)
                a = gflat[i].item()
                denom = max(abs(a), abs(numeric), eps)
                worst = max(worst, abs(a - numeric) / denom)
    if not math.isfinite(worst):
        raise NumericError('gradient check produced a non-finite error')
    return worst
