"""Loss terms of the recurrent and dense autoencoders: L = L_r + lambda L_2 + alpha L_k."""
import math

import torch
import torch.nn as nn
from loguru import logger

from src.utils import DataError

SQRT2 = math.sqrt(2.0)


def loss_reconstruction(x, x_tilde, mask, masked_mode=False, valid=None):
    """Reconstruction MSE.

    ``valid`` marks the cells inside each sample's length (all cells when None). With
    ``masked_mode`` only cells with mask 1 count: sum(((x - x~) m)^2) / sum(m). An empty mask
    gives 0 with a warning.
    """
    if x.shape != x_tilde.shape or x.shape != mask.shape:
        raise DataError(f'shape mismatch: {tuple(x.shape)}, {tuple(x_tilde.shape)}, {tuple(mask.shape)}')
    weight = torch.ones_like(x) if valid is None else valid.to(x.dtype)
    if masked_mode:
        weight = weight * mask.to(x.dtype)
    total = weight.sum()
    if total.item() == 0:
        logger.warning('reconstruction loss over an empty mask, returning 0')
        return (x_tilde * 0.0).sum()
    return (((x - x_tilde) * weight) ** 2).sum() / total


def loss_alignment(z, k):
    """|| Z Z^T / ||Z Z^T||_F - K / ||K||_F ||_F; sqrt(2) with a warning if either norm is 0."""
    if k.shape != (z.shape[0], z.shape[0]):
        raise DataError(f'kernel block {tuple(k.shape)} does not match batch of {z.shape[0]}')
    gram = z @ z.t()
    gram_norm = torch.linalg.norm(gram)
    k_norm = torch.linalg.norm(k)
    if gram_norm.item() == 0 or k_norm.item() == 0:
        logger.warning('degenerate batch for kernel alignment (zero Frobenius norm)')
        return (z * 0.0).sum() + SQRT2
    return torch.linalg.norm(gram / gram_norm - k / k_norm)


def weight_penalty(model: nn.Module):
    """Sum of squared entries of every weight matrix; biases are excluded."""
    terms = [(p ** 2).sum() for name, p in model.named_parameters() if name.endswith('weight')]
    if not terms:
        return torch.zeros(())
    return torch.stack(terms).sum()


def loss_total(l_r, model: nn.Module, l2=0.0, alignment=0.0, z=None, k=None):
    loss = l_r
    if l2 > 0:
        loss = loss + l2 * weight_penalty(model)
    if alignment > 0:
        loss = loss + alignment * loss_alignment(z, k)
    return loss
