"""Versioned binary files for models and kernels, plus the CSV exports.

A binary file is ``MAGIC | version (uint16 LE) | tag length (uint8) | tag | payload`` where the
payload is a ``torch.save`` archive holding only tensors and plain Python values, read back
with ``weights_only=True``.
"""
import csv
import io
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch
from loguru import logger

from src.get_data import parse_float
from src.models import FfAeArch, FfAeModel, TkaeArch, TkaeModel
from src.np_implementation.pca import PcaModel
from src.np_implementation.tck import DiagGmm, KernelMatrix, Priors, TckInstance, TckModel
from src.utils import DataError

MAGIC = b'TKAE'
FORMAT_VERSION = 1

TAG_TKAE = 'tkae'
TAG_FFAE = 'ffae'
TAG_PCA = 'pca'
TAG_TCK = 'tck'
TAG_KERNEL = 'kernel'


def _t(a):
    return torch.from_numpy(np.ascontiguousarray(a))


def _write(path, tag, payload):
    buf = io.BytesIO()
    torch.save(payload, buf)
    tag_bytes = tag.encode('ascii')
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(MAGIC + struct.pack('<HB', FORMAT_VERSION, len(tag_bytes)) + tag_bytes)
        f.write(buf.getvalue())
    logger.debug(f'wrote {tag} file {path}')


def _read(path, expected=None):
    path = Path(path)
    if not path.is_file():
        raise DataError(f'no such file: {path}')
    raw = path.read_bytes()
    if raw[:len(MAGIC)] != MAGIC or len(raw) < len(MAGIC) + 3:
        raise DataError(f'{path} is not a model file (bad magic bytes)')
    version, tag_len = struct.unpack('<HB', raw[len(MAGIC):len(MAGIC) + 3])
    if version != FORMAT_VERSION:
        raise DataError(f'{path}: unsupported format version {version}')
    start = len(MAGIC) + 3
    tag = raw[start:start + tag_len].decode('ascii')
    if expected is not None and tag not in expected:
        raise DataError(f'{path} holds a {tag!r} object, expected one of {sorted(expected)}')
    payload = torch.load(io.BytesIO(raw[start + tag_len:]), weights_only=True)
    return tag, payload


def _tkae_payload(model: TkaeModel):
    return {'arch': asdict(model.arch), 'state': model.state_dict()}


def _ffae_payload(model: FfAeModel):
    return {'arch': asdict(model.arch), 'state': model.state_dict()}


def _pca_payload(model: PcaModel):
    return {'mean': _t(model.mean), 'components': _t(model.components),
            'explained_variance': _t(model.explained_variance)}


def _instance_payload(inst: TckInstance):
    return {'theta': _t(inst.gmm.theta), 'mu': _t(inst.gmm.mu), 'sigma': _t(inst.gmm.sigma),
            'segment': _t(inst.segment), 'variates': _t(inst.variates), 'subset': _t(inst.subset),
            'priors': asdict(inst.priors), 'n_components': inst.n_components,
            'posteriors': _t(inst.posteriors), 'objective': list(inst.objective),
            'reinitialized': list(inst.reinitialized)}


def _tck_payload(model: TckModel):
    return {'instances': [_instance_payload(i) for i in model.instances], 'n_init': model.n_init,
            'max_components': model.max_components, 'train_ids': list(model.train_ids),
            'n_variates': model.n_variates, 't_max': model.t_max}


def save_model(model, path):
    if isinstance(model, TkaeModel):
        _write(path, TAG_TKAE, _tkae_payload(model))
    elif isinstance(model, FfAeModel):
        _write(path, TAG_FFAE, _ffae_payload(model))
    elif isinstance(model, PcaModel):
        _write(path, TAG_PCA, _pca_payload(model))
    elif isinstance(model, TckModel):
        _write(path, TAG_TCK, _tck_payload(model))
    else:
        raise TypeError(f'cannot serialize {type(model).__name__}')


def _load_instance(p):
    gmm = DiagGmm(p['theta'].numpy(), p['mu'].numpy(), p['sigma'].numpy())
    return TckInstance(gmm, p['segment'].numpy(), p['variates'].numpy(), p['subset'].numpy(),
                       Priors(**p['priors']), int(p['n_components']), p['posteriors'].numpy(),
                       list(p['objective']), list(p['reinitialized']))


def load_model(path, expected=None):
    tag, p = _read(path, expected)
    if tag == TAG_TKAE:
        model = TkaeModel(TkaeArch(**p['arch']))
        model.load_state_dict(p['state'])
        return model
    elif tag == TAG_FFAE:
        model = FfAeModel(FfAeArch(**p['arch']))
        model.load_state_dict(p['state'])
        return model
    elif tag == TAG_PCA:
        return PcaModel(p['mean'].numpy(), p['components'].numpy(), p['explained_variance'].numpy())
    elif tag == TAG_TCK:
        return TckModel([_load_instance(i) for i in p['instances']], p['n_init'], p['max_components'],
                        list(p['train_ids']), p['n_variates'], p['t_max'])
    raise DataError(f'{path}: unknown object tag {tag!r}')


def save_kernel(kernel: KernelMatrix, path):
    _write(path, TAG_KERNEL, {'values': _t(kernel.values), 'ids': list(kernel.ids)})


def load_kernel(path):
    _, p = _read(path, {TAG_KERNEL})
    return KernelMatrix(p['values'].numpy(), list(p['ids']))


def save_kernel_csv(kernel: KernelMatrix, path):
    """Square CSV whose header row is the sample ids, in kernel order."""
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(kernel.ids)
        for row in kernel.values:
            writer.writerow([repr(float(v)) for v in row])


def load_kernel_csv(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f'no such kernel file: {path}')
    with open(path, newline='') as f:
        rows = list(csv.reader(f))
    if not rows:
        raise DataError(f'{path} is empty')
    ids, body = rows[0], rows[1:]
    if len(body) != len(ids) or any(len(r) != len(ids) for r in body):
        raise DataError(f'{path}: kernel CSV is not square')
    values = np.array([[parse_float(v, f'{path}:{i + 2}') for v in r] for i, r in enumerate(body)])
    if not np.isfinite(values).all():
        raise DataError(f'{path}: kernel has empty or non-finite entries')
    return KernelMatrix(values, ids)


def save_representations(z, ids, path):
    """sample_id, z_1..z_Dz per row."""
    z = np.atleast_2d(z)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['sample_id'] + [f'z_{i + 1}' for i in range(z.shape[1])])
        for sid, row in zip(ids, z):
            writer.writerow([sid] + [repr(float(v)) for v in row])


def load_representations(path):
    with open(path, newline='') as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][0] != 'sample_id':
        raise DataError(f'{path} is not a representation CSV')
    ids = [r[0] for r in rows[1:]]
    z = np.array([[parse_float(v, path) for v in r[1:]] for r in rows[1:]])
    return z, ids


def save_loss_trace(history, path):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['epoch', 'loss'])
        for epoch, loss in enumerate(history):
            writer.writerow([epoch, repr(float(loss))])
