"""Metrics: kNN on representations, accuracy/F1, Pearson, ROC-AUC, imputation scores, run reports."""
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

import numpy as np
from loguru import logger
from scipy.spatial.distance import cdist
from scipy.stats import pearsonr
from sklearn import metrics

from src.get_data import Dataset, InjectionRecord
from src.np_implementation.pca import pca_encode, pca_fit
from src.utils import ConfigError, DataError


def knn_classify(z_train, y_train, z_test, k=3):
    """Majority vote of the k Euclidean nearest training representations.

    Ties between labels go to the tied label whose nearest occurrence is closest.
    """
    z_train, z_test = np.atleast_2d(z_train), np.atleast_2d(z_test)
    y_train = np.asarray(y_train)
    if len(z_train) == 0:
        raise DataError('kNN needs a non-empty training set')
    if not 1 <= k <= len(z_train):
        raise ConfigError(f'k must lie in [1, {len(z_train)}], got {k}')
    dist = cdist(z_test, z_train)
    nearest = np.argsort(dist, axis=1, kind='stable')[:, :k]
    predicted = []
    for row in nearest:
        votes = {}
        for label in y_train[row]:
            votes[label] = votes.get(label, 0) + 1
        best = max(votes.values())
        # dicts keep insertion order, which here is distance order
        predicted.append(next(label for label, count in votes.items() if count == best))
    return np.array(predicted)


def accuracy(y_true, y_pred):
    return float(metrics.accuracy_score(y_true, y_pred))


def f1_score(y_true, y_pred, positive=None):
    """Binary F1 for ``positive`` (or for two-class labels {0, 1}); macro F1 otherwise."""
    labels = np.union1d(np.asarray(y_true), np.asarray(y_pred))
    if positive is not None:
        return float(metrics.f1_score(y_true, y_pred, pos_label=positive, average='binary', zero_division=0))
    if set(labels.tolist()) <= {0, 1}:
        return float(metrics.f1_score(y_true, y_pred, pos_label=1, average='binary', zero_division=0))
    return float(metrics.f1_score(y_true, y_pred, average='macro', zero_division=0))


def pearson_corr(a, b):
    a, b = np.ravel(a).astype(np.float64), np.ravel(b).astype(np.float64)
    if len(a) != len(b) or len(a) < 2:
        raise DataError(f'Pearson correlation needs two series of equal length >= 2, got {len(a)}, {len(b)}')
    if np.std(a) == 0 or np.std(b) == 0:
        logger.warning('zero variance in Pearson input, returning 0')
        return 0.0
    return float(pearsonr(a, b)[0])


def roc_auc(scores, labels):
    """Area under the ROC curve; label 1 is the positive (anomalous) class, ties count 1/2."""
    labels = np.asarray(labels)
    if len(np.unique(labels)) < 2:
        logger.error('ROC-AUC needs both classes among the labels')
        raise DataError('ROC-AUC needs both positive and negative samples')
    return float(metrics.roc_auc_score(labels, np.asarray(scores, dtype=np.float64)))


def imputation_score(original: Dataset, imputed: Dataset, record: InjectionRecord):
    """(MSE, CORR) over the injected-missing cells, concatenated across the split."""
    if len(original) != len(imputed) or len(record.rows) != len(imputed):
        raise DataError('original, imputed and injection record describe different datasets')
    if record.n_cells == 0:
        logger.warning('no injected cells to score')
        return 0.0, 0.0
    truth = np.concatenate(record.truth)
    pred = np.concatenate([s.values[r, c] for s, r, c in zip(imputed, record.rows, record.cols)])
    if not np.isfinite(pred).all():
        raise DataError('imputed dataset still has missing placeholders at injected cells')
    mse = float(np.mean((truth - pred) ** 2))
    corr = pearson_corr(truth, pred) if len(truth) >= 2 else 0.0
    return mse, corr


def normalized_gram(z):
    gram = np.asarray(z) @ np.asarray(z).T
    norm = np.linalg.norm(gram)
    return gram / norm if norm > 0 else gram


def alignment_gap(z, k):
    """Frobenius distance between the normalized Gram of ``z`` and the normalized kernel."""
    k = np.asarray(k)
    norm = np.linalg.norm(k)
    return float(np.linalg.norm(normalized_gram(z) - (k / norm if norm > 0 else k)))


def export_pca_projection(z, ids, path, labels=None):
    """Write the first two principal components of ``z`` as sample_id,pc_1[,pc_2][,label]."""
    z = np.atleast_2d(z)
    proj = pca_encode(pca_fit(z, min(2, z.shape[1])), z)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['sample_id'] + [f'pc_{i + 1}' for i in range(proj.shape[1])]
                        + (['label'] if labels is not None else []))
        for n, sid in enumerate(ids):
            writer.writerow([sid] + [repr(float(v)) for v in proj[n]]
                            + ([labels[n]] if labels is not None else []))
    return proj


@dataclass
class MetricReport:
    values: Dict[str, List[float]] = field(default_factory=dict)
    seeds: List[int] = field(default_factory=list)
    config: Dict[str, str] = field(default_factory=dict)

    def add_run(self, seed, metrics_: Dict[str, float]):
        self.seeds.append(int(seed))
        for name, value in metrics_.items():
            self.values.setdefault(name, []).append(float(value))

    def summary(self):
        return {name: {'mean': float(np.mean(v)), 'std': float(np.std(v)), 'runs': list(v)}
                for name, v in self.values.items()}

    def mean(self, name):
        return self.summary()[name]['mean']

    def to_dict(self):
        return {'metrics': self.summary(), 'seeds': self.seeds, 'config': self.config}

    def to_json(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n')

    def to_csv(self, path):
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['metric', 'mean', 'std', 'n_runs'])
            for name, s in sorted(self.summary().items()):
                writer.writerow([name, repr(s['mean']), repr(s['std']), len(s['runs'])])
