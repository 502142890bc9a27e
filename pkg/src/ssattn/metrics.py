"""Classification metrics computed in float64 from integer label arrays.

MCC uses the multiclass confusion-matrix form and is defined as exactly 0.0
whenever its denominator vanishes (e.g. the model predicts a single class),
so degenerate early-training checkpoints produce a usable number instead of
a NaN. Macro F1 averages over an explicit class count: classes absent from
a batch contribute an F1 of 0 rather than being silently dropped.
"""

from __future__ import annotations

import math

import numpy as np


def _checked(y_true, y_pred, n_classes: int):
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.ndim != 1 or p.ndim != 1 or t.shape != p.shape:
        raise ValueError(f"label arrays must be equal-length 1-d, got {t.shape} vs {p.shape}")
    if t.size == 0:
        raise ValueError("empty label arrays")
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    lo = min(t.min(), p.min())
    hi = max(t.max(), p.max())
    if lo < 0 or hi >= n_classes:
        raise ValueError(f"labels outside [0, {n_classes}): saw {lo}..{hi}")
    return t, p


def accuracy(y_true, y_pred) -> float:
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape or t.size == 0:
        raise ValueError("label arrays must be equal-length and nonempty")
    return float(np.mean(t == p))


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Counts with true labels on rows, predictions on columns."""
    t, p = _checked(y_true, y_pred, n_classes)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def mcc(y_true, y_pred, n_classes: int) -> float:
    cm = confusion_matrix(y_true, y_pred, n_classes).astype(np.float64)
    s = cm.sum()
    c = np.trace(cm)
    t_k = cm.sum(axis=1)  # true occurrences per class
    p_k = cm.sum(axis=0)  # predicted occurrences per class
    num = c * s - float(p_k @ t_k)
    den = math.sqrt(s * s - float(p_k @ p_k)) * math.sqrt(s * s - float(t_k @ t_k))
    if den == 0.0:
        return 0.0
    return num / den


def macro_f1(y_true, y_pred, n_classes: int) -> float:
    cm = confusion_matrix(y_true, y_pred, n_classes).astype(np.float64)
    f1s = []
    for k in range(n_classes):
        tp = cm[k, k]
        fp = cm[:, k].sum() - tp
        fn = cm[k, :].sum() - tp
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0)
    return float(np.mean(f1s))
