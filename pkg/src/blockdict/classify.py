"""Sparse-representation classification over learned dictionaries.

Two rules work directly on class-labeled atoms (residual, energy). For
dictionaries without atom labels, classes are scored by cosine similarity
between a signal's code and a per-class mean-code template.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .coding import code_atoms, code_blocks
from .core import BlockStructure, ClassLabels, Dictionary, InvariantError, TrainingSet

REJECT = 0
RULES = ("residual", "energy")


def cds_score(a, b) -> float:
    """Cosine similarity of two code vectors; 0 when exactly one of them is zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("code vectors differ in length")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 and nb == 0:
        raise ValueError("both code vectors are zero")
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def check_class_pure(b: BlockStructure, labels: ClassLabels) -> None:
    for k, g in enumerate(b.groups(), start=1):
        if np.unique(labels.label_of_atom[g]).size > 1:
            raise InvariantError(f"block {k} mixes classes")


def _decide(u: np.ndarray, y: np.ndarray, d: Dictionary, labels: ClassLabels, rule: str) -> int:
    if not np.any(u):
        return REJECT
    n_classes = labels.n_classes
    if rule == "energy":
        energy = np.array([np.sum(u[labels.atoms_of(c)] ** 2) for c in range(1, n_classes + 1)])
        return int(np.argmax(energy)) + 1
    if rule == "residual":
        res = np.array(
            [np.linalg.norm(y - d.atoms[:, labels.atoms_of(c)] @ u[labels.atoms_of(c)]) for c in range(1, n_classes + 1)]
        )
        return int(np.argmin(res)) + 1
    raise ValueError(f"unknown rule {rule!r}; expected one of {RULES}")


def classify_signal(
    d: Dictionary, b: BlockStructure, labels: ClassLabels, y, p: int, rule: str = "residual"
) -> int:
    """Class id of ``y`` (1..C), or ``REJECT`` when its code is empty."""
    check_class_pure(b, labels)
    y = np.asarray(y, dtype=np.float64)
    u = code_blocks(d, b, y, min(p, b.n_blocks)).codes.coefficients[:, 0]
    return _decide(u, y, d, labels, rule)


def classify_batch(d, b, labels, Y, p, rule="residual") -> np.ndarray:
    check_class_pure(b, labels)
    U = code_blocks(d, b, Y, min(p, b.n_blocks)).codes.coefficients
    return np.array([_decide(U[:, i], Y[:, i], d, labels, rule) for i in range(U.shape[1])], dtype=np.int64)


def encode(d: Dictionary, b: Optional[BlockStructure], Y, sparsity: int) -> np.ndarray:
    """Codes of ``Y``: block-OMP when a structure is given, OMP otherwise."""
    if b is None:
        return code_atoms(d, Y, min(sparsity, d.m, d.n_atoms)).codes.coefficients
    return code_blocks(d, b, Y, min(sparsity, b.n_blocks)).codes.coefficients


def class_templates(codes: np.ndarray, classes: np.ndarray) -> np.ndarray:
    """Mean code magnitude of every class, as columns (n_atoms, C).

    Magnitudes, because synthetic weights are sign-symmetric and signed
    class means would cancel towards zero.
    """
    n_classes = int(classes.max())
    mags = np.abs(codes)
    return np.stack([mags[:, classes == c].mean(axis=1) for c in range(1, n_classes + 1)], axis=1)


def classify_cds(codes: np.ndarray, templates: np.ndarray) -> np.ndarray:
    """Template with the highest cosine score against each code's magnitudes; REJECT for empty codes."""
    codes = np.abs(codes)
    out = np.full(codes.shape[1], REJECT, dtype=np.int64)
    tn = np.linalg.norm(templates, axis=0)
    for i in range(codes.shape[1]):
        u = codes[:, i]
        if not np.any(u):
            continue
        scores = [cds_score(u, templates[:, c]) if tn[c] > 0 else 0.0 for c in range(templates.shape[1])]
        out[i] = int(np.argmax(scores)) + 1
    return out


def accuracy(predicted: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean(predicted == truth))


def cds_accuracy(d, b, train: TrainingSet, test: TrainingSet, sparsity: int) -> float:
    """Closed-set accuracy with per-class mean-code templates built on ``train``."""
    templates = class_templates(encode(d, b, train.signals, sparsity), train.class_of_signal)
    predicted = classify_cds(encode(d, b, test.signals, sparsity), templates)
    return accuracy(predicted, test.class_of_signal)
