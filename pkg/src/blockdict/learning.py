"""Dictionary training: KSVD, the block SVD update, and the alternating drivers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .coding import code_atoms, code_blocks
from .core import (
    BlockStructure,
    ClassLabels,
    ConfigError,
    Dictionary,
    ExperimentConfig,
    InvariantError,
    NumericalError,
    SparseCodes,
    TrainingSet,
)
from .structure import cgc_estimate, fixed_class_blocks, sac_estimate, supervised_cgc_estimate

CONVERGENCE_TOL = 1e-4


@dataclass
class TrainReport:
    """Per-iteration relative errors ``||Y - DU||_F / ||Y||_F`` (after each update)."""

    rel_errors: list = field(default_factory=list)
    n_blocks: list = field(default_factory=list)
    svd_calls: list = field(default_factory=list)
    structures: list = field(default_factory=list)
    initial_error: float = math.nan
    converged: bool = False

    @property
    def iterations_run(self) -> int:
        return len(self.rel_errors)

    def record(self, err: float, n_blocks: int = 0, svd_calls: int = 0, structure=None):
        if not math.isfinite(err) or err < 0:
            raise NumericalError(f"invalid reconstruction error {err!r}")
        prev = self.rel_errors[-1] if self.rel_errors else self.initial_error
        self.rel_errors.append(float(err))
        self.n_blocks.append(int(n_blocks))
        self.svd_calls.append(int(svd_calls))
        if structure is not None:
            self.structures.append(structure)
        if math.isfinite(prev) and prev - err < CONVERGENCE_TOL:
            self.converged = True

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"iter": k + 1, "rel_error": e, "n_blocks": nb}) + "\n"
            for k, (e, nb) in enumerate(zip(self.rel_errors, self.n_blocks))
        )


def relative_error(Y: np.ndarray, D: np.ndarray, U: np.ndarray) -> float:
    return float(np.linalg.norm(Y - D @ U) / np.linalg.norm(Y))


def _fix_signs(left: np.ndarray, right: np.ndarray) -> None:
    """Make the largest-magnitude entry of every left vector positive (in place)."""
    pivots = np.argmax(np.abs(left), axis=0)
    flip = left[pivots, np.arange(left.shape[1])] < 0
    left[:, flip] *= -1
    right[flip] *= -1


def _pick_examples(Y: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    nonzero = np.flatnonzero(np.linalg.norm(Y, axis=0) > 0)
    if nonzero.size < count:
        raise ValueError(f"need {count} nonzero training signals, only {nonzero.size} available")
    idx = rng.choice(nonzero, size=count, replace=False)
    cols = Y[:, idx]
    return cols / np.linalg.norm(cols, axis=0)


def ksvd_train(
    ys: TrainingSet, n_atoms: int, sparsity: int, iterations: int, seed: int = 0
) -> tuple[Dictionary, SparseCodes, TrainReport]:
    """Plain KSVD initialized from randomly chosen training examples."""
    Y = ys.signals
    if n_atoms > ys.n_signals:
        raise ValueError(f"n_atoms ({n_atoms}) exceeds the number of training signals ({ys.n_signals})")
    rng = np.random.default_rng(seed)
    D = _pick_examples(Y, n_atoms, rng)
    report = TrainReport()
    U = code_atoms(Dictionary(D), Y, sparsity).codes.coefficients.copy()
    report.initial_error = relative_error(Y, D, U)
    for it in range(iterations):
        if it > 0:
            U = code_atoms(Dictionary(D), Y, sparsity).codes.coefficients.copy()
        E = Y - D @ U
        svds = 0
        taken = set()
        for k in range(n_atoms):
            omega = np.flatnonzero(U[k])
            if omega.size == 0:
                worst = [i for i in np.argsort(-np.linalg.norm(E, axis=0), kind="stable") if i not in taken][:1]
                taken.update(worst)
                col = E[:, worst[0]]
                nrm = np.linalg.norm(col)
                if nrm > 0:
                    D[:, k] = col / nrm
                continue
            Ek = E[:, omega] + np.outer(D[:, k], U[k, omega])
            left, s, right = np.linalg.svd(Ek, full_matrices=False)
            svds += 1
            left, right = left[:, :1].copy(), right[:1].copy()
            _fix_signs(left, right)
            D[:, k] = left[:, 0]
            U[k, omega] = s[0] * right[0]
            E[:, omega] = Ek - np.outer(D[:, k], U[k, omega])
        report.record(relative_error(Y, D, U), n_atoms, svds)
    d = Dictionary(D)
    return d, code_atoms(d, Y, sparsity).codes, report


def _orthonormal_columns(cols: np.ndarray, count: int) -> np.ndarray:
    """``count`` orthonormal columns spanning ``cols`` first, completed arbitrarily but deterministically."""
    m = cols.shape[0]
    q, _ = np.linalg.qr(np.hstack([cols, np.eye(m)]))
    q = q[:, :count].copy()
    _fix_signs(q, np.zeros((count, 0)))
    return q


def _block_update(D, U, Y, order, labels=None):
    """One sweep of block SVD updates, in place on copies. Returns (D, U, svd_calls)."""
    D = D.copy()
    U = U.copy()
    E = Y - D @ U
    svds = 0
    taken: set = set()
    for idx in order:
        size = idx.size
        omega = np.flatnonzero(np.any(U[idx] != 0, axis=0))
        if omega.size == 0:
            # unused block: re-seed from the worst represented signals
            ranking = np.argsort(-np.linalg.norm(E, axis=0), kind="stable")
            fresh = [i for i in ranking if i not in taken][:size]
            taken.update(fresh)
            D[:, idx] = _orthonormal_columns(E[:, fresh], size)
            continue
        Eb = E[:, omega] + D[:, idx] @ U[np.ix_(idx, omega)]
        left, s, right = np.linalg.svd(Eb, full_matrices=False)
        svds += 1
        k = min(size, s.size)
        left = left[:, :k].copy()
        coef = s[:k, None] * right[:k]
        _fix_signs(left, coef)
        if k < size:
            left = np.hstack([left, _orthonormal_columns(left, size)[:, k:]])
            coef = np.vstack([coef, np.zeros((size - k, omega.size))])
        D[:, idx] = left
        U[np.ix_(idx, omega)] = coef
        E[:, omega] = Eb - left @ coef
    return D, U, svds


def _update_order(b: BlockStructure, labels: Optional[ClassLabels]) -> list:
    groups = b.groups()
    if labels is None:
        return groups
    # class by class; within a class, block-id order (stable sort)
    return sorted(groups, key=lambda g: int(labels.label_of_atom[g[0]]))


def bksvd_block_update(
    d: Dictionary,
    b: BlockStructure,
    ys: TrainingSet,
    codes: SparseCodes,
    labels: Optional[ClassLabels] = None,
) -> tuple[Dictionary, SparseCodes]:
    """Replace every block by the top singular vectors of its residual.

    For each block, only the signals using it are considered; the residual
    excludes that block's own contribution, and its atoms and coefficient
    rows become the leading rank-|block| SVD factors. With ``labels`` the
    blocks are visited class by class.
    """
    d_new, u_new, _ = block_update_counted(d, b, ys, codes, labels)
    return d_new, u_new


def block_update_counted(d, b, ys, codes, labels=None):
    """:func:`bksvd_block_update` that also returns the number of SVDs computed."""
    if codes.n_atoms != d.n_atoms or codes.n_signals != ys.n_signals:
        raise InvariantError("codes shape does not match dictionary and training set")
    if not (np.all(np.isfinite(ys.signals)) and np.all(np.isfinite(codes.coefficients))):
        raise NumericalError("non-finite input to the SVD update")
    D, U, svds = _block_update(d.atoms, codes.coefficients, ys.signals, _update_order(b, labels), labels)
    return Dictionary(D), SparseCodes(U), svds


def _estimator(cfg: ExperimentConfig, ys: TrainingSet, labels: Optional[ClassLabels]) -> Callable:
    mode = cfg.structure_mode
    if mode == "sac":
        return lambda d: sac_estimate(d, code_atoms(d, ys.signals, cfg.atom_sparsity).codes, cfg.max_block_size)
    if mode == "cgc":
        return lambda d: cgc_estimate(d, cfg.max_block_size, cfg.shrink_fraction)
    if labels is None:
        raise ConfigError(f"structure_mode {mode!r} needs class labels")
    if mode == "supervised_cgc":
        return lambda d: supervised_cgc_estimate(d, labels, cfg.max_block_size, cfg.shrink_fraction)
    fixed = fixed_class_blocks(labels, cfg.max_block_size)
    return lambda d: fixed


def _alternate(ys, d, cfg, estimate, labels=None, keep_structures=False, checkpoint=None):
    period = cfg.update_period()
    b = estimate(d)
    report = TrainReport()
    Y = ys.signals
    for it in range(cfg.outer_iterations):
        if it > 0 and period != math.inf and it % int(period) == 0:
            b = estimate(d)
        coding = code_blocks(d, b, Y, min(cfg.block_sparsity, b.n_blocks), cfg.residual_tolerance)
        if it == 0:
            report.initial_error = relative_error(Y, d.atoms, coding.codes.coefficients)
        d, codes, svds = block_update_counted(d, b, ys, coding.codes, labels)
        report.record(
            relative_error(Y, d.atoms, codes.coefficients), b.n_blocks, svds, b if keep_structures else None
        )
        if checkpoint is not None:
            checkpoint(it + 1, d, b)
    return d, b, report


def bksvd_train(
    ys: TrainingSet,
    d0: Dictionary,
    cfg: ExperimentConfig,
    keep_structures: bool = False,
    checkpoint: Optional[Callable] = None,
) -> tuple[Dictionary, BlockStructure, TrainReport]:
    """Unsupervised block dictionary learning (structure by SAC or CGC).

    ``checkpoint(iteration, d, b)`` is called after every outer iteration.
    """
    if cfg.structure_mode not in ("sac", "cgc"):
        raise ConfigError("bksvd_train needs structure_mode 'sac' or 'cgc'")
    if d0.m != ys.m:
        raise InvariantError("dictionary and training signals differ in dimension")
    return _alternate(ys, d0, cfg, _estimator(cfg, ys, None), keep_structures=keep_structures, checkpoint=checkpoint)


def supervised_init(ys: TrainingSet, atoms_per_class: int, cfg: ExperimentConfig) -> tuple[Dictionary, ClassLabels]:
    """Class-contiguous initial dictionary: per-class example selection, optionally KSVD-refined."""
    if ys.class_of_signal is None:
        raise InvariantError("supervised training needs class labels")
    rng = np.random.default_rng(cfg.rng_seed)
    parts = []
    for c in range(1, ys.n_classes + 1):
        yc = ys.of_class(c)
        if yc.n_signals < atoms_per_class:
            raise ValueError(f"class {c} has {yc.n_signals} signals, fewer than {atoms_per_class} atoms")
        seed = int(rng.integers(2**32))
        if cfg.supervised_init == "ksvd":
            sparsity = min(cfg.atom_sparsity, atoms_per_class, ys.m)
            dc, _, _ = ksvd_train(yc, atoms_per_class, sparsity, cfg.ksvd_iterations, seed)
            parts.append(dc.atoms)
        else:
            parts.append(_pick_examples(yc.signals, atoms_per_class, np.random.default_rng(seed)))
    labels = ClassLabels.from_counts([atoms_per_class] * ys.n_classes)
    return Dictionary(np.hstack(parts)), labels


def supervised_train(
    ys: TrainingSet, atoms_per_class: int, cfg: ExperimentConfig, keep_structures: bool = False
) -> tuple[Dictionary, BlockStructure, ClassLabels, TrainReport]:
    """Class-supervised block dictionary learning with class-pure blocks."""
    if cfg.structure_mode not in ("supervised_cgc", "fixed_supervised"):
        raise ConfigError("supervised_train needs structure_mode 'supervised_cgc' or 'fixed_supervised'")
    d0, labels = supervised_init(ys, atoms_per_class, cfg)
    d, b, report = _alternate(ys, d0, cfg, _estimator(cfg, ys, labels), labels, keep_structures)
    return d, b, labels, report
