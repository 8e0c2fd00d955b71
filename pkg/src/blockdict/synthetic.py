"""Seeded generators for oracle block dictionaries and block-sparse data."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BlockStructure, Dictionary, InvariantError, NumericalError, TrainingSet

CALIBRATION_TOL = 0.02
CALIBRATION_GOAL = 0.002
MAX_BISECTION = 100


@dataclass(frozen=True)
class OracleSpec:
    m: int = 30
    n_atoms: int = 60
    block_size: int = 3
    target_intra_corr: float = 0.68
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n_atoms < 1 or self.block_size < 1:
            raise InvariantError("m, n_atoms and block_size must be positive")
        if self.n_atoms % self.block_size:
            raise InvariantError(f"block_size {self.block_size} must divide n_atoms {self.n_atoms}")
        if not 0.5 <= self.target_intra_corr <= 1.0:
            raise InvariantError("target_intra_corr must lie in [0.5, 1]")


def intra_block_corr(atoms: np.ndarray, block_size: int) -> float:
    """Mean |correlation| over within-block pairs of a block-contiguous dictionary."""
    m, n = atoms.shape
    if block_size < 2:
        return 0.0
    blocks = atoms.T.reshape(n // block_size, block_size, m)
    g = np.abs(blocks @ blocks.transpose(0, 2, 1))
    iu = np.triu_indices(block_size, k=1)
    return float(g[:, iu[0], iu[1]].mean())


def _clone_dictionary(base: np.ndarray, noise: np.ndarray, sigma: float) -> np.ndarray:
    m, n_b = base.shape
    cols = np.concatenate([base[:, :, None], base[:, :, None] + sigma * noise], axis=2)
    cols = cols.reshape(m, -1)  # block-contiguous: base_k, clones of base_k, base_k+1, ...
    return cols / np.linalg.norm(cols, axis=0)


def gen_oracle_dict(spec: OracleSpec) -> tuple[Dictionary, BlockStructure]:
    """Random base atoms plus noisy clones, noise level tuned to the target intra-block correlation.

    The noise scale is found by bisection on the generated instance itself,
    so the realized mean intra-block |correlation| is within 0.02 of the target.
    """
    rng = np.random.default_rng(spec.seed)
    n_b = spec.n_atoms // spec.block_size
    base = rng.standard_normal((spec.m, n_b))
    noise = rng.standard_normal((spec.m, n_b, spec.block_size - 1))
    structure = BlockStructure(np.repeat(np.arange(1, n_b + 1), spec.block_size))

    if spec.block_size == 1 or spec.target_intra_corr == 1.0:
        return Dictionary(_clone_dictionary(base, noise, 0.0)), structure

    def corr_at(sigma):
        return intra_block_corr(_clone_dictionary(base, noise, sigma), spec.block_size)

    target = spec.target_intra_corr
    lo, hi = 0.0, 1.0
    while corr_at(hi) > target:
        hi *= 2.0
        if hi > 1e6:
            raise NumericalError(f"cannot reach intra-block correlation {target}")
    sigma, achieved = hi, corr_at(hi)
    for _ in range(MAX_BISECTION):
        sigma = 0.5 * (lo + hi)
        achieved = corr_at(sigma)
        if abs(achieved - target) <= CALIBRATION_GOAL:
            break
        if achieved > target:
            lo = sigma
        else:
            hi = sigma
    if abs(achieved - target) > CALIBRATION_TOL:
        raise NumericalError(f"calibration failed: achieved intra-block correlation {achieved:.4f}, target {target}")
    return Dictionary(_clone_dictionary(base, noise, sigma)), structure


def gen_block_sparse_data(
    d: Dictionary,
    b: BlockStructure,
    n_signals: int,
    blocks_per_signal: int,
    seed: int = 0,
    return_supports: bool = False,
):
    """Signals that are sums of ``blocks_per_signal`` random blocks with standard-normal weights.

    With ``return_supports`` the (n_signals, blocks_per_signal) array of
    generating 1-based block ids is returned alongside the training set.
    """
    if not 1 <= blocks_per_signal <= b.n_blocks:
        raise ValueError(f"blocks_per_signal must lie in 1..{b.n_blocks}")
    rng = np.random.default_rng(seed)
    picks = np.argsort(rng.random((n_signals, b.n_blocks)), axis=1)[:, :blocks_per_signal]
    weights = rng.standard_normal((d.n_atoms, n_signals))
    chosen = np.zeros((b.n_blocks, n_signals), dtype=bool)
    chosen[picks.T, np.arange(n_signals)[None, :]] = True
    X = np.where(chosen[b.assignment - 1], weights, 0.0)
    ys = TrainingSet(d.atoms @ X)
    if return_supports:
        return ys, np.sort(picks, axis=1) + 1
    return ys


def add_noise_snr(ys: TrainingSet, snr_db: float, seed: int = 0) -> TrainingSet:
    """Add white Gaussian noise scaled to the realized signal energy."""
    if snr_db == math.inf:
        return ys
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise ValueError("snr_db must be finite or +inf")
    energy = np.linalg.norm(ys.signals)
    if energy == 0:
        raise ValueError("cannot set an SNR on zero-energy signals")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(ys.signals.shape)
    noise *= energy / (np.linalg.norm(noise) * 10 ** (snr_db / 20))
    return TrainingSet(ys.signals + noise, ys.class_of_signal)


def realized_snr_db(clean: TrainingSet, noisy: TrainingSet) -> float:
    n = noisy.signals - clean.signals
    return 10 * math.log10(np.sum(clean.signals**2) / np.sum(n**2))


def gen_class_benchmark(
    d: Dictionary,
    b: BlockStructure,
    n_classes: int,
    signals_per_class: int,
    blocks_per_signal: int,
    snr_db: float = math.inf,
    seed: int = 0,
) -> TrainingSet:
    """Labeled data: class c draws its signals from its own share of the oracle blocks."""
    if b.n_blocks % n_classes:
        raise ValueError("number of blocks must be divisible by the number of classes")
    per = b.n_blocks // n_classes
    if blocks_per_signal > per:
        raise ValueError("blocks_per_signal exceeds blocks per class")
    rng = np.random.default_rng(seed)
    parts, labels = [], []
    for c in range(n_classes):
        atoms = np.flatnonzero((b.assignment - 1) // per == c)
        sub_b = BlockStructure(b.assignment[atoms] - c * per)
        sub_d = Dictionary(d.atoms[:, atoms])
        part = gen_block_sparse_data(sub_d, sub_b, signals_per_class, blocks_per_signal, int(rng.integers(2**32)))
        parts.append(part.signals)
        labels.append(np.full(signals_per_class, c + 1))
    ys = TrainingSet(np.hstack(parts), np.concatenate(labels))
    return add_noise_snr(ys, snr_db, int(rng.integers(2**32)))
