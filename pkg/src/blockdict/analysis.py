"""Coherence diagnostics and experiment metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coding import code_blocks
from .core import BlockStructure, Dictionary, InvariantError, TrainingSet

COHERENCE_THRESHOLD = 0.6
TOP_PAIRS = 20


def _abs_gram(d: Dictionary) -> np.ndarray:
    return np.clip(np.abs(d.atoms.T @ d.atoms), 0.0, 1.0)


def coherence_profile(d: Dictionary) -> np.ndarray:
    """All pairwise |atom correlations|, sorted in descending order."""
    if d.n_atoms < 2:
        raise ValueError("need at least two atoms")
    iu = np.triu_indices(d.n_atoms, k=1)
    return np.sort(_abs_gram(d)[iu])[::-1]


def count_above(d: Dictionary, threshold: float = COHERENCE_THRESHOLD) -> int:
    return int(np.count_nonzero(coherence_profile(d) > threshold))


@dataclass(frozen=True)
class BlockCoherence:
    intra_mean: float
    inter_mean: float
    inter_max: float
    inter_top_mean: float
    singleton_only: bool = False


def block_coherence_stats(d: Dictionary, b: BlockStructure, top: int = TOP_PAIRS) -> BlockCoherence:
    """Mean intra-block, mean / max / top-``top`` mean inter-block |correlation|."""
    if not b.fully_formed or b.n_atoms != d.n_atoms:
        raise InvariantError("need a fully formed structure over the same atoms")
    g = _abs_gram(d)
    iu = np.triu_indices(d.n_atoms, k=1)
    vals = g[iu]
    same = b.assignment[iu[0]] == b.assignment[iu[1]]
    intra, inter = vals[same], vals[~same]
    if inter.size == 0:
        inter = np.zeros(1)
    top_vals = np.sort(inter)[::-1][:top]
    return BlockCoherence(
        intra_mean=float(intra.mean()) if intra.size else 0.0,
        inter_mean=float(inter.mean()),
        inter_max=float(inter.max()),
        inter_top_mean=float(top_vals.mean()),
        singleton_only=intra.size == 0,
    )


def block_recovery_rate(estimated: BlockStructure, oracle: BlockStructure) -> float:
    """Fraction of oracle blocks reproduced exactly (as atom sets) by the estimate."""
    if estimated.n_atoms != oracle.n_atoms:
        raise ValueError("structures cover different atom counts")
    truth = oracle.partition()
    return len(truth & estimated.partition()) / len(truth)


def reconstruction_error(ys: TrainingSet, d: Dictionary, b: BlockStructure, p: int) -> float:
    """Block-OMP code ``ys`` with ``p`` blocks and return ||Y - DU||_F / ||Y||_F."""
    norm = np.linalg.norm(ys.signals)
    if norm == 0:
        raise ValueError("zero-energy signals")
    coding = code_blocks(d, b, ys.signals, p)
    return float(np.linalg.norm(ys.signals - d.atoms @ coding.codes.coefficients) / norm)
