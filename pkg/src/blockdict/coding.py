"""Greedy sparse coders: OMP over atoms and block-OMP over blocks.

Both run on one batched kernel. The least-squares refit is an incremental
QR (classical Gram-Schmidt, applied twice) of the selected columns, so a
column that is numerically dependent on the ones already chosen is simply
dropped from the refit and gets a zero coefficient. Every per-signal
operation is a stacked (batched) numpy call, which keeps each column's
arithmetic independent of how many other columns share the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import BlockStructure, Dictionary, ExperimentConfig, NumericalError, SparseCodes, TrainingSet

TIE_TOL = 1e-12
DEPENDENT_TOL = 1e-10


@dataclass(frozen=True)
class CodingResult:
    """Outcome of coding one signal.

    ``selected`` holds 0-based atom indices for :func:`omp` and 1-based
    block ids for :func:`bomp`, in selection order.
    """

    code: np.ndarray
    residual_norm: float
    selected: tuple
    residual_history: tuple = ()


@dataclass(frozen=True)
class BatchCoding:
    codes: SparseCodes
    residual_norms: np.ndarray
    selected: np.ndarray  # (n_signals, steps) group indices, -1 where nothing was picked
    residual_history: np.ndarray  # (n_signals, steps + 1), nan after the coder stopped


def _pursuit(atoms, table, Y, n_steps, tol, basis=None, basis_table=None):
    """Greedy group pursuit.

    ``table`` lists the atom indices of each selectable group, padded with
    ``n_atoms`` (an appended zero column, which always counts as dependent).
    Groups are scored by the norm of their correlations with the residual,
    taken against ``basis`` columns (``basis_table`` rows) when given and
    against the atoms themselves otherwise.
    """
    m, n_atoms = atoms.shape
    n_s = Y.shape[1]
    n_groups, width = table.shape
    Dz = np.zeros((m, n_atoms + 1))
    Dz[:, :n_atoms] = atoms
    if basis is None:
        Sz, score_table = Dz, table
    else:
        Sz = np.zeros((m, basis.shape[1] + 1))
        Sz[:, :-1] = basis
        score_table = basis_table
    cap = n_steps * width

    R = np.array(Y.T, dtype=np.float64, order="C", copy=True)  # residual rows
    Q = np.zeros((n_s, cap, m))
    T = np.broadcast_to(np.eye(cap), (n_s, cap, cap)).copy()
    z = np.zeros((n_s, cap))
    slot_atom = np.full((n_s, cap), n_atoms, dtype=np.int64)
    picked = np.full((n_s, n_steps), -1, dtype=np.int64)
    used = np.zeros((n_s, n_groups), dtype=bool)
    hist = np.full((n_s, n_steps + 1), np.nan)

    norms = np.sqrt(np.sum(R * R, axis=1))
    hist[:, 0] = norms
    active = np.flatnonzero(norms > tol)

    for t in range(n_steps):
        if active.size == 0:
            break
        r = R[active]
        corr = r @ Sz
        if score_table.shape[1] == 1:
            scores = np.abs(corr[:, score_table[:, 0]])
        else:
            g = corr[:, score_table]
            scores = np.sqrt(np.sum(g * g, axis=2))
        scores[used[active]] = -np.inf
        best = scores.max(axis=1)
        live = best > 0
        if not np.all(live):
            active, r, scores, best = active[live], r[live], scores[live], best[live]
            if active.size == 0:
                break
        choice = np.argmax(scores >= (best - TIE_TOL)[:, None], axis=1)
        picked[active, t] = choice
        used[active, choice] = True

        cols = table[choice]  # (na, width)
        Qa = Q[active]
        Ta = T[active]
        za = z[active]
        base = t * width
        for j in range(width):
            s = base + j
            a = Dz[:, cols[:, j]].T.copy()  # (na, m)
            coef = np.zeros((active.size, s))
            if s:
                Qs = Qa[:, :s, :]
                for _ in range(2):
                    c = np.einsum("nsm,nm->ns", Qs, a)
                    a -= np.einsum("ns,nsm->nm", c, Qs)
                    coef += c
            nrm = np.sqrt(np.sum(a * a, axis=1))
            dep = nrm <= DEPENDENT_TOL
            q = np.where(dep[:, None], 0.0, a / np.where(dep, 1.0, nrm)[:, None])
            Qa[:, s, :] = q
            Ta[:, :s, s] = coef
            Ta[:, s, s] = np.where(dep, 1.0, nrm)
            proj = np.sum(q * r, axis=1)
            r -= proj[:, None] * q
            za[:, s] = proj
            slot_atom[active, s] = cols[:, j]
        Q[active] = Qa
        T[active] = Ta
        z[active] = za
        R[active] = r

        nr = np.sqrt(np.sum(r * r, axis=1))
        norms[active] = nr
        hist[active, t + 1] = nr
        more = (nr > tol) & ~used[active].all(axis=1)
        active = active[more]

    coeffs = np.linalg.solve(T, z[:, :, None])[:, :, 0]
    if not np.all(np.isfinite(coeffs)):
        bad = int(np.flatnonzero(~np.isfinite(coeffs).all(axis=1))[0])
        raise NumericalError(f"non-finite coefficients for column {bad}")
    U = np.zeros((n_atoms + 1, n_s))
    U[slot_atom.ravel(), np.repeat(np.arange(n_s), cap)] = coeffs.ravel()
    U = U[:n_atoms]
    return U, norms, picked, hist


def _check_signals(d: Dictionary, Y: np.ndarray) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != d.m:
        raise ValueError(f"signal length {Y.shape[0]} does not match dictionary dimension {d.m}")
    return Y


def block_bases(d: Dictionary, b: BlockStructure):
    """Orthonormal basis of every block's span, packed as (columns, padded index table).

    Scoring a block against its own orthonormal basis measures the residual
    energy the block can explain; for blocks whose atoms are already
    orthonormal this equals the norm of the plain atom correlations.
    """
    groups = b.groups()
    width = max(len(g) for g in groups)
    cols = []
    for g in groups:
        u, s, _ = np.linalg.svd(d.atoms[:, g], full_matrices=False)
        cols.append(u[:, s > DEPENDENT_TOL * max(1.0, s[0])])
    basis = np.hstack(cols)
    table = np.full((len(groups), width), basis.shape[1], dtype=np.int64)  # pad -> zero column
    pos = 0
    for k, c in enumerate(cols):
        table[k, : c.shape[1]] = np.arange(pos, pos + c.shape[1])
        pos += c.shape[1]
    return basis, table


def code_atoms(d: Dictionary, Y, sparsity: int, residual_tolerance: float = 1e-9) -> BatchCoding:
    """OMP on every column of ``Y``."""
    Y = _check_signals(d, Y)
    if not 1 <= sparsity <= min(d.m, d.n_atoms):
        raise ValueError(f"sparsity must lie in 1..{min(d.m, d.n_atoms)}, got {sparsity}")
    table = np.arange(d.n_atoms)[:, None]
    U, norms, picked, hist = _pursuit(d.atoms, table, Y, sparsity, residual_tolerance)
    return BatchCoding(SparseCodes(U), norms, picked, hist)


def code_blocks(
    d: Dictionary, b: BlockStructure, Y, block_sparsity: int, residual_tolerance: float = 1e-9
) -> BatchCoding:
    """Block-OMP on every column of ``Y``; ``selected`` entries are 0-based block positions."""
    Y = _check_signals(d, Y)
    if b.n_atoms != d.n_atoms:
        raise ValueError("block structure length does not match the atom count")
    if not b.fully_formed:
        raise ValueError("block structure has unassigned atoms")
    if not 1 <= block_sparsity <= b.n_blocks:
        raise ValueError(f"block_sparsity must lie in 1..{b.n_blocks}, got {block_sparsity}")
    table = b.padded_groups(sentinel=d.n_atoms)
    basis, basis_table = block_bases(d, b)
    U, norms, picked, hist = _pursuit(d.atoms, table, Y, block_sparsity, residual_tolerance, basis, basis_table)
    return BatchCoding(SparseCodes(U), norms, picked, hist)


def _single(batch: BatchCoding, offset: int) -> CodingResult:
    sel = tuple(int(k) + offset for k in batch.selected[0] if k >= 0)
    h = batch.residual_history[0]
    return CodingResult(
        code=batch.codes.coefficients[:, 0].copy(),
        residual_norm=float(batch.residual_norms[0]),
        selected=sel,
        residual_history=tuple(float(v) for v in h[~np.isnan(h)]),
    )


def omp(d: Dictionary, y, sparsity: int, residual_tolerance: float = 1e-9) -> CodingResult:
    """Orthogonal matching pursuit for one signal."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("omp codes a single signal vector")
    return _single(code_atoms(d, y, sparsity, residual_tolerance), 0)


def bomp(
    d: Dictionary, b: BlockStructure, y, block_sparsity: int, residual_tolerance: float = 1e-9
) -> CodingResult:
    """Block-OMP for one signal; ``selected`` holds 1-based block ids."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("bomp codes a single signal vector")
    return _single(code_blocks(d, b, y, block_sparsity, residual_tolerance), 1)


def batch_code(d: Dictionary, b: Optional[BlockStructure], ys: TrainingSet, cfg: ExperimentConfig) -> SparseCodes:
    """Code every training signal: OMP when ``b`` is None, block-OMP otherwise."""
    if b is None:
        return code_atoms(d, ys.signals, cfg.atom_sparsity, cfg.residual_tolerance).codes
    return code_blocks(d, b, ys.signals, cfg.block_sparsity, cfg.residual_tolerance).codes
