"""Block-structure estimators.

* SAC: agglomerative merging of blocks whose sparse-code supports overlap most.
* CGC: greedy grouping of the most mutually correlated atoms.
* Supervised CGC: CGC run inside each class's atom range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import BlockStructure, ClassLabels, Dictionary, InvariantError, SparseCodes

SCORE_TIE_TOL = 1e-12


def shrink_schedule(n_alive: int, n_total: int, base_size: int, shrink_fraction: float) -> int:
    """Maximum block size allowed while ``n_alive`` atoms remain ungrouped.

    Above ``ceil(shrink_fraction * n_total)`` remaining atoms the size is
    ``base_size``. Below it, the interval (0, threshold] is cut into
    ``base_size - 1`` equal bands and the size drops by one per band.
    ``shrink_fraction == 0`` disables shrinking.
    """
    if not 1 <= n_alive <= n_total:
        raise ValueError(f"need 1 <= n_alive <= n_total, got {n_alive}, {n_total}")
    threshold = math.ceil(shrink_fraction * n_total)
    if base_size <= 1 or n_alive > threshold:
        return base_size
    # band k (1-based from the top) covers (T - k*w, T - (k-1)*w] with w = T / (base - 1)
    k = ((threshold - n_alive) * (base_size - 1)) // threshold + 1
    return max(1, base_size - k)


@dataclass
class CgcWorkspace:
    """Mutable state of one CGC run.

    ``corr`` keeps the absolute atom correlations (zero diagonal) of the
    full dictionary; ``alive`` indexes the rows still in play, in original
    order, so the active sub-matrix is ``corr[alive][:, alive]``.
    """

    corr: np.ndarray
    alive: list = field(default_factory=list)
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    candidate_groups: list = field(default_factory=list)

    @classmethod
    def from_dictionary(cls, d: Dictionary) -> "CgcWorkspace":
        corr = np.abs(d.atoms.T @ d.atoms)
        np.fill_diagonal(corr, 0.0)
        np.clip(corr, 0.0, 1.0, out=corr)
        corr[corr <= SCORE_TIE_TOL] = 0.0  # numerically orthogonal pairs tie exactly
        corr = np.maximum(corr, corr.T)  # exact symmetry
        return cls(corr=corr, alive=list(range(d.n_atoms)))

    def score(self, group_size: int) -> None:
        """Fill ``scores`` (h) and ``candidate_groups`` (partner lists) for every alive atom."""
        alive = np.asarray(self.alive)
        sub = self.corr[np.ix_(alive, alive)]
        n_partners = group_size - 1
        if n_partners == 0:
            self.scores = np.zeros(alive.size)
            self.candidate_groups = [[] for _ in alive]
            return
        ranked = sub.copy()
        np.fill_diagonal(ranked, -np.inf)
        order = np.argsort(-ranked, axis=1, kind="stable")[:, :n_partners]
        self.scores = np.take_along_axis(sub, order, axis=1).sum(axis=1)
        self.candidate_groups = [alive[row].tolist() for row in order]

    def take_best(self) -> list:
        """Remove and return the winning group (seed first, then partners)."""
        h = self.scores
        seed = int(np.argmax(h >= h.max() - SCORE_TIE_TOL))
        group = [self.alive[seed]] + self.candidate_groups[seed]
        chosen = set(group)
        self.alive = [i for i in self.alive if i not in chosen]
        return group


def cgc_estimate(d: Dictionary, max_block_size: int, shrink_fraction: float = 0.2) -> BlockStructure:
    """Correlation-based greedy clustering; block ids follow formation order."""
    if max_block_size < 1:
        raise ValueError("max_block_size must be positive")
    ws = CgcWorkspace.from_dictionary(d)
    n = d.n_atoms
    assignment = np.zeros(n, dtype=np.int64)
    block_id = 0
    while ws.alive:
        size = min(shrink_schedule(len(ws.alive), n, max_block_size, shrink_fraction), len(ws.alive))
        ws.score(size)
        group = ws.take_best()
        block_id += 1
        assignment[group] = block_id
    return BlockStructure(assignment)


def cgc_winning_scores(d: Dictionary, max_block_size: int, shrink_fraction: float = 0.2) -> list:
    """Winning cumulative correlation of every block, in formation order (diagnostic)."""
    ws = CgcWorkspace.from_dictionary(d)
    out = []
    while ws.alive:
        size = min(shrink_schedule(len(ws.alive), d.n_atoms, max_block_size, shrink_fraction), len(ws.alive))
        ws.score(size)
        out.append(float(ws.scores.max()))
        ws.take_best()
    return out


def supervised_cgc_estimate(
    d: Dictionary, labels: ClassLabels, max_block_size: int, shrink_fraction: float = 0.2
) -> BlockStructure:
    """CGC inside each class; block ids run on across classes in class order."""
    if labels.label_of_atom.size != d.n_atoms:
        raise InvariantError("labels length must equal the atom count")
    assignment = np.zeros(d.n_atoms, dtype=np.int64)
    offset = 0
    for c in range(1, labels.n_classes + 1):
        idx = labels.atoms_of(c)
        if idx.size == 0:
            raise InvariantError(f"class {c} has no atoms")
        local = cgc_estimate(Dictionary(d.atoms[:, idx]), max_block_size, shrink_fraction)
        assignment[idx] = local.assignment + offset
        offset += local.n_blocks
    return BlockStructure(assignment)


def fixed_class_blocks(labels: ClassLabels, max_block_size: int) -> BlockStructure:
    """Unadapted supervised blocking: consecutive runs of ``max_block_size`` atoms inside each class."""
    assignment = np.zeros(labels.label_of_atom.size, dtype=np.int64)
    block_id = 0
    for c in range(1, labels.n_classes + 1):
        idx = labels.atoms_of(c)
        for start in range(0, idx.size, max_block_size):
            block_id += 1
            assignment[idx[start : start + max_block_size]] = block_id
    return BlockStructure(assignment)


def sac_estimate(d: Dictionary, codes: SparseCodes, max_block_size: int) -> BlockStructure:
    """Sparse agglomerative clustering.

    Starts from singletons and repeatedly merges the feasible pair of blocks
    whose signal supports share the most signals. Stops once no feasible
    pair shares any signal. Ids are renumbered by each block's first atom.
    """
    U = codes.coefficients
    if U.size == 0:
        raise ValueError("empty codes matrix")
    if U.shape[0] != d.n_atoms:
        raise ValueError("codes row count must equal the atom count")
    support = (U != 0).astype(np.float64)
    members = [[i] for i in range(d.n_atoms)]
    inter = support @ support.T

    while len(members) > 1:
        sizes = np.array([len(g) for g in members])
        feasible = (sizes[:, None] + sizes[None, :]) <= max_block_size
        cand = np.where(feasible, inter, 0.0)
        cand = np.triu(cand, k=1)
        best = cand.max()
        if best <= 0:
            break
        i, j = divmod(int(np.argmax(cand)), cand.shape[1])
        members[i] = members[i] + members[j]
        del members[j]
        support[i] = np.maximum(support[i], support[j])
        support = np.delete(support, j, axis=0)
        inter = np.delete(np.delete(inter, j, axis=0), j, axis=1)
        row = support @ support[i]
        inter[i, :] = row
        inter[:, i] = row

    return BlockStructure.from_blocks([sorted(g) for g in members], d.n_atoms)
