"""Shared domain types and the dictionary container format.

Conventions: atom and signal indices are 0-based on the Python side;
block ids and class ids are 1-based everywhere (0 = unassigned block).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

NORM_TOL = 1e-9
RENORM_LIMIT = 1e-6
MAGIC = b"BDKT1"
STRUCTURE_MODES = ("sac", "cgc", "supervised_cgc", "fixed_supervised")


class BlockDictError(Exception):
    """Base class for all package errors."""


class InvariantError(BlockDictError, ValueError):
    pass


class FormatError(BlockDictError, ValueError):
    pass


class ConfigError(BlockDictError, ValueError):
    pass


class NumericalError(BlockDictError, ArithmeticError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Column-stacked unit-norm atoms, shape (m, n_atoms).

    Columns whose norm drifts from 1 by at most 1e-6 are renormalized;
    anything further off is rejected as corrupt.
    """

    atoms: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=np.float64, copy=True)
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 1:
            raise InvariantError(f"atoms must be a non-empty 2-D matrix, got shape {atoms.shape}")
        if not np.all(np.isfinite(atoms)):
            raise InvariantError("non-finite atom")
        norms = np.linalg.norm(atoms, axis=0)
        dev = np.abs(norms - 1.0)
        if np.any(dev > RENORM_LIMIT):
            j = int(np.argmax(dev))
            raise InvariantError(f"atom {j} has norm {norms[j]:.6g}, not unit")
        drift = dev > NORM_TOL
        if np.any(drift):
            atoms[:, drift] /= norms[drift]
        object.__setattr__(self, "atoms", _frozen(atoms))

    @classmethod
    def from_columns(cls, columns: np.ndarray) -> "Dictionary":
        """Normalize arbitrary nonzero columns into a dictionary."""
        columns = np.asarray(columns, dtype=np.float64)
        norms = np.linalg.norm(columns, axis=0)
        if np.any(norms == 0):
            raise InvariantError("cannot normalize a zero column")
        return cls(columns / norms)

    @property
    def m(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Dictionary):
            return NotImplemented
        return np.array_equal(self.atoms, other.atoms)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BlockStructure:
    """Per-atom block ids; 0 marks an atom not yet assigned to any block."""

    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if a.ndim != 1 or a.size < 1:
            raise InvariantError("assignment must be a non-empty vector")
        if not np.issubdtype(a.dtype, np.integer):
            if not np.all(np.mod(a, 1) == 0):
                raise InvariantError("block ids must be integers")
        a = a.astype(np.int64)
        if np.any(a < 0):
            raise InvariantError("negative block id")
        ids = np.unique(a[a > 0])
        if ids.size and not np.array_equal(ids, np.arange(1, ids.size + 1)):
            raise InvariantError(f"non-contiguous block ids {ids.tolist()}")
        object.__setattr__(self, "assignment", _frozen(a.copy()))

    @classmethod
    def from_blocks(cls, blocks: Iterable[Sequence[int]], n_atoms: int) -> "BlockStructure":
        """Build from 0-based atom index groups; group order gives the ids."""
        a = np.zeros(n_atoms, dtype=np.int64)
        for k, idx in enumerate(blocks, start=1):
            idx = list(idx)
            if np.any(a[idx] != 0):
                raise InvariantError("blocks overlap")
            a[idx] = k
        return cls(a)

    @property
    def n_atoms(self) -> int:
        return self.assignment.size

    @property
    def n_blocks(self) -> int:
        return int(self.assignment.max(initial=0))

    @property
    def fully_formed(self) -> bool:
        return bool(np.all(self.assignment > 0))

    def blocks(self, k: int) -> np.ndarray:
        """Sorted 0-based atom indices of block ``k`` (1-based id)."""
        return np.flatnonzero(self.assignment == k)

    def groups(self) -> list[np.ndarray]:
        return [self.blocks(k) for k in range(1, self.n_blocks + 1)]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_blocks + 1)[1:]

    def partition(self) -> frozenset:
        """Label-free view: set of atom-index sets."""
        return frozenset(frozenset(g.tolist()) for g in self.groups())

    def padded_groups(self, sentinel: int) -> np.ndarray:
        """(n_blocks, max_size) index table, short rows filled with ``sentinel``."""
        groups = self.groups()
        width = max(len(g) for g in groups)
        table = np.full((len(groups), width), sentinel, dtype=np.int64)
        for k, g in enumerate(groups):
            table[k, : len(g)] = g
        return table

    def __eq__(self, other):
        if not isinstance(other, BlockStructure):
            return NotImplemented
        return np.array_equal(self.assignment, other.assignment)

    __hash__ = None


def _check_class_ids(labels: np.ndarray, what: str) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise InvariantError(f"{what} must be a vector")
    labels = labels.astype(np.int64)
    ids = np.unique(labels)
    if ids.size == 0 or not np.array_equal(ids, np.arange(1, ids.size + 1)):
        raise InvariantError(f"{what} must cover the contiguous range 1..C, got {ids.tolist()}")
    return labels


@dataclass(frozen=True, eq=False)
class ClassLabels:
    """Class id (1..C) of every atom; each class occupies one contiguous index range."""

    label_of_atom: np.ndarray

    def __post_init__(self):
        lab = _check_class_ids(self.label_of_atom, "atom labels")
        if np.any(np.diff(lab) < 0):
            raise InvariantError("atoms of a class must occupy a contiguous, ascending index range")
        object.__setattr__(self, "label_of_atom", _frozen(lab.copy()))

    @classmethod
    def from_counts(cls, counts: Sequence[int]) -> "ClassLabels":
        return cls(np.repeat(np.arange(1, len(counts) + 1), counts))

    @property
    def n_classes(self) -> int:
        return int(self.label_of_atom.max())

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.label_of_atom)[1:]

    def atoms_of(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.label_of_atom == c)

    def __eq__(self, other):
        if not isinstance(other, ClassLabels):
            return NotImplemented
        return np.array_equal(self.label_of_atom, other.label_of_atom)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TrainingSet:
    signals: np.ndarray
    class_of_signal: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.array(self.signals, dtype=np.float64, copy=True)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2:
            raise InvariantError("signals must be a matrix")
        if not np.all(np.isfinite(y)):
            raise InvariantError("non-finite signal entry")
        object.__setattr__(self, "signals", _frozen(y))
        if self.class_of_signal is not None:
            lab = _check_class_ids(self.class_of_signal, "signal classes")
            if lab.size != y.shape[1]:
                raise InvariantError("one class label per signal required")
            object.__setattr__(self, "class_of_signal", _frozen(lab.copy()))

    @property
    def m(self) -> int:
        return self.signals.shape[0]

    @property
    def n_signals(self) -> int:
        return self.signals.shape[1]

    @property
    def n_classes(self) -> int:
        return 0 if self.class_of_signal is None else int(self.class_of_signal.max())

    def of_class(self, c: int) -> "TrainingSet":
        if self.class_of_signal is None:
            raise InvariantError("training set has no class labels")
        keep = self.class_of_signal == c
        return TrainingSet(self.signals[:, keep])

    def __eq__(self, other):
        if not isinstance(other, TrainingSet):
            return NotImplemented
        same_lab = (self.class_of_signal is None and other.class_of_signal is None) or (
            self.class_of_signal is not None
            and other.class_of_signal is not None
            and np.array_equal(self.class_of_signal, other.class_of_signal)
        )
        return same_lab and np.array_equal(self.signals, other.signals)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SparseCodes:
    """Dense coefficient matrix (n_atoms, n_signals)."""

    coefficients: np.ndarray

    def __post_init__(self):
        u = np.array(self.coefficients, dtype=np.float64, copy=True)
        if u.ndim != 2:
            raise InvariantError("coefficients must be a matrix")
        if not np.all(np.isfinite(u)):
            raise InvariantError("non-finite coefficient")
        object.__setattr__(self, "coefficients", _frozen(u))

    @property
    def n_atoms(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_signals(self) -> int:
        return self.coefficients.shape[1]

    def support(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.coefficients[:, i])

    def block_usage(self, b: BlockStructure) -> np.ndarray:
        """Boolean (n_blocks, n_signals): block k is used by signal i."""
        used = self.coefficients != 0
        out = np.zeros((b.n_blocks, self.n_signals), dtype=bool)
        for k, g in enumerate(b.groups()):
            out[k] = used[g].any(axis=0)
        return out

    def block_support_sizes(self, b: BlockStructure) -> np.ndarray:
        return self.block_usage(b).sum(axis=0)


@dataclass(frozen=True)
class ExperimentConfig:
    """All training / experiment tunables.

    ``structure_update_period=None`` picks the mode default: re-estimate
    every iteration for sac and the supervised modes, estimate once for cgc.
    ``math.inf`` also means "estimate once".
    """

    max_block_size: int = 3
    block_sparsity: int = 3
    atom_sparsity: int = 3
    outer_iterations: int = 10
    structure_update_period: Optional[float] = None
    shrink_fraction: float = 0.2
    snr_db: float = math.inf
    trials: int = 50
    rng_seed: int = 0
    structure_mode: str = "cgc"
    residual_tolerance: float = 1e-9
    ksvd_iterations: int = 10
    supervised_init: str = "examples"

    def __post_init__(self):
        for name in ("max_block_size", "block_sparsity", "atom_sparsity", "trials"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        for name in ("outer_iterations", "ksvd_iterations"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"{name} must be a non-negative integer, got {v!r}")
        p = self.structure_update_period
        if p is not None and not (p == math.inf or (float(p).is_integer() and p >= 1)):
            raise ConfigError(f"structure_update_period must be a positive integer or inf, got {p!r}")
        if not 0.0 <= self.shrink_fraction < 1.0:
            raise ConfigError(f"shrink_fraction must lie in [0, 1), got {self.shrink_fraction!r}")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ConfigError(f"snr_db must be finite or +inf, got {self.snr_db!r}")
        if not isinstance(self.rng_seed, (int, np.integer)) or self.rng_seed < 0:
            raise ConfigError(f"rng_seed must be an unsigned integer, got {self.rng_seed!r}")
        if self.structure_mode not in STRUCTURE_MODES:
            raise ConfigError(f"structure_mode must be one of {STRUCTURE_MODES}, got {self.structure_mode!r}")
        if not self.residual_tolerance >= 0:
            raise ConfigError("residual_tolerance must be >= 0")
        if self.supervised_init not in ("examples", "ksvd"):
            raise ConfigError("supervised_init must be 'examples' or 'ksvd'")

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def update_period(self) -> float:
        if self.structure_update_period is not None:
            return self.structure_update_period
        return math.inf if self.structure_mode == "cgc" else 1


# ---------------------------------------------------------------------------
# container format


def _write_container(path: Path, matrix: np.ndarray, assignment: np.ndarray, labels: Optional[np.ndarray]):
    m, n = matrix.shape
    if path.suffix == ".json":
        doc = {
            "m": m,
            "n_a": n,
            "assignment": [int(x) for x in assignment],
            "labels": None if labels is None else [int(x) for x in labels],
            "atoms": [[float(v) for v in matrix[:, j]] for j in range(n)],
        }
        path.write_text(json.dumps(doc))
        return
    if m > 0xFFFFFFFF or n > 0xFFFFFFFF:
        raise FormatError("dimension overflow")
    for vec in (assignment, labels):
        if vec is not None and np.any(np.abs(vec) > 0x7FFFFFFF):
            raise FormatError("dimension overflow")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIB", m, n, labels is not None))
        f.write(np.asarray(assignment, dtype="<i4").tobytes())
        if labels is not None:
            f.write(np.asarray(labels, dtype="<i4").tobytes())
        f.write(np.asarray(matrix, dtype="<f8").tobytes(order="F"))


def _read_container(path: Path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    if path.suffix == ".json":
        try:
            doc = json.loads(path.read_text())
            m, n = int(doc["m"]), int(doc["n_a"])
            assignment = np.asarray(doc["assignment"], dtype=np.int64)
            labels = None if doc.get("labels") is None else np.asarray(doc["labels"], dtype=np.int64)
            atoms = np.asarray(doc["atoms"], dtype=np.float64).reshape(n, m).T
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed header in {path}: {exc}") from exc
    else:
        raw = path.read_bytes()
        if raw[:5] != MAGIC:
            raise FormatError(f"bad magic in {path}")
        if len(raw) < 14:
            raise FormatError(f"malformed header in {path}")
        m, n, has_labels = struct.unpack_from("<IIB", raw, 5)
        if has_labels not in (0, 1):
            raise FormatError(f"malformed header in {path}: has_labels={has_labels}")
        expected = 14 + 4 * n * (1 + has_labels) + 8 * m * n
        if len(raw) != expected:
            raise FormatError(f"malformed header in {path}: expected {expected} bytes, got {len(raw)}")
        off = 14
        assignment = np.frombuffer(raw, dtype="<i4", count=n, offset=off).astype(np.int64)
        off += 4 * n
        labels = None
        if has_labels:
            labels = np.frombuffer(raw, dtype="<i4", count=n, offset=off).astype(np.int64)
            off += 4 * n
        atoms = np.frombuffer(raw, dtype="<f8", count=m * n, offset=off).reshape((m, n), order="F")
    if assignment.shape != (n,) or (labels is not None and labels.shape != (n,)):
        raise FormatError(f"malformed header in {path}: vector lengths disagree with n_a")
    return np.array(atoms, dtype=np.float64), assignment, labels


def save_dictionary(d: Dictionary, b: BlockStructure, labels: Optional[ClassLabels], path) -> None:
    """Write (dictionary, structure, labels) as .bdkt (binary) or .json."""
    path = Path(path)
    if b.n_atoms != d.n_atoms or (labels is not None and labels.label_of_atom.size != d.n_atoms):
        raise InvariantError("structure / labels length must equal the atom count")
    _write_container(path, d.atoms, b.assignment, None if labels is None else labels.label_of_atom)


def load_dictionary(path) -> tuple[Dictionary, BlockStructure, Optional[ClassLabels]]:
    atoms, assignment, labels = _read_container(Path(path))
    if not np.all(np.isfinite(atoms)):
        raise InvariantError("non-finite atom")
    dev = np.abs(np.linalg.norm(atoms, axis=0) - 1.0)
    if np.any(dev > NORM_TOL):
        raise InvariantError(f"non-unit atom {int(np.argmax(dev))} (deviation {dev.max():.3g})")
    return (
        Dictionary(atoms),
        BlockStructure(assignment),
        None if labels is None else ClassLabels(labels),
    )


def save_training_set(ys: TrainingSet, path) -> None:
    """Datasets reuse the dictionary container: all-zero assignment, labels = signal classes."""
    _write_container(Path(path), ys.signals, np.zeros(ys.n_signals, dtype=np.int64), ys.class_of_signal)


def load_training_set(path) -> TrainingSet:
    signals, _, labels = _read_container(Path(path))
    return TrainingSet(signals, labels)
