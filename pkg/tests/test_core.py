import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockdict.core import (
    BlockStructure,
    ClassLabels,
    ConfigError,
    Dictionary,
    ExperimentConfig,
    FormatError,
    InvariantError,
    SparseCodes,
    TrainingSet,
    load_dictionary,
    load_training_set,
    save_dictionary,
    save_training_set,
)


class TestDictionary:
    def test_small_drift_is_renormalized(self):
        a = np.eye(3)
        a[:, 1] *= 1 + 5e-7
        d = Dictionary(a)
        assert np.max(np.abs(np.linalg.norm(d.atoms, axis=0) - 1)) <= 1e-9

    def test_large_deviation_rejected(self):
        a = np.eye(3)
        a[:, 2] *= 1.01
        with pytest.raises(InvariantError):
            Dictionary(a)

    def test_non_finite_rejected(self):
        a = np.eye(2)
        a[0, 0] = np.nan
        with pytest.raises(InvariantError, match="non-finite atom"):
            Dictionary(a)

    def test_immutable(self):
        d = Dictionary(np.eye(2))
        with pytest.raises(ValueError):
            d.atoms[0, 0] = 5.0

    def test_from_columns(self):
        d = Dictionary.from_columns(np.array([[3.0, 0.0], [4.0, 2.0]]))
        np.testing.assert_allclose(d.atoms[:, 0], [0.6, 0.8])


class TestBlockStructure:
    def test_gap_rejected(self):
        with pytest.raises(InvariantError, match="non-contiguous block ids"):
            BlockStructure(np.array([1, 3]))

    def test_views(self):
        b = BlockStructure(np.array([2, 1, 2, 1, 3]))
        assert b.n_blocks == 3 and b.fully_formed
        assert b.blocks(2).tolist() == [0, 2]
        assert b.sizes().tolist() == [2, 2, 1]
        assert b.partition() == frozenset({frozenset({0, 2}), frozenset({1, 3}), frozenset({4})})

    def test_unassigned_atoms(self):
        b = BlockStructure(np.array([0, 1, 1, 0]))
        assert not b.fully_formed and b.n_blocks == 1

    @given(st.lists(st.integers(1, 6), min_size=1, max_size=30))
    def test_groups_partition_atoms(self, raw):
        # relabel to a contiguous id range
        ids = {v: k + 1 for k, v in enumerate(sorted(set(raw)))}
        b = BlockStructure(np.array([ids[v] for v in raw]))
        flat = np.concatenate(b.groups())
        assert sorted(flat.tolist()) == list(range(len(raw)))


class TestLabels:
    def test_contiguous_layout(self):
        with pytest.raises(InvariantError):
            ClassLabels(np.array([1, 2, 1]))
        with pytest.raises(InvariantError):
            ClassLabels(np.array([1, 1, 3]))
        lab = ClassLabels.from_counts([2, 3])
        assert lab.counts.tolist() == [2, 3] and lab.atoms_of(2).tolist() == [2, 3, 4]

    def test_training_set_classes(self):
        ys = TrainingSet(np.ones((2, 3)), np.array([2, 1, 2]))
        assert ys.n_classes == 2 and ys.of_class(2).n_signals == 2


def test_block_support_sizes():
    b = BlockStructure(np.array([1, 1, 2, 3]))
    u = np.array([[1.0, 0], [0, 0], [2.0, 0], [0, 1.0]])
    assert SparseCodes(u).block_support_sizes(b).tolist() == [2, 1]


class TestExperimentConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.shrink_fraction == 0.2 and cfg.trials == 50
        assert ExperimentConfig(structure_mode="cgc").update_period() == math.inf
        assert ExperimentConfig(structure_mode="sac").update_period() == 1

    @pytest.mark.parametrize(
        "kw",
        [
            {"max_block_size": 0},
            {"shrink_fraction": 1.0},
            {"structure_mode": "nope"},
            {"structure_update_period": 1.5},
            {"snr_db": -math.inf},
            {"residual_tolerance": -1.0},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kw)


class TestContainer:
    @pytest.mark.parametrize("suffix", [".bdkt", ".json"])
    def test_round_trip(self, tmp_path, suffix):
        d = Dictionary(np.eye(3)[:, :2])
        b = BlockStructure(np.array([1, 1]))
        path = tmp_path / f"d{suffix}"
        save_dictionary(d, b, None, path)
        d2, b2, lab = load_dictionary(path)
        assert d2 == d and b2 == b and lab is None

    def test_labels_preserved(self, tmp_path):
        d = Dictionary(np.eye(3))
        labels = ClassLabels(np.array([1, 1, 2]))
        save_dictionary(d, BlockStructure(np.array([1, 1, 2])), labels, tmp_path / "d.bdkt")
        assert load_dictionary(tmp_path / "d.bdkt")[2] == labels

    def test_bit_exact(self, tmp_path, rng):
        a = rng.standard_normal((7, 5))
        d = Dictionary(a / np.linalg.norm(a, axis=0))
        b = BlockStructure(np.array([1, 2, 2, 3, 1]))
        save_dictionary(d, b, None, tmp_path / "x.bdkt")
        save_dictionary(d, b, None, tmp_path / "x.json")
        for name in ("x.bdkt", "x.json"):
            assert np.array_equal(load_dictionary(tmp_path / name)[0].atoms, d.atoms)

    def test_binary_layout(self, tmp_path):
        save_dictionary(Dictionary(np.eye(2)), BlockStructure(np.array([1, 2])), None, tmp_path / "d.bdkt")
        raw = (tmp_path / "d.bdkt").read_bytes()
        assert raw[:5] == b"BDKT1" and len(raw) == 5 + 9 + 2 * 4 + 4 * 8

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "d.bdkt"
        save_dictionary(Dictionary(np.eye(2)), BlockStructure(np.array([1, 1])), None, path)
        raw = bytearray(path.read_bytes())
        raw[0] = ord("X")
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="bad magic"):
            load_dictionary(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "d.bdkt"
        save_dictionary(Dictionary(np.eye(2)), BlockStructure(np.array([1, 1])), None, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError, match="malformed header"):
            load_dictionary(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dictionary(tmp_path / "none.bdkt")

    def test_gap_in_file(self, tmp_path):
        doc = {"m": 2, "n_a": 2, "assignment": [1, 3], "labels": None, "atoms": [[1, 0], [0, 1]]}
        (tmp_path / "g.json").write_text(json.dumps(doc))
        with pytest.raises(InvariantError, match="non-contiguous block ids"):
            load_dictionary(tmp_path / "g.json")

    def test_nan_in_file(self, tmp_path):
        doc = {"m": 2, "n_a": 1, "assignment": [1], "labels": None, "atoms": [[float("nan"), 0]]}
        (tmp_path / "n.json").write_text(json.dumps(doc))
        with pytest.raises(InvariantError, match="non-finite atom"):
            load_dictionary(tmp_path / "n.json")

    def test_non_unit_in_file_is_not_repaired(self, tmp_path):
        doc = {"m": 2, "n_a": 1, "assignment": [1], "labels": None, "atoms": [[1 + 1e-7, 0]]}
        (tmp_path / "u.json").write_text(json.dumps(doc))
        with pytest.raises(InvariantError, match="non-unit atom"):
            load_dictionary(tmp_path / "u.json")

    def test_training_set_round_trip(self, tmp_path, rng):
        ys = TrainingSet(rng.standard_normal((4, 6)), np.array([1, 1, 2, 2, 3, 3]))
        save_training_set(ys, tmp_path / "y.bdkt")
        assert load_training_set(tmp_path / "y.bdkt") == ys

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_round_trip_property(self, m, n, seed):
        import tempfile
        from pathlib import Path

        r = np.random.default_rng(seed)
        a = r.standard_normal((m, n)) + 1e-3
        d = Dictionary(a / np.linalg.norm(a, axis=0))
        b = BlockStructure(np.arange(1, n + 1))
        with tempfile.TemporaryDirectory() as tmp:
            save_dictionary(d, b, None, Path(tmp) / "p.bdkt")
            d2, b2, _ = load_dictionary(Path(tmp) / "p.bdkt")
        assert d2 == d and b2 == b
