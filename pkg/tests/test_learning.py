import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockdict.coding import code_blocks
from blockdict.core import (
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
from blockdict.learning import (
    TrainReport,
    bksvd_block_update,
    bksvd_train,
    block_update_counted,
    ksvd_train,
    relative_error,
    supervised_init,
    supervised_train,
)
from blockdict.structure import cgc_estimate
from blockdict.synthetic import gen_block_sparse_data, gen_class_benchmark

from conftest import block_orthonormal, random_dictionary


class TestKsvd:
    def test_repeated_orthonormal_columns(self):
        q = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 3)))[0]
        Y = np.tile(q, 10) * np.repeat([1.0, 2.0, -1.5], 10)[None, :].reshape(1, -1)[:, :30]
        d, codes, rep = ksvd_train(TrainingSet(Y), 3, 1, 2, seed=0)
        assert rep.rel_errors[-1] < 1e-10
        assert np.allclose(np.abs(q.T @ d.atoms).max(axis=1), 1.0)

    def test_zero_iterations_returns_init(self, rng):
        Y = rng.standard_normal((5, 20))
        d, _, rep = ksvd_train(TrainingSet(Y), 4, 2, 0, seed=3)
        normed = Y / np.linalg.norm(Y, axis=0)
        assert rep.iterations_run == 0
        for j in range(4):
            assert np.min(np.linalg.norm(normed - d.atoms[:, [j]], axis=0)) == 0.0

    def test_improves_on_init(self, oracle_068):
        ys = gen_block_sparse_data(*oracle_068, 5000, 2, seed=1)
        _, _, rep = ksvd_train(ys, 60, 3, 3, seed=0)
        assert rep.rel_errors[-1] < rep.initial_error

    def test_too_many_atoms(self):
        with pytest.raises(ValueError):
            ksvd_train(TrainingSet(np.ones((3, 2))), 3, 1, 1)

    def test_zero_columns_never_selected(self, rng):
        Y = np.hstack([np.zeros((4, 50)), rng.standard_normal((4, 4))])
        d, _, _ = ksvd_train(TrainingSet(Y), 4, 1, 0, seed=0)
        assert np.all(np.isfinite(d.atoms))


class TestBlockUpdate:
    def test_whole_dictionary_block(self, rng):
        Y = rng.standard_normal((8, 40))
        d = Dictionary(random_dictionary(rng, 8, 3))
        b = BlockStructure(np.ones(3, dtype=int))
        codes = SparseCodes(rng.standard_normal((3, 40)))
        d2, u2 = bksvd_block_update(d, b, TrainingSet(Y), codes)
        left, s, _ = np.linalg.svd(Y, full_matrices=False)
        assert np.allclose(np.abs(np.sum(left[:, :3] * d2.atoms, axis=0)), 1.0)
        resid = np.linalg.norm(Y - d2.atoms @ u2.coefficients) ** 2
        assert resid == pytest.approx(np.sum(s[3:] ** 2), rel=1e-10)

    def test_unused_block_reseeded(self, rng):
        Y = rng.standard_normal((6, 10))
        d = Dictionary(random_dictionary(rng, 6, 4))
        b = BlockStructure(np.array([1, 1, 2, 2]))
        u = np.zeros((4, 10))
        u[:2] = rng.standard_normal((2, 10))
        d2, u2 = bksvd_block_update(d, b, TrainingSet(Y), SparseCodes(u))
        assert not u2.coefficients[2:].any()
        E = Y - d2.atoms[:, :2] @ u2.coefficients[:2]
        worst = np.argsort(-np.linalg.norm(E, axis=0), kind="stable")[:2]
        # the new block spans the two worst-represented signals and is orthonormal
        proj = d2.atoms[:, 2:] @ (d2.atoms[:, 2:].T @ E[:, worst])
        assert np.allclose(proj, E[:, worst])
        assert np.allclose(d2.atoms[:, 2:].T @ d2.atoms[:, 2:], np.eye(2), atol=1e-10)

    def test_oracle_sweep_does_not_increase_error(self, oracle_068):
        d, b = oracle_068
        ys = gen_block_sparse_data(d, b, 2000, 2, seed=4)
        codes = code_blocks(d, b, ys.signals, 3).codes
        before = np.linalg.norm(ys.signals - d.atoms @ codes.coefficients)
        d2, u2 = bksvd_block_update(d, b, ys, codes)
        assert np.linalg.norm(ys.signals - d2.atoms @ u2.coefficients) <= before + 1e-8

    def test_non_finite(self):
        d = Dictionary(np.eye(2))
        b = BlockStructure(np.array([1, 1]))
        with pytest.raises(InvariantError):
            bksvd_block_update(d, b, TrainingSet(np.ones((2, 1))), SparseCodes(np.array([[np.inf], [0.0]])))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_invariants(self, seed):
        r = np.random.default_rng(seed)
        m, n_s = int(r.integers(4, 10)), int(r.integers(20, 60))
        sizes = r.integers(1, 4, size=int(r.integers(2, 6)))
        n = int(sizes.sum())
        b = BlockStructure(np.repeat(np.arange(1, sizes.size + 1), sizes))
        d = Dictionary(random_dictionary(r, m, n))
        Y = r.standard_normal((m, n_s))
        p = int(r.integers(1, b.n_blocks + 1))
        codes = code_blocks(d, b, Y, p).codes
        err_coded = np.linalg.norm(Y - d.atoms @ codes.coefficients)
        d2, u2, svds = block_update_counted(d, b, TrainingSet(Y), codes)
        for g in b.groups():
            assert np.allclose(d2.atoms[:, g].T @ d2.atoms[:, g], np.eye(len(g)), atol=1e-8)
        assert np.linalg.norm(Y - d2.atoms @ u2.coefficients) <= err_coded + 1e-8
        usage = codes.block_usage(b)
        assert svds == int(usage.any(axis=1).sum())
        for k, g in enumerate(b.groups()):
            # new nonzero rows sit on the block's atoms and on its users only
            assert not u2.coefficients[np.ix_(g, ~usage[k])].any()
        assert np.all(u2.block_support_sizes(b) <= p)


class TestBksvdTrain:
    def test_fixed_point(self, rng):
        q = block_orthonormal(rng, 12, [3] * 4)
        d = Dictionary(q)
        b = BlockStructure(np.repeat(np.arange(1, 5), 3))
        ys = gen_block_sparse_data(d, b, 200, 1, seed=0)
        cfg = ExperimentConfig(outer_iterations=3, block_sparsity=1, shrink_fraction=0.0)
        _, b2, rep = bksvd_train(ys, d, cfg)
        assert b2 == b  # zero correlations group by index
        assert max(rep.rel_errors) <= 1e-10

    def test_zero_iterations(self, oracle_068):
        d, _ = oracle_068
        ys = gen_block_sparse_data(*oracle_068, 100, 2, seed=0)
        d2, b2, rep = bksvd_train(ys, d, ExperimentConfig(outer_iterations=0))
        assert d2 == d and b2 == cgc_estimate(d, 3, 0.2) and rep.iterations_run == 0

    def test_wrong_mode(self, oracle_068):
        ys = gen_block_sparse_data(*oracle_068, 100, 2, seed=0)
        with pytest.raises(ConfigError):
            bksvd_train(ys, oracle_068[0], ExperimentConfig(structure_mode="supervised_cgc"))

    def test_sac_reestimates(self, oracle_068):
        ys = gen_block_sparse_data(*oracle_068, 1000, 2, seed=0)
        d0, _, _ = ksvd_train(ys, 60, 3, 2, seed=0)
        _, _, rep = bksvd_train(ys, d0, ExperimentConfig(structure_mode="sac", outer_iterations=3), keep_structures=True)
        assert len(rep.structures) == 3 and all(s.sizes().max() <= 3 for s in rep.structures)

    def test_report_jsonl(self):
        rep = TrainReport()
        rep.record(0.5, 20)
        rep.record(0.25, 20)
        lines = [json.loads(x) for x in rep.to_jsonl().splitlines()]
        assert lines == [{"iter": 1, "rel_error": 0.5, "n_blocks": 20}, {"iter": 2, "rel_error": 0.25, "n_blocks": 20}]
        with pytest.raises(NumericalError):
            rep.record(float("nan"))

    def test_converged_flag_does_not_stop(self, rng):
        q = block_orthonormal(rng, 6, [2] * 3)
        b = BlockStructure(np.repeat(np.arange(1, 4), 2))
        ys = gen_block_sparse_data(Dictionary(q), b, 50, 1, seed=0)
        _, _, rep = bksvd_train(ys, Dictionary(q), ExperimentConfig(outer_iterations=4, block_sparsity=1,
                                                                     max_block_size=2, shrink_fraction=0.0))
        assert rep.converged and rep.iterations_run == 4


def _two_class_orthogonal(seed=0, per_class=60):
    r = np.random.default_rng(seed)
    q = np.linalg.qr(r.standard_normal((16, 16)))[0]
    parts = [q[:, :8] @ r.standard_normal((8, per_class)), q[:, 8:] @ r.standard_normal((8, per_class))]
    return TrainingSet(np.hstack(parts), np.repeat([1, 2], per_class))


class TestSupervised:
    def test_single_class_is_cgc(self, oracle_068):
        ys = gen_block_sparse_data(*oracle_068, 300, 2, seed=0)
        ys = TrainingSet(ys.signals, np.ones(300, dtype=int))
        cfg = ExperimentConfig(structure_mode="supervised_cgc", outer_iterations=3, structure_update_period=1)
        d_s, b_s, labels, rep_s = supervised_train(ys, 30, cfg)
        d0, _ = supervised_init(ys, 30, cfg)
        d_u, b_u, rep_u = bksvd_train(ys, d0, replace(cfg, structure_mode="cgc"))
        assert d_s == d_u and b_s == b_u and rep_s.rel_errors == rep_u.rel_errors

    def test_energy_concentrates_on_own_class(self):
        ys = _two_class_orthogonal()
        cfg = ExperimentConfig(structure_mode="supervised_cgc", outer_iterations=5, block_sparsity=2,
                               max_block_size=2, shrink_fraction=0.0)
        d, b, labels, _ = supervised_train(ys, 8, cfg)
        U = code_blocks(d, b, ys.signals, 2).codes.coefficients
        for c in (1, 2):
            own = U[np.ix_(labels.atoms_of(c), np.flatnonzero(ys.class_of_signal == c))]
            allc = U[:, ys.class_of_signal == c]
            assert np.sum(own**2) / np.sum(allc**2) >= 0.9

    @pytest.mark.parametrize("mode", ["supervised_cgc", "fixed_supervised"])
    def test_class_pure(self, mode, oracle_068):
        ys = gen_class_benchmark(*oracle_068, 5, 40, 2, seed=1)
        d, b, labels, _ = supervised_train(ys, 12, ExperimentConfig(structure_mode=mode, outer_iterations=2))
        for g in b.groups():
            assert np.unique(labels.label_of_atom[g]).size == 1

    def test_adapted_beats_fixed(self, oracle_068):
        ys = gen_class_benchmark(*oracle_068, 5, 200, 2, seed=2)
        errs = {}
        for mode in ("supervised_cgc", "fixed_supervised"):
            _, _, _, rep = supervised_train(ys, 12, ExperimentConfig(structure_mode=mode, outer_iterations=10))
            errs[mode] = rep.rel_errors[-1]
        assert errs["supervised_cgc"] <= errs["fixed_supervised"]

    def test_ksvd_init_switch(self, oracle_068):
        ys = gen_class_benchmark(*oracle_068, 2, 40, 2, seed=1)
        cfg = ExperimentConfig(structure_mode="supervised_cgc", supervised_init="ksvd", ksvd_iterations=2)
        d, labels = supervised_init(ys, 6, cfg)
        assert d.n_atoms == 12 and labels.counts.tolist() == [6, 6]

    def test_too_few_signals(self, oracle_068):
        ys = gen_class_benchmark(*oracle_068, 5, 4, 2, seed=1)
        with pytest.raises(ValueError):
            supervised_train(ys, 12, ExperimentConfig(structure_mode="supervised_cgc"))

    def test_needs_labels(self, oracle_068):
        ys = gen_block_sparse_data(*oracle_068, 40, 2, seed=1)
        with pytest.raises(InvariantError):
            supervised_train(ys, 6, ExperimentConfig(structure_mode="supervised_cgc"))
