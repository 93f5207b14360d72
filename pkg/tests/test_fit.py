"""Teacher generation, training-set construction, ALS fitting, quality metrics."""

import numpy as np
import pytest

from tnshap import (
    CpTeacher,
    FitConfig,
    LiftSpec,
    build_training_set,
    cut_rank,
    eval_quality,
    explain,
    fit_student,
    gen_cp_teacher,
    gen_tree_teacher,
    materialize_full,
)
from tnshap.fit import rank_sweep


class TestCpTeacher:
    def test_seed_determinism(self):
        a, _ = gen_cp_teacher(6, 4, seed=9)
        b, _ = gen_cp_teacher(6, 4, seed=9)
        for fa, fb in zip(a.factors, b.factors):
            np.testing.assert_array_equal(fa, fb)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_bias_only_factors_give_constant(self):
        factors = [np.array([[0.0, 2.0]]), np.array([[0.0, 0.5]])]
        teacher = CpTeacher(factors, np.array([1.0]))
        lifts = LiftSpec.binary(2)
        for x in ([0.0, 0.0], [3.0, -1.0]):
            assert teacher.forward(lifts.lift_instance(x)) == pytest.approx(1.0)

    def test_matches_dense_expansion(self, rng):
        """CP output equals the dense mode product of its train conversion."""
        teacher, lifts = gen_cp_teacher(3, 4, seed=2)
        dense = materialize_full(teacher.to_tensor_train())
        x = rng.uniform(-1, 1, 3)
        lifted = lifts.lift_instance(x)
        ref = dense
        for v in lifted:
            ref = np.tensordot(ref, v, axes=([0], [0]))
        assert teacher.forward(lifted) == pytest.approx(float(ref), abs=1e-10)

    def test_train_conversion_pointwise(self, rng):
        teacher, lifts = gen_cp_teacher(5, 3, seed=4)
        tt = teacher.to_tensor_train()
        for _ in range(10):
            legs = lifts.lift_instance(rng.uniform(-1, 1, 5))
            assert tt.forward(legs) == pytest.approx(teacher.forward(legs), rel=1e-12)

    def test_output_scale_normalized(self, rng):
        teacher, lifts = gen_cp_teacher(6, 4, seed=1)
        raw = rng.uniform(-1, 1, (2000, 6))
        legs = [m.apply_batch(raw[:, i]) for i, m in enumerate(lifts.maps)]
        assert 0.5 < np.std(teacher.forward_batch(legs)) < 2.0

    def test_explainable_directly(self, rng):
        """Probes accept a CP teacher through the same forward protocol."""
        teacher, lifts = gen_cp_teacher(4, 2, seed=3)
        x = rng.uniform(-1, 1, 4)
        direct = explain(teacher, lifts, x, 1)
        via_train = explain(teacher.to_tensor_train(), lifts, x, 1)
        np.testing.assert_allclose(direct.values, via_train.values, atol=1e-10)


class TestTreeTeacher:
    def test_bond_one_is_product_form(self):
        """A bond-1 tree factorizes: every matricization has rank 1."""
        teacher, _ = gen_tree_teacher(4, 1, seed=0)
        dense = materialize_full(teacher).reshape(4, 4)
        s = np.linalg.svd(dense, compute_uv=False)
        assert s[1] < 1e-12 * s[0]

    def test_seed_determinism(self):
        a, _ = gen_tree_teacher(5, 3, seed=7)
        b, _ = gen_tree_teacher(5, 3, seed=7)
        for ca, cb in zip(a.cores, b.cores):
            np.testing.assert_array_equal(ca, cb)

    def test_cut_rank_equals_requested_bond(self):
        teacher, _ = gen_tree_teacher(4, 3, seed=1)
        assert cut_rank(teacher.topology) == 3
        teacher16, _ = gen_tree_teacher(10, 16, seed=1)
        assert cut_rank(teacher16.topology) == 16


class TestTrainingSet:
    def test_budget_n8_m100(self):
        """100 neighborhood rows + 2 n^2 structured rows = 228 teacher calls."""
        teacher, lifts = gen_tree_teacher(8, 3, seed=0)
        config = FitConfig(neighborhood=100, seed=1)
        before = teacher.forward_count
        training = build_training_set(teacher, lifts, np.zeros(8), config)
        assert training.rows == 228
        assert teacher.forward_count - before == 228
        assert training.structured_rows == 128
        assert training.neighborhood_rows == 100

    def test_zero_neighborhood_gives_structured_only(self):
        teacher, lifts = gen_tree_teacher(4, 2, seed=0)
        training = build_training_set(teacher, lifts, np.zeros(4), FitConfig(neighborhood=0))
        assert training.rows == 2 * 4 * 4

    def test_targets_match_manual_teacher_calls(self, rng):
        teacher, lifts = gen_cp_teacher(3, 2, seed=6)
        config = FitConfig(neighborhood=5, seed=2)
        training = build_training_set(teacher, lifts, np.zeros(3), config)
        for row in (0, 4, 7, training.rows - 1):
            legs = [training.legs[i][row] for i in range(3)]
            assert teacher.forward(legs) == pytest.approx(training.targets[row])

    def test_seed_determinism(self):
        teacher, lifts = gen_tree_teacher(4, 2, seed=0)
        a = build_training_set(teacher, lifts, np.zeros(4), FitConfig(neighborhood=20, seed=5))
        b = build_training_set(teacher, lifts, np.zeros(4), FitConfig(neighborhood=20, seed=5))
        np.testing.assert_array_equal(a.targets, b.targets)


class TestFitStudent:
    def _fit(self, teacher, lifts, rank, seed=3, neighborhood=512, topology="btree",
             max_sweeps=30):
        config = FitConfig(topology=topology, bond_dim=rank, neighborhood=neighborhood,
                           sigma_frac=1.0, max_sweeps=max_sweeps, tol=1e-12, seed=seed)
        training = build_training_set(teacher, lifts, np.zeros(teacher.n), config)
        return fit_student(training, config, lifts), config

    def test_representable_teacher_recovered(self):
        """Same topology, student bond >= teacher bond: near-perfect fit and
        attribution fidelity at orders 1..3."""
        teacher, lifts = gen_tree_teacher(6, 3, seed=2)
        (student, report), _ = self._fit(teacher, lifts, rank=4)
        assert report.train_r2 >= 0.999
        rng = np.random.default_rng(0)
        report = eval_quality(student, teacher, lifts, rng.uniform(-1, 1, (8, 6)),
                              orders=(1, 2, 3), base_report=report)
        for k in (1, 2, 3):
            assert report.orders[k].r2 >= 0.99

    def test_constant_teacher_r2_one_by_convention(self):
        factors = [np.array([[0.0, 1.0]])] * 3
        teacher = CpTeacher(factors, np.array([2.0]))
        lifts = LiftSpec.binary(3)
        (student, report), _ = self._fit(teacher, lifts, rank=2, neighborhood=64)
        assert report.train_r2 == 1.0
        assert report.train_mse < 1e-20

    def test_rank2_underfits_rank14_tree(self):
        """Low-rank student against a rich teacher keeps train R^2 visibly
        below 1 (threshold 0.95, not the exact literature decimal)."""
        teacher, lifts = gen_tree_teacher(8, 14, seed=9)
        (student, report), _ = self._fit(teacher, lifts, rank=2, neighborhood=2048,
                                         max_sweeps=40)
        assert report.train_r2 < 0.95

    def test_sweep_mse_monotone(self):
        teacher, lifts = gen_tree_teacher(6, 4, seed=5)
        (student, report), _ = self._fit(teacher, lifts, rank=3, neighborhood=256)
        mse = report.sweep_train_mse
        for earlier, later in zip(mse, mse[1:]):
            assert later <= earlier + 1e-12

    def test_tt_student_on_cp_teacher(self):
        teacher, lifts = gen_cp_teacher(5, 2, seed=8)
        (student, report), _ = self._fit(teacher, lifts, rank=3, topology="tt",
                                         neighborhood=400)
        assert report.train_r2 >= 0.999
        assert student.topology.kind == "tt"

    def test_tree_student_with_pure_dummy_subtree(self):
        """n=5 pads to 8 leaves, so one internal node sits over dummies only;
        its cores stay fixed at 1 while the fit still converges."""
        teacher, lifts = gen_tree_teacher(5, 2, seed=6)
        (student, report), _ = self._fit(teacher, lifts, rank=3, neighborhood=256)
        assert report.train_r2 >= 0.999
        # the dummy leaf cores are untouched ones
        L = student.topology.leaf_count
        for slot in range(5, L):
            np.testing.assert_array_equal(student.cores[L - 1 + slot], np.ones((1, 1)))

    def test_minimal_tree_students(self):
        for n in (1, 2):
            teacher, lifts = gen_tree_teacher(n, 2, seed=n)
            (student, report), _ = self._fit(teacher, lifts, rank=2, neighborhood=64)
            assert report.train_r2 >= 0.999

    def test_determinism_excluding_wall_time(self):
        teacher, lifts = gen_tree_teacher(5, 3, seed=4)
        (s1, r1), _ = self._fit(teacher, lifts, rank=3, neighborhood=128)
        (s2, r2), _ = self._fit(teacher, lifts, rank=3, neighborhood=128)
        assert r1.train_r2 == r2.train_r2
        assert r1.sweep_train_mse == r2.sweep_train_mse
        for c1, c2 in zip(s1.cores, s2.cores):
            np.testing.assert_array_equal(c1, c2)


class TestEvalQuality:
    def test_student_equals_teacher(self, rng):
        teacher, lifts = gen_tree_teacher(5, 3, seed=1)
        report = eval_quality(teacher, teacher, lifts, rng.uniform(-1, 1, (5, 5)))
        for k in (1, 2, 3):
            assert report.orders[k].r2 == pytest.approx(1.0, abs=1e-12)
            assert report.orders[k].cosine == pytest.approx(1.0, abs=1e-12)
            assert report.orders[k].mse == pytest.approx(0.0, abs=1e-20)

    def test_scaled_student_cosine_one_mse_nonzero(self, rng):
        """Doubling the model doubles every value: cosine 1, nonzero MSE."""
        teacher, lifts = gen_tree_teacher(4, 2, seed=3)
        cores = [np.array(c) for c in teacher.cores]
        cores[0] = cores[0] * 2.0
        from tnshap import TensorNetworkModel

        doubled = TensorNetworkModel(teacher.topology, cores)
        report = eval_quality(doubled, teacher, lifts, rng.uniform(-1, 1, (4, 4)),
                              orders=(1,))
        assert report.orders[1].cosine == pytest.approx(1.0, abs=1e-10)
        assert report.orders[1].mse > 1e-6

    def test_zero_variance_truth_flagged(self, rng):
        factors = [np.array([[0.0, 1.0]])] * 3
        teacher = CpTeacher(factors, np.array([5.0]))
        lifts = LiftSpec.binary(3)
        report = eval_quality(teacher, teacher, lifts, rng.uniform(-1, 1, (3, 3)),
                              orders=(1,))
        assert report.orders[1].r2 is None
        assert not report.orders[1].r2_defined
        assert np.isfinite(report.orders[1].mse)


class TestConfigAndSweep:
    def test_config_json_roundtrip(self):
        config = FitConfig(topology="tt", bond_dim=5, neighborhood=77, probe_nodes=9,
                           sigma_frac=0.25, max_sweeps=11, tol=1e-8, seed=13)
        again = FitConfig.from_json_dict(config.to_json_dict())
        assert again == config

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FitConfig(bond_dim=0)
        with pytest.raises(ValueError):
            FitConfig(sigma_frac=0.0)
        with pytest.raises(ValueError):
            FitConfig(topology="ring")

    def test_sweep_isolates_cell_failures(self, rng):
        teacher, lifts = gen_tree_teacher(4, 2, seed=0)
        config = FitConfig(neighborhood=64, sigma_frac=1.0, max_sweeps=5, seed=0)
        cells = rank_sweep(teacher, lifts, np.zeros(4), config, ranks=[0, 2],
                           seeds=[0], eval_instances=rng.uniform(-1, 1, (3, 4)),
                           orders=(1,))
        assert cells[0]["error"] is not None  # rank 0 is invalid
        assert cells[1]["error"] is None
        assert cells[1]["report"].orders[1].r2 is not None

    def test_single_cell_matches_direct_path(self, rng):
        from dataclasses import replace

        teacher, lifts = gen_tree_teacher(4, 2, seed=1)
        config = FitConfig(neighborhood=128, sigma_frac=1.0, max_sweeps=10,
                           tol=1e-12, seed=2)
        eval_x = rng.uniform(-1, 1, (4, 4))
        cells = rank_sweep(teacher, lifts, np.zeros(4), config, ranks=[3], seeds=[2],
                           eval_instances=eval_x, orders=(1, 2))
        cell_config = replace(config, bond_dim=3, seed=2)
        training = build_training_set(teacher, lifts, np.zeros(4), cell_config)
        student, report = fit_student(training, cell_config, lifts)
        report = eval_quality(student, teacher, lifts, eval_x, (1, 2), base_report=report)
        cell = cells[0]["report"]
        assert cell.train_r2 == report.train_r2
        assert cell.orders[1].r2 == report.orders[1].r2
        assert cell.orders[2].r2 == report.orders[2].r2
