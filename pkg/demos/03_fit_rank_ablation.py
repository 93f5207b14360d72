#!/usr/bin/env python3
"""How much student rank does attribution fidelity need?

A rank-14 tree teacher is approximated by ALS-fitted students of growing
bond dimension. Training targets mix a wide Gaussian cloud with the
structured on/off probe configurations. Low-rank students fit the function
decently but visibly lose the higher-order interaction structure; once the
rank clears the teacher's effective spectrum, every order snaps to R^2 = 1.
"""

import numpy as np

from tnshap import (
    FitConfig,
    build_training_set,
    eval_quality,
    fit_student,
    gen_tree_teacher,
)

n = 8
teacher, lifts = gen_tree_teacher(n, bond_dim=14, seed=9)
center = np.zeros(n)
test_points = np.random.default_rng(77).uniform(-1.0, 1.0, (12, n))

print(f"teacher: rank-14 balanced tree over {n} binary-lifted features")
print(f"students: ALS fits on {2048} Gaussian rows + {2 * n * n} structured probe rows")
print()
print("rank   sweeps   train R2    k=1 R2     k=2 R2     k=3 R2")
for rank in (2, 3, 4, 5, 6, 8, 10):
    config = FitConfig(
        topology="btree",
        bond_dim=rank,
        neighborhood=2048,
        sigma_frac=1.0,
        max_sweeps=40,
        tol=1e-12,
        seed=3,
    )
    training = build_training_set(teacher, lifts, center, config)
    student, rep = fit_student(training, config, lifts)
    rep = eval_quality(student, teacher, lifts, test_points, (1, 2, 3), base_report=rep)
    o = rep.orders
    print(
        f"{rank:>4}   {rep.sweeps_used:>6}   {rep.train_r2:8.4f}"
        f"   {o[1].r2:8.4f}   {o[2].r2:8.4f}   {o[3].r2:8.4f}"
    )

print()
print("the characteristic staircase: higher interaction orders are the")
print("first casualties of insufficient rank and the last to saturate")
