# SPDX-License-Identifier: Apache-2.0
import math

import numpy as np
import pytest

import symgrade as sg


def test_grade_names():
    assert [sg.grade_name(g) for g in range(sg.NUM_GRADES)] == [
        "Normal", "Doubtful", "Minimal", "Moderate", "Severe"]


def test_synthetic_symmetric_and_deterministic():
    a, grades, ids = sg.generate_synthetic(n=20, size=16, asymmetry=0.0, seed=3)
    b, grades_b, _ = sg.generate_synthetic(n=20, size=16, asymmetry=0.0, seed=3)
    assert a.shape == (20, 16, 16)
    assert np.array_equal(a, b) and grades == grades_b
    assert np.array_equal(sg.flip_horizontal(a), a)
    assert np.array_equal(sg.flip_horizontal(a), a[:, :, ::-1])
    assert len(set(ids)) == 20


def test_losses_against_numpy():
    rng = np.random.default_rng(0)
    s = rng.normal(size=(4, 5))
    sh = rng.normal(size=(4, 5))
    y = [0, 3, 1, 4]

    p = np.exp(s - s.max(1, keepdims=True))
    p /= p.sum(1, keepdims=True)
    ce = -np.mean(np.log(p[np.arange(4), y]))
    assert sg.cross_entropy_mean(s, y) == pytest.approx(ce, abs=1e-13)

    assert sg.jsd_mean([[0.5, 0.5]], [[1.0, 0.0]]) == pytest.approx(0.215762, abs=1e-6)
    assert sg.jsd_mean([[1.0, 0.0]], [[0.0, 1.0]]) == pytest.approx(math.log(2), abs=1e-12)

    b = sg.total_loss(s, sh, y)
    assert b["lambda"] == sg.DEFAULT_LAMBDA == 10.0
    assert b["l_symmetry"] == pytest.approx(b["l_original"] + b["l_flipped"], abs=1e-12)
    assert b["l_total"] == pytest.approx(
        0.5 * (b["l_original"] + b["l_flipped"]) + 10.0 * b["l_consistency"], abs=1e-12)

    with pytest.raises(sg.ContractError):
        sg.jsd_mean([[0.4, 0.4]], [[0.5, 0.5]])


def test_schedule_and_metrics():
    assert sg.onecycle_lr(0, 100) == pytest.approx(1e-5 / 25, rel=1e-15)
    assert sg.onecycle_lr(30, 100) == pytest.approx(1e-5, rel=1e-15)
    assert sg.onecycle_lr(100, 100) == pytest.approx(1e-9, rel=1e-15)

    cm = sg.confusion_matrix([0, 1], [1, 1], k=2)
    assert cm.tolist() == [[0, 0], [1, 1]]
    r = sg.prf_report([0, 1, 2, 3, 4], [0, 1, 2, 3, 4])
    assert r["accuracy"] == 1.0 and r["macro_f1"] == 1.0


def test_split_counts():
    grades = [g for g, n in enumerate([3253, 1495, 2175, 1086, 251]) for _ in range(n)]
    train, val, test = sg.stratified_split(grades, seed=1)
    assert sorted(train + val + test) == list(range(len(grades)))
    counts = np.bincount([grades[i] for i in test], minlength=5)
    assert np.all(np.abs(counts - np.array([651, 299, 435, 217, 50])) <= 1)


def test_gradcheck_and_cli(tmp_path):
    assert all(err < 1e-5 for _, err in sg.gradcheck(seed=7))
    code, out, _ = sg.run_cli(["generate", "--n", "20", "--size", "16", "--out", str(tmp_path / "d")])
    assert code == 0
    code, _, _ = sg.run_cli(["generate", "--asymmetry", "1.5", "--out", str(tmp_path / "e")])
    assert code == 2
    code, _, _ = sg.run_cli(["train", "--data", str(tmp_path / "d"), "--out", str(tmp_path / "r"),
                             "--epochs", "1", "--image-size", "16", "--patch", "4", "--lr", "1e-3"])
    assert code == 0
    assert (tmp_path / "r" / "best.ckpt").exists()
