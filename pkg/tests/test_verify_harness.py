import numpy as np
import pytest

from stylefield.errors import ContractError
from stylefield.sict import VolumeAdaptiveIN
from stylefield.style_transform import DstParams, StyleStats
from stylefield.verify_harness import (
    PropertyReport,
    check_equivalence,
    check_param_count,
    check_reconstruction,
    check_sampling_invariance,
    check_telescoping,
    check_worked_weights,
    equivalence_error,
    format_reports,
    random_sict,
    write_reports_csv,
)


def test_report_pass_flag():
    assert PropertyReport("a", 1, 1e-3, 1e-3).passed
    assert not PropertyReport("a", 1, 2e-3, 1e-3).passed
    assert "FAIL a" in PropertyReport("a", 1, 2e-3, 1e-3).line()


def test_single_point_full_weight(rng):
    feats = rng.normal(size=(1, 1, 1, 3))
    stats = StyleStats(0.7, 1.3, np.eye(3), np.eye(3))
    assert equivalence_error(feats, np.ones((1, 1, 1)), stats, DstParams(rng.normal(size=(4, 3)))) <= 1e-15


def test_equivalence_sweep():
    r = check_equivalence(100, seed=5)
    assert r.passed and r.max_error <= 1e-10


def test_equivalence_bias_free():
    r = check_equivalence(50, seed=6, zero_mu=True)
    assert r.passed and r.max_error <= 1e-12


def test_equivalence_reproducible():
    assert check_equivalence(10, seed=1).max_error == check_equivalence(10, seed=1).max_error


def test_invariance_single_probe():
    r = check_sampling_invariance(1, 10, seed=2)
    assert r.max_error == 0.0 and r.passed


def test_vanilla_counterexample():
    r = check_sampling_invariance(3, 4, seed=2, mode="vanilla")
    assert r.max_error > 1e-3 and not r.passed


def test_train_state_is_contract_error():
    state, params = random_sict(np.random.default_rng(0), 6, 3, mode="train")
    with pytest.raises(ContractError):
        check_sampling_invariance(2, 2, state=state, params=params)


def test_telescoping_and_worked_case():
    assert check_telescoping(2000, seed=3).passed
    r = check_worked_weights()
    assert r.max_error <= 1e-9


def test_reconstruction_and_param_count():
    assert check_reconstruction((6, 5, 4), rank=3, channels=4).max_error <= 1e-6
    r = check_param_count(64, 8, 16)
    assert r.passed and r.max_error < 1.0


def test_report_emission(tmp_path):
    reports = [PropertyReport("x", 2, 0.0, 1e-6), PropertyReport("y", 3, 1.0, 0.5)]
    text = format_reports(reports)
    assert text.splitlines()[-1].startswith("FAIL overall: 1/2")
    write_reports_csv(tmp_path / "r.csv", reports)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "property,instances,max_error,tolerance,passed"
    assert lines[2].endswith(",0")
