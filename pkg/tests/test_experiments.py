import csv
import io

import numpy as np
import pytest
from pydantic import ValidationError

from fpdiff.errors import ConfigError
from fpdiff.experiments import (
    ExperimentConfig,
    default_window,
    run_accuracy,
    run_bilevel,
    run_timing,
    selftest,
)
from fpdiff.problems import QuadraticInner, load_instance


def parse(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_config_validation():
    with pytest.raises(ValidationError):
        ExperimentConfig(experiment="ridge_gd", cond_target=1.0)
    with pytest.raises(ValidationError):
        ExperimentConfig(experiment="ridge_gd", estimators=[])
    with pytest.raises(ValidationError):
        ExperimentConfig(experiment="ridge_gd", sizes=[[-1, 4]])
    with pytest.raises(ValidationError):
        ExperimentConfig(experiment="ridge_gd", k=0)
    with pytest.raises(ValidationError):
        ExperimentConfig(experiment="nonsense")


def test_default_window_scales_with_condition():
    assert default_window(100.0) == 100
    assert default_window(1.4) == 1


def test_accuracy_is_reproducible_bit_for_bit():
    cfg = ExperimentConfig(experiment="quadratic_synthetic", k=16, seed=3)
    assert run_accuracy(cfg) == run_accuracy(cfg)


def test_accuracy_quadratic_onestep_plateau_closed_form():
    cfg = ExperimentConfig(experiment="quadratic_synthetic", k=32, seed=0,
                           estimators=["onestep"])
    rows = parse(run_accuracy(cfg))
    prob = QuadraticInner.random(10, seed=0, step_choice="two_over_muL")
    plateau = np.linalg.norm(
        prob.step * np.eye(10) - prob.truth_jacobian()
    ) ** 2
    for row in rows:
        assert float(row["jac_err_sq"]) == pytest.approx(plateau, abs=1e-8)
        assert row["bound_value"] != ""
        assert row["bound_provenance"] == "analytic"


def test_accuracy_unrolled_error_decreases_on_ridge():
    cfg = ExperimentConfig(experiment="ridge_gd", k=512, seed=1,
                           cond_target=30.0, estimators=["autodiff"])
    rows = parse(run_accuracy(cfg))
    errs = [float(r["jac_err_sq"]) for r in rows]
    ks = [int(r["k"]) for r in rows]
    assert ks == sorted(ks)
    assert errs[-1] < errs[0] * 1e-6


def test_accuracy_rejects_bilevel_experiment():
    cfg = ExperimentConfig(experiment="bilevel_ridge")
    with pytest.raises(ConfigError):
        run_accuracy(cfg)


def test_accuracy_dumps_instances(tmp_path):
    cfg = ExperimentConfig(experiment="quadratic_synthetic", k=4,
                           dump_instances=str(tmp_path))
    run_accuracy(cfg)
    files = list(tmp_path.glob("*.txt"))
    assert len(files) == 1
    loaded = load_instance(files[0])
    assert isinstance(loaded, QuadraticInner)


def test_timing_orderings_and_counters():
    cfg = ExperimentConfig(experiment="newton_logistic", sizes=[[120, 6]],
                           reps=5, seed=0)
    rows = parse(run_timing(cfg))
    by_phase = {r["phase"]: r for r in rows}
    assert set(by_phase) == {
        "solve_only", "solve_plus_autodiff", "solve_plus_implicit",
        "solve_plus_onestep",
    }
    solve = float(by_phase["solve_only"]["wall_time"])
    for phase, row in by_phase.items():
        if phase != "solve_only":
            assert float(row["wall_time"]) >= solve * 0.5  # generous noise floor
    one = by_phase["solve_plus_onestep"]
    assert one["jac_theta_evals"] == "1"
    assert one["jac_x_evals"] == "0"
    assert one["linear_solves"] == "0"
    implicit = by_phase["solve_plus_implicit"]
    assert implicit["linear_solves"] == "1"
    assert implicit["jac_theta_evals"] == "1"
    unrolled = by_phase["solve_plus_autodiff"]
    iters = int(unrolled["solver_iters"])
    assert unrolled["jac_x_evals"] == str(iters)
    assert unrolled["jac_theta_evals"] == str(iters)
    assert int(by_phase["solve_only"]["params"]) == 120 * 7


def test_timing_requires_five_reps():
    cfg = ExperimentConfig(experiment="newton_logistic", reps=3)
    with pytest.raises(ConfigError):
        run_timing(cfg)


def test_timing_rejects_unsupported_experiment():
    cfg = ExperimentConfig(experiment="ridge_gd")
    with pytest.raises(ConfigError):
        run_timing(cfg)


def test_bilevel_zero_steps_is_header_only():
    cfg = ExperimentConfig(experiment="bilevel_ridge", outer_steps=0)
    text = run_bilevel(cfg)
    assert len(text.splitlines()) == 1


def test_bilevel_quadratic_emits_certificate():
    cfg = ExperimentConfig(experiment="quadratic_synthetic", outer_steps=15,
                           k=50, estimators=["onestep"], sizes=[[4]])
    rows = parse(run_bilevel(cfg))
    steps = [r for r in rows if r["row_kind"] == "step"]
    certs = [r for r in rows if r["row_kind"] == "certificate"]
    assert len(steps) == 15
    assert len(certs) == 1
    assert float(certs[0]["min_true_grad_sq"]) <= float(certs[0]["certificate"])
    gs = [float(r["g_value"]) for r in steps]
    assert all(b <= a + 1e-12 for a, b in zip(gs, gs[1:]))


def test_bilevel_ridge_estimators_stay_within_bound_tube():
    cfg = ExperimentConfig(experiment="bilevel_ridge", outer_steps=25, k=60,
                           seed=2, cond_target=20.0,
                           estimators=["onestep", "implicit"])
    rows = parse(run_bilevel(cfg))
    final_g = {}
    tube = 0.0
    alpha = None
    for row in rows:
        if row["row_kind"] != "step":
            continue
        final_g[row["estimator"]] = float(row["g_value"])
        if row["estimator"] == "onestep":
            tube += float(row["per_step_bound"])
    # trajectories of the two estimators differ by at most the accumulated
    # per-step hypergradient error, scaled by the outer step and by how the
    # objective moves per unit of theta (bounded by observed gradient norms)
    grad_scale = max(
        float(r["hypergrad_norm"]) for r in rows if r["row_kind"] == "step"
    )
    assert abs(final_g["onestep"] - final_g["implicit"]) <= 2.0 * tube * grad_scale


def test_selftest_passes_and_reports():
    ok, report = selftest()
    assert ok
    assert "PASS resolvent-identity" in report
    passing = [line for line in report.splitlines() if line.startswith("PASS")]
    assert len(passing) == 5
