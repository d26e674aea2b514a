import numpy as np
import pytest

from symlab.phaselab import (
    PhaseScanConfig,
    run_phase_scan,
    entropy_sample_cost,
    recognition_summary,
    default_regions,
)


def test_cost_model_values():
    assert entropy_sample_cost(0, 0.1) == 100
    assert entropy_sample_cost(10, 0.1) == 102400
    # doubling S2 multiplies shots by the purity ratio
    a = entropy_sample_cost(4, 0.1)
    b = entropy_sample_cost(8, 0.1)
    assert b == a * 2**4
    with pytest.raises(ValueError):
        entropy_sample_cost(1, 0)


def test_cost_model_monotone():
    costs = [entropy_sample_cost(s, 0.05) for s in range(10)]
    assert all(b > a for a, b in zip(costs, costs[1:]))


def test_fixed_point_separation_at_xi0():
    # order parameter at xi=0 distinguishes GHZ from trivial with cost O(1)
    for phase, want in (("ghz", 1.0), ("product", 0.0)):
        cfg = PhaseScanConfig(phase=phase, n=24, xi_grid=(0,), draws=1,
                              strategy="order_parameter", seed=3)
        rec = run_phase_scan(cfg)[0]
        assert rec.value == want
        assert rec.sample_cost <= 1.0 / 0.1**2


def test_ghz_order_parameter_decays():
    cfg = PhaseScanConfig(phase="ghz", n=24, xi_grid=(0, 2), draws=60,
                          strategy="order_parameter", seed=5)
    summary = recognition_summary(run_phase_scan(cfg))
    by_xi = {row["xi"]: row for row in summary}
    assert by_xi[0]["mean_value"] == 1.0
    scr = by_xi[2]
    assert abs(scr["mean_value"]) <= 3 * max(scr["stderr"], 1e-6)


def test_ghz_mi_invariant_when_inflated():
    cfg = PhaseScanConfig(phase="ghz", n=48, xi_grid=(0, 1, 2), draws=4,
                          strategy="mi", seed=11, inflate=True)
    for rec in run_phase_scan(cfg):
        assert rec.value == 1.0


def test_cluster_string_order_scan():
    cfg = PhaseScanConfig(phase="cluster", n=24, xi_grid=(0,), draws=1,
                          strategy="string_order", seed=1)
    rec = run_phase_scan(cfg)[0]
    assert rec.value == 1.0


def test_toric_tee_scan_inflated():
    cfg = PhaseScanConfig(phase="toric", n=72, xi_grid=(0, 1), draws=3,
                          strategy="tee", seed=2, inflate=True)
    for rec in run_phase_scan(cfg):
        assert rec.value == 1.0


def test_entropy_cost_grows_geometrically():
    # inflated regions grow linearly with xi, so the modeled cost must grow
    # at least geometrically wherever the cut entropy grows linearly
    cfg = PhaseScanConfig(phase="ghz", n=48, xi_grid=(0, 1, 2, 3), draws=3,
                          strategy="mi", seed=7, inflate=True)
    summary = recognition_summary(run_phase_scan(cfg))
    costs = [row["mean_cost"] for row in sorted(summary, key=lambda r: r["xi"])]
    assert all(b >= 2 * a for a, b in zip(costs[1:], costs[2:]))


def test_scan_deterministic():
    cfg = PhaseScanConfig(phase="ghz", n=24, xi_grid=(1,), draws=10,
                          strategy="order_parameter", seed=42)
    a = [r.row() for r in run_phase_scan(cfg)]
    b = [r.row() for r in run_phase_scan(cfg)]
    assert a == b


def test_summary_shapes():
    cfg = PhaseScanConfig(phase="ghz", n=24, xi_grid=(0,), draws=1,
                          strategy="order_parameter", seed=0)
    recs = run_phase_scan(cfg)
    summ = recognition_summary(recs)
    assert len(summ) == 1 and summ[0]["draws"] == 1
    assert summ[0]["mean_value"] == recs[0].value
    two = recognition_summary(recs + recs)
    assert two[0]["draws"] == 2
    with pytest.raises(ValueError):
        recognition_summary([])


def test_bad_configs():
    with pytest.raises(ValueError):
        default_regions("toric", 70)  # not 2*L^2
    cfg = PhaseScanConfig(phase="ghz", n=24, xi_grid=(1,), draws=2,
                          strategy="nope", seed=0)
    with pytest.raises(ValueError):
        run_phase_scan(cfg)
