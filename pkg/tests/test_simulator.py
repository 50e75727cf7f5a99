import csv

import numpy as np
import pytest

from aoisched.analysis import evaluate_pattern, report_from_moments
from aoisched.baselines import TransmissionProbabilities, pgaw_report, pgaw_star
from aoisched.errors import ValidationError
from aoisched.model import SystemSpec
from aoisched.simulator import (SimConfig, agreement, pool_estimates, run_replications, simulate,
                                simulate_cyclic, simulate_probabilistic, stream_states, write_paoi_samples)

from conftest import unit_system

FIG5 = SystemSpec.from_arrays([2, 5, 3], [10, 1, 1], [0.1, 0.5, 0.6], kinds="exponential")


def test_deterministic_errorless_is_exact():
    sysm = unit_system(2)
    est = simulate_cyclic(sysm, [1, 2], SimConfig(target=5000, seed=1))
    np.testing.assert_allclose(est.aoi, [2, 2], rtol=1e-12)
    np.testing.assert_allclose(est.paoi, [3, 3], rtol=1e-12)
    assert np.all(est.aoi_se < 1e-9)
    ag = agreement(est, evaluate_pattern([1, 2], sysm))
    assert ag.ok
    assert np.all(np.abs(ag.all_z()) <= 1e-6) or np.all(ag.all_z() == 0)


def test_zero_se_with_mismatch_is_flagged():
    est = simulate_cyclic(unit_system(2), [1, 2], SimConfig(target=2000))
    rep = evaluate_pattern([1, 2], unit_system(2))
    rep.aoi[:] = rep.aoi + 0.1
    assert not agreement(est, rep).ok


def test_single_exponential_source():
    sysm = SystemSpec.from_arrays([1], [1], kinds="exponential")
    est = simulate_cyclic(sysm, [1], SimConfig(target=200_000, seed=7))
    # AoI = (2 s^2 + q) / (2 s) = 2 for unit-mean exponential
    assert abs(est.aoi[0] - 2.0) <= 4 * est.aoi_se[0]
    assert abs(est.paoi[0] - 2.0) <= 4 * est.paoi_se[0]


def test_probabilistic_symmetric_pair():
    sysm = unit_system(2)
    est = simulate_probabilistic(sysm, [0.5, 0.5], SimConfig(target=200_000, seed=3))
    ag = agreement(est, pgaw_report(sysm, [0.5, 0.5]))
    assert ag.ok, ag.all_z()
    assert abs(est.system_aoi - 2.5) <= 4 * est.system_aoi_se


def test_probabilistic_single_source_matches_cyclic():
    sysm = SystemSpec.from_arrays([1], [1.5], [0.3], kinds="gamma", scovs=[0.4])
    cfg = SimConfig(target=20_000, seed=11)
    a = simulate_cyclic(sysm, [1], cfg)
    b = simulate_probabilistic(sysm, [1.0], cfg)
    np.testing.assert_array_equal(a.aoi, b.aoi)
    np.testing.assert_array_equal(a.paoi, b.paoi)


@pytest.mark.parametrize("scov", [0.25, 1.0, 2.5])
def test_gamma_services_agree_with_analysis(scov):
    sysm = SystemSpec.from_arrays([3, 1, 2], [1.0, 2.0, 0.5], [0.2, 0.0, 0.6], kinds="gamma", scovs=[scov] * 3)
    pat = [1, 3, 2, 3, 1, 3]
    est = simulate_cyclic(sysm, pat, SimConfig(target=200_000, seed=5))
    ag = agreement(est, evaluate_pattern(pat, sysm))
    assert ag.ok, ag.all_z()


def test_fig5_probabilistic_at_paoi_optimum():
    res = pgaw_star(FIG5, "paoi")
    est = simulate_probabilistic(FIG5, res.probabilities, SimConfig(target=200_000, seed=2))
    assert abs(est.system_paoi - res.report.system_paoi) <= 4 * est.system_paoi_se


def test_corrupted_gap_second_moment_is_detected():
    sysm = SystemSpec.from_arrays([1, 1, 1], [1, 1, 1], [0.5, 0.5, 0.5], kinds="exponential")
    pat = [1, 2, 1, 3]
    rep = evaluate_pattern(pat, sysm)
    bad = report_from_moments(sysm, rep.s_tilde, 1.1 * rep.q_tilde)
    est = simulate_cyclic(sysm, pat, SimConfig(target=300_000, seed=4))
    assert agreement(est, rep).ok
    assert np.any(np.abs(agreement(est, bad).z_aoi) > 4)


def test_reproducible_and_seed_sensitive():
    sysm = SystemSpec.from_arrays([1, 2], [1, 1], [0.3, 0.1], kinds="exponential")
    cfg = SimConfig(target=5000, seed=42)
    a, b = simulate_cyclic(sysm, [1, 2], cfg), simulate_cyclic(sysm, [1, 2], cfg)
    assert a.to_dict() == b.to_dict()
    c = simulate_cyclic(sysm, [1, 2], SimConfig(target=5000, seed=43))
    assert c.system_aoi != a.system_aoi


def test_stream_states_prefix_stable():
    s3, s5 = stream_states(9, 3), stream_states(9, 5)
    np.testing.assert_array_equal(s3[:3], s5[:3])
    assert s3[3] == s5[5]      # scheduler stream independent of N
    assert len(set(s5.tolist())) == 6


def test_cycle_identity_in_samples(tmp_path):
    sysm = SystemSpec.from_arrays([1, 1], [1, 3], [0.4, 0.2], kinds="gamma", scovs=[0.5, 2.0])
    est = simulate_cyclic(sysm, [1, 1, 2], SimConfig(target=3000, seed=1, record_samples=True))
    smp = est.samples
    assert smp["peak"].shape == (2, 3000)
    np.testing.assert_allclose(smp["peak"], smp["reset"] + smp["duration"], rtol=1e-9)
    np.testing.assert_allclose(est.paoi, smp["peak"].mean(axis=1), rtol=1e-9)
    area = 0.5 * smp["duration"] * (smp["reset"] + smp["peak"])
    np.testing.assert_allclose(est.aoi, area.sum(axis=1) / smp["duration"].sum(axis=1), rtol=1e-9)
    path = tmp_path / "peaks.csv"
    write_paoi_samples(est, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["source", "index", "paoi"]
    assert len(rows) == 1 + 2 * 3000
    assert float(rows[1][2]) == smp["peak"][0, 0]


def test_write_samples_requires_recording(tmp_path):
    est = simulate_cyclic(unit_system(1), [1], SimConfig(target=100, warmup=0))
    with pytest.raises(ValidationError):
        write_paoi_samples(est, tmp_path / "x.csv")


def test_success_thinning():
    sysm = SystemSpec.from_arrays([1, 1, 1], [1, 1, 1], [0.0, 0.3, 0.8])
    est = simulate_cyclic(sysm, [1, 2, 3], SimConfig(target=20_000, seed=8))
    rate = est.success_rate
    se = np.sqrt(sysm.u * sysm.p / est.attempts)
    assert np.all(np.abs(rate - sysm.u) <= 4 * np.maximum(se, 1e-12))


def test_cyclic_slot_shares():
    sysm = unit_system(3, drops=[0.1, 0.5, 0.2])
    pat = [1, 2, 1, 3, 1, 2]
    est = simulate_cyclic(sysm, pat, SimConfig(target=4000, seed=2))
    alpha = np.bincount(pat, minlength=4)[1:]
    assert np.all(np.abs(est.attempts - est.slots * alpha / len(pat)) <= alpha)
    assert est.attempts.sum() == est.slots


def test_se_shrinks_like_inverse_sqrt():
    sysm = SystemSpec.from_arrays([1, 1, 1], [1, 2, 0.5], [0.3, 0.5, 0.1], kinds="exponential")
    ratios = []
    for seed in range(8):
        a = simulate_cyclic(sysm, [1, 2, 3, 1], SimConfig(target=40_000, seed=seed))
        b = simulate_cyclic(sysm, [1, 2, 3, 1], SimConfig(target=80_000, seed=100 + seed))
        ratios.extend(a.aoi_se / b.aoi_se)
    assert abs(np.mean(ratios) / np.sqrt(2) - 1) <= 0.15


def test_pool_and_replications():
    sysm = SystemSpec.from_arrays([1, 1], [1, 1], [0.2, 0.4], kinds="exponential")
    cfg = SimConfig(target=5000, seed=0, scheduler=TransmissionProbabilities(np.array([0.4, 0.6])))
    runs = [simulate(sysm, SimConfig(5000, cfg.warmup, s, cfg.batches, cfg.scheduler)) for s in (1, 2, 3)]
    pooled = pool_estimates(runs)
    assert pooled.batch_area.shape == (2, 90)
    area = sum(r.batch_area.sum(axis=1) for r in runs)
    dur = sum(r.batch_dur.sum(axis=1) for r in runs)
    np.testing.assert_allclose(pooled.aoi, area / dur, rtol=1e-12)
    assert pooled.slots == sum(r.slots for r in runs)
    rep = run_replications(sysm, cfg, [1, 2, 3])
    np.testing.assert_allclose(rep.aoi, pooled.aoi, rtol=1e-12)
    with pytest.raises(ValidationError):
        pool_estimates([])


def test_simulate_dispatch_and_errors():
    sysm = unit_system(2)
    with pytest.raises(ValidationError):
        simulate(sysm, SimConfig(target=100, warmup=0))
    with pytest.raises(ValidationError):
        simulate_probabilistic(sysm, [1.0], SimConfig(target=100, warmup=0))
    with pytest.raises(ValidationError):
        simulate_cyclic(sysm, [1, 1], SimConfig(target=100, warmup=0))
    with pytest.raises(ValidationError, match="max_slots"):
        simulate_cyclic(sysm, [1, 2], SimConfig(target=1000, warmup=0, max_slots=50))


@pytest.mark.parametrize("kwargs", [
    dict(warmup=-1), dict(target=10, warmup=10), dict(batches=1), dict(target=5, warmup=0, batches=6),
    dict(seed=-1), dict(seed=2**64),
])
def test_sim_config_validation(kwargs):
    with pytest.raises(ValidationError):
        SimConfig(**kwargs)


def test_estimates_to_dict():
    est = simulate_cyclic(unit_system(2), [1, 2], SimConfig(target=100, warmup=0, seed=5))
    d = est.to_dict()
    assert d["seed"] == 5 and len(d["sources"]) == 2
    assert d["sources"][0]["updates"] == 100
