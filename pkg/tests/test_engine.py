"""Monte Carlo engine: spec validation, reproducibility, statistical
agreement with the closed-form baseline, counters, and persistence."""
import json
import math

import numpy as np
import pytest

from ciodrelay.channel import draw_realization
from ciodrelay.decode import p2p_sep_theoretical
from ciodrelay.engine import (
    SCHEMES,
    EngineError,
    ExperimentSpec,
    SepCurve,
    SepPoint,
    diversity_slope,
    estimate_sep,
    load_sep_csv,
    manifest_payload,
    run_round_scheme1,
    run_round_scheme2,
    save_manifest,
    save_sep_csv,
)

FAST = dict(min_errors=40, max_rounds=65536, seed=5)


def test_spec_validation():
    with pytest.raises(EngineError):
        ExperimentSpec(scheme="scheme3_anc", snr_db=(10,))
    with pytest.raises(EngineError):
        ExperimentSpec(scheme="p2p_siso", snr_db=())
    with pytest.raises(EngineError):
        ExperimentSpec(scheme="p2p_siso", snr_db=(10, 10))
    with pytest.raises(EngineError):
        ExperimentSpec(scheme="p2p_siso", snr_db=(20, 10))
    with pytest.raises(EngineError):
        ExperimentSpec(scheme="p2p_siso", snr_db=(10,), fading="nakagami")
    with pytest.raises(EngineError):
        ExperimentSpec(scheme="p2p_siso", snr_db=(10,), rician_k=-1)
    with pytest.raises(EngineError):
        ExperimentSpec(scheme="p2p_siso", snr_db=(10,), min_errors=0)
    spec = ExperimentSpec(scheme="p2p_siso", snr_db=[0, 10.5])
    assert spec.snr_db == (0.0, 10.5)


def test_estimate_rejects_bad_workers():
    spec = ExperimentSpec(scheme="p2p_siso", snr_db=(10,), **FAST)
    with pytest.raises(EngineError):
        estimate_sep(spec, workers=0)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_every_scheme_runs(scheme, catalog_cache):
    spec = ExperimentSpec(scheme=scheme, snr_db=(8.0,), min_errors=25,
                          max_rounds=8192, seed=2)
    curve = estimate_sep(spec, cache_dir=catalog_cache, batch_rounds=2048)
    (p,) = curve.points
    assert p.errors >= 25
    assert 0 < p.sep < 1
    assert curve.symbols_per_trial == (2 if scheme.startswith("p2p") else 4)
    if scheme.startswith(("siso", "scheme1")):
        assert "ce1" in p.counters and "bc_a1" in p.counters
    if scheme.startswith("scheme2"):
        assert "relay_err" in p.counters and "metric_evals" in p.counters


def test_same_seed_same_curve(catalog_cache):
    spec = ExperimentSpec(scheme="siso_fnc", snr_db=(6.0, 9.0), **FAST)
    a = estimate_sep(spec, cache_dir=catalog_cache, batch_rounds=2048)
    b = estimate_sep(spec, cache_dir=catalog_cache, batch_rounds=2048)
    for pa, pb in zip(a.points, b.points):
        assert (pa.sep, pa.errors, pa.trials, pa.ci95) == (pb.sep, pb.errors, pb.trials, pb.ci95)
        assert pa.counters == pb.counters


def test_worker_count_does_not_change_results(catalog_cache):
    spec = ExperimentSpec(scheme="scheme2_fnc", snr_db=(8.0,), min_errors=60,
                          max_rounds=65536, seed=9)
    a = estimate_sep(spec, workers=1, cache_dir=catalog_cache, batch_rounds=1024)
    b = estimate_sep(spec, workers=2, cache_dir=catalog_cache, batch_rounds=1024)
    assert a.points[0].sep == b.points[0].sep
    assert a.points[0].trials == b.points[0].trials
    assert a.points[0].counters == b.points[0].counters


def test_different_seed_different_sample():
    s1 = ExperimentSpec(scheme="p2p_siso", snr_db=(10.0,), min_errors=100,
                        max_rounds=65536, seed=1)
    s2 = ExperimentSpec(scheme="p2p_siso", snr_db=(10.0,), min_errors=100,
                        max_rounds=65536, seed=2)
    a = estimate_sep(s1, batch_rounds=4096).points[0]
    b = estimate_sep(s2, batch_rounds=4096).points[0]
    assert (a.sep, a.errors) != (b.sep, b.errors)


def test_p2p_estimate_matches_closed_form(c4):
    spec = ExperimentSpec(scheme="p2p_siso", snr_db=(10.0,), min_errors=2500,
                          max_rounds=10 ** 6, seed=11)
    p = estimate_sep(spec).points[0]
    ref = p2p_sep_theoretical(c4, 10.0)
    assert abs(p.sep - ref) < 2 * p.ci95
    assert not p.low_confidence


def test_round_cap_flags_low_confidence():
    spec = ExperimentSpec(scheme="p2p_siso", snr_db=(10.0,), min_errors=10 ** 9,
                          max_rounds=2500, seed=0)
    p = estimate_sep(spec, batch_rounds=1024).points[0]
    assert p.low_confidence
    assert p.trials == 2500  # 1024 + 1024 + 452: the cap is exact


def test_error_decomposition_counters(catalog_cache):
    spec = ExperimentSpec(scheme="scheme1_anc", snr_db=(8.0,), min_errors=150,
                          max_rounds=65536, seed=4)
    p = estimate_sep(spec, cache_dir=catalog_cache, batch_rounds=4096).points[0]
    # an end-node slot error needs a wrong cluster or a broadcast miss
    for node in ("a", "b"):
        for slot in (1, 2):
            err = p.counters[f"err_{node}{slot}"]
            assert err <= p.counters[f"ce{slot}"] + p.counters[f"bc_{node}{slot}"]
    total = sum(p.counters[f"err_{n}{s}"] for n in "ab" for s in (1, 2))
    assert total == p.errors


def test_scheme2_budget_counters(catalog_cache):
    spec = ExperimentSpec(scheme="scheme2_fnc", snr_db=(8.0,), min_errors=50,
                          max_rounds=16384, seed=4)
    p = estimate_sep(spec, cache_dir=catalog_cache, batch_rounds=2048).points[0]
    assert p.counters["fallback"] == 0
    assert p.counters["metric_evals"] <= 64 * p.trials


# ---------------------------------------------------------------------------
# scalar protocol rounds


def test_scalar_round_scheme1(rng, siso_catalog):
    spec = ExperimentSpec(scheme="scheme1_anc", snr_db=(40.0,), **FAST)
    errs = 0
    for _ in range(40):
        r = draw_realization("one", "rayleigh", 0.0, rng)
        rr = run_round_scheme1(spec, r, rng, catalog=siso_catalog)
        assert len(rr.relay_symbols) == 4  # both slots' joint decisions
        assert len(rr.err_a) == len(rr.err_b) == len(rr.cluster_err) == 2
        errs += sum(rr.err_a) + sum(rr.err_b)
    assert errs <= 8  # 40 dB: errors are rare


def test_scalar_round_scheme1_fnc(rng):
    spec = ExperimentSpec(scheme="scheme1_fnc", snr_db=(12.0,), **FAST)
    r = draw_realization("one", "rayleigh", 0.0, rng)
    rr = run_round_scheme1(spec, r, rng)
    assert set(rr.cluster_err) <= {0, 1}


def test_scalar_round_scheme2(rng, scheme2_catalog):
    spec = ExperimentSpec(scheme="scheme2_anc", snr_db=(40.0,), **FAST)
    errs = 0
    for _ in range(25):
        r = draw_realization("two", "rayleigh", 0.0, rng)
        rr = run_round_scheme2(spec, r, rng, catalog=scheme2_catalog)
        assert len(rr.relay_symbols) == 4
        assert len(rr.cluster_err) == 1  # one joint map decision per round
        errs += sum(rr.err_a) + sum(rr.err_b)
    assert errs <= 8


def test_scalar_round_scheme2_fnc(rng):
    spec = ExperimentSpec(scheme="scheme2_fnc", snr_db=(38.0,), **FAST)
    r = draw_realization("two", "rayleigh", 0.0, rng)
    rr = run_round_scheme2(spec, r, rng)
    assert len(rr.cluster_err) == 2  # per-slot fixed-map decisions


# ---------------------------------------------------------------------------
# slope fitting


def _synthetic_curve(order, snrs=(20.0, 25.0, 30.0)):
    pts = [
        SepPoint(snr_db=t, sep=0.5 * 10 ** (-order * t / 10), errors=1000,
                 trials=10 ** 6, ci95=1e-9)
        for t in snrs
    ]
    return SepCurve(scheme="p2p_siso", points=pts, symbols_per_trial=2)


def test_diversity_slope_recovers_order():
    assert diversity_slope(_synthetic_curve(2.0), 20, 30) == pytest.approx(2.0, abs=1e-9)
    assert diversity_slope(_synthetic_curve(1.0), 20, 30) == pytest.approx(1.0, abs=1e-9)


def test_diversity_slope_windows_and_filters():
    curve = _synthetic_curve(2.0, snrs=(10.0, 20.0, 25.0, 30.0))
    curve.points[0].sep = 0.4  # out-of-window junk must not matter
    assert diversity_slope(curve, 20, 30) == pytest.approx(2.0, abs=1e-9)
    curve.points[2].low_confidence = True
    curve.points[2].sep = 1e-12
    assert diversity_slope(curve, 20, 30) == pytest.approx(2.0, abs=1e-9)
    zeroed = _synthetic_curve(2.0)
    zeroed.points[1].sep = 0.0  # zero-error points carry no slope information
    assert diversity_slope(zeroed, 20, 30) == pytest.approx(2.0, abs=1e-9)


def test_diversity_slope_needs_two_points():
    with pytest.raises(EngineError):
        diversity_slope(_synthetic_curve(2.0, snrs=(20.0,)), 15, 25)
    starved = _synthetic_curve(2.0)
    for p in starved.points:
        p.low_confidence = True
    with pytest.raises(EngineError):
        diversity_slope(starved, 20, 30)


# ---------------------------------------------------------------------------
# persistence


def test_csv_round_trip(tmp_path):
    spec = ExperimentSpec(scheme="p2p_ciod_2x1", snr_db=(5.0, 8.0), **FAST)
    curve = estimate_sep(spec, batch_rounds=2048)
    path = tmp_path / "curve.csv"
    save_sep_csv(curve, path)
    loaded = load_sep_csv(path)
    for p, q in zip(curve.points, loaded):
        assert (p.snr_db, p.sep, p.errors, p.trials, p.ci95) == \
            (q.snr_db, q.sep, q.errors, q.trials, q.ci95)


def test_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("snr,sep\n1,2\n")
    with pytest.raises(EngineError):
        load_sep_csv(path)


def test_manifest_is_deterministic(tmp_path):
    spec = ExperimentSpec(scheme="p2p_siso", snr_db=(9.0,), **FAST)
    a = estimate_sep(spec, batch_rounds=2048)
    b = estimate_sep(spec, batch_rounds=2048)
    save_manifest([a], tmp_path / "m1.json")
    save_manifest([b], tmp_path / "m2.json")
    assert (tmp_path / "m1.json").read_bytes() == (tmp_path / "m2.json").read_bytes()
    payload = json.loads((tmp_path / "m1.json").read_text())
    assert payload["curves"][0]["metadata"]["spec"]["scheme"] == "p2p_siso"
    assert payload["backend"] in ("c", "python")
