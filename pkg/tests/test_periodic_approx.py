import json
import math
from pathlib import Path

import numpy as np
import pytest

from periodic_oseledets.base_dynamics import (
    MarkovMeasure,
    PeriodicOrbit,
    SubshiftSpec,
    validate_subshift,
)
from periodic_oseledets.errors import NoAdmissibleOrbit, ValidationError
from periodic_oseledets.linear_core import CoordinateSeries, LocallyConstant
from periodic_oseledets.oseledets import LyapunovSpectrum
from periodic_oseledets.periodic_approx import (
    QUANTILES,
    ApproximationReport,
    ExperimentConfig,
    best_periodic_orbit,
    closing_experiment,
    holder_audit,
    record_returns,
    splitting_report,
)
from periodic_oseledets.serialize import dumps

DATA = Path(__file__).resolve().parent / "data"
HALF = MarkovMeasure.bernoulli([0.5, 0.5])
HYPERBOLIC = LocallyConstant.from_symbols(
    [np.array([[2.0, 0.3], [0.1, 0.5]]), np.array([[1.5, -0.2], [0.25, 0.6]])]
)
CONSTANT = LocallyConstant.constant(np.diag([2.0, 0.5]), SubshiftSpec.full_shift(2))


def hyperbolic_config(**kw):
    opts = dict(horizon=1024, sample_count=50, seed=11)
    opts.update(kw)
    return ExperimentConfig(HYPERBOLIC, HALF, 4, 14, **opts)


@pytest.fixture(scope="module")
def hyperbolic_report():
    return splitting_report(hyperbolic_config(workers=2))


# configuration


def test_config_validation():
    with pytest.raises(ValidationError):
        ExperimentConfig(CONSTANT, HALF, 5, 4)
    with pytest.raises(ValidationError):
        ExperimentConfig(CONSTANT, HALF, 1, 4, horizon=0)
    with pytest.raises(ValidationError):
        ExperimentConfig(CONSTANT, HALF, 1, 4, epsilons=(0.5, 0.0))
    with pytest.raises(ValidationError):
        ExperimentConfig(CONSTANT, HALF, 1, 30, enumeration_cap=1000)
    with pytest.raises(ValidationError):
        ExperimentConfig(CONSTANT, MarkovMeasure.bernoulli([1 / 3] * 3), 1, 4)


# orbit search


def test_constant_picks_smallest_word():
    # every orbit has exponent error 0; without the weak-* term all scores tie
    cfg = ExperimentConfig(CONSTANT, HALF, 1, 6, horizon=16, sample_count=3, weak_star_weight=0.0)
    for n in (1, 3, 6):
        orbit, scores = best_periodic_orbit(cfg, n)
        assert orbit.word == (0,) * n
        assert scores.score == 0.0 and scores.exponent_errors == (0.0, 0.0)


def test_constant_weak_star_decides():
    cfg = ExperimentConfig(CONSTANT, HALF, 1, 6, horizon=16, sample_count=3)
    orbit, scores = best_periodic_orbit(cfg, 2)
    assert orbit.word == (0, 1)
    assert scores.candidates == 3


def test_exact_ties_break_lexicographically():
    # 2x2 word spectra are invariant under reversal: 00010111 and 00011101 tie exactly
    orbit, scores = best_periodic_orbit(hyperbolic_config(), 8)
    assert orbit.text() == "00010111"


def test_telescoping_orbit_selected():
    gen = LocallyConstant.from_symbols([np.diag([2.0, 0.5]), np.diag([0.5, 2.0])])
    cfg = ExperimentConfig(gen, HALF, 2, 2, horizon=1024, sample_count=10)
    orbit, scores = best_periodic_orbit(cfg, 2, reference=LyapunovSpectrum((0.0, 0.0), (2,)))
    assert orbit.word == (0, 1)
    assert scores.exponents == (0.0, 0.0) and scores.score == scores.weak_star


def test_no_admissible_orbit():
    spec = validate_subshift([[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    measure = MarkovMeasure.from_stochastic(spec, spec.transitions.astype(float))
    gen = LocallyConstant.from_symbols([np.diag([2.0, 1.0])] * 3, spec)
    cfg = ExperimentConfig(gen, measure, 3, 3, horizon=8, sample_count=2)
    ref = LyapunovSpectrum((math.log(2), 0.0), (1, 1))
    assert best_periodic_orbit(cfg, 3, ref)[0].word == (0, 1, 2)
    with pytest.raises(NoAdmissibleOrbit):
        best_periodic_orbit(cfg, 2, ref)


def test_modulus_ties_are_skipped():
    gen = LocallyConstant.from_symbols([np.diag([2.0, 0.5]), np.eye(2)])
    cfg = ExperimentConfig(gen, HALF, 1, 1, horizon=8, sample_count=2)
    orbit, scores = best_periodic_orbit(cfg, 1, reference=LyapunovSpectrum((0.3, -0.3), (1, 1)))
    assert orbit.word == (0,) and scores.skipped_ties == 1


@pytest.mark.xfail(strict=True, reason="fails on the frozen brute-force oracle: 3 inversions on even periods")
def test_score_trend_two_steps(hyperbolic_report):
    scores = [e.score for e in hyperbolic_report.periods]
    inversions = sum(scores[i + 2] > scores[i] for i in range(len(scores) - 2))
    assert inversions <= 1


@pytest.mark.xfail(strict=True, reason="fails on the frozen brute-force oracle: odd periods cannot be balanced")
def test_weak_star_trend(hyperbolic_report):
    ws = [e.weak_star for e in hyperbolic_report.periods]
    assert sum(b > a for a, b in zip(ws, ws[1:])) <= 1


def test_scores_match_oracle(hyperbolic_report):
    oracle = json.loads((DATA / "approximation_demo_hyperbolic.json").read_text())
    for e, o in zip(hyperbolic_report.periods, oracle["periods"]):
        assert e.word == o["word"]
        assert e.score == pytest.approx(o["score"], rel=1e-9)
        assert e.weak_star == pytest.approx(o["weak_star"], rel=1e-12)


# splitting report


def test_constant_report_all_zero():
    cfg = ExperimentConfig(CONSTANT, HALF, 1, 5, horizon=64, sample_count=6, seed=2)
    report = splitting_report(cfg)
    for e in report.periods:
        assert not e.structure_mismatch
        assert max(e.best_angles) == 0.0
        assert e.good_fractions == [1.0] * len(cfg.epsilons)
    assert report.ladder() == {2: 1, 3: 1, 4: 1, 5: 1}


def test_structure_mismatch_recorded():
    gen = LocallyConstant.from_symbols([np.diag([2.0, 0.5]), np.diag([0.5, 2.0])])
    cfg = ExperimentConfig(gen, HALF, 1, 2, horizon=1024, sample_count=5, grouping_gap=0.2)
    report = splitting_report(cfg)
    assert report.reference.multiplicities == (2,)
    first, second = report.periods
    assert first.structure_mismatch and "blocks" in first.mismatch_reason
    assert not second.structure_mismatch and second.word == "01"
    assert [e.n for e in report.matched()] == [2]
    assert report.to_csv().splitlines()[1].endswith(",1")


def test_hyperbolic_thresholds(hyperbolic_report):
    first, last = hyperbolic_report.entry(4), hyperbolic_report.entry(14)
    assert last.median_angle < 0.05
    assert last.median_angle < first.median_angle
    i = hyperbolic_report.epsilons.index(0.2)
    assert last.good_fractions[i] >= first.good_fractions[i]


def test_report_invariants(hyperbolic_report):
    eps = hyperbolic_report.epsilons
    for e in hyperbolic_report.periods:
        assert len(e.best_angles) == hyperbolic_report.sample_count
        assert all(0 <= q < e.n for q in e.best_q)
        qs = [e.quantiles[k] for k in QUANTILES]
        assert qs == sorted(qs)
        assert all(a >= 0 for a in e.flag_u_angles + e.flag_s_angles)
        by_eps = sorted(zip(eps, e.good_fractions))
        assert [g for _, g in by_eps] == sorted(g for _, g in by_eps)


def test_workers_do_not_change_results(hyperbolic_report):
    serial = splitting_report(hyperbolic_config(workers=1))
    assert serial.to_csv() == hyperbolic_report.to_csv()


def test_report_round_trip(hyperbolic_report):
    text = dumps(hyperbolic_report.to_dict())
    back = ApproximationReport.from_dict(json.loads(text))
    assert dumps(back.to_dict()) == text
    assert back.to_csv() == hyperbolic_report.to_csv()


def test_report_csv_layout(hyperbolic_report):
    lines = hyperbolic_report.to_csv().splitlines()
    header = lines[0].split(",")
    assert header[:4] == ["n", "word", "score", "weak_star"]
    assert "angle_median" in header and "good_fraction_0.2" in header
    assert len(lines) == 1 + 11
    row = dict(zip(header, lines[-1].split(",")))
    assert row["n"] == "14" and float(row["angle_median"]) == hyperbolic_report.entry(14).median_angle


def test_report_deterministic():
    cfg = ExperimentConfig(HYPERBOLIC, HALF, 3, 6, horizon=128, sample_count=8, seed=4)
    a, b = splitting_report(cfg), splitting_report(cfg)
    assert a.to_csv() == b.to_csv()
    assert dumps(a.to_dict()) == dumps(b.to_dict())


# Hölder audit


def test_holder_constant():
    audit = holder_audit(CONSTANT, 50, 0)
    assert audit.C2_hat == 0.0 and audit.max_violation == 0.0


def test_holder_depth_one_unit_jump():
    gen = LocallyConstant.from_symbols([np.eye(2), np.diag([2.0, 1.0])])
    for alpha in (0.5, 1.0, 3.0):
        audit = holder_audit(gen, 60, 1, alpha=alpha)
        assert audit.declared_C2 == 1.0
        assert audit.max_violation == 0.0
    assert "2^(alpha*0)" in audit.statement


def test_holder_depth_two_constant():
    # A depends on x_0 and x_1: pairs agreeing on |j| <= 1 give equal matrices
    mats = {(a, b): np.diag([1.0 + a + 2 * b, 1.0]) for a in (0, 1) for b in (0, 1)}
    gen = LocallyConstant(SubshiftSpec.full_shift(2), 2, mats)
    audit = holder_audit(gen, 120, 2, alpha=1.0)
    assert audit.declared_C2 == 2.0 * 3.0
    assert audit.max_violation == 0.0


def test_holder_series():
    spec = SubshiftSpec.full_shift(2)
    rng = np.random.default_rng(3)
    series = CoordinateSeries(spec, rng.standard_normal((2, 3, 3)), 0.3 * rng.standard_normal((2, 3, 3)), 0.6, 8)
    audit = holder_audit(series, 200, 5)
    assert audit.declared_C2 == series.C2 and audit.declared_alpha == 0.6
    assert audit.max_violation <= 1e-9
    assert 0.3 < audit.alpha_hat


# closing experiment


def test_record_returns():
    dist = np.array([0.5, 0.25, 0.25, 0.125, 0.5, 0.0625, 0.0])
    assert record_returns(dist, 0.3) == [2, 4, 6, 7]
    assert record_returns(dist, 0.1) == [6, 7]


def test_closing_periodic_point():
    gen = LocallyConstant.from_symbols([np.diag([2.0, 0.5]), np.diag([1.5, 0.25])])
    cfg = ExperimentConfig(gen, HALF, 1, 1, horizon=64, sample_count=1)
    x = PeriodicOrbit((0, 1, 1, 0, 1)).point()
    report = closing_experiment(gen, cfg, points=[x], max_return=50)
    (event,) = report.events
    assert event.n == 5 and event.distance == 0.0 and event.word == "01101"
    assert event.exponent_errors == (0.0, 0.0)
    assert event.angle == 0.0


def test_closing_eps_nesting():
    cfg = hyperbolic_config(sample_count=15)
    wide = closing_experiment(HYPERBOLIC, cfg, eps0=2.0**-4, max_return=1024)
    narrow = closing_experiment(HYPERBOLIC, cfg, eps0=2.0**-8, max_return=1024)
    assert len(narrow.events) < len(wide.events)
    assert {(e.sample, e.n) for e in narrow.events} <= {(e.sample, e.n) for e in wide.events}


def test_closing_needs_full_shift():
    gen = LocallyConstant.constant(np.eye(2), SubshiftSpec.golden_mean())
    measure = MarkovMeasure.from_stochastic(SubshiftSpec.golden_mean(), [[0.5, 0.5], [1.0, 0.0]])
    with pytest.raises(ValidationError):
        closing_experiment(gen, ExperimentConfig(gen, measure, 1, 1, horizon=8, sample_count=1))


@pytest.fixture(scope="module")
def closing_report():
    oracle = json.loads((DATA / "closing_demo.json").read_text())
    cfg = hyperbolic_config(sample_count=oracle["samples"], seed=oracle["seed"])
    return oracle, closing_experiment(HYPERBOLIC, cfg, eps0=oracle["eps0"], max_return=oracle["max_return"])


def test_closing_matches_oracle(closing_report):
    oracle, report = closing_report
    assert [(e.sample, e.n, e.distance) for e in report.events] == [
        (e["sample"], e["n"], e["distance"]) for e in oracle["events"]
    ]
    for e, o in zip(report.events, oracle["events"]):
        assert e.gamma1_error == pytest.approx(o["gamma1_error"], rel=1e-6)
    assert report.spearman == pytest.approx(oracle["spearman"], abs=1e-9)
    assert len(report.events) >= 200


@pytest.mark.xfail(strict=True, reason="frozen oracle reaches Spearman 0.319 on 207 events")
def test_closing_correlation_floor(closing_report):
    _, report = closing_report
    assert report.passes
