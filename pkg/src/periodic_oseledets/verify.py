"""Built-in invariant suites run by ``periodic-oseledets verify``.

Each check measures a nonnegative error and passes when it is at most its
tolerance. Setting ``PERIODIC_OSELEDETS_VERIFY_TOL`` replaces every
tolerance (a negative value forces every check to fail).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .base_dynamics import (
    ClosingParams,
    MarkovMeasure,
    PeriodicOrbit,
    ShiftPoint,
    SubshiftSpec,
    anosov_close,
    closing_checks,
    enumerate_periodic,
    periodic_count,
    sample_point,
    weak_star_distance,
)
from .linear_core import (
    AdjointGenerator,
    CoordinateSeries,
    LocallyConstant,
    Subspace,
    cocycle_product,
    exterior_power,
    orthogonal_complement,
    plucker,
    plucker_to_subspace,
    subspace_angle,
    directed_distance,
)
from .oseledets import (
    LyapunovSpectrum,
    SplittingEstimate,
    exterior_spectrum_check,
    fast_flag,
    finite_time_spectrum,
    oseledets_splitting,
    periodic_data,
    sample_horizon,
)
from .periodic_approx import (
    ApproximationReport,
    ExperimentConfig,
    holder_audit,
    record_returns,
    return_distances,
    splitting_report,
)
from .serialize import dumps

TOL_ENV = "PERIODIC_OSELEDETS_VERIFY_TOL"


@dataclass(frozen=True)
class Check:
    suite: str
    invariant: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.suite}.{self.invariant}: error {self.error:.3g} (tol {self.tol:.3g})"


def _tol(default: float) -> float:
    raw = os.environ.get(TOL_ENV)
    return default if raw is None else float(raw)


def _check(suite: str, invariant: str, error: float, tol: float) -> Check:
    return Check(suite, invariant, float(error), _tol(tol))


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def suite_base_dynamics() -> list[Check]:
    s = "base_dynamics"
    worst = 0
    for spec in (SubshiftSpec.full_shift(2), SubshiftSpec.golden_mean()):
        T = spec.transitions.astype(np.int64)
        for n in range(1, 13):
            trace = int(np.trace(np.linalg.matrix_power(T, n)))
            worst = max(worst, abs(periodic_count(spec, n) - trace))
    enum_err = max(
        abs(len(enumerate_periodic(SubshiftSpec.golden_mean(), n)) - periodic_count(SubshiftSpec.golden_mean(), n))
        for n in range(1, 11)
    )
    spec = SubshiftSpec.full_shift(2)
    measure = MarkovMeasure.bernoulli([0.5, 0.5])
    violations = events = 0
    params = ClosingParams(eps0=2.0**-3)
    for seed in range(40):
        x = sample_point(measure, 300, seed)
        for n in record_returns(return_distances(x, 256), params.eps0):
            p = anosov_close(x, n, params, spec)
            violations += sum(not c.holds for c in closing_checks(x, p, n, params))
            events += 1
    return [
        _check(s, "periodic_count_equals_trace", worst, 0),
        _check(s, "enumeration_matches_count", enum_err, 0),
        _check(s, "closing_inequality_violations", violations if events else 1, 0),
        _check(s, "weak_star_identity", weak_star_distance(measure, measure, 4), 0),
    ]


def suite_linear_core() -> list[Check]:
    s = "linear_core"
    ext = np.abs(exterior_power(np.diag([2.0, 3.0, 5.0]), 2) - np.diag([6.0, 10.0, 15.0])).max()
    rng = np.random.default_rng(0)
    V = Subspace(rng.standard_normal((4, 2)))
    round_trip = subspace_angle(V, plucker_to_subspace(plucker(V), 4, 2))
    ints = [rng.integers(-3, 4, size=(2, 2)).astype(float) for _ in range(3)]
    gen = LocallyConstant.from_symbols(ints)
    x = sample_point(MarkovMeasure.bernoulli([1 / 3] * 3), 20, 1)
    lhs = cocycle_product(AdjointGenerator(gen), x, 6)
    rhs = cocycle_product(gen, x.shift(-6), 6).T
    W = Subspace(rng.standard_normal((5, 2)))
    comp = float(np.abs(W.basis.T @ orthogonal_complement(W).basis).max())
    return [
        _check(s, "exterior_power_minors", ext, 1e-12),
        _check(s, "plucker_round_trip", round_trip, 1e-10),
        _check(s, "adjoint_transpose_identity", np.abs(lhs - rhs).max(), 0),
        _check(s, "complement_orthogonality", comp, 1e-12),
    ]


def suite_oseledets() -> list[Check]:
    s = "oseledets"
    x = ShiftPoint.constant(0)
    ln2 = math.log(2)
    diag = finite_time_spectrum(LocallyConstant.constant(np.diag([2.0, 0.5])), x, 50).values
    rot = finite_time_spectrum(LocallyConstant.constant(_rotation(1.0)), x, 50).values
    nil = finite_time_spectrum(LocallyConstant.constant(np.array([[0.0, 1.0], [0.0, 0.0]])), x, 5).values
    analytic = max(abs(diag[0] - ln2), abs(diag[1] + ln2), abs(rot[0]), abs(rot[1]))
    analytic += 0.0 if nil == (-math.inf, -math.inf) else 1.0
    est = oseledets_splitting(LocallyConstant.constant(np.array([[2.0, 1.0], [0.0, 0.5]])), x, 40)
    e2 = Subspace(np.array([2.0, -3.0]))
    eig = max(subspace_angle(est.spaces[0], Subspace.coordinate(2, 0)), subspace_angle(est.spaces[1], e2))
    rng = np.random.default_rng(5)
    g3 = LocallyConstant.from_symbols(list(rng.standard_normal((2, 3, 3))))
    chk = exterior_spectrum_check(g3, MarkovMeasure.bernoulli([0.5, 0.5]), 2, 512, 4, 3)
    g2 = LocallyConstant.from_symbols([np.array([[2.0, 0.3], [0.1, 0.5]]), np.array([[1.5, -0.2], [0.25, 0.6]])])
    word = (0, 0, 1, 0, 1, 1, 1)
    base = periodic_data(g2, PeriodicOrbit(word), rotations=[0]).exponents
    spread = max(
        max(abs(a - b) for a, b in zip(base, periodic_data(g2, PeriodicOrbit(word).rotation(t), rotations=[0]).exponents))
        for t in range(1, len(word))
    )
    y = sample_point(MarkovMeasure.bernoulli([0.5, 0.5]), sample_horizon(g3, 256), 2)
    spec3 = finite_time_spectrum(g3, y, 256)
    flag = fast_flag(g3, y, spec3, 256)
    nesting = max((directed_distance(a, b) for a, b in zip(flag, flag[1:])), default=0.0)
    return [
        _check(s, "analytic_spectra", analytic, 1e-9),
        _check(s, "eigen_splitting", eig, 1e-6),
        _check(s, "exterior_sum_identity", chk.top_error, 2e-2),
        _check(s, "periodic_rotation_invariance", spread, 1e-12),
        _check(s, "fast_flag_nesting", nesting, 1e-12),
    ]


def suite_periodic_approx() -> list[Check]:
    s = "periodic_approx"
    gen = LocallyConstant.constant(np.diag([2.0, 0.5]), SubshiftSpec.full_shift(2))
    cfg = ExperimentConfig(gen, MarkovMeasure.bernoulli([0.5, 0.5]), 1, 4, horizon=64, sample_count=5, seed=1)
    report = splitting_report(cfg)
    worst = max(max(e.best_angles) for e in report.periods)
    frac = max(1.0 - min(e.good_fractions) for e in report.periods)
    spec = SubshiftSpec.full_shift(2)
    series = CoordinateSeries(spec, [np.eye(2), np.eye(2)], [np.zeros((2, 2)), np.diag([0.2, -0.1])], 0.7, 6)
    audit = holder_audit(series, 60, 0)
    return [
        _check(s, "constant_generator_angles", worst, 1e-10),
        _check(s, "constant_generator_good_fraction", frac, 0),
        _check(s, "holder_series_violation", audit.max_violation, 1e-9),
    ]


def suite_cli() -> list[Check]:
    s = "cli"
    gen = LocallyConstant.constant(np.array([[0.0, 1.0], [0.0, 0.0]]))
    spectrum = finite_time_spectrum(gen, ShiftPoint.constant(0), 4)
    back = LyapunovSpectrum.from_dict(json.loads(dumps(spectrum.to_dict())))
    est = oseledets_splitting(LocallyConstant.constant(np.diag([3.0, 1.0])), ShiftPoint.constant(0), 16)
    est2 = SplittingEstimate.from_dict(json.loads(dumps(est.to_dict())))
    basis_err = max(float(np.abs(a.basis - b.basis).max()) for a, b in zip(est.spaces, est2.spaces))
    cfg = ExperimentConfig(
        LocallyConstant.constant(np.diag([2.0, 0.5]), SubshiftSpec.full_shift(2)),
        MarkovMeasure.bernoulli([0.5, 0.5]), 2, 3, horizon=32, sample_count=3,
    )
    report = splitting_report(cfg)
    again = ApproximationReport.from_dict(json.loads(dumps(report.to_dict())))
    return [
        _check(s, "spectrum_json_round_trip", 0.0 if back == spectrum else 1.0, 0),
        _check(s, "splitting_json_round_trip", basis_err, 0),
        _check(s, "report_json_round_trip", 0.0 if dumps(again.to_dict()) == dumps(report.to_dict()) else 1.0, 0),
    ]


SUITES: dict[str, Callable[[], list[Check]]] = {
    "base_dynamics": suite_base_dynamics,
    "linear_core": suite_linear_core,
    "oseledets": suite_oseledets,
    "periodic_approx": suite_periodic_approx,
    "cli": suite_cli,
}


def config_suite(run) -> list[Check]:
    """Invariants evaluated on the generator of a user config."""
    s = "config"
    gen = run.gen
    measure = run.measure or MarkovMeasure.from_stochastic(
        run.spec, run.spec.transitions / run.spec.transitions.sum(axis=1, keepdims=True)
    )
    n = min(64, run.experiment["horizon"])
    x = sample_point(measure, sample_horizon(gen, n) + 1, run.experiment["seed"])
    adj = cocycle_product(AdjointGenerator(gen), x, n)
    fwd = cocycle_product(gen, x.shift(-n), n).T
    scale = max(1.0, float(np.abs(fwd).max()))
    spec_fwd = finite_time_spectrum(gen, x.shift(-n), n).values
    spec_adj = finite_time_spectrum(AdjointGenerator(gen), x, n).values
    sym = max((abs(a - b) for a, b in zip(spec_fwd, spec_adj) if math.isfinite(a) or math.isfinite(b)), default=0.0)
    return [
        _check(s, "adjoint_transpose_identity", float(np.abs(adj - fwd).max()) / scale, 1e-12),
        _check(s, "adjoint_spectrum_symmetry", sym, 1e-9),
    ]


def run_suites(names: list[str] | None = None, run=None) -> list[Check]:
    names = list(SUITES) if not names else names
    unknown = [n for n in names if n not in SUITES and n != "config"]
    if unknown:
        raise KeyError(unknown[0])
    checks: list[Check] = []
    for name in names:
        if name == "config":
            continue
        checks.extend(SUITES[name]())
    if run is not None:
        checks.extend(config_suite(run))
    return checks
