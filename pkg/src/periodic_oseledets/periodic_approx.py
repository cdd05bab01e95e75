"""Periodic approximation experiments.

Exhaustive best-orbit search, the splitting-angle report over sampled
points, a Hölder audit of generators, and the closing experiment that
compares typical points with the periodic orbits shadowing their returns.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.stats

from .base_dynamics import (
    DEFAULT_ENUMERATION_CAP,
    ClosingParams,
    MarkovMeasure,
    PeriodicOrbit,
    ShiftPoint,
    cylinder_table,
    orbit_cylinder_tables,
    periodic_count,
    periodic_word_array,
    sample_point,
    sample_points,
    shift_distance,
    anosov_close,
)
from .errors import EnumerationOverflow, NoAdmissibleOrbit, NotClose, StructureMismatch, ValidationError
from .linear_core import CocycleGenerator, CoordinateSeries, LocallyConstant, subspace_angle
from .oseledets import (
    GROUPING_GAP,
    INTERSECT_TOL,
    NEG_INFINITY,
    LyapunovSpectrum,
    SplittingEstimate,
    aggregate_spectrum,
    ergodic_spectrum,
    cyclic_matrices,
    finite_time_spectrum,
    oseledets_splitting,
    periodic_data,
    periodic_exponents_batch,
    sample_horizon,
)
from .serialize import decode_float, encode_float

DEFAULT_EPSILONS = (1 / 2, 1 / 3, 1 / 4, 1 / 5)


@dataclass
class ExperimentConfig:
    gen: CocycleGenerator
    measure: MarkovMeasure
    n_min: int = 4
    n_max: int = 14
    horizon: int = 1024
    sample_count: int = 50
    weak_star_depth: int = 4
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    seed: int = 0
    grouping_gap: float = GROUPING_GAP
    intersect_tol: float = INTERSECT_TOL
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    weak_star_weight: float = 1.0
    exponent_weight: float = 1.0
    workers: int = 1

    def __post_init__(self):
        self.epsilons = tuple(float(e) for e in self.epsilons)
        if not 1 <= self.n_min <= self.n_max:
            raise ValidationError(f"need 1 <= n_min <= n_max, got {self.n_min}..{self.n_max}")
        for name in ("horizon", "sample_count", "weak_star_depth", "workers"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        for name in ("grouping_gap", "intersect_tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if not self.epsilons or min(self.epsilons) <= 0:
            raise ValidationError("epsilons must be positive")
        if self.weak_star_weight < 0 or self.exponent_weight < 0:
            raise ValidationError("score weights must be nonnegative")
        if self.gen.spec is not None and self.gen.spec.alphabet_size != self.measure.spec.alphabet_size:
            raise ValidationError("generator and measure use different alphabets")
        count = periodic_count(self.subshift, self.n_max)
        if count > self.enumeration_cap:
            raise EnumerationOverflow(
                f"n_max = {self.n_max} has {count} periodic points, above the cap {self.enumeration_cap}"
            )

    @property
    def subshift(self):
        return self.measure.spec

    @property
    def periods(self) -> range:
        return range(self.n_min, self.n_max + 1)


# ---------------------------------------------------------------------------
# orbit search


@dataclass(frozen=True)
class OrbitScores:
    n: int
    word: tuple[int, ...]
    score: float
    weak_star: float
    exponents: tuple[float, ...]
    exponent_errors: tuple[float, ...]
    candidates: int
    skipped_ties: int


def exponent_errors(gam: np.ndarray, ref: Sequence[float]) -> np.ndarray:
    """``|gamma_j(p) - gamma_j(mu)|``; two ``-inf`` agree, ``-inf`` against finite is ``inf``."""
    ref = np.asarray(ref, dtype=float)
    both = np.isneginf(gam) & np.isneginf(ref)
    with np.errstate(invalid="ignore"):
        err = np.abs(gam - ref)
    return np.where(both, 0.0, err)


def weak_star_batch(words: np.ndarray, measure: MarkovMeasure, depth: int) -> np.ndarray:
    total = np.zeros(len(words))
    for length in range(1, depth + 1):
        tables = orbit_cylinder_tables(words, measure.spec, length)
        mu = cylinder_table(measure, measure.spec, length)
        total += np.ldexp(np.mean(np.abs(tables - mu), axis=1), -length)
    return total


def modulus_ties(gam: np.ndarray, multiplicities: Sequence[int], gap: float) -> np.ndarray:
    """Rows whose exponents straddling a block boundary are closer than ``gap``."""
    tie = np.zeros(len(gam), dtype=bool)
    end = 0
    for m in multiplicities[:-1]:
        end += m
        a, b = gam[:, end - 1], gam[:, end]
        with np.errstate(invalid="ignore"):
            tie |= ~np.isneginf(b) & (a - b < gap)
    return tie


def reference_spectrum(config: ExperimentConfig) -> LyapunovSpectrum:
    return ergodic_spectrum(
        config.gen, config.measure, config.horizon, config.sample_count, config.seed, config.grouping_gap
    )


def best_periodic_orbit(
    config: ExperimentConfig, n: int, reference: LyapunovSpectrum | None = None
) -> tuple[PeriodicOrbit, OrbitScores]:
    """Exhaustive minimization of weak-* distance plus mean exponent error over necklaces."""
    if reference is None:
        reference = reference_spectrum(config)
    words = periodic_word_array(config.subshift, n, dedupe=True, cap=config.enumeration_cap)
    if len(words) == 0:
        raise NoAdmissibleOrbit(f"no admissible periodic orbit of period {n}")
    gam = periodic_exponents_batch(cyclic_matrices(config.gen, words))
    ties = modulus_ties(gam, reference.multiplicities, config.grouping_gap)
    errs = exponent_errors(gam, reference.values)
    ws = weak_star_batch(words, config.measure, config.weak_star_depth)
    d = gam.shape[1]
    score = config.weak_star_weight * ws + config.exponent_weight * errs.sum(axis=1) / d
    score[ties] = np.inf
    finite = np.isfinite(score)
    if not finite.any():
        raise NoAdmissibleOrbit(
            f"period {n}: all {len(words)} orbits are excluded ({int(ties.sum())} modulus ties, "
            f"the rest disagree with the reference on -inf exponents)"
        )
    best = float(score[finite].min())
    close = finite & ((score == best) | np.isclose(score, best, rtol=1e-12, atol=0.0))
    i = int(np.flatnonzero(close)[0])
    word = tuple(int(s) for s in words[i])
    scores = OrbitScores(
        n=n,
        word=word,
        score=float(score[i]),
        weak_star=float(ws[i]),
        exponents=tuple(float(v) for v in gam[i]),
        exponent_errors=tuple(float(v) for v in errs[i]),
        candidates=len(words),
        skipped_ties=int(ties.sum()),
    )
    return PeriodicOrbit(word), scores


# ---------------------------------------------------------------------------
# splitting report


def _angle_tables(est: SplittingEstimate, flags) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Block, fast-flag and slow-flag angles against each orbit point's flags."""
    block, fast, slow = [], [], []
    for f in flags:
        block.append(max(subspace_angle(E, F) for E, F in zip(est.spaces, f.spaces)))
        fast.append(max((subspace_angle(E, F) for E, F in zip(est.fast_flag, f.fast)), default=0.0))
        slow.append(max((subspace_angle(E, F) for E, F in zip(est.slow_flag, f.slow)), default=0.0))
    return np.array(block), np.array(fast), np.array(slow)


QUANTILES = {"min": 0.0, "q10": 0.1, "median": 0.5, "q90": 0.9, "max": 1.0}


@dataclass
class PeriodEntry:
    n: int
    word: str
    score: float
    weak_star: float
    exponents: list[float]
    exponent_errors: list[float]
    skipped_ties: int
    structure_mismatch: bool = False
    mismatch_reason: str = ""
    best_angles: list[float] = field(default_factory=list)
    best_q: list[int] = field(default_factory=list)
    flag_u_angles: list[float] = field(default_factory=list)
    flag_s_angles: list[float] = field(default_factory=list)
    quantiles: dict[str, float] = field(default_factory=dict)
    good_fractions: list[float] = field(default_factory=list)

    @property
    def max_exponent_error(self) -> float:
        return max(self.exponent_errors)

    @property
    def median_angle(self) -> float:
        return self.quantiles.get("median", math.nan)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("score", "weak_star"):
            out[key] = encode_float(out[key])
        for key in ("exponents", "exponent_errors", "best_angles", "flag_u_angles", "flag_s_angles", "good_fractions"):
            out[key] = [encode_float(v) for v in out[key]]
        out["quantiles"] = {k: encode_float(v) for k, v in out["quantiles"].items()}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PeriodEntry":
        data = dict(data)
        for key in ("score", "weak_star"):
            data[key] = decode_float(data[key])
        for key in ("exponents", "exponent_errors", "best_angles", "flag_u_angles", "flag_s_angles", "good_fractions"):
            data[key] = [decode_float(v) for v in data[key]]
        data["quantiles"] = {k: decode_float(v) for k, v in data["quantiles"].items()}
        return cls(**data)


@dataclass
class ApproximationReport:
    epsilons: list[float]
    reference: LyapunovSpectrum
    horizon: int
    sample_count: int
    seed: int
    periods: list[PeriodEntry]
    header: dict = field(default_factory=dict)

    def entry(self, n: int) -> PeriodEntry:
        for e in self.periods:
            if e.n == n:
                return e
        raise KeyError(n)

    def matched(self) -> list[PeriodEntry]:
        return [e for e in self.periods if not e.structure_mismatch]

    def ladder(self) -> dict[int, int | None]:
        """For ``eps = 1/k``: the first period with ``good_fraction(1/k) > 1 - 1/k``."""
        out = {}
        for i, eps in enumerate(self.epsilons):
            k = round(1 / eps)
            if not math.isclose(1 / k, eps):
                continue
            out[k] = next((e.n for e in self.matched() if e.good_fractions[i] > 1 - 1 / k), None)
        return out

    def to_dict(self) -> dict:
        return {
            "header": self.header,
            "epsilons": [encode_float(e) for e in self.epsilons],
            "reference": self.reference.to_dict(),
            "horizon": self.horizon,
            "sample_count": self.sample_count,
            "seed": self.seed,
            "periods": [e.to_dict() for e in self.periods],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ApproximationReport":
        return cls(
            epsilons=[decode_float(e) for e in data["epsilons"]],
            reference=LyapunovSpectrum.from_dict(data["reference"]),
            horizon=int(data["horizon"]),
            sample_count=int(data["sample_count"]),
            seed=int(data["seed"]),
            periods=[PeriodEntry.from_dict(e) for e in data["periods"]],
            header=dict(data.get("header", {})),
        )

    def csv_header(self) -> list[str]:
        d = self.reference.dimension
        cols = ["n", "word", "score", "weak_star"]
        cols += [f"exponent_error_{j}" for j in range(1, d + 1)]
        cols += [f"angle_{q}" for q in QUANTILES]
        cols += [f"good_fraction_{eps!r}" for eps in self.epsilons]
        cols += ["structure_mismatch"]
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.csv_header())
        for e in self.periods:
            row = [e.n, e.word, _fmt(e.score), _fmt(e.weak_star)]
            row += [_fmt(v) for v in e.exponent_errors]
            if e.structure_mismatch:
                row += [""] * (len(QUANTILES) + len(self.epsilons))
            else:
                row += [_fmt(e.quantiles[q]) for q in QUANTILES]
                row += [_fmt(v) for v in e.good_fractions]
            row.append(int(e.structure_mismatch))
            writer.writerow(row)
        return buf.getvalue()


def _fmt(value: float) -> str:
    value = float(value)
    if value == NEG_INFINITY:
        return "-inf"
    return repr(value)


def _splitting_task(args):
    gen, x, horizon, gap, tol = args
    return oseledets_splitting(gen, x, horizon, gap, tol, with_defect=False)


def sample_splittings(config: ExperimentConfig, points: list[ShiftPoint]) -> list[SplittingEstimate]:
    tasks = [(config.gen, x, config.horizon, config.grouping_gap, config.intersect_tol) for x in points]
    if config.workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_splitting_task, tasks))
    return [_splitting_task(t) for t in tasks]


def experiment_points(config: ExperimentConfig) -> list[ShiftPoint]:
    return sample_points(
        config.measure, sample_horizon(config.gen, config.horizon), config.sample_count, config.seed
    )


def period_entry(
    config: ExperimentConfig,
    n: int,
    reference: LyapunovSpectrum,
    splittings: list[SplittingEstimate],
) -> PeriodEntry:
    orbit, scores = best_periodic_orbit(config, n, reference)
    entry = PeriodEntry(
        n=n,
        word=orbit.text(),
        score=scores.score,
        weak_star=scores.weak_star,
        exponents=list(scores.exponents),
        exponent_errors=list(scores.exponent_errors),
        skipped_ties=scores.skipped_ties,
    )
    natural = LyapunovSpectrum.from_values(scores.exponents, config.grouping_gap)
    if not natural.same_structure(reference):
        err = StructureMismatch(
            f"period {n}: orbit {orbit.text()} has blocks {natural.structure()}, "
            f"the reference has {reference.structure()}"
        )
        entry.structure_mismatch = True
        entry.mismatch_reason = str(err)
        return entry
    pdata = periodic_data(config.gen, orbit, config.grouping_gap, target=reference.multiplicities)
    for est in splittings:
        block, fast, slow = _angle_tables(est, pdata.flags)
        q = int(np.argmin(block))
        entry.best_angles.append(float(block[q]))
        entry.best_q.append(pdata.flags[q].t)
        entry.flag_u_angles.append(float(fast.min()))
        entry.flag_s_angles.append(float(slow.min()))
    angles = np.array(entry.best_angles)
    entry.quantiles = {k: float(np.quantile(angles, v)) for k, v in QUANTILES.items()}
    entry.good_fractions = [float(np.mean(angles < eps)) for eps in config.epsilons]
    return entry


def splitting_report(config: ExperimentConfig) -> ApproximationReport:
    """Per period: best orbit, exponent and weak-* errors, best-over-orbit angles."""
    points = experiment_points(config)
    splittings = sample_splittings(config, points)
    reference = aggregate_spectrum(np.array([s.spectrum.values for s in splittings]), config.grouping_gap)
    entries = [period_entry(config, n, reference, splittings) for n in config.periods]
    return ApproximationReport(
        epsilons=list(config.epsilons),
        reference=reference,
        horizon=config.horizon,
        sample_count=config.sample_count,
        seed=config.seed,
        periods=entries,
    )


# ---------------------------------------------------------------------------
# Hölder audit


@dataclass(frozen=True)
class HolderAudit:
    C2_hat: float
    alpha_hat: float
    max_violation: float
    pairs: int
    declared_C2: float | None = None
    declared_alpha: float | None = None
    statement: str = ""


def uniform_measure(spec) -> MarkovMeasure:
    """Markov measure with uniform transitions among allowed successors."""
    T = spec.transitions.astype(float)
    return MarkovMeasure.from_stochastic(spec, T / T.sum(axis=1, keepdims=True))


def _point_from_sequence(spec, seq: np.ndarray, origin: int) -> ShiftPoint:
    left = spec.shortest_cycle(int(seq[0]))
    right = spec.shortest_cycle(int(seq[-1]))
    return ShiftPoint(left, tuple(int(s) for s in seq[:-1]), right, origin)


def _resample_outside(measure: MarkovMeasure, seq: np.ndarray, centre: int, k: int, rng) -> np.ndarray:
    """Copy of ``seq`` that keeps coordinates ``|j| < k`` and redraws the rest from the chain."""
    out = seq.copy()
    fwd = np.cumsum(measure.stochastic, axis=1)
    back_measure = measure.reversed()
    bwd = np.cumsum(back_measure.stochastic, axis=1)
    fwd[:, -1] = 1.0
    bwd[:, -1] = 1.0
    if k == 0:
        pi = np.cumsum(measure.stationary)
        pi[-1] = 1.0
        out[centre] = np.searchsorted(pi, rng.random(), side="right")
        lo, hi = centre + 1, centre - 1
    else:
        lo, hi = centre + k, centre - k
    for i in range(lo, len(out)):
        out[i] = np.searchsorted(fwd[out[i - 1]], rng.random(), side="right")
    for i in range(hi, -1, -1):
        out[i] = np.searchsorted(bwd[out[i + 1]], rng.random(), side="right")
    return out


def holder_audit(
    gen: CocycleGenerator,
    sample_pairs: int,
    seed: int,
    measure: MarkovMeasure | None = None,
    alpha: float = 1.0,
    max_level: int = 12,
) -> HolderAudit:
    """Empirical Hölder fit of ``x -> A(x)`` over pairs at dyadic distances.

    ``alpha_hat`` is the least-squares slope of ``log ||A(x) - A(y)||``
    against ``log d(x, y)`` and ``C2_hat`` the largest intercept at that
    slope. Violations are measured against the declared constants of a
    :class:`CoordinateSeries`, the exact statement for a
    :class:`LocallyConstant` table (at exponent ``alpha``), and otherwise the
    fitted pair.
    """
    if sample_pairs < 10:
        raise ValidationError("holder_audit needs at least 10 pairs")
    spec = gen.spec
    if spec is None:
        raise ValidationError("generator has no subshift")
    measure = measure or uniform_measure(spec)
    rng = np.random.default_rng(seed)
    H = gen.reach + max_level + 2
    dists, diffs = [], []
    for i in range(sample_pairs):
        k = i % (max_level + 1)
        x = sample_point(measure, H, int(rng.integers(2**63)))
        seq = x.window(-H, H + 1)
        yseq = _resample_outside(measure, seq, H, k, rng)
        y = _point_from_sequence(spec, yseq, H)
        dists.append(shift_distance(x, y))
        diffs.append(float(np.linalg.norm(gen.evaluate(x) - gen.evaluate(y), 2)))
    dists, diffs = np.array(dists), np.array(diffs)
    live = (diffs > 0) & (dists > 0)
    if not live.any():
        alpha_hat, C2_hat = math.inf, 0.0
    else:
        X, Y = np.log(dists[live]), np.log(diffs[live])
        alpha_hat = float(np.polyfit(X, Y, 1)[0]) if np.ptp(X) > 0 else math.nan
        slope = alpha_hat if math.isfinite(alpha_hat) else 0.0
        C2_hat = float(np.exp(np.max(Y - slope * X)))
    statement = ""
    declared_C2 = declared_alpha = None
    if isinstance(gen, CoordinateSeries):
        declared_C2, declared_alpha = gen.C2, gen.alpha
    elif isinstance(gen, LocallyConstant):
        jump = gen.max_jump()
        declared_alpha = alpha
        declared_C2 = 2.0 ** (alpha * gen.reach) * jump
        statement = (
            f"A(x) depends only on x_{{-{gen.lo}}}..x_{{{gen.hi}}}: A(x) = A(y) whenever "
            f"d(x, y) < 2^-{gen.reach}, so ||A(x) - A(y)|| <= C2 d(x, y)^alpha for every alpha > 0 "
            f"with C2 = 2^(alpha*{gen.reach}) * {jump!r} (and a fortiori with 2^(alpha*depth))"
        )
    if declared_C2 is None:
        bound = C2_hat * dists ** (alpha_hat if math.isfinite(alpha_hat) else 1.0)
    else:
        bound = declared_C2 * dists**declared_alpha
    violation = float(max(0.0, np.max(diffs - bound))) if live.any() else 0.0
    return HolderAudit(C2_hat, alpha_hat, violation, sample_pairs, declared_C2, declared_alpha, statement)


# ---------------------------------------------------------------------------
# closing experiment


@dataclass(frozen=True)
class ClosingEvent:
    sample: int
    n: int
    distance: float
    word: str
    exponent_errors: tuple[float, ...]
    angle: float | None

    @property
    def gamma1_error(self) -> float:
        return self.exponent_errors[0]


@dataclass
class ClosingReport:
    events: list[ClosingEvent]
    eps0: float
    samples: int
    spearman: float
    threshold: float = 0.5

    @property
    def passes(self) -> bool:
        return self.spearman >= self.threshold

    def to_dict(self) -> dict:
        return {
            "eps0": self.eps0,
            "samples": self.samples,
            "spearman": encode_float(self.spearman),
            "threshold": self.threshold,
            "events": [
                {
                    "sample": e.sample,
                    "n": e.n,
                    "distance": e.distance,
                    "word": e.word,
                    "exponent_errors": [encode_float(v) for v in e.exponent_errors],
                    "angle": None if e.angle is None else encode_float(e.angle),
                }
                for e in self.events
            ],
        }


def return_distances(x: ShiftPoint, max_return: int, radius: int = 40) -> np.ndarray:
    """``d(f^n x, x)`` for ``n = 1..max_return`` (exact down to ``2^-radius``)."""
    window = x.window(-radius, max_return + radius + 1)  # window[i] = x_{i - radius}
    ns = np.arange(1, max_return + 1)
    agree = np.full(max_return, radius + 1, dtype=np.int64)
    for j in range(radius, -1, -1):
        for sign in (1, -1):
            differ = window[ns + sign * j + radius] != window[sign * j + radius]
            agree = np.where(differ, j, agree)
    dist = np.ldexp(1.0, -agree)
    for i in np.flatnonzero(agree > radius):
        dist[i] = shift_distance(x.shift(int(i) + 1), x)
    return dist


def record_returns(dist: np.ndarray, eps0: float) -> list[int]:
    """Return times that are closer than ``eps0`` and than every earlier return."""
    out, best = [], math.inf
    for i, d in enumerate(dist):
        if d < eps0 and d < best:
            out.append(i + 1)
            best = d
    return out


def closing_experiment(
    gen: CocycleGenerator,
    config: ExperimentConfig,
    eps0: float = 2.0**-4,
    max_return: int = 4096,
    samples: int | None = None,
    points: list[ShiftPoint] | None = None,
    threshold: float = 0.5,
) -> ClosingReport:
    """Close the record near-returns of sampled points and compare with the closed orbits."""
    spec = config.subshift
    if not spec.is_full():
        raise ValidationError("the closing experiment needs a full shift (exact closing)")
    params = ClosingParams(eps0=eps0)
    if points is None:
        count = samples if samples is not None else config.sample_count
        H = max(max_return, config.horizon) + gen.reach + 2
        points = sample_points(config.measure, H, count, config.seed)
    events: list[ClosingEvent] = []
    for i, x in enumerate(points):
        dist = return_distances(x, max_return)
        times = record_returns(dist, eps0)
        if not times:
            continue
        est = oseledets_splitting(gen, x, config.horizon, config.grouping_gap, config.intersect_tol, with_defect=False)
        for n in times:
            try:
                p = anosov_close(x, n, params, spec)
            except NotClose:
                continue
            local = finite_time_spectrum(gen, x, n, config.grouping_gap)
            pdata = periodic_data(gen, p, config.grouping_gap, rotations=[0])
            errs = exponent_errors(np.array(local.values), pdata.exponents)
            angle = None
            if pdata.spectrum.same_structure(est.spectrum):
                angle = max(subspace_angle(E, F) for E, F in zip(est.spaces, pdata.flags[0].spaces))
            events.append(
                ClosingEvent(i, n, float(dist[n - 1]), p.text(), tuple(float(v) for v in errs), angle)
            )
    if len(events) >= 3:
        rho = scipy.stats.spearmanr([e.distance for e in events], [e.gamma1_error for e in events])
        spearman = float(rho.statistic)
    else:
        spearman = math.nan
    return ClosingReport(events, eps0, len(points), spearman, threshold)
