"""Finite-horizon estimates of Lyapunov spectra and Oseledets splittings.

Exponents at finite ``n`` are ``(1/n) log`` of the singular values of the
n-step product. They are obtained from norms of exterior-power products,
``sigma_1 ... sigma_k = ||Lambda^k A^n||``, which keeps every factor
well-scaled and makes structurally singular steps give an exact ``-inf``.
Fast flags come from left singular subspaces of the product ending at ``x``.
Slow flags are orthogonal complements of the adjoint's fast flags.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .base_dynamics import (
    MarkovMeasure,
    PeriodicOrbit,
    ShiftPoint,
    sample_points,
    word_text,
)
from .errors import (
    AllDirectionsCollapsed,
    DimensionMismatch,
    InadmissibleWord,
    InconsistentBlockStructure,
    ModulusTie,
    SpectralGapTooSmall,
    ValidationError,
)
from .linear_core import (
    AdjointGenerator,
    CocycleGenerator,
    ExteriorPowerGenerator,
    LocallyConstant,
    Subspace,
    cocycle_product,
    directed_distance,
    exterior_power,
    intersect_subspaces,
    log_scaled_product,
    orthogonal_complement,
    plucker,
    plucker_to_subspace,
    projective_sine,
    subspace_angle,
)
from .serialize import decode_float, encode_float

NEG_INFINITY = -math.inf
FLOOR = -30.0
GROUPING_GAP = 0.05
INTERSECT_TOL = 1e-3
MIN_GAP_RATIO = 10.0
RANK_RTOL = 1e-14
KERNEL_RTOL = 1e-14
ZERO_EIG_RTOL = 1e-12
MAX_RESTARTS = 8


# ---------------------------------------------------------------------------
# spectra


def group_exponents(values: Sequence[float], gap: float = GROUPING_GAP) -> tuple[int, ...]:
    """Multiplicities obtained by merging consecutive values closer than ``gap``."""
    values = list(values)
    if not values:
        return ()
    mults = [1]
    for prev, cur in zip(values, values[1:]):
        both_inf = prev == NEG_INFINITY and cur == NEG_INFINITY
        if both_inf or (cur != NEG_INFINITY and prev - cur < gap):
            mults[-1] += 1
        else:
            mults.append(1)
    return tuple(mults)


@dataclass(frozen=True)
class LyapunovSpectrum:
    """Exponents ``gamma_1 >= ... >= gamma_d`` with their block structure."""

    values: tuple[float, ...]
    multiplicities: tuple[int, ...]
    std_errors: tuple[float, ...] | None = None
    grouping_gap: float = GROUPING_GAP

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        mults = tuple(int(m) for m in self.multiplicities)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "multiplicities", mults)
        if self.std_errors is not None:
            object.__setattr__(self, "std_errors", tuple(float(s) for s in self.std_errors))
        if sum(mults) != len(values) or any(m < 1 for m in mults):
            raise ValidationError(f"multiplicities {mults} do not partition {len(values)} exponents")
        if any(b > a for a, b in zip(values, values[1:])):
            raise ValidationError("exponents must be sorted in decreasing order")
        for k, block in enumerate(self.block_values()):
            infinite = [v == NEG_INFINITY for v in block]
            if any(infinite) and not all(infinite):
                raise ValidationError("a block mixes finite and -inf exponents")
            if all(infinite) and k != len(mults) - 1:
                raise ValidationError("only the last block may be -inf")
        for end in itertools.accumulate(mults[:-1]):
            a, b = values[end - 1], values[end]
            if b != NEG_INFINITY and a - b < self.grouping_gap - 1e-12:
                raise ValidationError(f"blocks at {a:.6g} and {b:.6g} are closer than grouping_gap")

    @classmethod
    def from_values(
        cls,
        values: Sequence[float],
        grouping_gap: float = GROUPING_GAP,
        std_errors: Sequence[float] | None = None,
        multiplicities: Sequence[int] | None = None,
    ) -> "LyapunovSpectrum":
        order = sorted(range(len(values)), key=lambda i: -values[i])
        vals = [float(values[i]) for i in order]
        errs = None if std_errors is None else [float(std_errors[i]) for i in order]
        mults = tuple(multiplicities) if multiplicities is not None else group_exponents(vals, grouping_gap)
        return cls(tuple(vals), mults, None if errs is None else tuple(errs), grouping_gap)

    @property
    def dimension(self) -> int:
        return len(self.values)

    @property
    def l(self) -> int:
        return len(self.multiplicities)

    @property
    def partial_dims(self) -> tuple[int, ...]:
        """``d_1, ..., d_l`` with ``d_j = m_1 + ... + m_j``."""
        return tuple(itertools.accumulate(self.multiplicities))

    def block_slices(self) -> list[slice]:
        ends = self.partial_dims
        starts = (0,) + ends[:-1]
        return [slice(a, b) for a, b in zip(starts, ends)]

    def block_values(self) -> list[tuple[float, ...]]:
        return [self.values[s] for s in self.block_slices()]

    @property
    def blocks(self) -> list[tuple[float, int]]:
        """``(exponent, multiplicity)`` pairs; a block exponent is its mean value."""
        out = []
        for vals, m in zip(self.block_values(), self.multiplicities):
            exp = NEG_INFINITY if vals[0] == NEG_INFINITY else float(np.mean(vals))
            out.append((exp, m))
        return out

    @property
    def has_neg_infinity(self) -> bool:
        return self.values[-1] == NEG_INFINITY

    def structure(self) -> tuple[tuple[int, ...], bool]:
        return self.multiplicities, self.has_neg_infinity

    def same_structure(self, other: "LyapunovSpectrum") -> bool:
        return self.structure() == other.structure()

    def to_dict(self) -> dict:
        out = {
            "values": [encode_float(v) for v in self.values],
            "multiplicities": list(self.multiplicities),
            "blocks": [{"exponent": encode_float(e), "multiplicity": m} for e, m in self.blocks],
            "grouping_gap": self.grouping_gap,
        }
        if self.std_errors is not None:
            out["std_errors"] = [encode_float(s) for s in self.std_errors]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "LyapunovSpectrum":
        errs = data.get("std_errors")
        return cls(
            tuple(decode_float(v) for v in data["values"]),
            tuple(data["multiplicities"]),
            None if errs is None else tuple(decode_float(s) for s in errs),
            float(data["grouping_gap"]),
        )


def step_ranks(mats: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Numerical rank of every matrix in a stack, relative to its own norm."""
    sv = np.linalg.svd(mats, compute_uv=False)
    return np.sum(sv > rtol * sv[..., :1], axis=-1)


def exterior_product(mats: np.ndarray, k: int, ranks: np.ndarray | None = None):
    """Scaled product of ``Lambda^k`` of the steps, dropping steps of rank < k.

    Returns ``(scaled, log_scale)`` as :func:`log_scaled_product` does.
    """
    if k == 1:
        return log_scaled_product(mats)
    ext = exterior_power(mats, k)
    if ranks is None:
        ranks = step_ranks(mats)
    ext[ranks < k] = 0.0
    return log_scaled_product(ext)


def log_singular_values(mats: np.ndarray) -> np.ndarray:
    """``log sigma_k`` of the product ``M_{n-1} ... M_0``, for a stack ``(..., n, d, d)``."""
    mats = np.asarray(mats, dtype=float)
    d = mats.shape[-1]
    ranks = step_ranks(mats)
    sums = [np.zeros(mats.shape[:-3])]
    for k in range(1, d + 1):
        prod, log_scale = exterior_product(mats, k, ranks)
        norm = np.linalg.norm(prod, ord=2, axis=(-2, -1))
        with np.errstate(divide="ignore"):
            sums.append(log_scale + np.log(norm))
    sums = np.stack(sums, axis=-1)
    with np.errstate(invalid="ignore"):
        out = np.diff(sums, axis=-1)
    # once a partial sum is -inf every later singular value is zero
    dead = np.isneginf(sums[..., 1:])
    out[dead] = NEG_INFINITY
    # rounding can swap nearly equal neighbours; singular values are sorted
    return -np.sort(-out, axis=-1)


def _exponents(mats: np.ndarray, n: int, floor: float) -> np.ndarray:
    vals = log_singular_values(mats) / n
    vals[vals < floor] = NEG_INFINITY
    return vals


def finite_time_spectrum(
    gen: CocycleGenerator,
    x: ShiftPoint,
    n: int,
    grouping_gap: float = GROUPING_GAP,
    floor: float = FLOOR,
) -> LyapunovSpectrum:
    """``(1/n) log sigma_k(A^n(x))`` grouped into blocks."""
    if n < 1:
        raise ValidationError("horizon must be at least 1")
    vals = _exponents(gen.along(x, n), n, floor)
    return LyapunovSpectrum.from_values(vals.tolist(), grouping_gap)


def sample_horizon(gen: CocycleGenerator, n: int) -> int:
    """Two-sided window needed to evaluate ``n`` steps forward and backward."""
    return n + gen.reach + 2


@dataclass(frozen=True)
class SpectrumSamples:
    points: list[ShiftPoint]
    values: np.ndarray  # (samples, d)


def spectrum_samples(
    gen: CocycleGenerator,
    measure: MarkovMeasure,
    n: int,
    samples: int,
    seed: int,
    floor: float = FLOOR,
    points: list[ShiftPoint] | None = None,
) -> SpectrumSamples:
    if samples < 1:
        raise ValidationError("need at least one sample")
    if n < 1:
        raise ValidationError("horizon must be at least 1")
    if points is None:
        points = sample_points(measure, sample_horizon(gen, n), samples, seed)
    mats = np.stack([gen.along(x, n) for x in points])
    return SpectrumSamples(points, _exponents(mats, n, floor))


def aggregate_spectrum(values: np.ndarray, grouping_gap: float = GROUPING_GAP) -> LyapunovSpectrum:
    """Mean spectrum with standard errors; every sample must share one block structure."""
    structures = {group_exponents(row.tolist(), grouping_gap) for row in values}
    infinite = {tuple(np.isneginf(row).tolist()) for row in values}
    if len(structures) != 1 or len(infinite) != 1:
        raise InconsistentBlockStructure(
            f"sampled points disagree on the block structure at gap {grouping_gap}: "
            f"{sorted(structures)}; raise the horizon or adjust grouping_gap"
        )
    (mults,) = structures
    s = values.shape[0]
    means, errs = [], []
    for col in values.T:
        if np.isneginf(col[0]):
            means.append(NEG_INFINITY)
            errs.append(0.0)
        else:
            means.append(float(np.mean(col)))
            errs.append(float(np.std(col, ddof=1) / math.sqrt(s)) if s > 1 else 0.0)
    return LyapunovSpectrum(tuple(means), mults, tuple(errs), grouping_gap)


def ergodic_spectrum(
    gen: CocycleGenerator,
    measure: MarkovMeasure,
    n: int,
    samples: int,
    seed: int,
    grouping_gap: float = GROUPING_GAP,
    floor: float = FLOOR,
) -> LyapunovSpectrum:
    """Monte-Carlo mean of :func:`finite_time_spectrum` with standard errors."""
    draws = spectrum_samples(gen, measure, n, samples, seed, floor)
    return aggregate_spectrum(draws.values, grouping_gap)


# ---------------------------------------------------------------------------
# projective iteration


@dataclass(frozen=True)
class ProjectiveState:
    point: ShiftPoint
    direction: np.ndarray
    kernel_policy: str = "restart"

    def __post_init__(self):
        v = np.asarray(self.direction, dtype=float)
        if not math.isclose(float(np.linalg.norm(v)), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValidationError("projective direction must be a unit vector")
        object.__setattr__(self, "direction", v)


@dataclass(frozen=True)
class ProjectiveResult:
    exponent: float
    restarts: int
    kernel_hits: tuple[int, ...]
    state: ProjectiveState

    def __float__(self) -> float:
        return self.exponent


def _random_direction(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def top_exponent_projective(
    gen: CocycleGenerator,
    x: ShiftPoint,
    n: int,
    seed: int = 0,
    v0=None,
    max_restarts: int = MAX_RESTARTS,
) -> ProjectiveResult:
    """Birkhoff average of ``log ||A(x_k) v_k||`` along the projectivized cocycle.

    When ``A(x_k) v_k`` falls below ``1e-14 ||A(x_k)||`` the run restarts
    from ``x`` with a fresh seeded random direction. ``kernel_hits``
    records the step at which each abandoned run died.
    """
    if n < 1:
        raise ValidationError("horizon must be at least 1")
    mats = gen.along(x, n)
    norms = np.linalg.norm(mats, ord=2, axis=(-2, -1))
    rng = np.random.default_rng(seed)
    if v0 is None:
        v = _random_direction(rng, gen.dimension)
    else:
        v = np.asarray(v0, dtype=float)
        v = v / np.linalg.norm(v)
    hits: list[int] = []
    while True:
        total = 0.0
        w = v
        dead = None
        for k in range(n):
            u = mats[k] @ w
            r = float(np.linalg.norm(u))
            if r == 0.0 or r < KERNEL_RTOL * norms[k]:
                dead = k
                break
            total += math.log(r)
            w = u / r
        if dead is None:
            state = ProjectiveState(x.shift(gen.step * n), w)
            return ProjectiveResult(total / n, len(hits), tuple(hits), state)
        hits.append(dead)
        if len(hits) > max_restarts:
            raise AllDirectionsCollapsed(
                f"all {len(hits)} directions reached the kernel within {n} steps; top exponent is -inf"
            )
        v = _random_direction(rng, gen.dimension)


# ---------------------------------------------------------------------------
# flags and splittings


def _top_space(mats: np.ndarray, k: int, ranks: np.ndarray, side: str = "left"):
    """Top-k singular subspace of the product and the gap ``sigma_k / sigma_{k+1}``."""
    d = mats.shape[-1]
    prod, _ = exterior_product(mats, k, ranks)
    u, s, vt = np.linalg.svd(prod)
    ratio = math.inf if s[1] == 0 else float(s[0] / s[1])
    if s[0] == 0:
        ratio = 0.0
    omega = u[:, 0] if side == "left" else vt[0]
    return plucker_to_subspace(omega, d, k), ratio


def _nest(previous: Subspace, candidate: Subspace, target: int) -> Subspace:
    """``previous`` plus the directions of ``candidate`` most outside it."""
    extra = target - previous.dim
    if extra == 0:
        return previous
    residual = candidate.basis - previous.project(candidate.basis)
    u, _, _ = np.linalg.svd(residual, full_matrices=False)
    return Subspace(np.hstack([previous.basis, u[:, :extra]]))


def _flag_from_product(mats, spectrum, min_gap_ratio, side, label) -> list[Subspace]:
    d = mats.shape[-1]
    ranks = step_ranks(mats)
    flag: list[Subspace] = []
    previous = Subspace.zero(d)
    for i, di in enumerate(spectrum.partial_dims[:-1], start=1):
        W, ratio = _top_space(mats, di, ranks, side)
        if ratio < min_gap_ratio:
            raise SpectralGapTooSmall(
                f"{label}: sigma_{di}/sigma_{di + 1} = {ratio:.3g} < {min_gap_ratio:g}; raise the horizon"
            )
        previous = _nest(previous, W, di)
        flag.append(previous)
    return flag


def fast_flag(
    gen: CocycleGenerator,
    x: ShiftPoint,
    spectrum: LyapunovSpectrum,
    n: int,
    min_gap_ratio: float = MIN_GAP_RATIO,
) -> list[Subspace]:
    """``E^{u_1} ⊂ ... ⊂ E^{u_{l-1}}`` from left singular spaces of ``A^n(g^{-n} x)``."""
    if spectrum.dimension != gen.dimension:
        raise ValidationError("spectrum and generator dimensions differ")
    return _flag_from_product(gen.past_window(x, n), spectrum, min_gap_ratio, "left", "fast flag")


def slow_flag(
    gen: CocycleGenerator,
    x: ShiftPoint,
    spectrum: LyapunovSpectrum,
    n: int,
    min_gap_ratio: float = MIN_GAP_RATIO,
) -> list[Subspace]:
    """``E^{s_1} ⊃ ... ⊃ E^{s_{l-1}}`` as complements of the adjoint's fast flag."""
    fast_adj = fast_flag(AdjointGenerator(gen), x, spectrum, n, min_gap_ratio)
    return [orthogonal_complement(V) for V in fast_adj]


def forward_slow_flag(gen: CocycleGenerator, x: ShiftPoint, spectrum: LyapunovSpectrum, n: int) -> list[Subspace]:
    """Slow flag from the bottom right singular spaces of the forward product ``A^n(x)``.

    An estimator of the same spaces as :func:`slow_flag` that never forms the
    adjoint; used for the duality diagnostic.
    """
    mats = gen.along(x, n)
    top = _flag_from_product(mats, spectrum, 0.0, "right", "forward slow flag")
    return [orthogonal_complement(V) for V in top]


def splitting_from_flags(
    fast: list[Subspace], slow: list[Subspace], spectrum: LyapunovSpectrum, tol: float
) -> list[Subspace]:
    """``E^1 = E^{u_1}``, ``E^j = E^{u_j} ∩ E^{s_{j-1}}``, ``E^l = E^{s_{l-1}}``."""
    l = spectrum.l
    d = spectrum.dimension
    if l == 1:
        return [Subspace.full(d)]
    spaces = [fast[0]]
    for j in range(2, l):
        E = intersect_subspaces(fast[j - 1], slow[j - 2], tol)
        if E.dim != spectrum.multiplicities[j - 1]:
            raise DimensionMismatch(
                f"block {j}: intersection has dimension {E.dim}, multiplicity is "
                f"{spectrum.multiplicities[j - 1]} (intersect_tol {tol:g}; raise the horizon or loosen it)"
            )
        spaces.append(E)
    spaces.append(slow[-1])
    return spaces


@dataclass
class SplittingEstimate:
    point: ShiftPoint
    horizon: int
    spectrum: LyapunovSpectrum
    spaces: list[Subspace]
    fast_flag: list[Subspace]
    slow_flag: list[Subspace]
    duality_defect: float = 0.0
    equivariance_defect: float | None = None
    intersect_tol: float = INTERSECT_TOL

    @property
    def dimension(self) -> int:
        return self.spectrum.dimension

    def full_fast_flag(self) -> list[Subspace]:
        return self.fast_flag + [Subspace.full(self.dimension)]

    def full_slow_flag(self) -> list[Subspace]:
        return [Subspace.full(self.dimension)] + self.slow_flag

    def to_dict(self) -> dict:
        return {
            "point": self.point and self.point.to_dict(),
            "horizon": self.horizon,
            "spectrum": self.spectrum.to_dict(),
            "spaces": [basis_to_json(E) for E in self.spaces],
            "fast_flag": [basis_to_json(E) for E in self.fast_flag],
            "slow_flag": [basis_to_json(E) for E in self.slow_flag],
            "diagnostics": {
                "duality_defect": self.duality_defect,
                "equivariance_defect": self.equivariance_defect,
                "intersect_tol": self.intersect_tol,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SplittingEstimate":
        diag = data["diagnostics"]
        return cls(
            point=ShiftPoint.from_dict(data["point"]),
            horizon=int(data["horizon"]),
            spectrum=LyapunovSpectrum.from_dict(data["spectrum"]),
            spaces=[basis_from_json(b) for b in data["spaces"]],
            fast_flag=[basis_from_json(b) for b in data["fast_flag"]],
            slow_flag=[basis_from_json(b) for b in data["slow_flag"]],
            duality_defect=decode_float(diag["duality_defect"]),
            equivariance_defect=None
            if diag["equivariance_defect"] is None
            else decode_float(diag["equivariance_defect"]),
            intersect_tol=float(diag["intersect_tol"]),
        )


def basis_to_json(E: Subspace) -> dict:
    return {"ambient": E.ambient, "dim": E.dim, "basis": E.basis.tolist()}


def basis_from_json(data: dict) -> Subspace:
    b = np.array(data["basis"], dtype=float).reshape(int(data["ambient"]), int(data["dim"]))
    return Subspace.from_orthonormal(b)


def _max_angle(pairs) -> float:
    return max((subspace_angle(E, F) for E, F in pairs), default=0.0)


def oseledets_splitting(
    gen: CocycleGenerator,
    x: ShiftPoint,
    n: int,
    grouping_gap: float = GROUPING_GAP,
    intersect_tol: float = INTERSECT_TOL,
    min_gap_ratio: float = MIN_GAP_RATIO,
    floor: float = FLOOR,
    with_defect: bool = True,
) -> SplittingEstimate:
    """Spectrum, both flags and the individual spaces ``E^j`` at ``x``."""
    spectrum = finite_time_spectrum(gen, x, n, grouping_gap, floor)
    if spectrum.l == 1:
        fast, slow = [], []
        duality = 0.0
    else:
        fast = fast_flag(gen, x, spectrum, n, min_gap_ratio)
        slow = slow_flag(gen, x, spectrum, n, min_gap_ratio)
        forward = forward_slow_flag(gen, x, spectrum, n)
        duality = _max_angle(zip(slow, forward))
    spaces = splitting_from_flags(fast, slow, spectrum, intersect_tol)
    est = SplittingEstimate(x, n, spectrum, spaces, fast, slow, duality, None, intersect_tol)
    if with_defect:
        nxt = oseledets_splitting(
            gen, x.shift(gen.step), n, grouping_gap, intersect_tol, min_gap_ratio, floor, with_defect=False
        )
        est.equivariance_defect = splitting_defect(gen.evaluate(x), est, nxt)
    return est


def splitting_defect(A: np.ndarray, here: SplittingEstimate, there: SplittingEstimate) -> float:
    """``max_j angle(A E^j_x, E^j_{fx})``; the ``-inf`` block is tested by containment only."""
    if not here.spectrum.same_structure(there.spectrum):
        return math.pi / 2
    worst = 0.0
    neg_last = here.spectrum.has_neg_infinity
    for j, (E, F) in enumerate(zip(here.spaces, there.spaces)):
        image = E.image(A)
        if neg_last and j == len(here.spaces) - 1:
            angle = math.asin(min(1.0, directed_distance(image, F)))
        elif image.dim == F.dim:
            angle = subspace_angle(image, F)
        else:
            angle = math.asin(min(1.0, directed_distance(image, F))) if image.dim else math.pi / 2
        worst = max(worst, angle)
    return worst


def equivariance_defect(
    gen: CocycleGenerator,
    x: ShiftPoint,
    n: int,
    grouping_gap: float = GROUPING_GAP,
    intersect_tol: float = INTERSECT_TOL,
) -> float:
    here = oseledets_splitting(gen, x, n, grouping_gap, intersect_tol, with_defect=False)
    there = oseledets_splitting(gen, x.shift(gen.step), n, grouping_gap, intersect_tol, with_defect=False)
    return splitting_defect(gen.evaluate(x), here, there)


# ---------------------------------------------------------------------------
# exterior powers


@dataclass(frozen=True)
class ExteriorCheck:
    exterior: LyapunovSpectrum
    base: LyapunovSpectrum
    reconstruction: tuple[float, ...]
    plucker_sines: tuple[float, ...]

    @property
    def top_error(self) -> float:
        return abs(self.exterior.values[0] - self.reconstruction[0])


def exterior_sums(values: Sequence[float], j: int) -> tuple[float, ...]:
    """All j-fold sums ``gamma_{i_1} + ... + gamma_{i_j}``, decreasing."""
    sums = [sum(c) for c in itertools.combinations(values, j)]
    return tuple(sorted(sums, reverse=True))


def exterior_spectrum_check(
    gen: CocycleGenerator,
    measure: MarkovMeasure,
    j: int,
    n: int,
    samples: int,
    seed: int,
    grouping_gap: float = GROUPING_GAP,
) -> ExteriorCheck:
    """Spectrum of ``Lambda^j A`` next to the j-fold sums of the base spectrum.

    Also compares, at the first sample point, the top space of
    ``Lambda^{d_i} A`` with ``plucker(E^{u_i})`` for every flag level.
    """
    if not 1 <= j <= gen.dimension:
        raise ValidationError(f"exterior degree {j} out of range 1..{gen.dimension}")
    ext = ExteriorPowerGenerator(gen, j)
    ext_draws = spectrum_samples(ext, measure, n, samples, seed)
    base_draws = spectrum_samples(gen, measure, n, samples, seed, points=ext_draws.points)
    ext_spec = aggregate_spectrum(ext_draws.values, grouping_gap)
    base_spec = aggregate_spectrum(base_draws.values, grouping_gap)
    x = ext_draws.points[0]
    sines = []
    local = finite_time_spectrum(gen, x, n, grouping_gap)
    if local.l > 1:
        flag = fast_flag(gen, x, local, n)
        for di, E in zip(local.partial_dims, flag):
            wedge_gen = ExteriorPowerGenerator(gen, di)
            top, _ = log_scaled_product(wedge_gen.past_window(x, n))
            u, _, _ = np.linalg.svd(top)
            sines.append(projective_sine(u[:, 0], plucker(E)))
    return ExteriorCheck(ext_spec, base_spec, exterior_sums(base_spec.values, j), tuple(sines))


# ---------------------------------------------------------------------------
# periodic points


def cyclic_matrices(gen: CocycleGenerator, words: np.ndarray) -> np.ndarray:
    """``A(f^t p)`` for ``t = 0..n-1`` and every cyclic word; shape ``(N, n, d, d)``."""
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    if isinstance(gen, LocallyConstant) and gen.step == 1:
        k = gen.spec.alphabet_size
        codes = np.zeros(words.shape, dtype=np.int64)
        for i in range(-gen.lo, gen.hi + 1):
            codes = codes * k + np.roll(words, -i, axis=1)
        out = gen._dense[codes]
        bad = np.isnan(out).any(axis=(2, 3))
        if bad.any():
            row, t = np.argwhere(bad)[0]
            raise InadmissibleWord(f"no matrix at position {t} of cyclic word {word_text(words[row])}")
        return out
    return np.stack([gen.along(ShiftPoint.periodic(tuple(w)), words.shape[1]) for w in words])


def periodic_exponents_batch(mats: np.ndarray) -> np.ndarray:
    """Periodic exponents for a stack of cyclic sequences ``(N, n, d, d)``.

    Uses ``|lambda_1 ... lambda_k| = rho(Lambda^k B)`` on renormalized
    exterior products, so long periods neither overflow nor lose the small
    moduli. Zero eigenvalues are exact ``-inf``: none when every step is
    invertible; otherwise every k above the least step rank, plus any k with
    ``rho(Lambda^k B) <= 1e-12 ||Lambda^k B||`` (nilpotent alignments).
    """
    mats = np.asarray(mats, dtype=float)
    n, d = mats.shape[-3], mats.shape[-1]
    ranks = step_ranks(mats)
    singular = ranks.min(axis=-1) < d
    log_rho = np.zeros(mats.shape[:-3] + (d + 1,))
    for k in range(1, d + 1):
        P, log_scale = exterior_product(mats, k, ranks)
        rho = np.max(np.abs(np.linalg.eigvals(P)), axis=-1)
        norm = np.linalg.norm(P, ord=2, axis=(-2, -1))
        dead = (rho == 0.0) | np.isneginf(log_scale) | (singular & (rho <= ZERO_EIG_RTOL * norm))
        with np.errstate(divide="ignore"):
            log_rho[..., k] = np.where(dead, NEG_INFINITY, np.log(np.where(dead, 1.0, rho)) + log_scale)
    with np.errstate(invalid="ignore"):
        gam = np.diff(log_rho, axis=-1) / n
    gam[np.isneginf(log_rho[..., 1:])] = NEG_INFINITY
    # once a product vanishes every later modulus is zero
    gam[np.maximum.accumulate(np.isneginf(gam), axis=-1)] = NEG_INFINITY
    return -np.sort(-gam, axis=-1)


def periodic_grouping(values, grouping_gap: float, target: Sequence[int] | None) -> tuple[int, ...]:
    """Natural grouping, or the target one after checking its boundaries are separated."""
    if target is None:
        return group_exponents(values, grouping_gap)
    target = tuple(int(m) for m in target)
    if sum(target) != len(values):
        raise ValidationError("target multiplicities do not match the dimension")
    for end in itertools.accumulate(target[:-1]):
        a, b = values[end - 1], values[end]
        if b != NEG_INFINITY and a - b < grouping_gap:
            raise ModulusTie(
                f"exponents {a:.6g} and {b:.6g} are within {grouping_gap:g} but fall in different target blocks"
            )
    return target


@dataclass
class PeriodicFlags:
    """Flags at one orbit point ``q = f^t p``."""

    t: int
    spaces: list[Subspace]
    fast: list[Subspace]
    slow: list[Subspace]

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "spaces": [basis_to_json(E) for E in self.spaces],
            "fast_flag": [basis_to_json(E) for E in self.fast],
            "slow_flag": [basis_to_json(E) for E in self.slow],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PeriodicFlags":
        return cls(
            int(data["t"]),
            [basis_from_json(b) for b in data["spaces"]],
            [basis_from_json(b) for b in data["fast_flag"]],
            [basis_from_json(b) for b in data["slow_flag"]],
        )


@dataclass
class PeriodicData:
    orbit: PeriodicOrbit
    spectrum: LyapunovSpectrum
    flags: list[PeriodicFlags] = field(default_factory=list)

    @property
    def exponents(self) -> tuple[float, ...]:
        return self.spectrum.values

    def to_dict(self) -> dict:
        return {
            "orbit": self.orbit.text(),
            "word": list(self.orbit.word),
            "spectrum": self.spectrum.to_dict(),
            "flags": [f.to_dict() for f in self.flags],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PeriodicData":
        return cls(
            PeriodicOrbit(tuple(data["word"])),
            LyapunovSpectrum.from_dict(data["spectrum"]),
            [PeriodicFlags.from_dict(f) for f in data["flags"]],
        )


def _invariant_subspace(B: np.ndarray, select, expected: int) -> Subspace:
    d = B.shape[0]
    if expected == 0:
        return Subspace.zero(d)
    if expected == d:
        return Subspace.full(d)
    _, Z, sdim = scipy.linalg.schur(B, output="real", sort=select)
    if sdim != expected:
        raise ModulusTie(f"invariant subspace has dimension {sdim}, expected {expected}")
    return Subspace(Z[:, :sdim])


def periodic_flags(B: np.ndarray, spectrum: LyapunovSpectrum, t: int = 0) -> PeriodicFlags:
    """Modulus-group invariant subspaces of the cyclic product ``B`` at one orbit point."""
    d = B.shape[0]
    moduli = np.sort(np.abs(np.linalg.eigvals(B)))[::-1]
    ends = spectrum.partial_dims
    n_zero = sum(1 for v in spectrum.values if v == NEG_INFINITY)
    if n_zero:
        moduli[d - n_zero :] = 0.0
    fast, slow = [], []
    for di in ends[:-1]:
        hi, lo = moduli[di - 1], moduli[di]
        cut = math.sqrt(hi * lo) if lo > 0 else hi / 2
        fast.append(_invariant_subspace(B, lambda re, im, c=cut: re * re + im * im > c * c, di))
        slow.append(_invariant_subspace(B, lambda re, im, c=cut: re * re + im * im < c * c, d - di))
    spaces = splitting_from_flags(fast, slow, spectrum, 1e-8)
    return PeriodicFlags(t, spaces, fast, slow)


def periodic_data(
    gen: CocycleGenerator,
    p: PeriodicOrbit,
    grouping_gap: float = GROUPING_GAP,
    target: Sequence[int] | None = None,
    rotations: Sequence[int] | None = None,
) -> PeriodicData:
    """Exponents and flags of the orbit; flags recomputed at each orbit point."""
    if gen.spec is not None:
        p.check_admissible(gen.spec)
    n = p.n
    mats = cyclic_matrices(gen, np.array([p.word]))[0]
    gam = periodic_exponents_batch(mats[None])[0]
    mults = periodic_grouping(gam.tolist(), grouping_gap, target)
    spectrum = LyapunovSpectrum(tuple(gam.tolist()), mults, None, grouping_gap)
    flags = []
    for t in range(n) if rotations is None else rotations:
        B, _ = log_scaled_product(np.roll(mats, -t, axis=0))
        flags.append(periodic_flags(B, spectrum, t))
    return PeriodicData(p, spectrum, flags)


def periodic_product(gen: CocycleGenerator, p: PeriodicOrbit, t: int = 0) -> np.ndarray:
    return cocycle_product(gen, p.point(t), p.n)
