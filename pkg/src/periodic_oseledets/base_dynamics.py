"""Symbolic base dynamics: subshifts of finite type and their measures.

Points are eventually periodic two-sided sequences, so every coordinate is
available exactly and periodic points are represented without error.
Words are tuples of integer symbols ``0 .. alphabet_size - 1``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import (
    DeadSymbol,
    EnumerationOverflow,
    InadmissibleWord,
    InadmissibleWrap,
    NotClose,
    ValidationError,
)

Word = tuple[int, ...]

DEFAULT_ENUMERATION_CAP = 1 << 20
LN2 = math.log(2.0)


def _as_word(word: Sequence[int]) -> Word:
    return tuple(int(s) for s in word)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SubshiftSpec:
    """Transition graph of a subshift of finite type.

    ``transitions[a, b]`` is true iff symbol ``b`` may follow ``a``.
    Build instances with :func:`validate_subshift`, which rejects dead
    symbols and computes the irreducibility flag.
    """

    transitions: np.ndarray
    irreducible: bool

    @property
    def alphabet_size(self) -> int:
        return self.transitions.shape[0]

    @classmethod
    def full_shift(cls, k: int = 2) -> "SubshiftSpec":
        return validate_subshift(np.ones((k, k), dtype=bool))

    @classmethod
    def golden_mean(cls) -> "SubshiftSpec":
        return validate_subshift([[1, 1], [1, 0]])

    def is_full(self) -> bool:
        return bool(self.transitions.all())

    def allowed(self, a: int, b: int) -> bool:
        return bool(self.transitions[a, b])

    def is_admissible(self, word: Sequence[int], cyclic: bool = False) -> bool:
        word = _as_word(word)
        k = self.alphabet_size
        if any(s < 0 or s >= k for s in word):
            return False
        if any(not self.transitions[a, b] for a, b in zip(word, word[1:])):
            return False
        if cyclic and word and not self.transitions[word[-1], word[0]]:
            return False
        return True

    def admissible_words(self, length: int) -> list[Word]:
        """All admissible (non-cyclic) words of ``length``, in lexicographic order."""
        return [tuple(row) for row in _word_array(self, length, cyclic=False)]

    def shortest_cycle(self, symbol: int) -> Word:
        """Shortest cyclic word starting with ``symbol`` (breadth-first search)."""
        k = self.alphabet_size
        parent = {symbol: None}
        queue = deque([symbol])
        while queue:
            a = queue.popleft()
            for b in range(k):
                if not self.transitions[a, b]:
                    continue
                if b == symbol:
                    path = [a]
                    while parent[path[-1]] is not None:
                        path.append(parent[path[-1]])
                    return tuple(reversed(path))
                if b not in parent:
                    parent[b] = a
                    queue.append(b)
        raise ValidationError(f"symbol {symbol} lies on no cycle")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SubshiftSpec) and np.array_equal(
            self.transitions, other.transitions
        )

    def __hash__(self) -> int:
        return hash(self.transitions.tobytes())


def validate_subshift(transitions) -> SubshiftSpec:
    t = np.asarray(transitions)
    if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] < 1:
        raise ValidationError(f"transition matrix must be square and nonempty, got shape {t.shape}")
    t = t.astype(bool)
    for a in range(t.shape[0]):
        if not t[a].any():
            raise DeadSymbol(f"symbol {a} has no successor")
        if not t[:, a].any():
            raise DeadSymbol(f"symbol {a} has no predecessor")
    reach = t.copy()
    # transitive closure by repeated squaring of the boolean reachability matrix
    for _ in range(max(1, int(math.ceil(math.log2(t.shape[0]))) + 1)):
        reach = reach | ((reach.astype(np.int64) @ reach.astype(np.int64)) > 0)
    return SubshiftSpec(_frozen(t), bool(reach.all()))


def _word_array(spec: SubshiftSpec, length: int, cyclic: bool) -> np.ndarray:
    """Admissible words as rows of an int array, lexicographically sorted."""
    t = spec.transitions
    k = spec.alphabet_size
    words = np.arange(k, dtype=np.int64)[:, None]
    for _ in range(length - 1):
        cand = np.repeat(words, k, axis=0)
        nxt = np.tile(np.arange(k, dtype=np.int64), words.shape[0])
        keep = t[cand[:, -1], nxt]
        words = np.concatenate([cand[keep], nxt[keep, None]], axis=1)
    if cyclic:
        words = words[t[words[:, -1], words[:, 0]]]
    return words


def periodic_count(spec: SubshiftSpec, n: int) -> int:
    """trace(T^n) in exact integer arithmetic."""
    t = [[int(v) for v in row] for row in spec.transitions]
    k = len(t)
    result = [[int(i == j) for j in range(k)] for i in range(k)]
    base = t
    e = n
    while e:
        if e & 1:
            result = _int_matmul(result, base)
        base = _int_matmul(base, base)
        e >>= 1
    return sum(result[i][i] for i in range(k))


def _int_matmul(a, b):
    k = len(a)
    return [[sum(a[i][m] * b[m][j] for m in range(k)) for j in range(k)] for i in range(k)]


@dataclass(frozen=True)
class ShiftPoint:
    """Eventually periodic bi-infinite sequence.

    The raw sequence is ``... left left | core | right right ...`` with the
    core occupying raw positions ``0 .. len(core) - 1``; coordinate ``x_j``
    is the raw symbol at position ``j + origin``. Shifting only moves
    ``origin``.
    """

    left_period: Word
    core: Word
    right_period: Word
    origin: int = 0

    def __post_init__(self):
        object.__setattr__(self, "left_period", _as_word(self.left_period))
        object.__setattr__(self, "core", _as_word(self.core))
        object.__setattr__(self, "right_period", _as_word(self.right_period))
        if not self.left_period or not self.right_period:
            raise ValidationError("periodic tails must be nonempty words")

    @classmethod
    def periodic(cls, word: Sequence[int], t: int = 0) -> "ShiftPoint":
        """The point ``f^t`` of the periodic sequence ``word^infinity``."""
        word = _as_word(word)
        return cls(word, (), word, t)

    def to_dict(self) -> dict:
        return {
            "left_period": list(self.left_period),
            "core": list(self.core),
            "right_period": list(self.right_period),
            "origin": self.origin,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ShiftPoint":
        return cls(
            tuple(data["left_period"]), tuple(data["core"]), tuple(data["right_period"]), int(data["origin"])
        )

    @classmethod
    def constant(cls, symbol: int) -> "ShiftPoint":
        return cls.periodic((symbol,))

    def raw(self, i: int) -> int:
        n = len(self.core)
        if 0 <= i < n:
            return self.core[i]
        if i >= n:
            return self.right_period[(i - n) % len(self.right_period)]
        return self.left_period[i % len(self.left_period)]

    def __getitem__(self, j: int) -> int:
        return self.raw(j + self.origin)

    def window(self, start: int, stop: int) -> np.ndarray:
        """Coordinates ``x_start .. x_{stop-1}`` as an int array."""
        i = np.arange(start, stop, dtype=np.int64) + self.origin
        n = len(self.core)
        out = np.empty(i.shape, dtype=np.int64)
        left = np.asarray(self.left_period, dtype=np.int64)
        right = np.asarray(self.right_period, dtype=np.int64)
        lo = i < 0
        hi = i >= n
        mid = ~(lo | hi)
        out[lo] = left[i[lo] % len(left)]
        out[hi] = right[(i[hi] - n) % len(right)]
        if n:
            out[mid] = np.asarray(self.core, dtype=np.int64)[i[mid]]
        return out

    def shift(self, k: int = 1) -> "ShiftPoint":
        """``f^k`` of this point; negative ``k`` applies the inverse shift."""
        out = object.__new__(ShiftPoint)
        for name in ("left_period", "core", "right_period"):
            object.__setattr__(out, name, getattr(self, name))
        object.__setattr__(out, "origin", self.origin + int(k))
        return out

    def check_admissible(self, spec: SubshiftSpec) -> None:
        seq = self.left_period + self.core + self.right_period
        if not spec.is_admissible(seq):
            raise InadmissibleWord(f"point {self} has a forbidden transition")
        for tail in (self.left_period, self.right_period):
            if not spec.is_admissible(tail, cyclic=True):
                raise InadmissibleWord(f"periodic tail {tail} is not cyclically admissible")

    def _decidable_radius(self, other: "ShiftPoint") -> int:
        lo = min(-self.origin, -other.origin)
        hi = max(len(self.core) - self.origin, len(other.core) - other.origin)
        period = math.lcm(
            len(self.left_period), len(other.left_period),
            len(self.right_period), len(other.right_period),
        )
        return max(abs(lo), abs(hi)) + period

    def same_as(self, other: "ShiftPoint") -> bool:
        return shift_distance(self, other) == 0.0


def shift_distance(x: ShiftPoint, y: ShiftPoint) -> float:
    """``2**-k`` with ``k`` the smallest ``|j|`` such that ``x_j != y_j``.

    Beyond the radius returned by ``_decidable_radius`` both sequences are
    jointly periodic, so a difference anywhere shows up inside it.
    """
    w = x._decidable_radius(y)
    idx = np.arange(-w, w + 1)
    diff = x.window(-w, w + 1) != y.window(-w, w + 1)
    if not diff.any():
        return 0.0
    k = int(np.abs(idx[diff]).min())
    return math.ldexp(1.0, -k)


@dataclass(frozen=True)
class PeriodicOrbit:
    """Cyclic word ``word`` of length ``n``; n need not be the least period."""

    word: Word

    def __post_init__(self):
        object.__setattr__(self, "word", _as_word(self.word))
        if not self.word:
            raise ValidationError("periodic word must be nonempty")

    @property
    def n(self) -> int:
        return len(self.word)

    def point(self, t: int = 0) -> ShiftPoint:
        return ShiftPoint.periodic(self.word, t)

    def rotation(self, t: int) -> "PeriodicOrbit":
        t %= self.n
        return PeriodicOrbit(self.word[t:] + self.word[:t])

    def canonical(self) -> "PeriodicOrbit":
        return min((self.rotation(t) for t in range(self.n)), key=lambda o: o.word)

    def text(self) -> str:
        return word_text(self.word)

    def check_admissible(self, spec: SubshiftSpec) -> None:
        if not spec.is_admissible(self.word, cyclic=True):
            raise InadmissibleWord(f"cyclic word {self.text()} is not admissible")


def word_text(word: Sequence[int]) -> str:
    word = _as_word(word)
    if all(s < 10 for s in word):
        return "".join(str(s) for s in word)
    return ",".join(str(s) for s in word)


def parse_word(text: str) -> Word:
    text = text.strip()
    if not text:
        return ()
    parts = text.split(",") if "," in text else list(text)
    try:
        word = tuple(int(s) for s in parts)
    except ValueError as exc:
        raise ValidationError(f"cannot parse word {text!r}: symbols are digits or comma-separated integers") from exc
    if any(s < 0 for s in word):
        raise ValidationError(f"word {text!r} has a negative symbol")
    return word


def enumerate_periodic(
    spec: SubshiftSpec,
    n: int,
    dedupe: bool = False,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> list[PeriodicOrbit]:
    """All fixed points of ``f^n`` as cyclic words, sorted lexicographically.

    With ``dedupe`` only the lexicographically smallest rotation of each
    orbit is kept.
    """
    return [PeriodicOrbit(tuple(row)) for row in periodic_word_array(spec, n, dedupe, cap)]


def periodic_word_array(
    spec: SubshiftSpec,
    n: int,
    dedupe: bool = False,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> np.ndarray:
    if n < 1:
        raise ValidationError("period must be at least 1")
    count = periodic_count(spec, n)
    if count > cap:
        raise EnumerationOverflow(
            f"{count} periodic points of period {n} exceed the enumeration cap {cap}"
        )
    words = _word_array(spec, n, cyclic=True)
    if dedupe and len(words):
        keep = np.ones(len(words), dtype=bool)
        for t in range(1, n):
            rot = np.roll(words, -t, axis=1)
            keep &= ~_lex_less(rot, words)
        words = words[keep]
    return words


def _lex_less(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise strict lexicographic comparison of equal-shape int arrays."""
    diff = a != b
    first = np.argmax(diff, axis=1)
    rows = np.arange(len(a))
    return diff[rows, first] & (a[rows, first] < b[rows, first])


@dataclass(frozen=True)
class MarkovMeasure:
    """Stationary Markov measure on a subshift.

    Bernoulli measures are the special case of a full shift with equal rows.
    """

    spec: SubshiftSpec
    stochastic: np.ndarray
    stationary: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.stochastic, dtype=float)
        pi = np.asarray(self.stationary, dtype=float)
        k = self.spec.alphabet_size
        if p.shape != (k, k) or pi.shape != (k,):
            raise ValidationError("measure dimensions do not match the alphabet")
        if np.any(p < 0) or np.any((p > 0) & ~self.spec.transitions):
            raise ValidationError("stochastic matrix charges a forbidden transition")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-12:
            raise ValidationError("stochastic matrix rows must sum to 1")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12 or np.max(np.abs(pi @ p - pi)) > 1e-12:
            raise ValidationError("stationary vector is not invariant")
        object.__setattr__(self, "stochastic", _frozen(p))
        object.__setattr__(self, "stationary", _frozen(pi))

    @classmethod
    def bernoulli(cls, probabilities: Sequence[float]) -> "MarkovMeasure":
        prob = np.asarray(probabilities, dtype=float)
        spec = SubshiftSpec.full_shift(len(prob))
        return cls(spec, np.tile(prob, (len(prob), 1)), prob)

    @classmethod
    def from_stochastic(cls, spec: SubshiftSpec, stochastic) -> "MarkovMeasure":
        p = np.asarray(stochastic, dtype=float)
        return cls(spec, p, stationary_distribution(p))

    def reversed(self) -> "MarkovMeasure":
        """Time reversal: the law of ``(x_{-j})`` under this measure."""
        pi, p = self.stationary, self.stochastic
        safe = np.where(pi > 0, pi, 1.0)
        rev = (p.T * pi[None, :]) / safe[:, None]
        rev[pi == 0] = 0.0
        spec = validate_subshift(self.spec.transitions.T)
        for a in np.flatnonzero(pi == 0):
            # unreachable symbol; any admissible row would do
            rev[a, int(np.flatnonzero(spec.transitions[a])[0])] = 1.0
        return MarkovMeasure(spec, rev, pi)


def stationary_distribution(p: np.ndarray) -> np.ndarray:
    k = p.shape[0]
    lhs = np.vstack([p.T - np.eye(k), np.ones((1, k))])
    rhs = np.zeros(k + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    # one power step polishes lstsq rounding down to the 1e-12 invariance check
    pi = pi @ p
    return pi / pi.sum()


def sample_point(measure: MarkovMeasure, horizon: int, seed: int) -> ShiftPoint:
    """Draw a measure-typical point on the window ``[-horizon, horizon]``.

    ``x_{-horizon}`` is drawn from the stationary vector and the chain runs
    forward. Outside the window the point continues along the shortest
    cycle through the boundary symbol, which keeps every junction admissible.
    """
    rng = np.random.default_rng(seed)
    size = 2 * horizon + 1
    cum = np.cumsum(measure.stochastic, axis=1)
    cum[:, -1] = 1.0
    pi_cum = np.cumsum(measure.stationary)
    pi_cum[-1] = 1.0
    u = rng.random(size)
    seq = np.empty(size, dtype=np.int64)
    seq[0] = np.searchsorted(pi_cum, u[0], side="right")
    if np.all(measure.stochastic == measure.stochastic[0]):
        # i.i.d. rows: same draws as the sequential loop, vectorized
        seq[1:] = np.searchsorted(cum[0], u[1:], side="right")
    else:
        rows = [cum[a] for a in range(measure.spec.alphabet_size)]
        for i in range(1, size):
            seq[i] = np.searchsorted(rows[seq[i - 1]], u[i], side="right")
    spec = measure.spec
    left = spec.shortest_cycle(int(seq[0]))
    right = spec.shortest_cycle(int(seq[-1]))
    return ShiftPoint(left, tuple(seq[:-1].tolist()), right, horizon)


def sample_seeds(seed: int, count: int) -> list[int]:
    """Independent child seeds, fixed by ``seed`` and the sample index."""
    state = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
    return [int(s) for s in state]


def sample_points(measure: MarkovMeasure, horizon: int, count: int, seed: int) -> list[ShiftPoint]:
    return [sample_point(measure, horizon, s) for s in sample_seeds(seed, count)]


Source = Union[MarkovMeasure, PeriodicOrbit]


def cylinder_frequency(source: Source, word: Sequence[int]) -> float:
    word = _as_word(word)
    if isinstance(source, MarkovMeasure):
        if not word:
            return 1.0
        value = float(source.stationary[word[0]])
        for a, b in zip(word, word[1:]):
            value *= float(source.stochastic[a, b])
        return value
    n = source.n
    cyc = source.word
    hits = sum(
        all(cyc[(t + i) % n] == s for i, s in enumerate(word)) for t in range(n)
    )
    return hits / n


def cylinder_table(source: Source, spec: SubshiftSpec, length: int) -> np.ndarray:
    """Frequencies of all admissible words of ``length`` (lexicographic order)."""
    words = _word_array(spec, length, cyclic=False)
    if isinstance(source, MarkovMeasure):
        value = source.stationary[words[:, 0]].copy()
        for i in range(length - 1):
            value *= source.stochastic[words[:, i], words[:, i + 1]]
        return value
    return orbit_cylinder_tables(np.asarray([source.word]), spec, length)[0]


def orbit_cylinder_tables(words: np.ndarray, spec: SubshiftSpec, length: int) -> np.ndarray:
    """Cyclic cylinder frequencies for a batch of periodic words.

    Returns an array ``(len(words), |W_L|)`` aligned with the lexicographic
    list of admissible words of ``length``.
    """
    k = spec.alphabet_size
    count, n = words.shape
    codes = np.zeros((count, n), dtype=np.int64)
    for i in range(length):
        codes = codes * k + np.roll(words, -i, axis=1)
    hist = np.zeros((count, k**length))
    rows = np.repeat(np.arange(count), n)
    np.add.at(hist, (rows, codes.ravel()), 1.0 / n)
    admissible = _word_array(spec, length, cyclic=False)
    acodes = np.zeros(len(admissible), dtype=np.int64)
    for i in range(length):
        acodes = acodes * k + admissible[:, i]
    return hist[:, acodes]


def _spec_of(*sources: Source, spec: SubshiftSpec | None) -> SubshiftSpec:
    if spec is not None:
        return spec
    for s in sources:
        if isinstance(s, MarkovMeasure):
            return s.spec
    k = 1 + max(max(s.word) for s in sources)
    return SubshiftSpec.full_shift(k)


def weak_star_distance(
    m1: Source,
    m2: Source,
    depth: int = 4,
    spec: SubshiftSpec | None = None,
) -> float:
    """Depth-weighted mean absolute discrepancy of cylinder frequencies."""
    spec = _spec_of(m1, m2, spec=spec)
    total = 0.0
    for length in range(1, depth + 1):
        a = cylinder_table(m1, spec, length)
        b = cylinder_table(m2, spec, length)
        total += math.ldexp(float(np.mean(np.abs(a - b))), -length)
    return total


@dataclass(frozen=True)
class ClosingParams:
    C1: float = 1.0
    theta: float = LN2
    eps0: float = 0.5

    def __post_init__(self):
        if min(self.C1, self.theta, self.eps0) <= 0:
            raise ValidationError("closing parameters must be positive")


@dataclass(frozen=True)
class ClosingCheck:
    j: int
    distance: float
    bound: float
    holds: bool


def closing_checks(
    x: ShiftPoint, p: PeriodicOrbit, n: int, params: ClosingParams
) -> list[ClosingCheck]:
    """Evaluate the shadowing inequality at every ``j = 0 .. n``.

    The comparison runs on base-2 logarithms: all distances are powers of
    two, so with ``C1`` a power of two and ``theta = ln 2`` the test is an
    exact integer comparison.
    """
    ret = shift_distance(x.shift(n), x)
    point = p.point()
    rate = params.theta / LN2
    log_c1 = math.log2(params.C1)
    # d(f^j x, f^j p) = 2^-k_j with k_j the distance from j to the nearest
    # coordinate where x and p differ; inside this window every difference
    # (or a periodic copy of it closer to 0..n) is present
    r = x._decidable_radius(point)
    lo, hi = -r, n + r + 1
    where = np.flatnonzero(x.window(lo, hi) != point.window(lo, hi)) + lo
    js = np.arange(n + 1)
    if where.size:
        i = np.searchsorted(where, js)
        right = np.abs(where[np.minimum(i, where.size - 1)] - js)
        left = np.abs(js - where[np.maximum(i - 1, 0)])
        nearest = np.minimum(left, right)
    out = []
    for j in range(n + 1):
        dj = math.ldexp(1.0, -int(nearest[j])) if where.size else 0.0
        expo = log_c1 - rate * min(j, n - j)
        bound = params.C1 * math.exp(-params.theta * min(j, n - j)) * ret
        if dj == 0.0:
            holds = True
        elif ret == 0.0:
            holds = False
        else:
            lhs = math.log2(dj)
            rhs = expo + math.log2(ret)
            holds = lhs <= rhs + 1e-12 * max(1.0, abs(rhs))
        out.append(ClosingCheck(j, dj, bound, holds))
    return out


def anosov_close(
    x: ShiftPoint,
    n: int,
    params: ClosingParams = ClosingParams(),
    spec: SubshiftSpec | None = None,
) -> PeriodicOrbit:
    """Periodize ``x_0 .. x_{n-1}`` after checking the near-return condition."""
    if n < 1:
        raise ValidationError("closing time must be positive")
    ret = shift_distance(x.shift(n), x)
    if ret >= params.eps0:
        raise NotClose(f"d(f^{n} x, x) = {ret} is not below eps0 = {params.eps0}")
    word = tuple(int(s) for s in x.window(0, n))
    if spec is not None and not spec.is_admissible(word, cyclic=True):
        raise InadmissibleWrap(f"periodization {word_text(word)} violates a transition")
    p = PeriodicOrbit(word)
    failed = [c.j for c in closing_checks(x, p, n, params) if not c.holds]
    if failed:
        raise AssertionError(f"closing inequality failed at j = {failed}")
    return p
