"""Small dense linear algebra for matrix cocycles.

Everything here works for ambient dimension ``d <= 8``: generators and their
products, subspaces with orthonormal bases, principal-angle distances,
exterior powers in the lexicographic wedge basis, Plücker coordinates,
orthogonal complements, intersections and cones.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .base_dynamics import ShiftPoint, SubshiftSpec, parse_word
from .errors import FullSpace, InadmissibleWord, ValidationError, ZeroSubspace, ZeroVector

ORTHONORMAL_TOL = 1e-10
RENORMALIZE_EVERY = 16


# ---------------------------------------------------------------------------
# subspaces


@dataclass(frozen=True, eq=False)
class Subspace:
    """Subspace of R^d stored by a column-orthonormal ``d x k`` basis.

    The basis is re-orthonormalized on construction (QR with a positive
    diagonal, so an already orthonormal basis is returned unchanged up to
    rounding). ``k = 0`` is the zero subspace.
    """

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if b.ndim != 2:
            raise ValidationError("subspace basis must be a matrix")
        if b.shape[1]:
            q, r = np.linalg.qr(b)
            diag = np.diag(r)
            if np.min(np.abs(diag)) <= 1e-12 * max(1.0, np.max(np.abs(diag))):
                raise ValidationError("subspace basis columns are linearly dependent")
            b = q * np.sign(diag)[None, :]
            if np.max(np.abs(b.T @ b - np.eye(b.shape[1]))) > ORTHONORMAL_TOL:
                raise ValidationError("could not orthonormalize subspace basis")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @classmethod
    def span(cls, vectors, rtol: float = 1e-10) -> "Subspace":
        """Column span of ``vectors`` with numerical rank cutoff ``rtol``."""
        m = np.asarray(vectors, dtype=float)
        if m.ndim == 1:
            m = m[:, None]
        if m.size == 0 or not np.any(m):
            return cls.zero(m.shape[0])
        u, s, _ = np.linalg.svd(m, full_matrices=False)
        rank = int(np.sum(s > rtol * s[0]))
        return cls(u[:, :rank])

    @classmethod
    def from_orthonormal(cls, basis) -> "Subspace":
        """Adopt an orthonormal basis as is (used when reading stored bases)."""
        b = np.array(basis, dtype=float)
        if b.ndim != 2 or np.max(np.abs(b.T @ b - np.eye(b.shape[1])), initial=0.0) > ORTHONORMAL_TOL:
            return cls(b)
        b.setflags(write=False)
        obj = object.__new__(cls)
        object.__setattr__(obj, "basis", b)
        return obj

    @classmethod
    def zero(cls, d: int) -> "Subspace":
        return cls(np.zeros((d, 0)))

    @classmethod
    def full(cls, d: int) -> "Subspace":
        return cls(np.eye(d))

    @classmethod
    def coordinate(cls, d: int, *indices: int) -> "Subspace":
        return cls(np.eye(d)[:, list(indices)])

    @property
    def ambient(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def project(self, w: np.ndarray) -> np.ndarray:
        return self.basis @ (self.basis.T @ w)

    def image(self, matrix: np.ndarray, rtol: float = 1e-12) -> "Subspace":
        """``matrix`` applied to this subspace (may drop dimension).

        Directions shrunk below ``rtol * ||matrix||`` count as annihilated.
        """
        if self.dim == 0:
            return Subspace.zero(matrix.shape[0])
        m = matrix @ self.basis
        scale = float(np.linalg.norm(matrix, 2))
        if scale == 0.0:
            return Subspace.zero(matrix.shape[0])
        u, sv, _ = np.linalg.svd(m, full_matrices=False)
        return Subspace(u[:, : int(np.sum(sv > rtol * scale))])

    def __repr__(self) -> str:
        return f"Subspace(dim={self.dim}, ambient={self.ambient})"


def principal_sines(E: Subspace, F: Subspace) -> np.ndarray:
    """Sines of the principal angles from ``E`` into ``F``, ascending.

    Computed from the residual ``(I - P_F) B_E`` so small angles keep their
    relative accuracy.
    """
    if E.dim == 0:
        return np.zeros(0)
    residual = E.basis - F.basis @ (F.basis.T @ E.basis)
    s = np.linalg.svd(residual, compute_uv=False)
    return np.clip(np.sort(s), 0.0, 1.0)


def subspace_distance_angle(E: Subspace, F: Subspace) -> tuple[float, float]:
    """Sup-projection distance and the angle ``asin(dist)``."""
    if E.ambient != F.ambient:
        raise ValidationError("subspaces live in different ambient spaces")
    if E.dim == 0 or F.dim == 0:
        raise ZeroSubspace("distance to the zero subspace is undefined")
    if E.dim != F.dim:
        # the larger space has a unit vector orthogonal to the smaller one
        return 1.0, math.pi / 2
    # both directed suprema, so the result is symmetric to the last bit
    dist = float(min(1.0, max(principal_sines(E, F)[-1], principal_sines(F, E)[-1])))
    return dist, math.asin(dist)


def subspace_angle(E: Subspace, F: Subspace) -> float:
    return subspace_distance_angle(E, F)[1]


def directed_distance(E: Subspace, F: Subspace) -> float:
    """``sup_{v in E} dist(v/|v|, F)``; zero when ``E`` is the zero subspace."""
    if E.dim == 0:
        return 0.0
    if F.dim == 0:
        return 1.0
    return float(principal_sines(E, F)[-1])


def orthogonal_complement(V: Subspace) -> Subspace:
    if V.dim == V.ambient:
        raise FullSpace("the complement of the whole space is the zero subspace")
    if V.dim == 0:
        return Subspace.full(V.ambient)
    return Subspace(scipy.linalg.null_space(V.basis.T))


def intersect_subspaces(E: Subspace, F: Subspace, tol: float = 1e-3) -> Subspace:
    """Span of the principal directions of ``E`` whose angle to ``F`` has sine <= tol.

    Equivalent to keeping singular values of ``B_E^T B_F`` that are at least
    ``cos(asin(tol))``; sines are evaluated directly so that ``tol = 0``
    still recovers exact intersections (rounding floor 1e-10).
    """
    if E.ambient != F.ambient:
        raise ValidationError("subspaces live in different ambient spaces")
    d = E.ambient
    if E.dim == 0 or F.dim == 0:
        return Subspace.zero(d)
    u, _, _ = np.linalg.svd(E.basis.T @ F.basis, full_matrices=True)
    directions = E.basis @ u
    residual = directions - F.basis @ (F.basis.T @ directions)
    sines = np.linalg.norm(residual, axis=0)
    keep = sines <= max(tol, 1e-10)
    if not keep.any():
        return Subspace.zero(d)
    return Subspace(directions[:, keep])


def subspace_sum(*spaces: Subspace) -> Subspace:
    d = spaces[0].ambient
    return Subspace.span(np.hstack([s.basis for s in spaces]) if spaces else np.zeros((d, 0)))


@dataclass(frozen=True)
class Cone:
    axis: Subspace
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValidationError("cone radius must be positive")


def cone_contains(C: Cone, w) -> bool:
    w = np.asarray(w, dtype=float)
    norm = np.linalg.norm(w)
    if norm == 0:
        raise ZeroVector("cone membership is undefined for the zero vector")
    u = w / norm
    return bool(np.linalg.norm(u - C.axis.project(u)) < C.radius)


# ---------------------------------------------------------------------------
# exterior powers


@lru_cache(maxsize=None)
def wedge_basis(d: int, j: int) -> tuple[tuple[int, ...], ...]:
    """Index tuples of the basis ``e_I``, lexicographically ordered."""
    return tuple(itertools.combinations(range(d), j))


def exterior_power(L, j: int) -> np.ndarray:
    """Matrix of ``L`` acting on the j-th exterior power; entries are j x j minors.

    Accepts a stack ``(..., d, d)`` and returns ``(..., C(d,j), C(d,j))``.
    """
    L = np.asarray(L, dtype=float)
    d = L.shape[-1]
    if not 1 <= j <= d:
        raise ValidationError(f"exterior degree {j} out of range 1..{d}")
    if j == 1:
        return L.copy()
    idx = np.asarray(wedge_basis(d, j))
    sub = L[..., idx[:, None, :, None], idx[None, :, None, :]]
    return np.linalg.det(sub)


def plucker(V: Subspace, sign_fix: bool = True) -> np.ndarray:
    """Normalized wedge of the basis of ``V`` (Plücker coordinates).

    With ``sign_fix`` the first nonzero coordinate is made positive.
    """
    if V.dim == 0:
        raise ZeroSubspace("the zero subspace has no Plücker vector")
    idx = np.asarray(wedge_basis(V.ambient, V.dim))
    coords = np.linalg.det(V.basis[idx, :])
    coords = coords / np.linalg.norm(coords)
    if sign_fix:
        coords = fix_sign(coords)
    return coords


def fix_sign(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > tol)
    if len(nz) and v[nz[0]] < 0:
        return -v
    return v


def plucker_to_subspace(omega, d: int, j: int) -> Subspace:
    """Recover the subspace of a (numerically) decomposable j-vector.

    For every ``(j-1)``-subset ``J`` the contraction with ``e_J`` is a vector
    of the subspace; the top ``j`` left singular vectors of their span are
    returned.
    """
    omega = np.asarray(omega, dtype=float)
    if j == d:
        return Subspace.full(d)
    if j == 1:
        return Subspace(omega / np.linalg.norm(omega))
    position = {I: n for n, I in enumerate(wedge_basis(d, j))}
    columns = []
    for J in wedge_basis(d, j - 1):
        v = np.zeros(d)
        for i in range(d):
            if i in J:
                continue
            sign = -1.0 if sum(1 for a in J if a < i) % 2 else 1.0
            v[i] = sign * omega[position[tuple(sorted(J + (i,)))]]
        columns.append(v)
    u, _, _ = np.linalg.svd(np.array(columns).T, full_matrices=False)
    return Subspace(u[:, :j])


def projective_sine(u: np.ndarray, v: np.ndarray) -> float:
    """Sine of the angle between the lines spanned by ``u`` and ``v``."""
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    return float(np.linalg.norm(u - v * (v @ u)))


def plucker_distance(E: Subspace, F: Subspace) -> float:
    """Grassmannian distance pulled back through the Plücker embedding."""
    return projective_sine(plucker(E, sign_fix=False), plucker(F, sign_fix=False))


# ---------------------------------------------------------------------------
# generators


class CocycleGenerator:
    """Matrix-valued map over a shift.

    ``step`` is the exponent of the base map: ``+1`` for ``f``, ``-1`` for a
    cocycle running over ``f^{-1}`` (the adjoint). ``reach`` bounds how far
    from ``x_0`` an evaluation reads. Subclasses implement
    :meth:`evaluate_offsets`, returning ``A(f^t x)`` for each integer ``t``.
    """

    dimension: int
    step: int = 1
    reach: int = 0
    spec: SubshiftSpec | None = None

    def evaluate_offsets(self, x: ShiftPoint, offsets) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, x: ShiftPoint) -> np.ndarray:
        return self.evaluate_offsets(x, np.zeros(1, dtype=np.int64))[0]

    def along(self, x: ShiftPoint, n: int, start: int = 0) -> np.ndarray:
        """Matrices at ``g^start x, ..., g^{start+n-1} x`` for the base map ``g``."""
        t = self.step * (start + np.arange(n, dtype=np.int64))
        return self.evaluate_offsets(x, t)

    def past_window(self, x: ShiftPoint, n: int) -> np.ndarray:
        """Matrices at ``g^{-n} x, ..., g^{-1} x``; their product is ``A^n(g^{-n} x)``."""
        return self.along(x, n, start=-n)

    def adjoint(self) -> "AdjointGenerator":
        return AdjointGenerator(self)


def _window_codes(x: ShiftPoint, offsets: np.ndarray, lo: int, hi: int, k: int) -> np.ndarray:
    """Integer code of ``x_{t-lo} .. x_{t+hi}`` for every ``t`` in ``offsets``."""
    start = int(offsets.min()) - lo
    stop = int(offsets.max()) + hi + 1
    coords = x.window(start, stop)
    if coords.size and (coords.min() < 0 or coords.max() >= k):
        raise InadmissibleWord(f"point uses symbol {int(coords.max())} outside the alphabet 0..{k - 1}")
    codes = np.zeros(len(offsets), dtype=np.int64)
    base = offsets - start - lo
    for i in range(lo + hi + 1):
        codes = codes * k + coords[base + i]
    return codes


class LocallyConstant(CocycleGenerator):
    """Generator reading the word ``x_{-floor(m/2)} .. x_{ceil(m/2)-1}``."""

    def __init__(self, spec: SubshiftSpec, depth: int, table: Mapping):
        if depth < 1:
            raise ValidationError("depth must be at least 1")
        self.spec = spec
        self.depth = depth
        self.lo = depth // 2
        self.hi = (depth + 1) // 2 - 1
        self.reach = max(self.lo, self.hi)
        k = spec.alphabet_size
        entries = {}
        for key, value in table.items():
            word = parse_word(key) if isinstance(key, str) else tuple(int(s) for s in np.atleast_1d(key))
            if len(word) != depth:
                raise ValidationError(f"table word {key!r} has length {len(word)}, expected {depth}")
            if not spec.is_admissible(word):
                raise ValidationError(f"table word {key!r} is not admissible")
            m = np.asarray(value, dtype=float)
            entries[word] = m
        if not entries:
            raise ValidationError("empty generator table")
        shapes = {m.shape for m in entries.values()}
        if len(shapes) != 1:
            raise ValidationError(f"table matrices have inconsistent shapes {sorted(shapes)}")
        (shape,) = shapes
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValidationError(f"table matrices must be square, got {shape}")
        if not all(np.all(np.isfinite(m)) for m in entries.values()):
            raise ValidationError("table matrices must have finite entries")
        self.dimension = shape[0]
        self.table = entries
        dense = np.full((k**depth, shape[0], shape[0]), np.nan)
        for word, m in entries.items():
            code = 0
            for s in word:
                code = code * k + s
            dense[code] = m
        self._dense = dense

    @classmethod
    def constant(cls, matrix, spec: SubshiftSpec | None = None) -> "LocallyConstant":
        spec = spec or SubshiftSpec.full_shift(1)
        return cls(spec, 1, {(a,): matrix for a in range(spec.alphabet_size)})

    @classmethod
    def from_symbols(cls, matrices: Sequence, spec: SubshiftSpec | None = None) -> "LocallyConstant":
        spec = spec or SubshiftSpec.full_shift(len(matrices))
        return cls(spec, 1, {(a,): m for a, m in enumerate(matrices)})

    def evaluate_offsets(self, x: ShiftPoint, offsets) -> np.ndarray:
        offsets = np.asarray(offsets, dtype=np.int64)
        if offsets.size == 0:
            return np.zeros((0, self.dimension, self.dimension))
        codes = _window_codes(x, offsets, self.lo, self.hi, self.spec.alphabet_size)
        out = self._dense[codes]
        if np.isnan(out).any():
            bad = codes[np.isnan(out).any(axis=(1, 2))][0]
            raise InadmissibleWord(f"no matrix for window code {bad}")
        return out

    def max_jump(self) -> float:
        """``max ||A_w - A_w'||`` over table entries (operator norm)."""
        mats = list(self.table.values())
        return max(
            (np.linalg.norm(a - b, 2) for a, b in itertools.combinations(mats, 2)),
            default=0.0,
        )


class CoordinateSeries(CocycleGenerator):
    """``A(x) = base[x_0] + sum_{|j| <= radius} 2^(-alpha |j|) perturbation[x_j]``.

    The Hölder constant ``C2`` for the declared exponent is computed from the
    tail sums of the series, so ``||A(x) - A(y)|| <= C2 d(x, y)^alpha``
    holds by construction.
    """

    def __init__(self, spec: SubshiftSpec, base, perturbation, alpha: float, radius: int):
        base = np.asarray(base, dtype=float)
        pert = np.asarray(perturbation, dtype=float)
        k = spec.alphabet_size
        if base.ndim != 3 or base.shape[0] != k or base.shape[1] != base.shape[2]:
            raise ValidationError(f"base must have shape ({k}, d, d), got {base.shape}")
        if pert.shape != base.shape:
            raise ValidationError(f"perturbation must have shape {base.shape}, got {pert.shape}")
        if alpha <= 0 or radius < 0:
            raise ValidationError("need alpha > 0 and radius >= 0")
        self.spec = spec
        self.base = base
        self.perturbation = pert
        self.alpha = float(alpha)
        self.radius = int(radius)
        self.reach = self.radius
        self.dimension = base.shape[1]
        self.C2 = self._holder_constant()

    def weights(self) -> np.ndarray:
        j = np.arange(-self.radius, self.radius + 1)
        return np.exp2(-self.alpha * np.abs(j))

    def _holder_constant(self) -> float:
        def jump(stack):
            return max(
                (np.linalg.norm(a - b, 2) for a, b in itertools.combinations(stack, 2)),
                default=0.0,
            )

        db, dp = jump(self.base), jump(self.perturbation)
        j = np.arange(self.radius + 1)
        w = np.exp2(-self.alpha * j)
        # distance 2^-k: coordinates |j| < k agree
        bounds = []
        for k in range(self.radius + 2):
            if k == 0:
                bound = db + dp * (w[0] + 2 * w[1:].sum())
            else:
                bound = dp * 2 * w[k:].sum()
            bounds.append(bound / 2.0 ** (-self.alpha * k))
        return float(max(bounds))

    def evaluate_offsets(self, x: ShiftPoint, offsets) -> np.ndarray:
        offsets = np.asarray(offsets, dtype=np.int64)
        if offsets.size == 0:
            return np.zeros((0, self.dimension, self.dimension))
        r = self.radius
        start = int(offsets.min()) - r
        coords = x.window(start, int(offsets.max()) + r + 1)
        centre = offsets - start
        out = self.base[coords[centre]].copy()
        for j, w in zip(range(-r, r + 1), self.weights()):
            out += w * self.perturbation[coords[centre + j]]
        return out


class ExteriorPowerGenerator(CocycleGenerator):
    """``x -> Lambda^j A(x)`` over the same base map."""

    def __init__(self, base: CocycleGenerator, j: int):
        if not 1 <= j <= base.dimension:
            raise ValidationError(f"exterior degree {j} out of range")
        self.base = base
        self.j = j
        self.step = base.step
        self.reach = base.reach
        self.spec = base.spec
        self.dimension = math.comb(base.dimension, j)

    def evaluate_offsets(self, x: ShiftPoint, offsets) -> np.ndarray:
        return exterior_power(self.base.evaluate_offsets(x, offsets), self.j)


class AdjointGenerator(CocycleGenerator):
    """``A*(x) = A(f^{-1} x)^T`` running over ``f^{-1}``."""

    def __init__(self, base: CocycleGenerator):
        self.base = base
        self.step = -base.step
        self.reach = base.reach + 1
        self.spec = base.spec
        self.dimension = base.dimension

    def evaluate_offsets(self, x: ShiftPoint, offsets) -> np.ndarray:
        offsets = np.asarray(offsets, dtype=np.int64)
        return np.swapaxes(self.base.evaluate_offsets(x, offsets - self.base.step), -1, -2)

    def adjoint(self) -> CocycleGenerator:
        return self.base


def evaluate_generator(gen: CocycleGenerator, x: ShiftPoint) -> np.ndarray:
    return gen.evaluate(x)


def adjoint_evaluate(gen: CocycleGenerator, x: ShiftPoint) -> np.ndarray:
    return AdjointGenerator(gen).evaluate(x)


def multiply_sequence(mats: np.ndarray) -> np.ndarray:
    """``M_{n-1} ... M_1 M_0`` for a stack ``(..., n, d, d)``."""
    mats = np.asarray(mats, dtype=float)
    d = mats.shape[-1]
    out = np.broadcast_to(np.eye(d), mats.shape[:-3] + (d, d)).copy()
    for i in range(mats.shape[-3]):
        out = mats[..., i, :, :] @ out
    return out


def cocycle_product(gen: CocycleGenerator, x: ShiftPoint, n: int) -> np.ndarray:
    """``A^n(x) = A(g^{n-1} x) ... A(x)``; the identity for ``n = 0``."""
    if n < 0:
        raise ValidationError("cocycle products need n >= 0")
    if n == 0:
        return np.eye(gen.dimension)
    return multiply_sequence(gen.along(x, n))


def log_scaled_product(mats: np.ndarray, every: int = RENORMALIZE_EVERY) -> tuple[np.ndarray, np.ndarray]:
    """Product of a long matrix sequence as ``exp(log_scale) * scaled``.

    ``mats`` has shape ``(..., n, m, m)``; the running product is divided by
    its largest entry every ``every`` steps. A product that becomes exactly
    zero stays zero with ``log_scale = -inf``.
    """
    mats = np.asarray(mats, dtype=float)
    lead = mats.shape[:-3]
    n, m = mats.shape[-3], mats.shape[-1]
    prod = np.broadcast_to(np.eye(m), lead + (m, m)).copy()
    log_scale = np.zeros(lead)
    for i in range(n):
        prod = mats[..., i, :, :] @ prod
        if (i + 1) % every == 0 or i == n - 1:
            scale = np.max(np.abs(prod), axis=(-2, -1))
            alive = scale > 0
            safe = np.where(alive, scale, 1.0)
            prod = prod / safe[..., None, None]
            log_scale = log_scale + np.where(alive, np.log(safe), -np.inf)
    return prod, log_scale
