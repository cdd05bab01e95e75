"""Brute-force reference for the periodic approximation demo (d = 2, depth-1 tables).

Shares only the sample points with the package. Exponents come from a
per-step renormalized product and log|det|, flags from direct 2x2 SVDs,
periodic data from numpy eigendecompositions, orbit search from
itertools, cylinder frequencies from substring counts, and orbit scores from exact
rational traces and determinants so that exactly tied orbits compare equal.

Run as a script to regenerate the frozen JSON files in ``tests/data``.
"""

from __future__ import annotations

import itertools
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from periodic_oseledets.base_dynamics import MarkovMeasure, sample_points

DATA = Path(__file__).resolve().parent.parent / "data"

HYPERBOLIC = [
    [[2.0, 0.3], [0.1, 0.5]],
    [[1.5, -0.2], [0.25, 0.6]],
]
SINGULAR = [
    [[2.0, 0.3], [0.1, 0.5]],
    [[1.5, 0.4], [0.0, 0.0]],
]
EPSILONS = [1 / 2, 1 / 3, 1 / 4, 1 / 5]


def forward_product(mats, seq):
    """Unit-Frobenius product ``A(s_{m-1}) ... A(s_0)`` and the log of its scale."""
    P = np.eye(2)
    log_scale = 0.0
    for s in seq:
        P = mats[s] @ P
        f = np.linalg.norm(P)
        P /= f
        log_scale += math.log(f)
    return P, log_scale


def point_exponents(mats, seq):
    P, ls = forward_product(mats, seq)
    s1 = np.linalg.svd(P, compute_uv=False)[0]
    g1 = (ls + math.log(s1)) / len(seq)
    dets = [abs(np.linalg.det(mats[s])) for s in seq]
    if min(dets) == 0.0:
        return g1, -math.inf
    total = sum(math.log(v) for v in dets) / len(seq)
    return g1, total - g1


def line_angle(u, v):
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    cross = abs(u[0] * v[1] - u[1] * v[0])
    return math.atan2(cross, abs(float(u @ v)))


def point_flags(mats, past, future):
    """Top left singular line of the past product; orthocomplement of the top right line forward."""
    Pp, _ = forward_product(mats, past)
    U, _, _ = np.linalg.svd(Pp)
    Pf, _ = forward_product(mats, future)
    _, _, Vt = np.linalg.svd(Pf)
    v = Vt[0]
    return U[:, 0], np.array([-v[1], v[0]])


def is_necklace(word):
    n = len(word)
    return all(word <= word[t:] + word[:t] for t in range(1, n))


def substring_freq(word, length):
    n = len(word)
    counts = {}
    for t in range(n):
        key = tuple(word[(t + i) % n] for i in range(length))
        counts[key] = counts.get(key, 0) + 1
    return {k: v / n for k, v in counts.items()}


def weak_star(word, probs, depth):
    total = 0.0
    for length in range(1, depth + 1):
        freq = substring_freq(word, length)
        diffs = []
        for w in itertools.product(range(len(probs)), repeat=length):
            mu = math.prod(probs[s] for s in w)
            diffs.append(abs(freq.get(w, 0.0) - mu))
        total += math.fsum(diffs) / len(diffs) * 2.0**-length
    return total


def orbit_eigen(mats, word, singular_symbols):
    B = np.eye(2)
    for s in word:
        B = mats[s] @ B
    lam, vec = np.linalg.eig(B)
    order = np.argsort(-np.abs(lam))
    lam, vec = lam[order], vec[:, order]
    n = len(word)
    g = [math.log(abs(lam[0])) / n]
    if any(s in singular_symbols for s in word):
        g.append(-math.inf)
    else:
        g.append(math.log(abs(lam[1])) / n)
    return g, lam, vec


def exact_product(mats, word):
    """Cyclic product in rational arithmetic (exact trace and determinant)."""
    fr = [[[Fraction(str(v)) for v in row] for row in m] for m in mats]
    B = [[Fraction(1), Fraction(0)], [Fraction(0), Fraction(1)]]
    for s in word:
        A = fr[s]
        B = [[sum(A[i][k] * B[k][j] for k in range(2)) for j in range(2)] for i in range(2)]
    return B


def search_exponents(mats, word, singular_symbols):
    """Periodic exponents from the exact characteristic polynomial.

    Words with equal trace and determinant (e.g. reversals of 2x2 words)
    get bit-identical exponents, so ties are broken by word order only.
    Returns None for non-real eigenvalues.
    """
    B = exact_product(mats, word)
    tr = B[0][0] + B[1][1]
    det = B[0][0] * B[1][1] - B[0][1] * B[1][0]
    disc = tr * tr - 4 * det
    if disc < 0:
        return None
    n = len(word)
    root = math.sqrt(disc)
    t = float(tr)
    lam1 = (t + math.copysign(root, t)) / 2
    g1 = math.log(abs(lam1)) / n
    if any(s in singular_symbols for s in word) or det == 0:
        return [g1, -math.inf]
    return [g1, math.log(abs(float(det) / lam1)) / n]


def abs_err(a, b):
    if a == -math.inf and b == -math.inf:
        return 0.0
    return abs(a - b)


def run(mats, probs, periods, horizon, samples, seed, depth=4, gap=0.05, singular_symbols=()):
    mats = [np.asarray(m, dtype=float) for m in mats]
    measure = MarkovMeasure.bernoulli(probs)
    points = sample_points(measure, horizon + 2, samples, seed)
    seqs = []
    for x in points:
        seqs.append((x.window(-horizon, 0).tolist(), x.window(0, horizon).tolist()))
    exps = np.array([point_exponents(mats, fut) for _, fut in seqs])
    ref = [float(np.mean(exps[:, 0])), float(np.mean(exps[:, 1])) if np.isfinite(exps[:, 1]).all() else -math.inf]
    flags = [point_flags(mats, past, fut) for past, fut in seqs]

    periods_out = []
    for n in periods:
        best = None
        skipped = 0
        for word in itertools.product(range(len(probs)), repeat=n):
            if not is_necklace(word):
                continue
            g = search_exponents(mats, word, singular_symbols)
            if g is None or (g[1] != -math.inf and g[0] - g[1] < gap):
                skipped += 1
                continue
            errs = [abs_err(g[0], ref[0]), abs_err(g[1], ref[1])]
            score = weak_star(word, probs, depth) + sum(errs) / 2
            if best is None or (score < best[0] and not math.isclose(score, best[0], rel_tol=1e-12)):
                best = (score, word, g, errs)
        score, word, g, errs = best
        rot_flags = []
        for t in range(n):
            rot = word[t:] + word[:t]
            _, _, vec = orbit_eigen(mats, rot, singular_symbols)
            rot_flags.append((np.real(vec[:, 0]), np.real(vec[:, 1])))
        best_angles, best_q = [], []
        for eu, es in flags:
            vals = [max(line_angle(eu, f1), line_angle(es, f2)) for f1, f2 in rot_flags]
            q = int(np.argmin(vals))
            best_angles.append(vals[q])
            best_q.append(q)
        ang = np.array(best_angles)
        periods_out.append(
            {
                "n": n,
                "word": "".join(map(str, word)),
                "score": score,
                "exponents": g,
                "exponent_errors": errs,
                "weak_star": weak_star(word, probs, depth),
                "median_angle": float(np.median(ang)),
                "good_fractions": [float(np.mean(ang < e)) for e in EPSILONS],
                "best_angles": best_angles,
                "best_q": best_q,
                "skipped_ties": skipped,
            }
        )
    return {
        "reference_exponents": ref,
        "epsilons": EPSILONS,
        "periods": periods_out,
    }


def _json_default(obj):
    raise TypeError(obj)


def encode(obj):
    if isinstance(obj, float) and obj == -math.inf:
        return "-inf"
    if isinstance(obj, dict):
        return {k: encode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [encode(v) for v in obj]
    return obj


CASES = {
    "approximation_demo_hyperbolic": dict(mats=HYPERBOLIC, singular_symbols=()),
    "approximation_demo_singular": dict(mats=SINGULAR, singular_symbols=(1,)),
}


def main(argv=None):
    names = argv or list(CASES)
    for name in names:
        case = CASES[name]
        out = run(
            case["mats"], [0.5, 0.5], list(range(4, 15)), 1024, 50, 11,
            singular_symbols=case["singular_symbols"],
        )
        out["case"] = name
        out["matrices"] = case["mats"]
        path = DATA / f"{name}.json"
        path.write_text(json.dumps(encode(out), indent=1) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main(sys.argv[1:])
