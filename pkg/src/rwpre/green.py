"""Green functions of the projected walk and the diagnostics built on them.

``G^{*i}(x) = sum_k C(k+i-1, i-1) P(Y_k = x)`` where ``Y`` is the
nearest-neighbour walk on ``Z^{d1}`` with step law ``q``.  ``P(Y_k = x)`` is
computed exactly for every ``k <= K`` at a single point by splitting the
steps among axes with binomial weights, so no dense lattice box is needed.

Finiteness of a truncated series cannot be decided numerically.  The
diagnostic fits a power law to the last 50 parity-paired terms and calls the
sum converged when the fitted decay exponent exceeds 1 by a margin; for
nearest-neighbour ``q`` the terms decay like ``k^{i-1-d1/2}`` (zero mean) or
exponentially (nonzero mean), so this separates the two regimes cleanly.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special, stats

from .environment import Kernel
from .lattice import Site

TAIL_WINDOW = 50
EXPONENT_MARGIN = 1.05
DEFICIT_TOL = 1e-12


class NotConverging(ArithmeticError):
    pass


class BoxTooSmall(ValueError):
    pass


def _axis_masses(q: Kernel, d1: int) -> np.ndarray:
    return np.array([[float(q[2 * a]), float(q[2 * a + 1])] for a in range(d1)])


# -- dense convolution (small cases, independent of the point method) --------

@dataclass
class BoxDistribution:
    probs: np.ndarray  # indexed by x + box_radius on each axis
    box_radius: int
    deficit: float

    def at(self, x: Sequence[int]) -> float:
        idx = tuple(int(c) + self.box_radius for c in x)
        if any(i < 0 or i >= self.probs.shape[0] for i in idx):
            return 0.0
        return float(self.probs[idx])


def convolve_power(q: Kernel, k: int, box_radius: int, d1: Optional[int] = None,
                   strict: bool = False) -> BoxDistribution:
    """Law of ``Y_k`` on the cube ``[-R, R]^{d1}``; mass leaving the box is
    dropped and reported as ``deficit``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    d1 = d1 if d1 is not None else max((s // 2 for s in q.support), default=0) + 1
    R = int(box_radius)
    shape = (2 * R + 1,) * d1
    cur = np.zeros(shape)
    cur[(R,) * d1] = 1.0
    masses = _axis_masses(q, d1)
    for _ in range(k):
        nxt = np.zeros(shape)
        for a in range(d1):
            for sign, mass in ((1, masses[a, 0]), (-1, masses[a, 1])):
                if mass == 0:
                    continue
                src = [slice(None)] * d1
                dst = [slice(None)] * d1
                if sign > 0:
                    src[a], dst[a] = slice(0, 2 * R), slice(1, 2 * R + 1)
                else:
                    src[a], dst[a] = slice(1, 2 * R + 1), slice(0, 2 * R)
                nxt[tuple(dst)] += mass * cur[tuple(src)]
        cur = nxt
    deficit = max(0.0, 1.0 - float(cur.sum()))
    if strict and deficit > DEFICIT_TOL:
        raise BoxTooSmall(f"mass deficit {deficit:.3g} on box radius {R} at k={k}")
    return BoxDistribution(cur, R, deficit)


# -- exact point probabilities ----------------------------------------------

def point_probabilities(q: Kernel, d1: int, x: Sequence[int], K: int) -> np.ndarray:
    """``P(Y_k = x)`` for ``k = 0..K``."""
    masses = _axis_masses(q, d1)
    x = [int(c) for c in x]
    ks = np.arange(K + 1)
    combined = None  # P(axes so far land on their coordinates | k steps among them)
    s_comb = 0.0
    for a in range(d1):
        plus, minus = masses[a]
        s = plus + minus
        if s == 0:
            if x[a] != 0:
                return np.zeros(K + 1)
            continue
        xa = x[a]
        j = (ks + xa) / 2
        ok = (np.abs(xa) <= ks) & ((ks + xa) % 2 == 0)
        pa = np.where(ok, stats.binom.pmf(np.where(ok, j, 0).astype(int), ks, plus / s), 0.0)
        if combined is None:
            combined, s_comb = pa, s
            continue
        t = s_comb / (s_comb + s)
        merged = np.empty(K + 1)
        for k in range(K + 1):
            w = stats.binom.pmf(np.arange(k + 1), k, t)
            merged[k] = float(np.dot(w, combined[:k + 1] * pa[k::-1]))
        combined, s_comb = merged, s_comb + s
    if combined is None:
        out = np.zeros(K + 1)
        out[0] = 1.0
        return out
    return combined


def binomial_weights(i: int, K: int) -> np.ndarray:
    return special.comb(np.arange(K + 1) + i - 1, i - 1)


def tail_exponent(terms: np.ndarray, window: int = TAIL_WINDOW) -> float:
    """Fitted decay exponent ``s`` of the tail, ``term ~ k^{-s}`` (parity-paired).

    Returns ``inf`` when the tail is identically zero.
    """
    n = len(terms) // 2
    paired = terms[:2 * n].reshape(n, 2).sum(axis=1)
    tail = paired[-window:]
    idx = np.arange(n - len(tail), n) + 1.0
    if not np.any(tail > 0):
        return math.inf
    if np.any(tail <= 0):
        return -math.inf if tail[-1] > 0 else math.inf
    slope = np.polyfit(np.log(idx), np.log(tail), 1)[0]
    return float(-slope)


def tail_ratio(terms: np.ndarray) -> float:
    n = len(terms) // 2
    paired = terms[:2 * n].reshape(n, 2).sum(axis=1)
    if n < 2 or paired[-2] == 0:
        return 0.0
    return float(paired[-1] / paired[-2])


# -- quadrature oracle --------------------------------------------------------

def green_quadrature(q: Kernel, d1: int, x: Sequence[int], i: int = 1) -> float:
    """Untruncated ``G^{*i}(x)`` via the continuous-time walk:
    ``int_0^inf t^{i-1}/(i-1)! prod_a P_t^{(a)}(x_a) dt``."""
    masses = _axis_masses(q, d1)
    x = [int(c) for c in x]

    def density(t):
        out = t ** (i - 1) / math.factorial(i - 1)
        for a in range(d1):
            p, m = masses[a]
            xa = x[a]
            if p + m == 0:
                if xa != 0:
                    return 0.0
                continue
            if p * m > 0:
                z = 2 * t * math.sqrt(p * m)
                out *= math.exp(-(p + m) * t + z) * (p / m) ** (xa / 2) * special.ive(abs(xa), z)
            else:
                rate = p if p > 0 else m
                n = xa if p > 0 else -xa
                if n < 0:
                    return 0.0
                out *= stats.poisson.pmf(n, rate * t)
        return out

    val, _ = integrate.quad(density, 0, np.inf, limit=500, epsabs=1e-13, epsrel=1e-11)
    return float(val)


# -- tables -----------------------------------------------------------------

def _scan_points(q: Kernel, d1: int, radius: int) -> List[Site]:
    """Representatives of the L1 ball under the symmetries of ``q``."""
    masses = _axis_masses(q, d1)
    symmetric = [masses[a, 0] == masses[a, 1] for a in range(d1)]
    classes: Dict[Tuple, List[int]] = {}
    for a in range(d1):
        key = (symmetric[a], masses[a, 0], masses[a, 1])
        classes.setdefault(key, []).append(a)
    pts = set()
    ranges = [range(0 if symmetric[a] else -radius, radius + 1) for a in range(d1)]
    if d1 <= 3 or not all(symmetric):
        for x in itertools.product(*ranges):
            if sum(abs(c) for c in x) <= radius:
                pts.add(_canon(x, classes, symmetric))
        return sorted(pts)
    # symmetric in every axis: enumerate sorted non-negative tuples
    def rec(prefix, left, maxv):
        if len(prefix) == d1:
            pts.add(_canon(tuple(prefix), classes, symmetric))
            return
        for v in range(min(left, maxv), -1, -1):
            rec(prefix + [v], left - v, v if _all_same(classes, d1) else left)
    rec([], radius, radius)
    return sorted(pts)


def _all_same(classes, d1):
    return len(classes) == 1 and len(next(iter(classes.values()))) == d1


def _canon(x, classes, symmetric) -> Site:
    x = [abs(c) if symmetric[a] else c for a, c in enumerate(x)]
    for axes in classes.values():
        vals = sorted((x[a] for a in axes), reverse=True)
        for a, v in zip(axes, vals):
            x[a] = v
    return tuple(x)


@dataclass
class GreenTable:
    q: Kernel
    d1: int
    K: int
    box_radius: int
    partial: Dict[int, Dict[Site, float]]
    sup_estimates: Dict[int, float]
    argmax: Dict[int, Site]
    tail_ratio: Dict[int, float]
    tail_exponent: Dict[int, float]
    converged: Dict[int, bool]
    interior_sup: Dict[int, bool] = field(default_factory=dict)
    untruncated: Dict[int, float] = field(default_factory=dict)

    @property
    def G_origin(self) -> float:
        return self.partial[1][(0,) * self.d1]

    def sup(self, i: int, require: bool = True) -> float:
        if require and not self.converged[i]:
            raise NotConverging(f"sup of G^*{i} not converged (tail exponent {self.tail_exponent[i]:.3g})")
        return self.sup_estimates[i]

    def sup_full(self, i: int, require: bool = True) -> float:
        """Sup with the truncation tail added back (quadrature at the maximiser)."""
        self.sup(i, require)
        return max(self.sup_estimates[i], self.untruncated.get(i, self.sup_estimates[i]))

    def alpha(self, delta) -> float:
        return alpha(delta, self)


def default_radius(d1: int, K: int) -> int:
    if d1 == 1:
        return K
    if d1 == 2:
        return min(K, 12)
    return min(K, 3)


def green_table(q: Kernel, d1: int, K: int = 300, box_radius: Optional[int] = None,
                orders: Sequence[int] = (1, 2, 3, 4)) -> GreenTable:
    """Truncated ``G^{*i}`` on the scan ball, with sup and convergence flags.

    ``box_radius`` is the L1 radius of the region scanned for the sup.  The
    sup counts as converged only when it is attained strictly inside that
    region and the tail at the maximiser passes the exponent test.
    """
    R = default_radius(d1, K) if box_radius is None else int(box_radius)
    pts = _scan_points(q, d1, R)
    weights = {i: binomial_weights(i, K) for i in orders}
    partial: Dict[int, Dict[Site, float]] = {i: {} for i in orders}
    terms_at: Dict[int, Dict[Site, np.ndarray]] = {i: {} for i in orders}
    for x in pts:
        pk = point_probabilities(q, d1, x, K)
        for i in orders:
            t = weights[i] * pk
            partial[i][x] = float(np.sum(t))
            terms_at[i][x] = t
    sup_est, arg, ratio, expo, conv, interior = {}, {}, {}, {}, {}, {}
    for i in orders:
        vals = partial[i]
        best = max(vals, key=lambda x: (vals[x], tuple(-abs(c) for c in x)))
        inner = [v for x, v in vals.items() if sum(abs(c) for c in x) < R]
        inner_max = max(inner) if inner else -math.inf
        edge_max = max((v for x, v in vals.items() if sum(abs(c) for c in x) == R), default=-math.inf)
        ok_interior = edge_max <= inner_max * (1 + 1e-9)
        t = terms_at[i][best]
        sup_est[i] = vals[best]
        arg[i] = best
        ratio[i] = tail_ratio(t)
        expo[i] = tail_exponent(t)
        interior[i] = ok_interior
        conv[i] = bool(ok_interior and expo[i] > EXPONENT_MARGIN)
    full = {i: green_quadrature(q, d1, arg[i], i) for i in orders if conv[i]}
    return GreenTable(q, d1, K, R, partial, sup_est, arg, ratio, expo, conv, interior, full)


def green(q: Kernel, d1: int, i: int, K: int = 300, box_radius: Optional[int] = None,
          strict: bool = True) -> GreenTable:
    """Table for a single order ``i``; raises NotConverging when ``strict``."""
    if i not in (1, 2, 3, 4):
        raise ValueError("i must be in 1..4")
    table = green_table(q, d1, K, box_radius, orders=(i,))
    if strict and not table.converged[i]:
        raise NotConverging(f"G^*{i}: tail exponent {table.tail_exponent[i]:.3g}, "
                            f"interior sup {table.interior_sup[i]}")
    return table


def alpha(delta, table: GreenTable) -> float:
    """``2(1-delta) delta^{-2} sup G^{*2}``."""
    delta = float(delta)
    if delta == 1.0:
        return 0.0
    return 2 * (1 - delta) / delta ** 2 * table.sup_full(2)


@dataclass
class A3Report:
    G_origin: float
    origin_below_two: bool
    sups: Dict[int, float]
    converged: Dict[int, bool]
    tail_exponent: Dict[int, float]

    @property
    def ok(self) -> bool:
        return self.origin_below_two and all(self.converged.values())

    def lines(self) -> List[str]:
        out = [f"{'PASS' if self.origin_below_two else 'FAIL'} G(o)={self.G_origin:.6g} < 2"]
        for i in sorted(self.sups):
            out.append(f"{'PASS' if self.converged[i] else 'FAIL'} sup G^*{i}={self.sups[i]:.6g} "
                       f"(tail exponent {self.tail_exponent[i]:.3g})")
        return out


def check_A3(q: Kernel, d1: int, K: int = 300, box_radius: Optional[int] = None,
             table: Optional[GreenTable] = None) -> A3Report:
    table = table if table is not None else green_table(q, d1, K, box_radius)
    g0 = table.G_origin
    return A3Report(g0, g0 < 2 and table.converged[1], dict(table.sup_estimates),
                    dict(table.converged), dict(table.tail_exponent))


def uniform_q(d1: int) -> Kernel:
    return Kernel({k: 1.0 / (2 * d1) for k in range(2 * d1)})


def deterministic_q() -> Kernel:
    return Kernel({0: 1.0})
