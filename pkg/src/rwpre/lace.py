"""Lace-expansion coefficients by exact path enumeration.

A coefficient ``pi_m^(N)(x, y)`` is a signed sum over walks of total length
``m`` cut into pieces ``0..N``.  Piece 0 is a single step from the origin.
Piece ``n >= 1`` makes ordinary annealed steps, where the history is the
previous piece followed by the current one.  It ends with one *difference*
step weighted by

    Delta_n(u) = p^{prev o cur}(u) - p^{cur}(u).

``Delta_n`` vanishes unless the previous piece left the current site along an
informative direction.  The traversal uses this to prune: each piece must be
able to reach such a site before the step budget runs out.

The same traversal carries forward-mode derivative parts (product-rule split
by which factor is differentiated) and the absolute-value sums that
upper-bound the derivative series.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .annealed import AnnealedModel, ZeroProbabilityHistory
from .environment import EnvironmentSpec
from .lattice import Site, add_step

DEFAULT_M_CAP = 8


class CapExceeded(ValueError):
    pass


def _zeros(n, zero):
    return [zero] * n


class _Acc:
    """Raw accumulators of one traversal task."""

    def __init__(self):
        self.pi: Dict[Tuple[int, int], Dict[Tuple[Site, Site], object]] = {}
        self.phi: Dict[Tuple[int, int], Dict[Tuple[Site, Site], list]] = {}
        self.F: Dict[Tuple[int, int], float] = {}
        self.H: Dict[Tuple[int, int, int], float] = {}
        self.J: Dict[Tuple[int, int, int], float] = {}
        self.path_abs: Dict[Tuple[int, int], float] = {}
        self.max_abs_delta_sum = 0.0
        self.n_delta_steps = 0
        self.nodes = 0

    def merge(self, other: "_Acc") -> None:
        for key, tab in other.pi.items():
            mine = self.pi.setdefault(key, {})
            for xy, v in tab.items():
                mine[xy] = mine[xy] + v if xy in mine else v
        for key, tab in other.phi.items():
            mine = self.phi.setdefault(key, {})
            for xy, v in tab.items():
                if xy in mine:
                    mine[xy] = [a + b for a, b in zip(mine[xy], v)]
                else:
                    mine[xy] = list(v)
        for name in ("F", "H", "J", "path_abs"):
            mine, theirs = getattr(self, name), getattr(other, name)
            for key, v in theirs.items():
                mine[key] = mine.get(key, 0.0) + v
        self.max_abs_delta_sum = max(self.max_abs_delta_sum, other.max_abs_delta_sum)
        self.n_delta_steps += other.n_delta_steps
        self.nodes += other.nodes


def _tasks(model: AnnealedModel, m_max: int) -> List[Tuple[int, int]]:
    """First-step pairs (piece 0, first step of piece 1) that can contribute."""
    zero_key = (0,) * len(model.informative)
    p0, dp0 = model.kernel_from_key(zero_key)
    o = (0,) * model.spec.d
    out = []
    if m_max < 2:
        return out
    for u0 in model.informative:
        if p0[u0] == 0 and dp0[u0] == 0:
            continue
        x1 = add_step(o, u0)
        p1 = model.kernel_from_key(zero_key)[0]
        for u1, pu in enumerate(p1):
            if pu == 0:
                continue
            y = add_step(x1, u1)
            if 2 + sum(abs(c) for c in y) + 1 <= m_max:
                out.append((u0, u1))
    return out


def _run_task(model: AnnealedModel, m_max: int, n_max: int, task: Tuple[int, int],
              want_phi: bool, want_bounds: bool) -> _Acc:
    acc = _Acc()
    spec = model.spec
    d = spec.d
    zero = model.zero
    one = zero + 1
    n_info = len(model.informative)
    zero_key = (0,) * n_info
    pos = {u: i for i, u in enumerate(model.informative)}
    kernel_of = model.kernel_from_key
    absf = abs
    pi_tab, phi_tab = acc.pi, acc.phi
    F, H, J, PA = acc.F, acc.H, acc.J, acc.path_abs
    eps_bound = [0.0]

    def bump(key, u):
        i = pos.get(u)
        if i is None:
            return key
        k = list(key)
        k[i] += 1
        return tuple(k)

    def dist(y, targets):
        best = 1 << 30
        for t in targets:
            s = 0
            for a, b in zip(y, t):
                s += a - b if a > b else b - a
            if s < best:
                best = s
        return best

    def delta_step(n, prev, cur, x, t, W, pL, dpL, short_key):
        pS, dpS = kernel_of(short_key)
        w, g1, g2, g3, a, f, h, jj = W
        m = t + 1
        deltas = [pl - ps for pl, ps in zip(pL, pS)]
        ddeltas = [a_ - b_ for a_, b_ in zip(dpL, dpS)] if want_phi or want_bounds else None
        abs_sum = sum(absf(v) for v in deltas)
        acc.n_delta_steps += 1
        fa = float(abs_sum)
        if fa > acc.max_abs_delta_sum:
            acc.max_abs_delta_sum = fa
        key = (m, n)
        tab = pi_tab.get(key)
        if tab is None:
            tab = pi_tab[key] = {}
        if want_phi:
            ptab = phi_tab.get(key)
            if ptab is None:
                ptab = phi_tab[key] = {}
        for u in range(2 * d):
            dl = deltas[u]
            if want_phi:
                ddl = ddeltas[u]
                if dl == 0 and ddl == 0:
                    continue
            elif dl == 0:
                continue
            y = add_step(x, u)
            xy = (x, y)
            tab[xy] = tab.get(xy, zero) + w * dl
            if want_phi:
                parts = (g1 * dl, g2 * dl, g3 * dl + w * ddl)
                cur_parts = ptab.get(xy)
                if cur_parts is None:
                    ptab[xy] = list(parts)
                else:
                    cur_parts[0] += parts[0]
                    cur_parts[1] += parts[1]
                    cur_parts[2] += parts[2]
        if want_bounds:
            drift = float(absf(deltas[0] - deltas[1]))
            ddrift = float(absf(ddeltas[0] - ddeltas[1]))
            F[key] = F.get(key, 0.0) + f * drift
            PA[key] = PA.get(key, 0.0) + a * fa
            for k in range(1, n + 1):
                hk = (m, n, k)
                H[hk] = H.get(hk, 0.0) + h[k - 1] * drift
            for k in range(1, n):
                jk = (m, n, k)
                J[jk] = J.get(jk, 0.0) + jj[k - 1] * drift
            jk = (m, n, n)
            J[jk] = J.get(jk, 0.0) + a * ddrift
        if n >= n_max or t + 2 > m_max:
            return
        for u in range(2 * d):
            dl = deltas[u]
            ddl = ddeltas[u] if ddeltas is not None else zero
            if dl == 0 and not (want_phi and ddl != 0):
                continue
            y = add_step(x, u)
            # the finished piece (with its difference step) is the next prefix
            nxt = dict(cur)
            if u in pos:
                nxt[x] = bump(cur.get(x, zero_key), u)
            targets = list(nxt)
            if not targets or t + 2 + dist(y, targets) > m_max:
                continue
            adl = float(absf(dl))
            W2 = (w * dl, g1 * dl, g2 * dl, g3 * dl + w * ddl,
                  a * adl, f * adl,
                  tuple(v * adl for v in h) + (0.0,),
                  (tuple(v * adl for v in jj) + (a * float(absf(ddl)),)) if want_bounds else jj)
            walk(n + 1, nxt, targets, {}, y, t + 1, W2)

    def walk(n, prev, targets, cur, x, t, W):
        acc.nodes += 1
        ck = cur.get(x)
        pk = prev.get(x)
        short_key = ck if ck is not None else zero_key
        if pk is None:
            long_key = short_key
        else:
            long_key = tuple(i + j for i, j in zip(pk, short_key))
        try:
            pL, dpL = kernel_of(long_key)
        except ZeroProbabilityHistory:
            return
        if pk is not None and t + 1 <= m_max:
            delta_step(n, prev, cur, x, t, W, pL, dpL, short_key)
        if t + 2 > m_max:
            return
        w, g1, g2, g3, a, f, h, jj = W
        for u in range(2 * d):
            pu = pL[u]
            if pu == 0:
                continue
            y = add_step(x, u)
            if t + 2 + dist(y, targets) > m_max:
                continue
            dpu = dpL[u]
            fp = float(pu)
            W2 = (w * pu, g1 * pu, g2 * pu + w * dpu, g3 * pu,
                  a * fp, f * fp,
                  (tuple(v * fp for v in h[:-1]) + (h[-1] * fp + a * float(absf(dpu)),)) if want_bounds else h,
                  tuple(v * fp for v in jj) if want_bounds else jj)
            if u in pos:
                old = cur.get(x)
                cur[x] = bump(old if old is not None else zero_key, u)
                walk(n, prev, targets, cur, y, t + 1, W2)
                if old is None:
                    del cur[x]
                else:
                    cur[x] = old
            else:
                walk(n, prev, targets, cur, y, t + 1, W2)

    u0, u1 = task
    o = (0,) * d
    p0, dp0 = kernel_of(zero_key)
    x1 = add_step(o, u0)
    piece0 = {o: bump(zero_key, u0)}
    targets = [o]
    # first step of piece 1 is an ordinary step from x1 with history piece0
    W = (p0[u0], dp0[u0], zero, zero, float(p0[u0]), float(abs(dp0[u0])), (0.0,), ())
    long_key = piece0.get(x1, zero_key)
    pL, dpL = kernel_of(long_key)
    pu, dpu = pL[u1], dpL[u1]
    if pu == 0:
        return acc
    w, g1, g2, g3, a, f, h, jj = W
    fp = float(pu)
    W1 = (w * pu, g1 * pu, g2 * pu + w * dpu, g3 * pu, a * fp, f * fp,
          (h[0] * fp + a * float(abs(dpu)),), ())
    cur = {}
    if u1 in pos:
        cur[x1] = bump(zero_key, u1)
    walk(1, piece0, targets, cur, add_step(x1, u1), 2, W1)
    return acc


def _run_task_star(args):
    return _run_task(*args)


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        threads = int(os.environ.get("RWPRE_THREADS", "1"))
    return max(1, int(threads))


def enumerate_lace(model: AnnealedModel, m_max: int, n_max: Optional[int] = None,
                   want_phi: bool = True, want_bounds: bool = True,
                   threads: Optional[int] = None, cap: int = DEFAULT_M_CAP) -> _Acc:
    """Run the full traversal; results do not depend on ``threads``."""
    if m_max > cap:
        raise CapExceeded(f"m_max={m_max} exceeds cap {cap}")
    n_max = m_max - 1 if n_max is None else min(n_max, m_max - 1)
    tasks = _tasks(model, m_max)
    args = [(model, m_max, n_max, t, want_phi, want_bounds) for t in tasks]
    threads = resolve_threads(threads)
    if threads > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_run_task_star, args))
    else:
        parts = [_run_task_star(a) for a in args]
    total = _Acc()
    for part in parts:  # fixed task order keeps float sums reproducible
        total.merge(part)
    return total


# -- tables -----------------------------------------------------------------

def _drift_vec(tab: Dict[Tuple[Site, Site], object], d: int, zero, idx=None) -> List:
    out = [zero] * d
    for (x, y), v in tab.items():
        if idx is not None:
            v = v[idx] if idx >= 0 else sum(v, zero)
        for i in range(d):
            if x[i] != y[i]:
                out[i] += (y[i] - x[i]) * v
                break
    return out


@dataclass
class DerivTable:
    """Beta-derivatives of the coefficients, split by differentiated factor.

    Part 1 differentiates the first step, part 2 the ordinary steps and part
    3 the difference steps.
    """

    coeffs: Dict[Tuple[int, int], Dict[Tuple[Site, Site], list]]
    drift_sums: Dict[Tuple[int, int], List]
    part_drift_sums: Dict[Tuple[int, int], List[List]]

    def total(self, m: int, n: int) -> Dict[Tuple[Site, Site], object]:
        return {xy: sum(v[1:], v[0]) for xy, v in self.coeffs.get((m, n), {}).items()}


@dataclass
class LaceTable:
    spec: EnvironmentSpec
    m_max: int
    n_max: int
    coeffs: Dict[Tuple[int, int], Dict[Tuple[Site, Site], object]]
    drift_sums: Dict[Tuple[int, int], List]
    abs_sums: Dict[Tuple[int, int], float]
    deriv: Optional[DerivTable] = None
    F: Dict[Tuple[int, int], float] = field(default_factory=dict)
    H: Dict[Tuple[int, int, int], float] = field(default_factory=dict)
    J: Dict[Tuple[int, int, int], float] = field(default_factory=dict)
    path_abs: Dict[Tuple[int, int], float] = field(default_factory=dict)
    max_abs_delta_sum: float = 0.0
    n_delta_steps: int = 0
    nodes: int = 0

    def keys(self):
        return sorted(self.coeffs)

    def row_sums(self) -> Dict[Tuple[int, int, Site], object]:
        out: Dict[Tuple[int, int, Site], object] = {}
        zero = self.spec.beta * 0
        for key, tab in self.coeffs.items():
            for (x, _), v in tab.items():
                k = key + (x,)
                out[k] = out.get(k, zero) + v
        return out

    def max_abs_row_sum(self) -> float:
        rs = self.row_sums()
        return max((float(abs(v)) for v in rs.values()), default=0.0)

    def abs_sum_by_n(self, n: int, m_max: Optional[int] = None) -> float:
        m_max = self.m_max if m_max is None else m_max
        return sum(v for (m, nn), v in self.abs_sums.items() if nn == n and m <= m_max)

    def pi_m(self, m: int) -> Dict[Site, object]:
        """``pi_m(y) = sum_N sum_x pi_m^(N)(x, y)``."""
        zero = self.spec.beta * 0
        out: Dict[Site, object] = {}
        for (mm, _), tab in self.coeffs.items():
            if mm != m:
                continue
            for (_, y), v in tab.items():
                out[y] = out.get(y, zero) + v
        return out


def _build_table(spec: EnvironmentSpec, m_max: int, n_max: int, acc: _Acc, want_phi: bool) -> LaceTable:
    d = spec.d
    zero = spec.beta * 0
    coeffs = {k: acc.pi[k] for k in sorted(acc.pi)}
    drift = {k: _drift_vec(v, d, zero) for k, v in coeffs.items()}
    abs_sums = {k: float(sum((abs(x) for x in v.values()), zero)) for k, v in coeffs.items()}
    deriv = None
    if want_phi:
        phi = {k: acc.phi[k] for k in sorted(acc.phi)}
        deriv = DerivTable(
            coeffs=phi,
            drift_sums={k: _drift_vec(v, d, zero, idx=-1) for k, v in phi.items()},
            part_drift_sums={k: [_drift_vec(v, d, zero, idx=i) for i in range(3)] for k, v in phi.items()},
        )
    return LaceTable(spec, m_max, n_max, coeffs, drift, abs_sums, deriv,
                     F=dict(sorted(acc.F.items())), H=dict(sorted(acc.H.items())),
                     J=dict(sorted(acc.J.items())), path_abs=dict(sorted(acc.path_abs.items())),
                     max_abs_delta_sum=acc.max_abs_delta_sum, n_delta_steps=acc.n_delta_steps,
                     nodes=acc.nodes)


def pi_table(spec: EnvironmentSpec, m_max: int = 6, n_max: Optional[int] = None, *,
             rational: bool = False, phi: bool = True, bounds: bool = True,
             threads: Optional[int] = None, cap: int = DEFAULT_M_CAP) -> LaceTable:
    """Exact coefficients ``pi_m^(N)`` for ``2 <= m <= m_max``, ``N <= n_max``.

    With ``rational=True`` the spec is converted to exact fractions and every
    coefficient is an exact rational (bound accumulators are skipped).
    """
    if rational:
        spec = spec.exact()
        bounds = False
    model = AnnealedModel(spec)
    n_max = m_max - 1 if n_max is None else min(n_max, m_max - 1)
    acc = enumerate_lace(model, m_max, n_max, want_phi=phi, want_bounds=bounds, threads=threads, cap=cap)
    return _build_table(spec, m_max, n_max, acc, phi)


def phi_table(spec: EnvironmentSpec, m_max: int = 6, n_max: Optional[int] = None, *,
              mode: str = "analytic", h: float = 1e-5, threads: Optional[int] = None) -> DerivTable:
    """Beta-derivative coefficients, analytically or by central differences."""
    if mode == "analytic":
        return pi_table(spec, m_max, n_max, phi=True, bounds=False, threads=threads).deriv
    if mode != "fd":
        raise ValueError(f"unknown mode {mode!r}")
    b = float(spec.beta)
    hi = pi_table(spec.with_beta(b + h), m_max, n_max, phi=False, bounds=False, threads=threads)
    lo = pi_table(spec.with_beta(b - h), m_max, n_max, phi=False, bounds=False, threads=threads)
    coeffs = {}
    for key in sorted(set(hi.coeffs) | set(lo.coeffs)):
        a, c = hi.coeffs.get(key, {}), lo.coeffs.get(key, {})
        coeffs[key] = {xy: [0.0, 0.0, (a.get(xy, 0.0) - c.get(xy, 0.0)) / (2 * h)] for xy in set(a) | set(c)}
    d = spec.d
    return DerivTable(coeffs, {k: _drift_vec(v, d, 0.0, idx=-1) for k, v in coeffs.items()}, {})


# -- speed ------------------------------------------------------------------

@dataclass
class SpeedSeries:
    e_x1: List
    increments: Dict[int, List]  # m -> sum_N sum_{x,y} (y-x) pi_m^(N)
    partial_sums: Dict[int, List]  # m -> truncated speed through m

    @property
    def value(self) -> List:
        return self.partial_sums[max(self.partial_sums)] if self.partial_sums else self.e_x1


def speed_series(spec: EnvironmentSpec, table: LaceTable) -> SpeedSeries:
    """Truncated speed: one-step mean plus drift sums of the coefficients."""
    model = AnnealedModel(table.spec)
    e1 = model.one_step_mean()
    d = spec.d
    zero = table.spec.beta * 0
    incs: Dict[int, List] = {}
    for m in range(2, table.m_max + 1):
        v = [zero] * d
        for (mm, _), vec in table.drift_sums.items():
            if mm == m:
                v = [a + b for a, b in zip(v, vec)]
        incs[m] = v
    partial = {1: list(e1)}
    run = list(e1)
    for m in range(2, table.m_max + 1):
        run = [a + b for a, b in zip(run, incs[m])]
        partial[m] = list(run)
    return SpeedSeries(e1, incs, partial)


def speed_series_dbeta(spec: EnvironmentSpec, table: LaceTable) -> List:
    """Truncated ``d v^[1] / d beta`` (first coordinate)."""
    model = AnnealedModel(table.spec)
    out = model.one_step_mean_dbeta()[0]
    for vec in table.deriv.drift_sums.values():
        out += vec[0]
    return out


def increment_by_enumeration(spec: EnvironmentSpec, m: int) -> List:
    """``E_o[X_m - X_{m-1}]`` by summing over every annealed path of length ``m``."""
    model = AnnealedModel(spec)
    d = spec.d
    zero = spec.beta * 0
    out = [zero] * d
    from .lattice import PathHistory

    h = PathHistory((0,) * d)

    def rec(w):
        p = model.kernel_counts(h.counts_at(h.end))
        if h.length == m - 1:
            for a in range(d):
                out[a] += w * (p[2 * a] - p[2 * a + 1])
            return
        for u, pu in enumerate(p):
            if pu != 0:
                h.push(u)
                rec(w * pu)
                h.pop()

    rec(zero + 1)
    return out


def increment_by_series(spec: EnvironmentSpec, table: LaceTable, m: int) -> List:
    """``E_o[X_1] + sum_{k=2}^m sum_y y pi_k(y)``."""
    model = AnnealedModel(table.spec)
    out = list(model.one_step_mean())
    for k in range(2, m + 1):
        for y, v in table.pi_m(k).items():
            for a in range(spec.d):
                out[a] += y[a] * v
    return out


# -- bound verification -----------------------------------------------------

@dataclass
class BoundCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-300

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


@dataclass
class BoundReport:
    checks: List[BoundCheck]
    alpha: float
    G: float
    G2: float
    G3: float
    G_origin: float
    max_abs_delta_sum: float
    eps_delta: float
    derivative_total: float  # truncated sum of |sum (y-x)^[1] phi_m^(N)|
    kappa_rho: float
    assembled: Dict[str, float]  # truncated F/J/H totals and their RHS totals
    tail: Dict[int, float]  # m0 -> truncated sum_{m >= m0} |drift of phi_m|

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> List[str]:
        return [c.name for c in self.checks if not c.passed]

    def lines(self) -> List[str]:
        out = [f"{'PASS' if c.passed else 'FAIL'} {c.name}: lhs={c.lhs:.6e} rhs={c.rhs:.6e}" for c in self.checks]
        out.append(f"alpha={self.alpha:.6g} G={self.G:.6g} G2={self.G2:.6g} G3={self.G3:.6g} G(o)={self.G_origin:.6g}")
        out.append(f"derivative series total={self.derivative_total:.6e} vs kappa*rho={self.kappa_rho:.6e}")
        return out


def verify_bounds(spec: EnvironmentSpec, table: LaceTable, green_table) -> BoundReport:
    """Compare truncated left-hand sides with the closed-form right-hand sides.

    Truncation only drops non-negative terms, so a truncated sum exceeding
    its bound is a genuine violation.  Green constants include the
    truncation tail of the Green series (see ``GreenTable.sup_full``).
    """
    eps = float(spec.eps_delta)
    delta = float(spec.delta)
    kr = float(spec.kappa) * float(spec.rho)
    G = green_table.sup_full(1)
    G2 = green_table.sup_full(2)
    g3_ok = green_table.converged.get(3, False)
    G3 = green_table.sup_full(3) if g3_ok else math.inf
    G0 = green_table.G_origin
    a = eps / delta ** 2 * G2
    checks: List[BoundCheck] = []
    checks.append(BoundCheck("abs_delta_sum", table.max_abs_delta_sum, eps))
    for n in range(1, table.n_max + 1):
        rhs = eps / delta * G * a ** (n - 1)
        checks.append(BoundCheck(f"pi_abs_sum[N={n}]", table.abs_sum_by_n(n), rhs))
        path = sum(v for (m, nn), v in table.path_abs.items() if nn == n)
        checks.append(BoundCheck(f"pi_pathwise_abs_sum[N={n}]", path, rhs))
    F_tot = J_tot = H_tot = 0.0
    F_rhs = J_rhs = H_rhs = 0.0
    for n in range(1, table.n_max + 1):
        f = sum(v for (m, nn), v in table.F.items() if nn == n)
        rhs = kr * eps / delta * G if n == 1 else kr / delta * G * a ** (n - 1)
        checks.append(BoundCheck(f"F[N={n}]", f, rhs))
        F_tot, F_rhs = F_tot + f, F_rhs + rhs
        for k in range(1, n + 1):
            j = sum(v for (m, nn, kk), v in table.J.items() if nn == n and kk == k)
            rhs = kr / delta ** 2 * (G0 - delta) if n == 1 else kr / delta * G * a ** (n - 1)
            checks.append(BoundCheck(f"J[N={n},k={k}]", j, rhs))
            J_tot, J_rhs = J_tot + j, J_rhs + rhs
            h = sum(v for (m, nn, kk), v in table.H.items() if nn == n and kk == k)
            if k == n:
                rhs = kr * a ** n
            else:
                rhs = 2 * kr * eps ** 2 / delta ** 4 * G * G3 * a ** (n - 2)
            checks.append(BoundCheck(f"H[N={n},k={k}]", h, rhs))
            H_tot, H_rhs = H_tot + h, H_rhs + rhs
    # the derivative-part sums are each dominated by their assembled quantity
    for n in range(1, table.n_max + 1):
        parts = [0.0, 0.0, 0.0]
        for (m, nn), vecs in table.deriv.part_drift_sums.items():
            if nn == n:
                for i in range(3):
                    parts[i] += abs(float(vecs[i][0]))
        f = sum(v for (m, nn), v in table.F.items() if nn == n)
        h = sum(v for (m, nn, k), v in table.H.items() if nn == n)
        j = sum(v for (m, nn, k), v in table.J.items() if nn == n)
        checks.append(BoundCheck(f"phi_part1<=F[N={n}]", parts[0], f))
        checks.append(BoundCheck(f"phi_part2<=H[N={n}]", parts[1], h))
        checks.append(BoundCheck(f"phi_part3<=J[N={n}]", parts[2], j))
    per_m: Dict[int, float] = {}
    for (m, n), vec in table.deriv.drift_sums.items():
        per_m[m] = per_m.get(m, 0.0) + abs(float(vec[0]))
    total = sum(per_m.values())
    checks.append(BoundCheck("derivative_series<kappa*rho", total, kr * (1 - 1e-12)))
    tail = {m0: sum(v for m, v in per_m.items() if m >= m0) for m0 in range(2, table.m_max + 1)}
    assembled = {"F": F_tot, "F_rhs": F_rhs, "J": J_tot, "J_rhs": J_rhs, "H": H_tot, "H_rhs": H_rhs}
    return BoundReport(checks, a, G, G2, G3, G0, table.max_abs_delta_sum, eps, total, kr, assembled, tail)


def drift_difference_check(spec: EnvironmentSpec, pairs: int = 10_000, seed: int = 0,
                      max_len: int = 6) -> Tuple[int, int, List[str]]:
    """Exact check of the drift-difference bounds on random history pairs.

    Both pieces are sampled step by step from the annealed kernel so every
    pair is feasible.  Returns (checked, revisiting, failures).
    """
    import numpy as np

    from .lattice import PathHistory

    spec = spec.exact()
    model = AnnealedModel(spec)
    rng = np.random.default_rng(seed)
    rho, kr = spec.rho, spec.kappa * spec.rho
    d = spec.d
    fails: List[str] = []
    revisits = 0
    for i in range(pairs):
        m = int(rng.integers(1, max_len + 1))
        n = int(rng.integers(0, max_len + 1))
        full = PathHistory((0,) * d)
        for _ in range(m + n):
            p = model.kernel(full)
            # favour backtracking so that revisits are common
            if full.steps and p[full.steps[-1] ^ 1] > 0 and rng.random() < 0.5:
                full.push(full.steps[-1] ^ 1)
                continue
            w = np.array([float(v) for v in p])
            w = np.where(w > 0, np.maximum(w, 0.05), 0.0)
            full.push(int(rng.choice(2 * d, p=w / w.sum())))
        prefix = PathHistory(full.origin, full.steps[:m])
        suffix = PathHistory(prefix.end, full.steps[m:])
        x = suffix.end
        inside = prefix.departed_from(x)
        revisits += inside
        val = model.drift_difference(prefix, suffix)
        dval = model.drift_difference_dbeta(prefix, suffix)
        if abs(val) > (rho if inside else 0) or abs(dval) > (kr if inside else 0):
            fails.append(f"pair {i}: steps={full.steps} m={m} value={val} dbeta={dval}")
    return pairs, revisits, fails
