"""Annealed (environment-averaged) conditional transition kernels.

Under the annealed law the walk is self-interacting: the kernel used at a
site depends on the departures already made from it.  For an i.i.d. static
environment the dependence is only through the per-direction departure
counts at the current site, so

    p(u | counts) = E[w(u) prod_v w(v)^c_v] / E[prod_v w(v)^c_v]

with ``w`` one draw of the single-site kernel.  Since the law of ``w`` is
finite and its atom probabilities are affine in ``beta``, the beta-derivative
is exact as well.
"""
from __future__ import annotations

import itertools
from typing import Dict, List, Optional, Sequence, Tuple

from .environment import EnvironmentSpec, enumerate_support
from .lattice import PathHistory, Site, add_step, concat, step_axis


class ZeroProbabilityHistory(ValueError):
    """The conditioning history has probability zero under the annealed law."""


class AnnealedModel:
    """Moment-ratio kernels for one environment spec, with a count-keyed cache.

    Directions whose mass is the same for every atom of the single-site law
    carry no information about the environment; they are dropped from the
    cache key (they cancel in the ratio) unless that constant mass is zero.
    """

    def __init__(self, spec: EnvironmentSpec):
        self.spec = spec
        self.n = 2 * spec.d
        reals = enumerate_support(spec)
        self.kernels = [r.kernel for r in reals]
        self.probs = [r.probability for r in reals]
        self.dprobs = [r.dprob for r in reals]
        self.zero = spec.beta * 0
        informative, dead = [], []
        for u in range(self.n):
            vals = {k[u] for k in self.kernels}
            if len(vals) > 1:
                informative.append(u)
            elif vals == {0}:
                dead.append(u)
        self.informative = tuple(informative)
        self.dead = frozenset(dead)
        self._pos = {u: i for i, u in enumerate(self.informative)}
        self._cache: Dict[Tuple[int, ...], Tuple[tuple, tuple]] = {}
        self._moment_cache: Dict[Tuple[int, ...], object] = {}
        self.s1 = spec.nu1.support
        self.s2 = spec.nu2.support
        self.vd_star = frozenset(range(2 * spec.dims.d_star))

    # -- keys -------------------------------------------------------------
    def reduce(self, counts: Sequence[int]) -> Tuple[int, ...]:
        """Cache key for a full per-direction count vector."""
        for u in self.dead:
            if counts[u]:
                raise ZeroProbabilityHistory(f"departure along a direction of zero mass ({u})")
        return tuple(counts[u] for u in self.informative)

    def is_informative(self, u: int) -> bool:
        return u in self._pos

    def key_index(self, u: int) -> int:
        return self._pos[u]

    # -- moments ----------------------------------------------------------
    def moment(self, counts: Sequence[int]):
        """``E[prod_u w(u)^c_u]`` over the single-site law."""
        key = tuple(counts)
        hit = self._moment_cache.get(key)
        if hit is not None:
            return hit
        total = self.zero
        for kern, p in zip(self.kernels, self.probs):
            w = p
            for u, c in enumerate(key):
                if c:
                    w = w * kern[u] ** c
            total += w
        self._moment_cache[key] = total
        return total

    def kernel_from_key(self, key: Tuple[int, ...]) -> Tuple[tuple, tuple]:
        """(kernel, d/dbeta kernel) for a reduced count key."""
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        zero = self.zero
        weights, dweights = [], []
        for kern, p, dp in zip(self.kernels, self.probs, self.dprobs):
            f = 1
            for u, c in zip(self.informative, key):
                if c:
                    f = f * kern[u] ** c
            weights.append(p * f)
            dweights.append(dp * f)
        s = sum(weights, zero)
        if s == 0:
            raise ZeroProbabilityHistory(f"history with counts {key} has zero annealed probability")
        ds = sum(dweights, zero)
        p_out, dp_out = [], []
        for u in range(self.n):
            num = sum((w * k[u] for w, k in zip(weights, self.kernels)), zero)
            dnum = sum((w * k[u] for w, k in zip(dweights, self.kernels)), zero)
            pu = num / s
            p_out.append(pu)
            dp_out.append(dnum / s - pu * ds / s)
        out = (tuple(p_out), tuple(dp_out))
        self._cache[key] = out
        return out

    def kernel_counts(self, counts: Sequence[int]) -> tuple:
        return self.kernel_from_key(self.reduce(counts))[0]

    def dkernel_counts(self, counts: Sequence[int]) -> tuple:
        return self.kernel_from_key(self.reduce(counts))[1]

    # -- path API ---------------------------------------------------------
    def kernel(self, h: PathHistory, at: Optional[Site] = None) -> tuple:
        """Annealed kernel at ``at`` (default: the path's endpoint)."""
        at = h.end if at is None else tuple(at)
        if self.moment(h.counts_at(at)) == 0:
            raise ZeroProbabilityHistory(f"no environment at {at} is compatible with the history")
        return self.kernel_counts(h.counts_at(at))

    def kernel_dbeta(self, h: PathHistory, at: Optional[Site] = None) -> tuple:
        at = h.end if at is None else tuple(at)
        if self.moment(h.counts_at(at)) == 0:
            raise ZeroProbabilityHistory(f"no environment at {at} is compatible with the history")
        return self.dkernel_counts(h.counts_at(at))

    def kernel_closed(self, counts: Sequence[int], u: int):
        """Three-case closed form, valid for ``u`` in the support of nu1 or nu2."""
        if u not in self.s1 and u not in self.s2:
            raise ValueError("closed form only covers steps in supp(nu1) or supp(nu2)")
        spec = self.spec
        l1 = sum(counts[v] for v in self.s1)
        l2 = sum(counts[v] for v in self.s2)
        lstar = sum(counts[v] for v in self.vd_star)
        fresh = lstar == 0
        mu1 = spec.kappa * (1 - spec.beta)
        mu2 = spec.kappa * spec.beta
        return (spec.nu1[u] * ((1 if l1 > 0 else 0) + (mu1 if fresh else 0))
                + spec.nu2[u] * ((1 if l2 > 0 else 0) + (mu2 if fresh else 0)))

    def kernel_dbeta_closed(self, counts: Sequence[int], u: int):
        if u not in self.s1 and u not in self.s2:
            return self.zero
        lstar = sum(counts[v] for v in self.vd_star)
        if lstar:
            return self.zero
        return self.spec.kappa * (self.spec.nu2[u] - self.spec.nu1[u])

    def delta(self, long_hist: PathHistory, short_hist: PathHistory, u: int):
        """Kernel difference ``p^{long}(u) - p^{short}(u)`` at the common endpoint."""
        if long_hist.end != short_hist.end:
            raise ValueError("histories must end at the same site")
        return self.kernel(long_hist)[u] - self.kernel(short_hist)[u]

    def delta_dbeta(self, long_hist: PathHistory, short_hist: PathHistory, u: int):
        return self.kernel_dbeta(long_hist)[u] - self.kernel_dbeta(short_hist)[u]

    def drift_difference(self, prefix: PathHistory, suffix: PathHistory):
        """First-coordinate drift of ``p^{suffix} - p^{prefix o suffix}`` at the endpoint."""
        long_hist = concat(prefix, suffix)
        ps, pl = self.kernel(suffix), self.kernel(long_hist)
        return (ps[0] - pl[0]) - (ps[1] - pl[1])

    def drift_difference_dbeta(self, prefix: PathHistory, suffix: PathHistory):
        long_hist = concat(prefix, suffix)
        ps, pl = self.kernel_dbeta(suffix), self.kernel_dbeta(long_hist)
        return (ps[0] - pl[0]) - (ps[1] - pl[1])

    def path_probability(self, h: PathHistory):
        """``P_o(X_[0,n] = h)`` as a product of per-site moments."""
        out = self.zero + 1
        for x, stats in h.site_stats.items():
            out *= self.moment(stats)
        return out

    def chain_probability(self, h: PathHistory):
        """The same probability via the chain rule of conditional kernels."""
        scratch = PathHistory(h.origin)
        out = self.zero + 1
        for k in h.steps:
            p = self.kernel_counts(scratch.counts_at(scratch.end))[k]
            out *= p
            if p == 0:
                return out
            scratch.push(k)
        return out

    def one_step_mean(self) -> List:
        """``E_o[X_1]`` coordinate-wise."""
        p = self.kernel_counts((0,) * self.n)
        return [p[2 * a] - p[2 * a + 1] for a in range(self.spec.d)]

    def one_step_mean_dbeta(self) -> List:
        dp = self.dkernel_counts((0,) * self.n)
        return [dp[2 * a] - dp[2 * a + 1] for a in range(self.spec.d)]


def annealed_path_law(model: AnnealedModel, horizon: int) -> Dict[Tuple[int, ...], object]:
    """Exact law of the first ``horizon`` steps via conditional kernels."""
    out: Dict[Tuple[int, ...], object] = {}
    h = PathHistory((0,) * model.spec.d)

    def rec(w):
        if h.length == horizon:
            out[tuple(h.steps)] = w
            return
        p = model.kernel_counts(h.counts_at(h.end))
        for u, pu in enumerate(p):
            if pu != 0:
                h.push(u)
                rec(w * pu)
                h.pop()

    rec(model.zero + 1)
    return out


def quenched_average_path_law(spec: EnvironmentSpec, horizon: int) -> Dict[Tuple[int, ...], object]:
    """Law of the first ``horizon`` steps by averaging quenched laws over every
    joint assignment of site realizations.  Independent of :class:`AnnealedModel`;
    exponential in the number of visited sites, so only for small horizons."""
    reals = enumerate_support(spec)
    d = spec.d
    zero = spec.beta * 0
    out: Dict[Tuple[int, ...], object] = {}
    for steps in itertools.product(range(2 * d), repeat=horizon):
        sites: List[Site] = [(0,) * d]
        for k in steps:
            sites.append(add_step(sites[-1], k))
        visited = sorted(set(sites[:-1]))
        index = {x: i for i, x in enumerate(visited)}
        total = zero
        for assign in itertools.product(range(len(reals)), repeat=len(visited)):
            w = zero + 1
            for i in assign:
                w *= reals[i].probability
                if w == 0:
                    break
            if w == 0:
                continue
            for x, k in zip(sites, steps):
                w *= reals[assign[index[x]]].kernel[k]
                if w == 0:
                    break
            total += w
        if total != 0:
            out[steps] = total
    return out


def total_variation(a: Dict, b: Dict) -> float:
    keys = set(a) | set(b)
    return 0.5 * float(sum(abs(a.get(k, 0) - b.get(k, 0)) for k in keys))


def history_from_steps(d: int, steps: Sequence[int], start: Optional[Site] = None) -> PathHistory:
    return PathHistory(tuple(start) if start is not None else (0,) * d, list(steps))


def first_axis_drift(vec: Sequence) -> object:
    """``sum_u u^[1] v(u)`` for a per-direction vector ``v``."""
    return vec[0] - vec[1]


def q_step_mass(spec: EnvironmentSpec, kernel: Sequence) -> object:
    return sum((kernel[u] for u in range(2 * spec.d) if step_axis(u) >= spec.dims.d0), spec.beta * 0)
