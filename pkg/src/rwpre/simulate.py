"""Monte Carlo walkers, cut-time detection and speed estimators."""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from numba.core.errors import NumbaTypeSafetyWarning

from .environment import CookieLaw, EnvironmentSpec, SiteLaw, enumerate_support

warnings.filterwarnings("ignore", category=NumbaTypeSafetyWarning)

from . import _kernels  # noqa: E402

DEFAULT_GUARD = 200
Z95 = 1.959963984540054


class TooShort(ValueError):
    pass


class NoCutsDetected(RuntimeError):
    pass


# -- environment tables for the kernels -------------------------------------

@dataclass
class WalkTables:
    d: int
    d1: int
    kern_cum: np.ndarray  # (layers, atoms, 2d)
    atom_cum: np.ndarray  # (layers, atoms)
    n_layers: int  # number of cookie layers before the static one
    kernels: np.ndarray  # static atoms, for the annealed walker
    probs: np.ndarray


def _atoms(law) -> tuple:
    if isinstance(law, EnvironmentSpec):
        reals = enumerate_support(law)
        return ([[float(v) for v in r.kernel] for r in reals], [float(r.probability) for r in reals])
    reals = law.realizations()
    return ([[float(v) for v in r.kernel] for r in reals], [float(r.probability) for r in reals])


def walk_tables(law) -> WalkTables:
    """Cumulative kernel/atom tables for a spec, a raw site law or a cookie law."""
    if isinstance(law, CookieLaw):
        layers = [([list(k) for k, _ in layer], [p for _, p in layer]) for layer in law.stack]
        layers.append(_atoms(law.base))
        d, d1, n_layers = law.d, law.d1, len(law.stack)
    else:
        layers = [_atoms(law)]
        d = law.d
        d1 = law.dims.d1 if isinstance(law, EnvironmentSpec) else law.d1
        n_layers = 0
    n_atoms = max(len(p) for _, p in layers)
    kc = np.zeros((len(layers), n_atoms, 2 * d))
    ac = np.ones((len(layers), n_atoms))
    for l, (ks, ps) in enumerate(layers):
        ps = np.asarray(ps, dtype=float)
        ps = ps / ps.sum()
        ac[l, :len(ps)] = np.cumsum(ps)
        for a, k in enumerate(ks):
            k = np.asarray(k, dtype=float)
            kc[l, a] = np.cumsum(k / k.sum())
        kc[l, len(ks):] = kc[l, len(ks) - 1]
    base_k, base_p = layers[-1]
    return WalkTables(d, d1, kc, ac, n_layers, np.asarray(base_k, dtype=float),
                      np.asarray(base_p, dtype=float) / np.sum(base_p))


# -- trajectories -----------------------------------------------------------

@dataclass
class Trajectory:
    """Steps of one walk; positions and q-step times derived on demand."""

    d: int
    d1: int
    steps: np.ndarray  # int8 step indices
    seed: int
    replica: int

    @property
    def n(self) -> int:
        return len(self.steps)

    def step_vectors(self) -> np.ndarray:
        vec = np.zeros((2 * self.d, self.d), dtype=np.int32)
        for k in range(2 * self.d):
            vec[k, k // 2] = 1 if k % 2 == 0 else -1
        return vec

    def positions(self) -> np.ndarray:
        out = np.zeros((self.n + 1, self.d), dtype=np.int64)
        np.cumsum(self.step_vectors()[self.steps], axis=0, out=out[1:])
        return out

    @property
    def end(self) -> np.ndarray:
        return self.positions()[-1]

    def q_mask(self) -> np.ndarray:
        return (self.steps.astype(np.int64) // 2) >= self.d - self.d1

    def tau(self) -> np.ndarray:
        """``tau_0 = 0`` and the times just after each q-step."""
        return np.concatenate([[0], np.flatnonzero(self.q_mask()) + 1])

    def y_path(self) -> np.ndarray:
        """Projected walk ``Y_0, Y_1, ...`` indexed by q-step count."""
        vec = self.step_vectors()[:, self.d - self.d1:]
        qs = self.steps[self.q_mask()]
        out = np.zeros((len(qs) + 1, self.d1), dtype=np.int64)
        np.cumsum(vec[qs], axis=0, out=out[1:])
        return out


def _key(seed: int, rep: int):
    return np.uint64(_kernels.replica_key(np.uint64(seed % (1 << 64)), np.uint64(rep)))


def quenched_walk(law, seed: int, n: int, replica: int = 0, tables: Optional[WalkTables] = None) -> Trajectory:
    t = tables or walk_tables(law)
    steps = np.zeros(n, dtype=np.int8)
    _kernels.quenched_walk(n, _key(seed, replica), t.kern_cum, t.atom_cum, t.n_layers, True, steps)
    return Trajectory(t.d, t.d1, steps, seed, replica)


def annealed_walk(law, seed: int, n: int, replica: int = 0, tables: Optional[WalkTables] = None) -> Trajectory:
    if isinstance(law, CookieLaw):
        raise TypeError("annealed sampling is only defined for static environments")
    t = tables or walk_tables(law)
    steps = np.zeros(n, dtype=np.int8)
    _kernels.annealed_walk(n, _key(seed, replica), t.kernels, t.probs, True, steps)
    return Trajectory(t.d, t.d1, steps, seed, replica)


def quenched_endpoint(tables: WalkTables, seed: int, n: int, replica: int) -> np.ndarray:
    dummy = np.zeros(1, dtype=np.int8)
    return _kernels.quenched_walk(n, _key(seed, replica), tables.kern_cum, tables.atom_cum,
                                  tables.n_layers, False, dummy)


# -- cut times --------------------------------------------------------------

@dataclass
class CutRecord:
    cuts: np.ndarray  # accepted cut indices (in q-step time)
    guard: int
    window: int  # number of q-steps in the trajectory
    dX: np.ndarray  # (blocks, d) displacement between consecutive cuts
    dtau: np.ndarray  # walk time between consecutive cuts
    dq: np.ndarray  # q-steps between consecutive cuts
    sparse: bool = False

    @property
    def n_cuts(self) -> int:
        return len(self.cuts)

    @property
    def cuts_per_kstep(self) -> float:
        usable = self.window - 2 * self.guard
        return 1000.0 * self.n_cuts / usable if usable > 0 else 0.0

    @property
    def mean_dtau(self) -> float:
        """Mean walk time per q-step over the blocks."""
        q = self.dq.sum()
        return float(self.dtau.sum() / q) if q > 0 else math.nan


def _site_ids(y: np.ndarray) -> np.ndarray:
    lo = y.min(axis=0)
    span = y.max(axis=0) - lo + 1
    bits = [max(1, int(s).bit_length()) for s in span]
    if sum(bits) <= 62:
        key = np.zeros(len(y), dtype=np.int64)
        for a, b in enumerate(bits):
            key = (key << b) | (y[:, a] - lo[a])
        _, inv = np.unique(key, return_inverse=True)
    else:
        _, inv = np.unique(y, axis=0, return_inverse=True)
    return inv.reshape(-1)


def cut_indices(y: np.ndarray) -> np.ndarray:
    """All ``n >= 1`` with ``{Y_0..Y_{n-1}}`` disjoint from ``{Y_n..Y_W}``."""
    inv = _site_ids(y)
    last = np.full(inv.max() + 1, -1, dtype=np.int64)
    np.maximum.at(last, inv, np.arange(len(inv)))
    reach = np.maximum.accumulate(last[inv])
    n = np.arange(1, len(inv))
    return n[reach[:-1] < n]


def cut_times(traj: Trajectory, guard: int = DEFAULT_GUARD) -> CutRecord:
    """Cut times of the projected walk inside the guarded window.

    A cut ``n`` is kept only when it lies at least ``guard`` q-steps from
    both ends, which limits the bias from the unseen past and future.
    """
    y = traj.y_path()
    W = len(y) - 1
    if traj.d1 == 0 or W < 2 * guard:
        raise TooShort(f"{W} q-steps; need at least {2 * guard}")
    cuts = cut_indices(y)
    cuts = cuts[(cuts >= guard) & (cuts <= W - guard)]
    tau = traj.tau()
    pos = traj.positions()
    xs = pos[tau[cuts]]
    return CutRecord(cuts, guard, W, np.diff(xs, axis=0), np.diff(tau[cuts]), np.diff(cuts),
                     sparse=len(cuts) < 2)


# -- speed estimates --------------------------------------------------------

@dataclass
class SpeedEstimate:
    point: np.ndarray
    ci_halfwidth: np.ndarray
    method: str
    n: int
    reps: int
    seed: int
    stderr: np.ndarray = field(default=None)
    samples: Optional[np.ndarray] = field(default=None, repr=False)
    cuts_per_kstep: float = math.nan
    mean_dtau: float = math.nan
    dtau_stderr: float = math.nan

    def agrees_with(self, other: "SpeedEstimate", sigmas: float = 3.0, coord=None) -> bool:
        se = np.sqrt(self.stderr ** 2 + other.stderr ** 2)
        diff = np.abs(self.point - other.point)
        ok = diff <= sigmas * se + 1e-15
        return bool(ok.all() if coord is None else ok[coord])


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        threads = int(os.environ.get("RWPRE_THREADS", "1"))
    return max(1, int(threads))


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _summarize(samples: np.ndarray, method, n, reps, seed) -> SpeedEstimate:
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(len(samples)) if len(samples) > 1 else np.full(samples.shape[1], math.inf)
    return SpeedEstimate(mean, Z95 * se, method, n, reps, seed, se, samples)


def speed_estimate(law, n: int, reps: int, seed: int, method: str = "naive", *,
                   guard: int = DEFAULT_GUARD, threads: Optional[int] = None,
                   walker: str = "quenched") -> SpeedEstimate:
    """Across-replica speed estimate with a normal-theory 95% interval.

    ``naive`` uses ``X_n / n``.  ``regeneration`` uses, per replica, the
    displacement over walk time between the first and last detected cut.
    """
    n = int(n)
    threads = resolve_threads(threads)
    tables = walk_tables(law)
    if method == "naive" and walker == "quenched":
        ends = _map(lambda r: quenched_endpoint(tables, seed, n, r), range(reps), threads)
        return _summarize(np.asarray(ends, dtype=float) / n, method, n, reps, seed)
    if method not in ("naive", "regeneration"):
        raise ValueError(f"unknown method {method!r}")
    walk = quenched_walk if walker == "quenched" else annealed_walk

    def one(r):
        traj = walk(law, seed, n, r, tables)
        if method == "naive":
            return traj.end / n, None
        rec = cut_times(traj, guard)
        if rec.n_cuts < 2:
            raise NoCutsDetected(f"replica {r}: {rec.n_cuts} cuts in {rec.window} q-steps")
        return rec.dX.sum(axis=0) / rec.dtau.sum(), rec

    out = _map(one, range(reps), threads)
    est = _summarize(np.array([v for v, _ in out], dtype=float), method, n, reps, seed)
    recs = [r for _, r in out if r is not None]
    if recs:
        est.cuts_per_kstep = float(np.mean([r.cuts_per_kstep for r in recs]))
        per = np.array([r.mean_dtau for r in recs])
        est.mean_dtau = float(per.mean())
        est.dtau_stderr = float(per.std(ddof=1) / math.sqrt(len(per))) if len(per) > 1 else math.inf
    return est


def sweep(spec: EnvironmentSpec, beta_grid: Sequence[float], n: int, reps: int, seed: int,
          method: str = "naive", **kw) -> List[SpeedEstimate]:
    """Speed estimates along a beta grid with common random numbers."""
    return [speed_estimate(spec.with_beta(b), n, reps, seed, method, **kw) for b in beta_grid]


def first_step_counts(law, seed: int, walks: int) -> np.ndarray:
    """Counts of the first step over ``walks`` independent quenched walks."""
    tables = walk_tables(law)
    counts = np.zeros(2 * tables.d, dtype=np.int64)
    for r in range(walks):
        end = quenched_endpoint(tables, seed, 1, r)
        k = int(np.flatnonzero(end)[0])
        counts[2 * k + (0 if end[k] > 0 else 1)] += 1
    return counts
