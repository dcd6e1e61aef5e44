"""numba inner loops for the Monte Carlo walkers.

Randomness is counter based: every draw is a hash of (replica key, purpose,
site or time, visit), so the environment at a site does not depend on the
order in which sites are discovered and replicas are independent of how
they are scheduled across threads.
"""
import numpy as np
from numba import njit, types
from numba.typed import Dict

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SITE_SALT = np.uint64(0xD1B54A32D192ED03)
_STEP_SALT = np.uint64(0x8CB92BA72F3D8DD7)
_OFFSET = 1 << 30


@njit(cache=True, inline="always")
def mix(z):
    z = (z + _GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def to_unit(z):
    return np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def replica_key(seed, rep):
    return mix(mix(np.uint64(seed)) ^ (np.uint64(rep) * _GOLDEN))


@njit(cache=True, inline="always")
def site_hash(key, pos):
    h = mix(key ^ _SITE_SALT)
    for c in pos:
        h = mix(h ^ np.uint64(c + _OFFSET))
    return h


@njit(cache=True, inline="always")
def pick(cum, u):
    n = cum.shape[0]
    for i in range(n - 1):
        if u < cum[i]:
            return i
    return n - 1


@njit(cache=True, nogil=True)
def quenched_walk(n, key, kern_cum, atom_cum, n_layers, record, steps):
    """Walk ``n`` steps in a lazily sampled environment.

    ``kern_cum[l, a]`` is the cumulative kernel of atom ``a`` in layer ``l``
    and ``atom_cum[l]`` the cumulative atom law.  Layers ``0..n_layers-1``
    are per-visit cookies, the last layer is the static law used from then
    on.  Returns the endpoint; steps are written to ``steps`` if ``record``.
    """
    d = kern_cum.shape[2] // 2
    pos = np.zeros(d, dtype=np.int64)
    static = kern_cum.shape[0] - 1
    visits = Dict.empty(key_type=types.uint64, value_type=types.int64)
    for t in range(n):
        h = site_hash(key, pos)
        layer = static
        visit = 0
        if n_layers > 0:
            if h in visits:
                visit = visits[h]
            visits[h] = visit + 1
            if visit < n_layers:
                layer = visit
        if layer == static:
            a = pick(atom_cum[static], to_unit(mix(h)))
        else:
            a = pick(atom_cum[layer], to_unit(mix(h ^ (np.uint64(visit + 1) * _STEP_SALT))))
        u = to_unit(mix(key ^ _STEP_SALT ^ mix(np.uint64(t))))
        k = pick(kern_cum[layer, a], u)
        if record:
            steps[t] = k
        ax = k >> 1
        if k & 1:
            pos[ax] -= 1
        else:
            pos[ax] += 1
    return pos


@njit(cache=True, nogil=True)
def annealed_walk(n, key, kernels, probs, record, steps):
    """Walk ``n`` steps from the environment-averaged (self-interacting) law.

    Each visited site carries the posterior weights of the single-site atoms
    given the departures made from it so far.
    """
    n_atoms, nd = kernels.shape
    d = nd // 2
    pos = np.zeros(d, dtype=np.int64)
    index = Dict.empty(key_type=types.uint64, value_type=types.int64)
    weights = np.empty((min(n, 1 << 22) + 1, n_atoms))
    used = 0
    p = np.empty(nd)
    for t in range(n):
        h = site_hash(key, pos)
        row = -1
        if h in index:
            row = index[h]
        else:
            if used == weights.shape[0]:
                grown = np.empty((2 * used, n_atoms))
                grown[:used] = weights[:used]
                weights = grown
            row = used
            used += 1
            index[h] = row
            weights[row] = probs
        w = weights[row]
        s = 0.0
        for i in range(nd):
            acc = 0.0
            for a in range(n_atoms):
                acc += w[a] * kernels[a, i]
            p[i] = acc
            s += acc
        u = to_unit(mix(key ^ _STEP_SALT ^ mix(np.uint64(t)))) * s
        k = nd - 1
        c = 0.0
        for i in range(nd):
            c += p[i]
            if u < c:
                k = i
                break
        norm = 0.0
        for a in range(n_atoms):
            w[a] *= kernels[a, k]
            norm += w[a]
        for a in range(n_atoms):
            w[a] /= norm
        if record:
            steps[t] = k
        ax = k >> 1
        if k & 1:
            pos[ax] -= 1
        else:
            pos[ax] += 1
    return pos
