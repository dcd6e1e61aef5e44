"""Lattice geometry: unit steps, sites, nearest-neighbour paths and their
per-site departure statistics.

A step is encoded as an integer index ``k`` in ``0..2d-1``: axis ``k // 2``
(0-based) and sign ``+1`` for even ``k``, ``-1`` for odd ``k``.  The public
string form is a signed 1-based axis, e.g. ``"+3"`` for ``+e_3``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

Site = Tuple[int, ...]


class MismatchedJunction(ValueError):
    """Raised when a suffix path does not start where the prefix ends."""


@dataclass(frozen=True)
class Dimensions:
    d0: int
    d1: int
    d_star: int

    def __post_init__(self):
        if self.d1 < 1:
            raise ValueError(f"d1 must be >= 1, got {self.d1}")
        if not 1 <= self.d_star <= self.d0:
            raise ValueError(f"need 1 <= d_star <= d0, got d_star={self.d_star}, d0={self.d0}")

    @property
    def d(self) -> int:
        return self.d0 + self.d1

    @property
    def n_steps(self) -> int:
        return 2 * self.d


def step_index(axis: int, sign: int) -> int:
    """Index of the unit step ``sign * e_{axis+1}`` (``axis`` is 0-based)."""
    return 2 * axis + (0 if sign > 0 else 1)


def step_axis(k: int) -> int:
    return k // 2


def step_sign(k: int) -> int:
    return 1 if k % 2 == 0 else -1


def opposite(k: int) -> int:
    return k ^ 1


def step_vector(k: int, d: int) -> Site:
    v = [0] * d
    v[k // 2] = step_sign(k)
    return tuple(v)


def parse_step(s: str) -> int:
    """Parse a signed axis string such as ``"+1"`` or ``"-3"``."""
    s = s.strip()
    if not s or s[0] not in "+-":
        raise ValueError(f"direction must look like '+3' or '-1', got {s!r}")
    axis = int(s[1:])
    if axis < 1:
        raise ValueError(f"axis must be >= 1 in {s!r}")
    return step_index(axis - 1, 1 if s[0] == "+" else -1)


def format_step(k: int) -> str:
    return f"{'+' if k % 2 == 0 else '-'}{k // 2 + 1}"


def add_step(x: Site, k: int) -> Site:
    a = k >> 1
    return x[:a] + (x[a] + (1 - 2 * (k & 1)),) + x[a + 1:]


def origin(d: int) -> Site:
    return (0,) * d


def project_d1(x: Site, d1: int) -> Site:
    """Keep the last ``d1`` coordinates of a site."""
    return tuple(x[len(x) - d1:])


def l1_distance(x: Site, y: Site) -> int:
    return sum(abs(a - b) for a, b in zip(x, y))


def is_q_step(k: int, dims: Dimensions) -> bool:
    """True when the step moves one of the last ``d1`` coordinates."""
    return k // 2 >= dims.d0


@dataclass
class PathHistory:
    """Nearest-neighbour path ``x_0, ..., x_n`` stored as an origin plus steps.

    ``site_stats`` maps each site to its per-direction count of departures
    and is kept in sync by :meth:`push` / :meth:`pop`.
    """

    origin: Site
    steps: List[int] = field(default_factory=list)
    site_stats: Dict[Site, List[int]] = field(default_factory=dict, repr=False)
    _sites: List[Site] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.origin = tuple(self.origin)
        steps, self.steps = list(self.steps), []
        self.site_stats = {}
        self._sites = [self.origin]
        for k in steps:
            self.push(k)

    @classmethod
    def from_sites(cls, sites: Sequence[Sequence[int]]) -> "PathHistory":
        sites = [tuple(s) for s in sites]
        d = len(sites[0])
        steps = []
        for a, b in zip(sites, sites[1:]):
            diff = [j - i for i, j in zip(a, b)]
            nz = [i for i, v in enumerate(diff) if v != 0]
            if len(nz) != 1 or abs(diff[nz[0]]) != 1:
                raise ValueError(f"{a} -> {b} is not a nearest-neighbour step")
            steps.append(step_index(nz[0], diff[nz[0]]))
        return cls(sites[0][:d], steps)

    @property
    def d(self) -> int:
        return len(self.origin)

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def end(self) -> Site:
        return self._sites[-1]

    @property
    def sites(self) -> List[Site]:
        return list(self._sites)

    def push(self, k: int) -> None:
        x = self._sites[-1]
        stats = self.site_stats.get(x)
        if stats is None:
            stats = self.site_stats[x] = [0] * (2 * self.d)
        stats[k] += 1
        self.steps.append(k)
        self._sites.append(add_step(x, k))

    def pop(self) -> int:
        k = self.steps.pop()
        self._sites.pop()
        x = self._sites[-1]
        stats = self.site_stats[x]
        stats[k] -= 1
        if not any(stats):
            del self.site_stats[x]
        return k

    def counts_at(self, x: Site) -> Tuple[int, ...]:
        stats = self.site_stats.get(tuple(x))
        return tuple(stats) if stats is not None else (0,) * (2 * self.d)

    def departed_from(self, x: Site) -> bool:
        return tuple(x) in self.site_stats

    def copy(self) -> "PathHistory":
        return PathHistory(self.origin, self.steps)

    def recount(self) -> Dict[Site, List[int]]:
        """Site statistics rebuilt from scratch (for consistency checks)."""
        out: Dict[Site, List[int]] = {}
        for x, k in zip(self._sites, self.steps):
            out.setdefault(x, [0] * (2 * self.d))[k] += 1
        return out

    def __eq__(self, other):
        if not isinstance(other, PathHistory):
            return NotImplemented
        return self.origin == other.origin and self.steps == other.steps

    def __len__(self):
        return len(self.steps)


def concat(prefix: PathHistory, suffix: PathHistory) -> PathHistory:
    """Concatenate two paths; ``suffix`` must start at ``prefix``'s endpoint."""
    if suffix.origin != prefix.end:
        raise MismatchedJunction(f"suffix starts at {suffix.origin}, prefix ends at {prefix.end}")
    return PathHistory(prefix.origin, prefix.steps + suffix.steps)


def edge_local_time(h: PathHistory, at: Site, dirs: Iterable[int]) -> int:
    """Number of departures from ``at`` along any step in ``dirs``."""
    stats = h.site_stats.get(tuple(at))
    if stats is None:
        return 0
    return sum(stats[k] for k in set(dirs))


def project_path(h: PathHistory, d1: int) -> List[Site]:
    """Sites of ``h`` projected onto the last ``d1`` coordinates."""
    return [project_d1(x, d1) for x in h.sites]
