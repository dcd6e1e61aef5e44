"""Finite-support environment laws for random walks in partially random
environments.

Two kinds of law are supported:

* :class:`EnvironmentSpec` -- the structured family (static part built from
  two disjoint kernels ``nu1``/``nu2`` plus residual kernels, product with a
  random kernel on the remaining axes whose q-projection is ``alpha * q``).
  Everything downstream (annealed kernels, lace coefficients) works with it.
* :class:`SiteLaw` -- a raw list of (kernel, probability) atoms, used for the
  named examples that fall outside the structured family and only feed the
  simulator.

Masses may be floats or :class:`fractions.Fraction` (see :meth:`EnvironmentSpec.exact`).
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .lattice import Dimensions, format_step, parse_step, step_axis, step_sign

TOL = 1e-12
DEFAULT_SUPPORT_CAP = 4096


class SupportTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Kernel:
    """Finitely supported kernel on unit steps; keys are step indices."""

    masses: Mapping[int, Any]

    def __post_init__(self):
        clean = {int(k): v for k, v in dict(self.masses).items() if v != 0}
        for k, v in clean.items():
            if v < 0:
                raise ValueError(f"negative mass {v} on {format_step(k)}")
        object.__setattr__(self, "masses", clean)

    def __getitem__(self, k: int):
        return self.masses.get(k, 0)

    @property
    def total_mass(self):
        return sum(self.masses.values(), 0)

    @property
    def support(self) -> frozenset:
        return frozenset(self.masses)

    def drift(self, axis: int):
        """Mean displacement along ``axis`` (0-based)."""
        return self[2 * axis] - self[2 * axis + 1]

    def map(self, f) -> "Kernel":
        return Kernel({k: f(v) for k, v in self.masses.items()})

    def to_json(self) -> list:
        return [[format_step(k), float(v)] for k, v in sorted(self.masses.items())]

    @classmethod
    def from_json(cls, pairs, num=float) -> "Kernel":
        out: Dict[int, Any] = {}
        for direction, mass in pairs:
            k = parse_step(direction)
            out[k] = out.get(k, 0) + num(mass)
        return cls(out)


def as_fraction(x) -> Fraction:
    """Exact rational for a decimal literal (0.4 -> 2/5, not the binary double)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x))).limit_denominator(10 ** 12)


@dataclass(frozen=True)
class SiteRealization:
    """One atom of the single-site law: a kernel on all ``2d`` steps."""

    kernel: Tuple[Any, ...]
    probability: Any
    dprob: Any = 0  # derivative of ``probability`` in beta


@dataclass(frozen=True)
class EnvironmentSpec:
    dims: Dimensions
    gamma: Any
    kappa: Any
    delta: Any
    beta: Any
    nu1: Kernel
    nu2: Kernel
    q: Kernel
    residual_law: Tuple[Tuple[Kernel, Any], ...] = ()
    tilde_law: Tuple[Tuple[Kernel, Any], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "residual_law", tuple((k, p) for k, p in self.residual_law))
        if not self.tilde_law:
            object.__setattr__(self, "tilde_law", ((self.q_as_tilde(1 - self.gamma), 1),))
        else:
            object.__setattr__(self, "tilde_law", tuple((k, p) for k, p in self.tilde_law))

    @property
    def d(self) -> int:
        return self.dims.d

    @property
    def rho(self):
        return self.nu2.drift(0) - self.nu1.drift(0)

    @property
    def eps_delta(self):
        return 2 * (1 - self.delta)

    @property
    def is_exact(self) -> bool:
        return isinstance(self.beta, Fraction)

    def q_as_tilde(self, alpha) -> Kernel:
        """``alpha * q`` lifted onto the q-axes of ``Z^d``."""
        shift = 2 * self.dims.d0
        return Kernel({k + shift: alpha * v for k, v in self.q.masses.items()})

    def with_beta(self, beta) -> "EnvironmentSpec":
        if self.is_exact:
            beta = as_fraction(beta)
        return replace(self, beta=beta)

    def exact(self) -> "EnvironmentSpec":
        """Same spec with every number converted to an exact rational."""
        f = as_fraction
        conv = lambda k: k.map(f)
        derived = self.tilde_law == ((self.q_as_tilde(1 - self.gamma), 1),)
        return EnvironmentSpec(
            dims=self.dims, gamma=f(self.gamma), kappa=f(self.kappa), delta=f(self.delta),
            beta=f(self.beta), nu1=conv(self.nu1), nu2=conv(self.nu2), q=conv(self.q),
            residual_law=tuple((conv(k), f(p)) for k, p in self.residual_law),
            tilde_law=() if derived else tuple((conv(k), f(p)) for k, p in self.tilde_law),
        )

    def xi_law(self) -> List[Tuple[Kernel, Any, Any]]:
        """Atoms of the static-part law as (kernel, probability, d/dbeta)."""
        out = [
            (self.nu1, self.kappa * (1 - self.beta), -self.kappa),
            (self.nu2, self.kappa * self.beta, self.kappa),
        ]
        out += [(k, p, 0) for k, p in self.residual_law]
        return out

    def realizations(self, cap: int = DEFAULT_SUPPORT_CAP) -> List[SiteRealization]:
        return enumerate_support(self, cap)

    def to_json(self) -> dict:
        return {
            "dims": {"d0": self.dims.d0, "d1": self.dims.d1, "d_star": self.dims.d_star},
            "gamma": float(self.gamma), "kappa": float(self.kappa),
            "delta": float(self.delta), "beta": float(self.beta),
            "nu1": self.nu1.to_json(), "nu2": self.nu2.to_json(),
            "residual": [{"prob": float(p), "kernel": k.to_json()} for k, p in self.residual_law],
            "tilde": [{"prob": float(p), "kernel": k.to_json()} for k, p in self.tilde_law],
            "q": self.q.to_json(),
        }


def spec_from_json(obj: Mapping, exact: bool = False):
    """Build an :class:`EnvironmentSpec` (or a named example law) from JSON."""
    if "example" in obj:
        return example_from_json(obj)
    num = as_fraction if exact else float
    dims = Dimensions(**{k: int(v) for k, v in obj["dims"].items()})
    law = lambda items: tuple((Kernel.from_json(it["kernel"], num), num(it["prob"])) for it in items)
    return EnvironmentSpec(
        dims=dims, gamma=num(obj["gamma"]), kappa=num(obj["kappa"]), delta=num(obj["delta"]),
        beta=num(obj.get("beta", 0.5)),
        nu1=Kernel.from_json(obj["nu1"], num), nu2=Kernel.from_json(obj["nu2"], num),
        q=Kernel.from_json(obj["q"], num),
        residual_law=law(obj.get("residual", [])), tilde_law=law(obj.get("tilde", [])),
    )


def load_spec(path, exact: bool = False):
    with open(path) as fh:
        return spec_from_json(json.load(fh), exact=exact)


def enumerate_support(spec: EnvironmentSpec, cap: int = DEFAULT_SUPPORT_CAP) -> List[SiteRealization]:
    """All atoms of the product law ``xi x tilde`` with their probabilities."""
    xi = spec.xi_law()
    n = len(xi) * len(spec.tilde_law)
    if n > cap:
        raise SupportTooLarge(f"{n} realizations exceed cap {cap}")
    zero = spec.beta * 0
    out = []
    for (kx, px, dpx), (kt, pt) in itertools.product(xi, spec.tilde_law):
        if px == 0 and dpx == 0:
            continue
        kern = [zero] * (2 * spec.d)
        for k, v in kx.masses.items():
            kern[k] += v
        for k, v in kt.masses.items():
            kern[k] += v
        out.append(SiteRealization(tuple(kern), px * pt, dpx * pt))
    return out


# -- validation -------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: List[Check] = field(default_factory=list)
    rho: float = float("nan")
    eps_delta: float = float("nan")

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> List[str]:
        return [c.name for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, name, passed, detail=""):
        self.checks.append(Check(name, bool(passed), detail))

    def lines(self) -> List[str]:
        out = [f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}" for c in self.checks]
        out.append(f"rho={self.rho:.6g} eps_delta={self.eps_delta:.6g}")
        return out


def _close(a, b) -> bool:
    return abs(a - b) <= TOL


def _q_span(q: Kernel, d1: int) -> int:
    vecs = []
    for k in q.support:
        v = np.zeros(d1)
        v[step_axis(k)] = step_sign(k)
        vecs.append(v)
    return int(np.linalg.matrix_rank(np.array(vecs))) if vecs else 0


def validate(spec: EnvironmentSpec) -> ValidationReport:
    """Check the structural assumptions; failures are reported, not raised."""
    r = ValidationReport(rho=float(spec.rho), eps_delta=float(spec.eps_delta))
    dims = spec.dims
    g, kap, dl, b = spec.gamma, spec.kappa, spec.delta, spec.beta

    r.add("parameter_ranges", 0 < g <= 1 and 0 < kap <= 1 and 0 < dl <= 1 and 0 <= b <= 1,
          f"gamma={float(g)}, kappa={float(kap)}, delta={float(dl)}, beta={float(b)}")
    r.add("gamma_plus_delta", g + dl <= 1 + TOL, f"gamma+delta={float(g + dl):.6g}")

    vd_star = {k for k in range(2 * dims.d_star)}
    for name, ker in (("nu1", spec.nu1), ("nu2", spec.nu2)):
        r.add(f"{name}_mass", _close(ker.total_mass, g), f"total={float(ker.total_mass):.6g}")
        r.add(f"{name}_support", ker.support <= vd_star,
              f"support={sorted(format_step(k) for k in ker.support)}")
    s1, s2 = spec.nu1.support, spec.nu2.support
    r.add("disjoint_supports", not (s1 & s2), f"overlap={sorted(format_step(k) for k in s1 & s2)}")
    r.add("rho_positive", spec.rho > 0, f"rho={float(spec.rho):.6g}")

    forbidden = s1 | s2 | {0, 1}
    bad = [i for i, (k, _) in enumerate(spec.residual_law)
           if (k.support & forbidden) or not k.support <= vd_star or not _close(k.total_mass, g)]
    r.add("residual_support", not bad, f"offending residual atoms={bad}")
    rp = sum((p for _, p in spec.residual_law), 0)
    r.add("residual_probability", _close(rp, 1 - kap) and all(p >= 0 for _, p in spec.residual_law),
          f"sum={float(rp):.6g}, expected 1-kappa={float(1 - kap):.6g}")

    q = spec.q
    r.add("q_probability", _close(q.total_mass, 1) and all(step_axis(k) < dims.d1 for k in q.support),
          f"total={float(q.total_mass):.6g}")
    tp = sum((p for _, p in spec.tilde_law), 0)
    r.add("tilde_probability", _close(tp, 1) and all(p > 0 for _, p in spec.tilde_law), f"sum={float(tp):.6g}")
    bad_tilde = []
    shift = 2 * dims.d0
    for i, (k, _) in enumerate(spec.tilde_law):
        ok = _close(k.total_mass, 1 - g) and all(step_axis(s) >= dims.d_star for s in k.support)
        alpha = sum((v for s, v in k.masses.items() if step_axis(s) >= dims.d0), 0)
        ok = ok and alpha >= dl - TOL
        ok = ok and all(_close(k[s + shift], alpha * q[s]) for s in range(2 * dims.d1))
        if not ok:
            bad_tilde.append(i)
    r.add("tilde_projection", not bad_tilde, f"offending tilde atoms={bad_tilde} (need alpha*q on q-axes, alpha>=delta)")

    drift = [q.drift(a) for a in range(dims.d1)]
    span = _q_span(q, dims.d1)
    has_drift = any(abs(x) > TOL for x in drift)
    r.add("cut_times", has_drift or span >= 5,
          f"q drift={'nonzero' if has_drift else 'zero'}, span={span} (sufficient: drift or span>=5)")
    return r


# -- named example laws -----------------------------------------------------

@dataclass(frozen=True)
class SiteLaw:
    """Raw finite-support single-site law on ``V_d``.

    ``d1`` trailing axes are treated as the q-coordinates (0 when the law has
    no such structure); ``paper_example`` marks laws exempt from validation.
    """

    d: int
    atoms: Tuple[Tuple[Tuple[float, ...], float], ...]
    d1: int = 0
    name: str = ""
    paper_example: bool = True

    def realizations(self, cap: int = DEFAULT_SUPPORT_CAP) -> List[SiteRealization]:
        if len(self.atoms) > cap:
            raise SupportTooLarge(f"{len(self.atoms)} realizations exceed cap {cap}")
        return [SiteRealization(tuple(k), p) for k, p in self.atoms if p > 0]


def _kernel_vec(d: int, masses: Mapping[str, float]) -> Tuple[float, ...]:
    v = [0.0] * (2 * d)
    for s, m in masses.items():
        v[parse_step(s)] += m
    return tuple(v)


def build_example_ex1(beta: float) -> SiteLaw:
    """Per-axis independent two-atom law on Z^2: each axis pushes only one way."""
    per_axis = []
    for axis in (1, 2):
        per_axis.append([
            (_kernel_vec(2, {f"+{axis}": 0.5}), beta),
            (_kernel_vec(2, {f"-{axis}": 0.5}), 1 - beta),
        ])
    atoms = []
    for (k1, p1), (k2, p2) in itertools.product(*per_axis):
        atoms.append((tuple(a + b for a, b in zip(k1, k2)), p1 * p2))
    return SiteLaw(2, tuple(atoms), name=f"ex1(beta={beta})")


def build_example_ex2(beta: float) -> SiteLaw:
    """Joint two-atom law on Z^2: both positive or both negative half-steps."""
    atoms = (
        (_kernel_vec(2, {"+1": 0.5, "+2": 0.5}), beta),
        (_kernel_vec(2, {"-1": 0.5, "-2": 0.5}), 1 - beta),
    )
    return SiteLaw(2, atoms, name=f"ex2(beta={beta})")


def build_d2_renewal(p: float) -> SiteLaw:
    """Two-valued Z^2 law with an explicitly computable speed."""
    atoms = (
        (_kernel_vec(2, {"+1": 0.5, "+2": 0.5}), p),
        (_kernel_vec(2, {"-1": 1.0}), 1 - p),
    )
    return SiteLaw(2, atoms, name=f"d2_renewal(p={p})")


def d2_renewal_speed(p: float) -> np.ndarray:
    """Closed-form speed of :func:`build_d2_renewal`."""
    c = p * (2 - p) / (2 + 3 * p - 2 * p ** 2 - p ** 3)
    return c * np.array([3.0, 1.0]) - np.array([1.0, 0.0])


def iid_q_law(q: Sequence[float] | Mapping[str, float], d1: int, name: str = "") -> SiteLaw:
    """Deterministic single-atom law: a plain random walk on Z^{d1} with kernel q."""
    kern = _kernel_vec(d1, q) if isinstance(q, Mapping) else tuple(q)
    return SiteLaw(d1, ((kern, 1.0),), d1=d1, name=name or "q-walk", paper_example=False)


def example_from_json(obj: Mapping) -> SiteLaw:
    name = obj["example"]
    if name == "ex1":
        return build_example_ex1(float(obj.get("beta", 0.5)))
    if name == "ex2":
        return build_example_ex2(float(obj.get("beta", 0.5)))
    if name == "d2_renewal":
        return build_d2_renewal(float(obj.get("p", 0.5)))
    raise ValueError(f"unknown example {name!r}")


# -- cookies ----------------------------------------------------------------

@dataclass(frozen=True)
class CookieLaw:
    """Per-visit kernels: visit ``m <= len(stack)`` draws an independent atom
    from ``stack[m-1]``; later visits reuse one atom of ``base`` drawn once
    per site (eventually constant)."""

    d: int
    stack: Tuple[Tuple[Tuple[Tuple[float, ...], float], ...], ...]
    base: SiteLaw
    d1: int = 0
    name: str = "cookies"


def excited_walk(d: int, excitement: float, n_cookies: int = 1) -> CookieLaw:
    """Excited random walk: the first ``n_cookies`` visits push along +e_1."""
    srw = tuple([1.0 / (2 * d)] * (2 * d))
    pushed = list(srw)
    pushed[0] += excitement / 2
    pushed[1] -= excitement / 2
    stack = tuple(((tuple(pushed), 1.0),) for _ in range(n_cookies))
    return CookieLaw(d, stack, SiteLaw(d, ((srw, 1.0),), d1=d - 1), d1=d - 1,
                     name=f"excited(d={d}, eps={excitement}, M={n_cookies})")


# -- sampling ---------------------------------------------------------------

def sample_site(law, rng: np.random.Generator, size: Optional[int] = None):
    """Draw site realization(s) from ``law`` with a numpy Generator."""
    reals = law.realizations()
    probs = np.array([float(r.probability) for r in reals])
    probs = probs / probs.sum()
    idx = rng.choice(len(reals), p=probs, size=size)
    if size is None:
        return reals[int(idx)]
    return [reals[int(i)] for i in idx]


def two_valued_spec(d0: int, d1: int, delta: float, beta: float, nu1: Mapping[str, float] | None = None,
                    nu2: Mapping[str, float] | None = None, q: Mapping[str, float] | None = None) -> EnvironmentSpec:
    """Two-valued family: kappa=1, d_star=d0, deterministic q-part of mass delta.

    By default ``nu2`` puts all of ``gamma = 1 - delta`` on ``+e_1`` and
    ``nu1`` on ``-e_1``; ``q`` defaults to the symmetric uniform kernel.
    """
    gamma = round(1 - delta, 14)
    if q is None:
        q = {f"{s}{a}": 1.0 / (2 * d1) for a in range(1, d1 + 1) for s in "+-"}
    nu1 = nu1 if nu1 is not None else {"-1": gamma}
    nu2 = nu2 if nu2 is not None else {"+1": gamma}
    return EnvironmentSpec(
        dims=Dimensions(d0, d1, d0), gamma=gamma, kappa=1.0, delta=delta, beta=beta,
        nu1=Kernel({parse_step(k): v for k, v in nu1.items()}),
        nu2=Kernel({parse_step(k): v for k, v in nu2.items()}),
        q=Kernel({parse_step(k): v for k, v in q.items()}),
    )
