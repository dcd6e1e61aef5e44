"""Acceptance suite: one test (or small group) per criterion.

Heavy results are computed once per session, through the CLI where the
criterion is about reproducible outputs, and shared with the determinism
check.  Run with ``pytest -v -s`` to see the per-criterion measurements.
"""
import json
import os
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from rwpre.annealed import AnnealedModel, annealed_path_law, quenched_average_path_law, total_variation
from rwpre.cli import run
from rwpre.environment import Kernel, build_example_ex1, d2_renewal_speed, load_spec, two_valued_spec
from rwpre.green import deterministic_q, green_table, uniform_q
from rwpre.lace import (increment_by_enumeration, increment_by_series, drift_difference_check, phi_table, pi_table,
                        speed_series, verify_bounds)
from rwpre.lattice import PathHistory, parse_step as P
from rwpre.simulate import speed_estimate

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
THREADS = max(2, min(8, os.cpu_count() or 2))
BETA_GRID = [i / 10 for i in range(11)]
RENEWAL_P = (0.3, 0.5, 0.8)


def spec_c1(beta=0.4):
    return two_valued_spec(1, 2, 0.8, beta)


def spec_skewed(beta=0.3):
    s = two_valued_spec(3, 1, 0.8, beta, nu1={"-1": 0.15, "+2": 0.05}, nu2={"+1": 0.1, "-2": 0.1})
    return replace(s, kappa=0.7, residual_law=((Kernel({P("+3"): 0.1, P("-3"): 0.1}), 0.3),))


def spec_099():
    return load_spec(CONFIGS / "two_valued.json")


def cli(tmp, name, args):
    out = tmp / name
    code = run(args + ["--out", str(out)])
    return code, out.read_bytes()


@pytest.fixture(scope="session")
def tmp(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def lace_runs(tmp):
    """Criterion 1 run through the CLI, serial and threaded."""
    args = ["lace", "--config", str(CONFIGS / "two_valued_d2.json"), "--m-max", "6", "--format", "json"]
    return {t: cli(tmp, f"lace{t}.json", args + ["--threads", str(t)]) for t in (1, THREADS)}


@pytest.fixture(scope="session")
def renewal_runs(tmp):
    """Criterion 4: n=1e6, reps=100 at each p, serial and threaded."""
    out = {}
    for p in RENEWAL_P:
        cfg = tmp / f"renewal_{p}.json"
        cfg.write_text(json.dumps({"example": "d2_renewal", "p": p}))
        args = ["simulate", "--config", str(cfg), "--steps", "1e6", "--reps", "100", "--seed", "2024",
                "--format", "json"]
        out[p] = {t: cli(tmp, f"renewal_{p}_{t}.json", args + ["--threads", str(t)]) for t in (1, THREADS)}
    return out


@pytest.fixture(scope="session")
def sweep_runs(tmp):
    """Criterion 8 Monte Carlo: 11 betas, n=1e6, reps=40, serial and threaded."""
    args = ["sweep", "--config", str(CONFIGS / "two_valued.json"), "--beta-grid", "0:1:0.1", "--steps", "1e6",
            "--reps", "40", "--seed", "7", "--format", "json"]
    return {t: cli(tmp, f"sweep{t}.json", args + ["--threads", str(t)]) for t in (THREADS, 1)}


@pytest.fixture(scope="session")
def bounds_099():
    spec = spec_099()
    gt = green_table(spec.q, spec.dims.d1, K=300)
    table = pi_table(spec, m_max=8, n_max=3, threads=THREADS)
    return spec, gt, table, verify_bounds(spec, table, gt)


# -- 1 ----------------------------------------------------------------------

@pytest.mark.criterion(1, "zero row sums of pi_m^(N), m<=6")
def test_c1_zero_row_sums(lace_runs):
    code, raw = lace_runs[1]
    assert code == 0
    body = json.loads(raw)
    worst = 0.0
    for key, entries in body["coeffs"].items():
        sums = {}
        for x, _, v in entries:
            sums[tuple(x)] = sums.get(tuple(x), 0.0) + v
        worst = max([worst] + [abs(v) for v in sums.values()])
    assert body["coeffs"]
    print(f"\n[1] max |row sum| = {worst:.3e} over {len(body['coeffs'])} (m, N) blocks")
    assert worst <= 1e-12


@pytest.mark.criterion(1, "zero row sums of pi_m^(N), m<=6")
def test_c1_rational_exact():
    t = pi_table(spec_c1(Fraction(2, 5)), m_max=6, rational=True, phi=False)
    sums = t.row_sums()
    assert sums and all(v == 0 for v in sums.values())


# -- 2 ----------------------------------------------------------------------

@pytest.mark.criterion(2, "increment formula equals path enumeration, m<=5")
@pytest.mark.parametrize("make", [spec_c1, spec_skewed])
def test_c2_increment_oracle(make):
    s = make()
    t = pi_table(s, m_max=5, phi=False, bounds=False)
    err = max(abs(a - b) for m in range(1, 6)
              for a, b in zip(increment_by_enumeration(s, m), increment_by_series(s, t, m)))
    print(f"\n[2] {make.__name__}: max increment error {err:.3e}")
    assert err <= 1e-10


# -- 3 ----------------------------------------------------------------------

def _feasible(model, max_len):
    h = PathHistory((0,) * model.spec.d)
    out = []

    def rec():
        out.append(h.copy())
        if h.length == max_len:
            return
        for u, pu in enumerate(model.kernel(h)):
            if pu > 0:
                h.push(u)
                rec()
                h.pop()

    rec()
    return out


@pytest.mark.criterion(3, "closed-form kernel and annealed path law")
def test_c3_kernel_oracles():
    s = two_valued_spec(1, 1, 0.8, 0.4)
    m = AnnealedModel(s)
    hist = _feasible(m, 6)
    informative = sorted(set(m.s1) | set(m.s2))
    assert informative
    err = 0.0
    for h in hist:
        counts = h.counts_at(h.end)
        p = m.kernel(h)
        for u in informative:
            err = max(err, abs(m.kernel_closed(counts, u) - p[u]))
    tv = total_variation(annealed_path_law(m, 4), quenched_average_path_law(s, 4))
    print(f"\n[3] {len(hist)} histories, max kernel error {err:.3e}, TV {tv:.3e}")
    assert err <= 1e-12 and tv <= 1e-12


# -- 4 ----------------------------------------------------------------------

def test_renewal_closed_form_value():
    v = d2_renewal_speed(0.5)
    c = Fraction(3, 4) / (2 + Fraction(3, 2) - Fraction(1, 2) - Fraction(1, 8))
    assert v[0] == pytest.approx(float(3 * c - 1), abs=1e-15)
    assert round(v[0], 4) == -0.2174


@pytest.mark.criterion(4, "explicit 2-d speed reproduced by Monte Carlo")
@pytest.mark.parametrize("p", RENEWAL_P)
def test_c4_renewal_speed(renewal_runs, p):
    code, raw = renewal_runs[p][1]
    assert code == 0
    row = [r for r in json.loads(raw)["rows"] if r["method"] == "naive"][0]
    exact = d2_renewal_speed(p)
    for i in (0, 1):
        v, sigma = row[f"v_{i + 1}"], row[f"ci_{i + 1}"] / 1.96
        print(f"\n[4] p={p} v_{i + 1}: mc={v:.5f} exact={exact[i]:.5f} sigma={sigma:.1e}")
        assert abs(v - exact[i]) <= 3 * sigma
        assert sigma <= 3e-3


# -- 5 ----------------------------------------------------------------------

@pytest.mark.criterion(5, "ex1 walk gets stuck")
def test_c5_stuck_walk():
    est = speed_estimate(build_example_ex1(0.5), 1_000_000, 50, 11, threads=THREADS)
    speeds = np.linalg.norm(est.samples, axis=1)
    frac = float(np.mean(speeds < 0.01))
    print(f"\n[5] fraction of replicas with |X_n|/n < 0.01: {frac:.2f}")
    assert frac >= 0.95


# -- 6 ----------------------------------------------------------------------

@pytest.mark.criterion(6, "bound suite at delta=0.99, d1=5")
def test_c6_pi_bounds(bounds_099):
    spec, gt, table, rep = bounds_099
    print(f"\n[6] alpha={rep.alpha:.5f} G={rep.G:.5f} G2={rep.G2:.5f}")
    for line in rep.lines():
        if line.startswith(("PASS pi_", "FAIL")):
            print("   ", line)
    names = [c.name for c in rep.checks]
    for n in (1, 2, 3):
        assert f"pi_abs_sum[N={n}]" in names
    assert rep.ok, rep.failed()


@pytest.mark.criterion(6, "bound suite at delta=0.99, d1=5")
def test_c6_delta_sums_exact():
    """Branchwise sum_u |Delta| <= 2(1-delta) in exact arithmetic."""
    spec = spec_099().exact()
    m = AnnealedModel(spec)
    eps = spec.eps_delta
    worst = Fraction(0)
    for full in _feasible(m, 3):
        for k in range(full.length + 1):
            suffix = PathHistory(PathHistory(full.origin, full.steps[:k]).end, full.steps[k:])
            s = sum(abs(m.delta(full, suffix, u)) for u in range(2 * spec.d))
            worst = max(worst, s)
    print(f"\n[6] max branchwise sum |Delta| = {worst} <= {eps}")
    assert worst <= eps


@pytest.mark.criterion(6, "bound suite at delta=0.99, d1=5")
def test_c6_drift_difference_pairs(bounds_099):
    spec, _, table, _ = bounds_099
    checked, revisits, fails = drift_difference_check(spec, pairs=10_000, seed=0)
    print(f"\n[6] drift differences: {checked} pairs, {revisits} with revisits, {len(fails)} failures;"
          f" enumeration max sum |Delta| = {table.max_abs_delta_sum:.3e}")
    assert checked == 10_000 and not fails
    assert table.max_abs_delta_sum <= float(spec.eps_delta) * (1 + 1e-12)


# -- 7 ----------------------------------------------------------------------

@pytest.mark.criterion(7, "analytic phi equals finite differences; derivative series < kappa*rho")
@pytest.mark.parametrize("make", [spec_099, spec_c1, spec_skewed])
def test_c7_phi_vs_fd(make):
    s = make()
    an = phi_table(s, m_max=5)
    fd = phi_table(s, m_max=5, mode="fd", h=1e-5)
    err = 0.0
    for key in set(an.coeffs) | set(fd.coeffs):
        a, b = an.total(*key), fd.total(*key)
        for xy in set(a) | set(b):
            err = max(err, abs(a.get(xy, 0.0) - b.get(xy, 0.0)))
    print(f"\n[7] {make.__name__}: max |phi - fd| = {err:.3e}")
    assert err <= 1e-8


@pytest.mark.criterion(7, "analytic phi equals finite differences; derivative series < kappa*rho")
def test_c7_derivative_series(bounds_099):
    _, _, _, rep = bounds_099
    print(f"\n[7] truncated derivative series {rep.derivative_total:.3e} < kappa*rho = {rep.kappa_rho:.3e}")
    assert rep.derivative_total < rep.kappa_rho


# -- 8 ----------------------------------------------------------------------

@pytest.fixture(scope="session")
def series_099():
    spec = spec_099()
    return [float(speed_series(spec, pi_table(spec.with_beta(b), m_max=6, phi=False, bounds=False)).value[0])
            for b in BETA_GRID]


@pytest.mark.criterion(8, "monotone speed in beta: series and Monte Carlo")
def test_c8_series_strictly_increasing(series_099):
    print("\n[8] series v1:", " ".join(f"{v:+.6f}" for v in series_099))
    assert all(b > a for a, b in zip(series_099, series_099[1:]))


@pytest.mark.criterion(8, "monotone speed in beta: series and Monte Carlo")
def test_c8_monte_carlo(sweep_runs, series_099):
    code, raw = sweep_runs[1]
    assert code == 0
    rows = json.loads(raw)["rows"]
    assert [r["beta"] for r in rows] == pytest.approx(BETA_GRID)
    v = np.array([r["v_1"] for r in rows])
    ci = np.array([r["ci_1"] for r in rows])
    print("\n[8] mc v1:", " ".join(f"{a:+.5f}({c:.0e})" for a, c in zip(v, ci)))
    assert np.all(v[1:] + ci[1:] >= v[:-1] - ci[:-1])
    assert np.all(np.abs(v - np.array(series_099)) <= 3 * ci / 1.96)


# -- 9 ----------------------------------------------------------------------

@pytest.mark.criterion(9, "naive and regeneration estimators agree")
@pytest.mark.parametrize("name,spec", [
    ("drifted_d1=1", two_valued_spec(1, 1, 0.8, 0.3, q={"+1": 0.7, "-1": 0.3})),
    ("symmetric_d1=5", load_spec(CONFIGS / "two_valued.json").with_beta(0.8)),
])
def test_c9_regeneration(name, spec):
    naive = speed_estimate(spec, 200_000, 30, 3, threads=THREADS)
    regen = speed_estimate(spec, 200_000, 30, 3, method="regeneration", threads=THREADS)
    bound = 1 / float(spec.delta)
    print(f"\n[9] {name}: naive {naive.point[0]:+.5f}+-{naive.stderr[0]:.1e} regen {regen.point[0]:+.5f}"
          f"+-{regen.stderr[0]:.1e}; mean dtau {regen.mean_dtau:.4f} (1/delta={bound:.4f});"
          f" {regen.cuts_per_kstep:.0f} cuts per 1000 q-steps")
    assert naive.agrees_with(regen, 3.0)
    assert regen.mean_dtau <= bound + 3 * regen.dtau_stderr


# -- 10 ---------------------------------------------------------------------

@pytest.mark.criterion(10, "Green function diagnostics")
def test_c10_green():
    det = green_table(deterministic_q(), 1, K=300, orders=(1, 2))
    assert all(det.partial[1][(x,)] == 1.0 for x in range(0, 300))
    assert not det.converged[2]
    v5 = green_table(uniform_q(5), 5, K=300, orders=(1, 2))
    assert v5.G_origin < 2 and v5.converged[1]
    v9 = green_table(uniform_q(9), 9, K=300, box_radius=2)
    print(f"\n[10] V5 G(o)={v5.G_origin:.6f}; V9 converged={[v9.converged[i] for i in (1, 2, 3, 4)]}")
    assert all(v9.converged[i] for i in (1, 2, 3, 4))


# -- 11 ---------------------------------------------------------------------

@pytest.mark.criterion(11, "byte-identical outputs across thread counts")
def test_c11_lace_bytes(lace_runs):
    assert lace_runs[1] == lace_runs[THREADS]


@pytest.mark.criterion(11, "byte-identical outputs across thread counts")
def test_c11_renewal_bytes(renewal_runs):
    for p in RENEWAL_P:
        assert renewal_runs[p][1] == renewal_runs[p][THREADS]


@pytest.mark.criterion(11, "byte-identical outputs across thread counts")
def test_c11_sweep_bytes(sweep_runs):
    assert sweep_runs[1] == sweep_runs[THREADS]
