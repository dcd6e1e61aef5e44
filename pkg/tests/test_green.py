import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwpre.environment import Kernel
from rwpre.green import (NotConverging, BoxTooSmall, alpha, binomial_weights, check_A3, convolve_power,
                         deterministic_q, green, green_quadrature, green_table, point_probabilities,
                         tail_exponent, uniform_q)

# Simple random walk return probability in Z^5 (standard lattice Green function value).
P_RETURN_5 = 0.1351786098


@pytest.fixture(scope="module")
def v5():
    return green_table(uniform_q(5), 5, K=300)


def test_convolve_power_examples():
    q = uniform_q(5)
    assert convolve_power(q, 0, 3).at((0,) * 5) == 1.0
    assert convolve_power(deterministic_q(), 5, 6, d1=1).at((5,)) == pytest.approx(1.0)
    assert convolve_power(q, 2, 3).at((0,) * 5) == pytest.approx(0.1)
    assert convolve_power(q, 1, 3).at((0,) * 5) == 0.0


def test_convolve_power_strict_box():
    with pytest.raises(BoxTooSmall):
        convolve_power(deterministic_q(), 5, 3, d1=1, strict=True)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4).filter(lambda w: sum(w) > 0.1),
       st.integers(-3, 3), st.integers(-3, 3))
def test_point_probabilities_match_dense_convolution(w, x0, x1):
    tot = sum(w)
    q = Kernel({k: v / tot for k, v in enumerate(w) if v > 0})
    K = 8
    pk = point_probabilities(q, 2, (x0, x1), K)
    for k in range(K + 1):
        assert pk[k] == pytest.approx(convolve_power(q, k, K, d1=2).at((x0, x1)), abs=1e-12)


def test_deterministic_walk():
    K = 100
    t = green_table(deterministic_q(), 1, K=K, orders=(1, 2))
    for x in (0, 1, 50, K):
        assert t.partial[1][(x,)] == pytest.approx(1.0)
    assert t.partial[1].get((-1,), 0.0) == 0.0
    assert t.converged[1]
    assert not t.converged[2]
    with pytest.raises(NotConverging):
        green(deterministic_q(), 1, 2, K=K)


def test_v5_origin_against_return_probability(v5):
    oracle = 1 / (1 - P_RETURN_5)
    assert green_quadrature(uniform_q(5), 5, (0,) * 5) == pytest.approx(oracle, rel=1e-6)
    assert v5.G_origin == pytest.approx(oracle, rel=1e-4)
    assert v5.G_origin < oracle


def test_v5_convergence_pattern(v5):
    assert [v5.converged[i] for i in (1, 2, 3, 4)] == [True, True, False, False]
    assert v5.tail_exponent[1] == pytest.approx(2.5, abs=0.1)
    assert v5.tail_exponent[2] == pytest.approx(1.5, abs=0.1)
    assert v5.argmax[1] == (0,) * 5
    rep = check_A3(uniform_q(5), 5, table=v5)
    assert rep.origin_below_two and not rep.ok


def test_v9_all_orders_converge():
    t = green_table(uniform_q(9), 9, K=200, box_radius=2)
    assert all(t.converged[i] for i in (1, 2, 3, 4))
    assert check_A3(uniform_q(9), 9, table=t).ok


def test_binomial_identity_order_two():
    """(G_K * G_K)(x) = sum_{k<=2K} c_k P(Y_k=x) with c_k = min(k, 2K-k) + 1."""
    q = Kernel({0: 0.3, 1: 0.2, 2: 0.25, 3: 0.25})
    K = 6
    R = 2 * K
    G = sum(convolve_power(q, k, R, d1=2).probs for k in range(K + 1))
    from scipy.signal import fftconvolve
    GG = fftconvolve(G, G)[R:3 * R + 1, R:3 * R + 1]
    for x in [(0, 0), (1, 0), (2, -1), (3, 3)]:
        pk = point_probabilities(q, 2, x, 2 * K)
        c = np.array([min(k, 2 * K - k) + 1 for k in range(2 * K + 1)])
        assert GG[x[0] + R, x[1] + R] == pytest.approx(float(c @ pk), abs=1e-12)
    # the one-sided truncation used by the tables keeps the first K+1 weights
    assert list(binomial_weights(2, K)) == list(c[:K + 1])


def test_binomial_weights():
    assert list(binomial_weights(1, 4)) == [1, 1, 1, 1, 1]
    assert list(binomial_weights(3, 3)) == [1, 3, 6, 10]


def test_tail_exponent_of_power_law():
    k = np.arange(1, 401, dtype=float)
    assert tail_exponent(k ** -2.5) == pytest.approx(2.5, abs=0.05)
    assert tail_exponent(np.ones(400)) == pytest.approx(0.0, abs=0.05)


def test_alpha(v5):
    assert alpha(1, v5) == 0.0
    a = alpha(0.99, v5)
    assert a == pytest.approx(2 * 0.01 / 0.99 ** 2 * v5.sup_full(2))
    assert v5.sup_full(2) >= v5.sup(2)
    assert a < 0.05
