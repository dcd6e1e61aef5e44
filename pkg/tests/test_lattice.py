import pytest
from hypothesis import given, strategies as st

from rwpre.lattice import (Dimensions, MismatchedJunction, PathHistory, add_step, concat,
                           edge_local_time, format_step, parse_step, project_path, step_vector)


def test_step_roundtrip():
    for k in range(10):
        assert parse_step(format_step(k)) == k
    assert parse_step("+3") == 4
    assert step_vector(parse_step("-2"), 3) == (0, -1, 0)
    with pytest.raises(ValueError):
        parse_step("3")


def test_dimensions_checks():
    assert Dimensions(2, 3, 1).d == 5
    with pytest.raises(ValueError):
        Dimensions(1, 1, 2)
    with pytest.raises(ValueError):
        Dimensions(1, 0, 1)


@given(st.lists(st.integers(0, 5), max_size=30))
def test_site_stats_match_recount(steps):
    h = PathHistory((0, 0, 0), steps)
    assert h.site_stats == h.recount()
    assert h.length == len(steps)
    x = (0, 0, 0)
    for k in steps:
        x = add_step(x, k)
    assert h.end == x


@given(st.lists(st.integers(0, 3), min_size=1, max_size=20))
def test_push_pop_undo(steps):
    h = PathHistory((0, 0))
    for k in steps:
        h.push(k)
    for k in reversed(steps):
        assert h.pop() == k
    assert h.site_stats == {} and h.end == (0, 0)


def test_concat_and_junction():
    a = PathHistory((0, 0), [0, 2])
    b = PathHistory((1, 1), [1])
    c = concat(a, b)
    assert c.sites == [(0, 0), (1, 0), (1, 1), (0, 1)]
    with pytest.raises(MismatchedJunction):
        concat(a, PathHistory((0, 0), [0]))


def test_local_time_and_projection():
    h = PathHistory((0, 0), [0, 1, 0, 2])
    assert edge_local_time(h, (0, 0), [0]) == 2
    assert edge_local_time(h, (0, 0), [1, 2]) == 0
    assert project_path(h, 1) == [(0,), (0,), (0,), (0,), (1,)]
    assert PathHistory.from_sites(h.sites) == h
