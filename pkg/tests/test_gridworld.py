import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from kbpomdp.gridworld import (
    REWARDS,
    Action,
    Direction,
    MapFormatError,
    RobotState,
    TerminalStateError,
    area_of,
    build_filter_model,
    format_map,
    load_map,
    observation_likelihood,
    observation_table,
    observe,
    parse_map,
    reset,
    step,
)

N, E, S, W = Direction


def at(grid, x, y, d=N, h=False):
    return RobotState(x, y, area_of(x, y, grid), d, h)


class TestStep:
    def test_bump_into_boundary(self, grid):
        s, r, t = step(at(grid, 0, 0, N), Action.Move, grid)
        assert (s.x, s.y, r, t) == (0, 0, -10.0, False)

    def test_bump_into_wall(self, grid):
        # row 6 is wall except the doorway at column 6
        s, r, _ = step(at(grid, 7, 4, N), Action.Move, grid)
        assert (s.x, s.y, r) == (7, 4, -10.0)

    def test_grab_object_in_front(self, grid):
        ox, oy = grid.object_start
        s, r, t = step(at(grid, ox, oy - 1, E), Action.Grab, grid)
        assert s.h and r == 20.0 and not t

    def test_failed_grab(self, grid):
        ox, oy = grid.object_start
        s, r, _ = step(at(grid, ox, oy - 1, W), Action.Grab, grid)
        assert not s.h and r == -1.0
        held = at(grid, ox, oy - 1, E, h=True)
        assert step(held, Action.Grab, grid)[1] == -1.0

    def test_turns(self, grid):
        s, r, _ = step(at(grid, 10, 6, N), Action.TurnLeft, grid)
        assert s.d is W and r == -1.0
        assert step(s, Action.TurnRight, grid)[0].d is N

    def test_delivery(self, grid):
        tx, ty = grid.target
        s, r, t = step(at(grid, tx, ty + 1, W, h=True), Action.Move, grid)
        assert (s.x, s.y, r, t, s.terminal) == (tx, ty, 100.0, True, True)
        with pytest.raises(TerminalStateError):
            step(s, Action.TurnLeft, grid)

    def test_no_delivery_without_object(self, grid):
        tx, ty = grid.target
        assert step(at(grid, tx, ty + 1, W), Action.Move, grid)[1] == -1.0

    def test_area_updates_on_move(self, grid):
        # hall (7,6) north through the doorway into the corridor (6,6)
        s, _, _ = step(at(grid, 7, 6, N), Action.Move, grid)
        assert (s.x, s.y, s.l) == (6, 6, 1) and at(grid, 7, 6).l == 3

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.sampled_from(list(Action)), min_size=1, max_size=200))
    def test_random_walks_keep_invariants(self, actions):
        grid = load_map()
        s = reset(grid)
        for a in actions:
            nxt, r, t = step(s, a, grid)
            assert r in REWARDS
            assert grid.is_free(nxt.x, nxt.y) and nxt.l == area_of(nxt.x, nxt.y, grid)
            assert step(s, a, grid) == (nxt, r, t)
            if t:
                break
            s = nxt


def test_area_of(grid):
    assert area_of(1, 1, grid) == 0
    assert area_of(11, 11, grid) == 3
    assert area_of(1, 6, grid) == 1 and area_of(1, 10, grid) == 2
    with pytest.raises(ValueError):
        area_of(6, 0, grid)


def test_reset(grid):
    s = reset(grid, np.random.default_rng(1))
    assert (s.x, s.y, s.d, s.h, s.terminal) == (*grid.robot_start, False, False)
    assert s == reset(grid, np.random.default_rng(2))


class TestObservationLikelihood:
    @pytest.mark.parametrize("obs, hyp, lo, hi, want", [
        (6, 6, 0, 12, 0.3),
        (4, 6, 0, 12, 0.175),
        (9, 6, 0, 12, 0.0),
        (1, 0, 0, 12, 0.35),
        (0, 0, 0, 12, 0.3),
        (2, 2, 2, 2, 1.0),
    ])
    def test_values(self, obs, hyp, lo, hi, want):
        assert observation_likelihood(obs, hyp, lo, hi) == pytest.approx(want, abs=1e-15)

    @pytest.mark.parametrize("size", [4, 13])
    def test_rows_normalize(self, size):
        z = observation_table(size)
        np.testing.assert_allclose(z.sum(axis=1), 1.0, atol=1e-12)

    def test_area_window(self):
        # l=0 -> window {0,1,2}; l=1 -> {0,1,2,3}
        z = observation_table(4)
        np.testing.assert_allclose(z[0], [0.3, 0.35, 0.35, 0])
        np.testing.assert_allclose(z[1], [0.7 / 3, 0.3, 0.7 / 3, 0.7 / 3])


@pytest.mark.parametrize("x", [0, 1, 6, 12])
def test_observe_frequencies(x):
    rng = np.random.default_rng(x)
    s = RobotState(x, 6, 3, E, True)
    n = 20_000
    counts = np.zeros(13)
    for _ in range(n):
        o = observe(s, rng)
        assert o.d is E and o.h is True
        counts[o.ox] += 1
    expected = observation_table(13)[x] * n
    support = expected > 0
    assert counts[~support].sum() == 0
    assert chisquare(counts[support], expected[support]).pvalue > 0.001


class TestMapFile:
    def test_round_trip(self, grid):
        back = parse_map(format_map(grid))
        assert np.array_equal(back.areas, grid.areas)
        assert (back.object_start, back.target, back.robot_start) == (grid.object_start, grid.target, grid.robot_start)

    def test_default_layout(self, grid):
        assert grid.shape == (13, 13)
        assert area_of(*grid.object_start, grid) == 2
        assert area_of(*grid.target, grid) == 0
        rx, ry, rd = grid.robot_start
        assert area_of(rx, ry, grid) == 3 and rd is N

    def text(self, rows=None, tail="object: 0,0\ntarget: 0,1\nrobot: 0,2,N\n"):
        rows = rows or ["0000111122223"] * 13
        return "\n".join(rows) + "\n" + tail

    def test_minimal_map_parses(self):
        parse_map(self.text())

    @pytest.mark.parametrize("rows, tail", [
        (["0000111122223"] * 12, None),
        (["000011112222"] * 13, None),
        (["0000111122223"] * 12 + ["000011112222x"], None),
        (["#000111122223"] + ["0000111122223"] * 12, None),
        (None, "object: 0,0\ntarget: 0,0\nrobot: 0,2,N\n"),
        (None, "object: 0,0\ntarget: 0,1\n"),
        (None, "object: 0,0\ntarget: 0,1\nrobot: 0,2,Q\n"),
        (["0000000000000"] * 13, None),
    ])
    def test_rejects(self, rows, tail):
        with pytest.raises(MapFormatError):
            parse_map(self.text(rows, *(() if tail is None else (tail,))))


class TestFilterModel:
    def test_tables_are_stochastic(self, grid):
        m = build_filter_model(grid)
        for a in ("x", "y", "l"):
            for d in Direction:
                t = m.transition(a, (Action.Move, d))
                np.testing.assert_allclose(t.sum(axis=1), 1, atol=1e-12)
        assert m.transition("x", None) is None

    def test_move_north_from_hall_row(self, grid):
        t = build_filter_model(grid).transition("x", (Action.Move, N))
        # row 7 has one open cell above it (the doorway at column 6)
        assert t[7, 6] == pytest.approx(1 / 13)
        assert t[7, 7] == pytest.approx(12 / 13)
