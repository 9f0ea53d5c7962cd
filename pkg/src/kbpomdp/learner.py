"""Tabular Q-learning over quantized factored beliefs.

Each turn the robot filters its belief over ``x``, ``y`` and ``l``, optionally
revises it with the knowledge-derived bias belief, and keys the Q-table on the
quantized revised belief together with the exactly observed heading and
holding flag.

Training runs through the compiled loop in :mod:`kbpomdp._kernels`.
:func:`run_episode_reference` plays the same episode with the plain library
functions and is kept as a cross-check.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Iterator

import numpy as np

from . import _kernels as K
from .belief import predict, quantize_vector, uniform
from .gridworld import (
    N_AREAS,
    OBS_P,
    PARTIAL,
    Action,
    Direction,
    GridMap,
    RobotState,
    build_filter_model,
    reset,
    step,
    window,
)
from .knowledge import BiasBelief, jeffrey_revision, rnorm_combine

N_ACTIONS = len(Action)
U_COLS = K.U_COLS


class MethodVariant(str, Enum):
    normal = "normal"
    bias_init = "bias_init"
    bias_combine = "bias_combine"
    jeffrey = "jeffrey"
    proposed = "proposed"

    @property
    def uses_knowledge(self) -> bool:
        return self is not MethodVariant.normal

    @property
    def jeffrey_step(self) -> bool:
        return self in (MethodVariant.jeffrey, MethodVariant.proposed)

    @property
    def combine_step(self) -> bool:
        return self in (MethodVariant.bias_combine, MethodVariant.proposed)


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = 0.1
    alpha_decay: float = 0.9
    decay_every: int = 500
    gamma: float = 1.0
    beta: float = 0.5
    r: float = 1.0
    threshold: float = 0.2
    quant_step: float = 0.1
    max_steps: int = 200
    episodes: int = 10_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay: float = 0.999
    persist_revision: bool = False
    seed: int = 0

    def __post_init__(self):
        checks = [
            (0 < self.alpha <= 1, "alpha must be in (0, 1]"),
            (0 < self.alpha_decay <= 1, "alpha_decay must be in (0, 1]"),
            (self.decay_every >= 1, "decay_every must be >= 1"),
            (0 <= self.gamma <= 1, "gamma must be in [0, 1]"),
            (0 <= self.beta <= 1, "beta must be in [0, 1]"),
            (self.r != 0, "r must be nonzero"),
            (self.threshold >= 0, "threshold must be >= 0"),
            (0.001 <= self.quant_step <= 1, "quant_step must be in [0.001, 1]"),
            (self.max_steps >= 1, "max_steps must be >= 1"),
            (self.episodes >= 0, "episodes must be >= 0"),
            (0 <= self.epsilon_end <= self.epsilon_start <= 1, "need 0 <= epsilon_end <= epsilon_start <= 1"),
            (0 < self.epsilon_decay <= 1, "epsilon_decay must be in (0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    def learning_rate(self, episodes_done: int) -> float:
        """Learning rate after ``episodes_done`` episodes (stepwise decay)."""
        return self.alpha * self.alpha_decay ** (episodes_done // self.decay_every)

    def epsilon(self, episode: int) -> float:
        return max(self.epsilon_end, self.epsilon_start * self.epsilon_decay**episode)


def hyper_fields() -> list[str]:
    return [f.name for f in fields(Hyperparams)]


@dataclass(frozen=True)
class EpisodeRecord:
    reward: float
    steps: int
    success: bool


class QTable:
    """Action values keyed by fixed-length integer tuples.

    Stored in an open-addressing table so the compiled episode loop can read
    and write it directly. Unseen keys read as zeros and are not inserted.
    """

    def __init__(self, key_len: int, n_actions: int = N_ACTIONS, capacity: int = 1024):
        cap = 1 << max(4, int(capacity - 1).bit_length())
        self.key_len = key_len
        self.n_actions = n_actions
        self.keys = np.zeros((cap, key_len), np.int16)
        self.vals = np.zeros((cap, n_actions))
        self.occ = np.zeros(cap, np.bool_)
        self.count = np.zeros(1, np.int64)

    def __len__(self):
        return int(self.count[0])

    def _key(self, key) -> np.ndarray:
        k = np.asarray(key, dtype=np.int16)
        if k.shape != (self.key_len,):
            raise ValueError(f"key of length {k.size}, table expects {self.key_len}")
        return k

    def reserve(self, extra: int) -> None:
        """Grow so that ``extra`` more keys keep the load factor at or below 1/2."""
        cap = self.keys.shape[0]
        need = len(self) + extra
        if 2 * need <= cap:
            return
        while 2 * need > cap:
            cap *= 2
        keys = np.zeros((cap, self.key_len), np.int16)
        vals = np.zeros((cap, self.n_actions))
        occ = np.zeros(cap, np.bool_)
        K.rehash(self.keys, self.vals, self.occ, keys, vals, occ)
        self.keys, self.vals, self.occ = keys, vals, occ

    def __contains__(self, key) -> bool:
        return K.find_slot(self.keys, self.occ, self._key(key))[1]

    def values(self, key) -> tuple[float, ...]:
        i, found = K.find_slot(self.keys, self.occ, self._key(key))
        if not found:
            return (0.0,) * self.n_actions
        return tuple(float(v) for v in self.vals[i])

    def set(self, key, action: int, value: float) -> None:
        self.reserve(1)
        i = K.insert_slot(self.keys, self.vals, self.occ, self.count, self._key(key))
        self.vals[i, action] = value

    def sorted_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Occupied keys in lexicographic order with their values."""
        keys = self.keys[self.occ]
        vals = self.vals[self.occ]
        order = np.lexsort(keys.T[::-1]) if len(keys) else np.zeros(0, int)
        return keys[order], vals[order]

    def items(self) -> Iterator[tuple[tuple[int, ...], tuple[float, ...]]]:
        keys, vals = self.sorted_arrays()
        for k, v in zip(keys, vals):
            yield tuple(int(i) for i in k), tuple(float(x) for x in v)

    @classmethod
    def from_arrays(cls, keys, vals) -> "QTable":
        keys = np.asarray(keys, np.int16)
        vals = np.asarray(vals, float)
        q = cls(keys.shape[1], vals.shape[1], capacity=2 * len(keys) + 16)
        for k, v in zip(keys, vals):
            i = K.insert_slot(q.keys, q.vals, q.occ, q.count, k)
            q.vals[i] = v
        return q

    def __eq__(self, other):
        if not isinstance(other, QTable) or len(self) != len(other):
            return False
        (ka, va), (kb, vb) = self.sorted_arrays(), other.sorted_arrays()
        return np.array_equal(ka, kb) and np.array_equal(va, vb)


def select_action_u(qtable: QTable, key, epsilon: float, u_explore: float, u_action: float) -> Action:
    if epsilon > 0 and u_explore < epsilon:
        return Action(min(int(u_action * N_ACTIONS), N_ACTIONS - 1))
    q = qtable.values(key)
    return Action(max(range(len(q)), key=q.__getitem__))


def select_action(qtable: QTable, key, epsilon: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy; greedy ties go to the lowest action index."""
    u = rng.random(2)
    return select_action_u(qtable, key, epsilon, u[0], u[1])


def q_update(qtable: QTable, key, action, reward: float, next_key, terminal: bool, alpha: float, gamma: float) -> float:
    """One-step Q-learning backup; returns the new value of ``Q[key][action]``."""
    q = qtable.values(key)[action]
    target = reward if terminal else reward + gamma * max(qtable.values(next_key))
    new = q + alpha * (target - q)
    qtable.set(key, int(action), new)
    return new


class BeliefTracker:
    """Filter-and-revise rules of one variant, in both packed and per-attribute form."""

    def __init__(self, grid: GridMap, bias: BiasBelief | None, variant, hyper: Hyperparams, p_obs: float = OBS_P):
        self.grid = grid
        self.variant = MethodVariant(variant)
        if self.variant.uses_knowledge and bias is None:
            raise ValueError(f"variant {self.variant.value} needs a bias belief")
        self.bias = bias
        self.hyper = hyper
        self.p_obs = p_obs
        self.model = build_filter_model(grid, p_obs)
        self.sizes = np.array([self.model.space.size(a) for a in PARTIAL], np.int64)
        self.key_len = int(self.sizes.sum()) + 2
        self._pack()

    def _pack(self):
        P = int(self.sizes.max())
        n = len(PARTIAL)
        self.T = np.zeros((4, n, P, P))
        self.Z = np.zeros((n, P, P))
        self.bias_packed = np.zeros((n, P))
        self.init_packed = np.zeros((n, P))
        for k, a in enumerate(PARTIAL):
            m = self.sizes[k]
            for heading in Direction:
                t = self.model.transition(a, (Action.Move, heading))
                self.T[heading, k, :m, :m] = np.eye(m) if t is None else t
            self.Z[k, :m, :m] = self.model.obs_table(a, None)
            if self.bias is not None:
                self.bias_packed[k, :m] = self.bias[a]
            self.init_packed[k, :m] = self.initial()[a]

    def initial(self) -> dict[str, np.ndarray]:
        if self.variant is MethodVariant.bias_init:
            return {a: self.bias[a] for a in PARTIAL}
        return {a: uniform(int(m)) for a, m in zip(PARTIAL, self.sizes)}

    def filter(self, belief, action_ctx, obs: dict[str, int], counters: Counter | None = None):
        """Per-attribute Bayes filter; ``action_ctx=None`` means no motion."""
        out = {}
        for a in PARTIAL:
            t = None if action_ctx is None else self.model.transition(a, action_ctx)
            pred = predict(belief[a], t)
            post = pred * self.model.obs_table(a, None)[:, obs[a]]
            total = post.sum()
            if total > 0:
                post = post / total
            else:
                # contradictory observation: keep the prediction
                if counters is not None:
                    counters["degenerate"] += 1
                post = pred
            out[a] = post
        return out

    def update(self, belief, action_ctx, obs: dict[str, int], counters: Counter | None = None):
        """Filter then revise. Returns ``(next_prior, revised)``.

        The revised belief feeds the policy; it also becomes the next prior
        only when ``persist_revision`` is set.
        """
        counters = Counter() if counters is None else counters
        filtered = self.filter(belief, action_ctx, obs, counters)
        revised = {a: self.revise(a, filtered[a], counters) for a in PARTIAL}
        return (revised if self.hyper.persist_revision else filtered), revised

    def revise(self, attr: str, b, counters: Counter):
        h = self.hyper
        if self.variant.jeffrey_step:
            counters["jeffrey"] += 1
            b = jeffrey_revision(self.bias[attr], b, h.threshold, h.beta, h.r)
        if self.variant.combine_step:
            counters["combine"] += 1
            b = rnorm_combine(b, self.bias[attr], h.beta, h.r)
        return b

    def key(self, belief, d: int, h: bool) -> tuple[int, ...]:
        k: tuple[int, ...] = ()
        for a in PARTIAL:
            k += quantize_vector(belief[a], self.hyper.quant_step)
        return k + (int(d), int(h))

    def new_table(self) -> QTable:
        return QTable(self.key_len)


def draw_uniforms(rng: np.random.Generator, max_steps: int) -> np.ndarray:
    return rng.random((max_steps + 1, U_COLS))


def _stats_counter(stats: np.ndarray) -> Counter:
    return Counter(jeffrey=int(stats[0]), combine=int(stats[1]), degenerate=int(stats[2]), jeffrey_fired=int(stats[3]))


def run_episode(
    tracker: BeliefTracker,
    qtable: QTable,
    rng: np.random.Generator,
    learning: bool = True,
    epsilon: float = 0.0,
    alpha: float | None = None,
    counters: Counter | None = None,
) -> EpisodeRecord:
    """Play one episode with the compiled loop, updating ``qtable`` if ``learning``."""
    hyper = tracker.hyper
    alpha = hyper.alpha if alpha is None else alpha
    U = draw_uniforms(rng, hyper.max_steps)
    if learning:
        qtable.reserve(hyper.max_steps + 1)
    g = tracker.grid
    stats = np.zeros(4, np.int64)
    total, steps, success = K.run_episode(
        g.areas, np.array(g.object_start), np.array(g.target), np.array(g.robot_start, dtype=np.int64),
        tracker.T, tracker.Z, tracker.sizes, tracker.bias_packed, tracker.init_packed,
        tracker.variant.jeffrey_step, tracker.variant.combine_step,
        float(hyper.beta), float(hyper.r), float(hyper.threshold), bool(hyper.persist_revision),
        float(hyper.quant_step), float(tracker.p_obs),
        qtable.keys, qtable.vals, qtable.occ, qtable.count,
        U, float(epsilon), float(alpha), float(hyper.gamma), bool(learning), int(hyper.max_steps), stats,
    )
    if counters is not None:
        counters.update(_stats_counter(stats))
    return EpisodeRecord(float(total), int(steps), bool(success))


def _observe_u(state: RobotState, u, p: float, grid: GridMap) -> dict[str, int]:
    def sample(value, lo, hi, u1, u2):
        w = window(value, lo, hi)
        if len(w) == 1 or u1 < p:
            return value
        others = [v for v in w if v != value]
        return others[min(int(u2 * len(others)), len(others) - 1)]

    n_x, n_y = grid.shape
    return {
        "x": sample(state.x, 0, n_x - 1, u[2], u[3]),
        "y": sample(state.y, 0, n_y - 1, u[4], u[5]),
        "l": sample(state.l, 0, N_AREAS - 1, u[6], u[7]),
    }


def run_episode_reference(
    tracker: BeliefTracker,
    qtable: QTable,
    rng: np.random.Generator,
    learning: bool = True,
    epsilon: float = 0.0,
    alpha: float | None = None,
    counters: Counter | None = None,
) -> EpisodeRecord:
    """Same episode as :func:`run_episode`, built from the plain library functions."""
    hyper = tracker.hyper
    alpha = hyper.alpha if alpha is None else alpha
    U = draw_uniforms(rng, hyper.max_steps)
    grid = tracker.grid
    state = reset(grid)
    belief, view = tracker.update(tracker.initial(), None, _observe_u(state, U[0], tracker.p_obs, grid), counters)
    key = tracker.key(view, state.d, state.h)
    total, steps, success = 0.0, 0, False
    while steps < hyper.max_steps:
        action = select_action_u(qtable, key, epsilon, U[steps][0], U[steps][1])
        heading = state.d
        state, reward, terminal = step(state, action, grid)
        total += reward
        steps += 1
        if terminal:
            if learning:
                q_update(qtable, key, action, reward, None, True, alpha, hyper.gamma)
            success = True
            break
        obs = _observe_u(state, U[steps], tracker.p_obs, grid)
        ctx = (action, heading) if action is Action.Move else None
        belief, view = tracker.update(belief, ctx, obs, counters)
        next_key = tracker.key(view, state.d, state.h)
        if learning:
            q_update(qtable, key, action, reward, next_key, False, alpha, hyper.gamma)
        key = next_key
    return EpisodeRecord(total, steps, success)


def train(
    hyper: Hyperparams,
    grid: GridMap,
    bias: BiasBelief | None,
    variant,
    rng: np.random.Generator | None = None,
    counters: Counter | None = None,
) -> tuple[QTable, list[EpisodeRecord]]:
    """Run ``hyper.episodes`` learning episodes; returns the table and the learning curve."""
    rng = np.random.default_rng(hyper.seed) if rng is None else rng
    tracker = BeliefTracker(grid, bias, variant, hyper)
    qtable = tracker.new_table()
    curve = [
        run_episode(
            tracker, qtable, rng,
            learning=True, epsilon=hyper.epsilon(ep), alpha=hyper.learning_rate(ep), counters=counters,
        )
        for ep in range(hyper.episodes)
    ]
    return qtable, curve


def hyper_dict(h: Hyperparams) -> dict:
    return asdict(h)
