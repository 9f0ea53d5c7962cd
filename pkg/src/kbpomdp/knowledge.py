"""Pairwise conditional-probability knowledge and the belief revisions built on it.

A :class:`KnowledgeMatrix` stores ``P(target | given)`` with one row per value
of the given attribute. Two matrices pointing in opposite directions define a
chain given -> target -> given whose stationary distribution is the bias
belief of the given attribute.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .belief import as_distribution, check_stochastic

log = logging.getLogger(__name__)

KNOWLEDGE_ATOL = 1e-6
R_NEG_FLOOR = 1e-12


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class KnowledgeMatrix:
    given: str
    target: str
    table: np.ndarray

    def __post_init__(self):
        t = check_stochastic(self.table, atol=KNOWLEDGE_ATOL, what=f"P({self.target}|{self.given})")
        object.__setattr__(self, "table", t)

    @property
    def shape(self) -> tuple[int, int]:
        return self.table.shape

    def propagate(self, dist) -> np.ndarray:
        """Distribution over ``target`` implied by a distribution over ``given``."""
        return np.asarray(dist, dtype=float) @ self.table


@dataclass
class KnowledgeBase:
    """At most one matrix per ordered (given, target) pair; read-only once built."""

    matrices: dict[tuple[str, str], KnowledgeMatrix] = field(default_factory=dict)

    @classmethod
    def from_matrices(cls, matrices: Iterable[KnowledgeMatrix]) -> "KnowledgeBase":
        kb = cls()
        for m in matrices:
            key = (m.given, m.target)
            if key in kb.matrices:
                raise ValueError(f"duplicate knowledge for P({m.target}|{m.given})")
            kb.matrices[key] = m
        return kb

    def __contains__(self, pair) -> bool:
        return tuple(pair) in self.matrices

    def __len__(self):
        return len(self.matrices)

    def get(self, given: str, target: str) -> KnowledgeMatrix:
        return self.matrices[(given, target)]

    def pairs(self) -> list[tuple[str, str]]:
        """Unordered attribute pairs with knowledge in both directions, in sorted order."""
        out = []
        for a, b in sorted({tuple(sorted(k)) for k in self.matrices}):
            if (a, b) in self.matrices and (b, a) in self.matrices:
                out.append((a, b))
            else:
                log.warning("knowledge between %r and %r is one-directional; skipped", a, b)
        return out

    def attributes(self) -> list[str]:
        return sorted({a for pair in self.pairs() for a in pair})


@dataclass(frozen=True)
class BiasBelief:
    """Knowledge-implied distribution per attribute, with the solver residuals."""

    dists: Mapping[str, np.ndarray]
    residuals: Mapping[tuple[str, str], float]

    def __getitem__(self, attr: str) -> np.ndarray:
        return self.dists[attr]

    def __contains__(self, attr: str) -> bool:
        return attr in self.dists


def chain_matrix(P_xy: KnowledgeMatrix, P_yx: KnowledgeMatrix) -> np.ndarray:
    """Column-stochastic map taking a distribution over x through y and back to x."""
    if P_yx.given != P_xy.target or P_yx.target != P_xy.given:
        raise ValueError(
            f"P({P_xy.target}|{P_xy.given}) and P({P_yx.target}|{P_yx.given}) "
            "are not the same pair in opposite directions"
        )
    if P_yx.shape[1] != P_xy.shape[0] or P_yx.shape[0] != P_xy.shape[1]:
        raise ValueError(f"incompatible shapes {P_xy.shape} and {P_yx.shape}")
    return (P_yx.table @ P_xy.table).T


def solve_bias(
    P_xy: KnowledgeMatrix, P_yx: KnowledgeMatrix, tol: float = 1e-10, max_iter: int = 10_000
) -> tuple[np.ndarray, np.ndarray, float]:
    """Fixed point of the x -> y -> x chain by power iteration from uniform.

    ``P_xy`` holds P(x|y) and ``P_yx`` holds P(y|x). Returns ``(b_x, b_y, residual)``
    where ``b_y`` is the image of ``b_x`` under P(y|x) and ``residual`` is the
    final L1 change, which is at most ``tol``.
    """
    M = chain_matrix(P_xy, P_yx)
    b = np.full(M.shape[0], 1.0 / M.shape[0])
    residual = math.inf
    for _ in range(max_iter):
        nxt = M @ b
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - b).sum())
        b = nxt
        if residual <= tol:
            break
    else:
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} steps (residual {residual:.3g})",
            residual,
        )
    b_y = P_yx.propagate(b)
    b_y /= b_y.sum()
    return as_distribution(b), as_distribution(b_y), residual


def compute_bias(kb: KnowledgeBase, tol: float = 1e-10, max_iter: int = 10_000) -> BiasBelief:
    """Bias belief for every attribute covered by two-way knowledge.

    An attribute that takes part in several pairs gets the average of the
    per-pair fixed points.
    """
    found: dict[str, list[np.ndarray]] = {}
    residuals = {}
    for a, b in kb.pairs():
        b_a, b_b, res = solve_bias(kb.get(b, a), kb.get(a, b), tol=tol, max_iter=max_iter)
        residuals[(a, b)] = res
        found.setdefault(a, []).append(b_a)
        found.setdefault(b, []).append(b_b)
    dists = {}
    for attr, ds in found.items():
        avg = np.mean(ds, axis=0)
        dists[attr] = as_distribution(avg / avg.sum())
    return BiasBelief(dists, residuals)


def rnorm_combine(b, b_star, beta: float, r: float) -> np.ndarray:
    """Power-mean blend ``((1 - beta) b^r + beta b*^r)^(1/r)``, renormalized to sum 1."""
    if r == 0:
        raise ValueError("r = 0 is not a valid power-mean exponent")
    b = np.asarray(b, dtype=float)
    b_star = np.asarray(b_star, dtype=float)
    if b.shape != b_star.shape:
        raise ValueError(f"shape mismatch {b.shape} vs {b_star.shape}")
    if np.any(b < 0) or np.any(b_star < 0):
        raise ValueError("distributions must be nonnegative")
    if beta == 0:
        return b.copy()
    if beta == 1:
        return b_star.copy()
    out = _power_mean(b, b_star, beta, r)
    return out / out.sum()


def _power_mean(b, b_star, beta, r):
    if r == 1:
        return (1 - beta) * b + beta * b_star
    if r < 0:
        b = np.maximum(b, R_NEG_FLOOR)
        b_star = np.maximum(b_star, R_NEG_FLOOR)
    return ((1 - beta) * b**r + beta * b_star**r) ** (1.0 / r)


def jeffrey_rescale(b, index: int, new_value: float) -> np.ndarray:
    """Set ``b[index] = new_value`` and scale the other entries to keep the total at 1.

    This is Jeffrey's rule on the partition {index, not index}: ratios among
    the untouched entries do not change. If ``b[index]`` was 1 the leftover
    mass is spread uniformly instead.
    """
    b = np.asarray(b, dtype=float)
    out = np.empty_like(b)
    rest = 1.0 - b[index]
    if rest > 0:
        out[:] = b * (1.0 - new_value) / rest
    elif b.size > 1:
        out[:] = (1.0 - new_value) / (b.size - 1)
    out[index] = new_value
    return out


def jeffrey_revision(b_star, b, threshold: float = 0.2, beta: float = 0.5, r: float = 1.0):
    """Revise the single entry where ``b`` disagrees most with ``b_star``.

    If the largest absolute gap exceeds ``threshold``, that entry is replaced by
    its power-mean blend with the bias value and the rest is rescaled by
    :func:`jeffrey_rescale`. Otherwise ``b`` itself is returned.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    gap = np.abs(np.asarray(b_star, dtype=float) - np.asarray(b, dtype=float))
    i = int(np.argmax(gap))
    if gap[i] <= threshold:
        return b
    bi = np.array([float(b[i])])
    si = np.array([float(b_star[i])])
    if beta == 0:
        new = bi[0]
    elif beta == 1:
        new = si[0]
    else:
        new = float(_power_mean(bi, si, beta, r)[0])
    return jeffrey_rescale(b, i, min(new, 1.0))


# -- knowledge from a map ---------------------------------------------------

def _conditional(counts: np.ndarray, given: str, target: str) -> KnowledgeMatrix:
    counts = np.asarray(counts, dtype=float)
    table = np.empty_like(counts)
    for i, row in enumerate(counts):
        s = row.sum()
        if s > 0:
            table[i] = row / s
        else:
            log.warning("no free cells with %s=%d; using a uniform row for P(%s|%s)", given, i, target, given)
            table[i] = 1.0 / row.size
    return KnowledgeMatrix(given, target, table)


def derive_knowledge_from_map(grid) -> KnowledgeBase:
    """Empirical P(a|b) for a, b in {x, y, l}, assuming the robot is uniform over free cells."""
    from .gridworld import N_AREAS

    free = grid.free_mask()
    rows, cols = np.nonzero(free)
    areas = grid.areas[rows, cols]
    n_x, n_y = grid.shape
    xy = np.zeros((n_x, n_y))
    np.add.at(xy, (rows, cols), 1)
    xl = np.zeros((n_x, N_AREAS))
    np.add.at(xl, (rows, areas), 1)
    yl = np.zeros((n_y, N_AREAS))
    np.add.at(yl, (cols, areas), 1)
    return KnowledgeBase.from_matrices([
        _conditional(xy, "x", "y"),
        _conditional(xy.T, "y", "x"),
        _conditional(xl, "x", "l"),
        _conditional(xl.T, "l", "x"),
        _conditional(yl, "y", "l"),
        _conditional(yl.T, "l", "y"),
    ])


# -- file format ------------------------------------------------------------

def format_matrix(m: KnowledgeMatrix) -> str:
    rows, cols = m.shape
    lines = [f"given={m.given} target={m.target} rows={rows} cols={cols}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in m.table]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str, source: str = "<string>") -> KnowledgeMatrix:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{source}: empty knowledge file")
    try:
        header = dict(tok.split("=", 1) for tok in lines[0].split())
        given, target = header["given"], header["target"]
        n_rows, n_cols = int(header["rows"]), int(header["cols"])
    except (KeyError, ValueError) as err:
        raise ValueError(f"{source}: bad header {lines[0]!r}") from err
    body = lines[1:]
    if len(body) != n_rows:
        raise ValueError(f"{source}: expected {n_rows} rows, found {len(body)}")
    table = []
    for k, ln in enumerate(body):
        vals = [float(v) for v in ln.split()]
        if len(vals) != n_cols:
            raise ValueError(f"{source}: row {k} has {len(vals)} values, expected {n_cols}")
        table.append(vals)
    try:
        return KnowledgeMatrix(given, target, np.array(table))
    except ValueError as err:
        raise ValueError(f"{source}: {err}") from err


def matrix_filename(given: str, target: str) -> str:
    return f"P_{target}_given_{given}.txt"


def save_knowledge(kb: KnowledgeBase, out_dir: str | os.PathLike) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for (given, target), m in sorted(kb.matrices.items()):
        p = out / matrix_filename(given, target)
        p.write_text(format_matrix(m))
        paths.append(p)
    return paths


def load_knowledge(path: str | os.PathLike) -> KnowledgeBase:
    """Read every ``*.txt`` knowledge file in a directory (or a single file)."""
    p = Path(path)
    files = sorted(p.glob("*.txt")) if p.is_dir() else [p]
    if not files:
        raise FileNotFoundError(f"no knowledge files in {p}")
    return KnowledgeBase.from_matrices(parse_matrix(f.read_text(), str(f)) for f in files)
