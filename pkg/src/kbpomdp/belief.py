"""Factored belief representation and the per-attribute Bayes filter.

A belief over a state made of discrete attributes is stored as one marginal
distribution per attribute. Distributions are plain 1-D float arrays; the
helpers here validate them and keep them read-only so they can be shared
freely between workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

SIMPLEX_ATOL = 1e-9


class DegenerateEvidenceError(ValueError):
    """Raised when an observation has zero likelihood under the predicted belief."""

    def __init__(self, message: str, attribute: str | None = None):
        super().__init__(message)
        self.attribute = attribute


class StateSpaceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class AttributeSpace:
    """Ordered attribute names and their cardinalities."""

    names: tuple[str, ...]
    sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.names) == 0:
            raise ValueError("an attribute space needs at least one attribute")
        if len(self.names) != len(self.sizes):
            raise ValueError("names and sizes differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate attribute names in {self.names}")
        if any(int(m) < 1 for m in self.sizes):
            raise ValueError(f"cardinalities must be >= 1, got {self.sizes}")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "sizes", tuple(int(m) for m in self.sizes))

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, int]]) -> "AttributeSpace":
        return cls(tuple(n for n, _ in pairs), tuple(m for _, m in pairs))

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def size(self, name: str) -> int:
        return self.sizes[self.index(name)]


def as_distribution(probs, atol: float = SIMPLEX_ATOL) -> np.ndarray:
    """Validate ``probs`` as a probability vector and return a read-only copy."""
    p = np.array(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"a distribution must be a non-empty vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError(f"distribution entries must be finite and >= 0: {p}")
    if abs(p.sum() - 1.0) > atol:
        raise ValueError(f"distribution sums to {p.sum()!r}, not 1")
    p.setflags(write=False)
    return p


def uniform(size: int) -> np.ndarray:
    p = np.full(size, 1.0 / size)
    p.setflags(write=False)
    return p


def one_hot(size: int, index: int) -> np.ndarray:
    p = np.zeros(size)
    p[index] = 1.0
    p.setflags(write=False)
    return p


def check_stochastic(table, atol: float = SIMPLEX_ATOL, what: str = "table") -> np.ndarray:
    """Return ``table`` as a read-only float matrix whose rows are distributions."""
    t = np.array(table, dtype=float)
    if t.ndim != 2:
        raise ValueError(f"{what} must be 2-D, got shape {t.shape}")
    if np.any(t < 0) or np.any(t > 1 + 1e-12) or not np.all(np.isfinite(t)):
        raise ValueError(f"{what} entries must lie in [0, 1]")
    bad = np.abs(t.sum(axis=1) - 1.0) > atol
    if bad.any():
        raise ValueError(f"{what} rows {np.flatnonzero(bad).tolist()} do not sum to 1")
    t.setflags(write=False)
    return t


@dataclass(frozen=True)
class FactoredBelief:
    """One marginal distribution per attribute of ``space``."""

    space: AttributeSpace
    components: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.components) != len(self.space):
            raise ValueError(
                f"{len(self.components)} components for {len(self.space)} attributes"
            )
        comps = []
        for name, size, c in zip(self.space.names, self.space.sizes, self.components):
            c = c if _is_frozen_dist(c) else as_distribution(c)
            if c.size != size:
                raise ValueError(f"component {name!r} has length {c.size}, expected {size}")
            comps.append(c)
        object.__setattr__(self, "components", tuple(comps))

    @classmethod
    def uniform(cls, space: AttributeSpace) -> "FactoredBelief":
        return cls(space, tuple(uniform(m) for m in space.sizes))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.components[self.space.index(name)]

    def replace(self, **updates) -> "FactoredBelief":
        comps = list(self.components)
        for name, dist in updates.items():
            comps[self.space.index(name)] = dist
        return FactoredBelief(self.space, tuple(comps))


def _is_frozen_dist(c) -> bool:
    return (
        isinstance(c, np.ndarray)
        and c.ndim == 1
        and not c.flags.writeable
        and c.dtype == np.float64
        and abs(c.sum() - 1.0) <= SIMPLEX_ATOL
        and (c >= 0).all()
    )


@dataclass(frozen=True)
class FactoredModel:
    """Per-attribute transition and observation tables.

    ``transitions[attr][action]`` is an M x M row-stochastic matrix with entry
    ``[prev, next]``. ``observations[attr]`` is an M x M row-stochastic matrix
    with entry ``[value, obs]``, or a mapping from action to such a matrix.
    Attributes without an observation table are fully observable. A missing
    transition for an action means the attribute is left unchanged.
    """

    space: AttributeSpace
    transitions: Mapping[str, Mapping[Hashable, np.ndarray]]
    observations: Mapping[str, np.ndarray | Mapping[Hashable, np.ndarray]]

    def transition(self, attr: str, action) -> np.ndarray | None:
        return self.transitions.get(attr, {}).get(action)

    def obs_table(self, attr: str, action) -> np.ndarray | None:
        z = self.observations.get(attr)
        if isinstance(z, Mapping):
            return z[action]
        return z

    def is_observable(self, attr: str) -> bool:
        return attr in self.observations


def predict(prior: np.ndarray, transition: np.ndarray | None) -> np.ndarray:
    """Push ``prior`` through a row-stochastic transition table."""
    if transition is None:
        return np.asarray(prior, dtype=float)
    # explicit row-by-row accumulation, matching the compiled filter
    return (np.asarray(prior, dtype=float)[:, None] * transition).sum(axis=0)


def update_attribute_belief(prior, transition, obs_likelihood) -> np.ndarray:
    """One Bayes-filter step for a single attribute.

    posterior[v] is proportional to ``obs_likelihood[v] * sum_u transition[u, v] * prior[u]``.
    ``transition=None`` stands for the identity.

    Raises DegenerateEvidenceError when every value has zero posterior mass.
    """
    lik = np.asarray(obs_likelihood, dtype=float)
    if np.any(lik < 0):
        raise ValueError("likelihoods must be nonnegative")
    post = predict(prior, transition) * lik
    total = post.sum()
    if not total > 0:
        raise DegenerateEvidenceError("observation has zero likelihood under the prediction")
    post = post / total
    post.setflags(write=False)
    return post


def update_factored_belief(
    belief: FactoredBelief, action, observation: Mapping[str, int], model: FactoredModel
) -> FactoredBelief:
    """Apply the per-attribute filter to every attribute of ``belief``.

    ``observation`` maps attribute name to observed value. Fully observable
    attributes become one-hot at their observed value; the others are
    predicted with their transition table and corrected with the likelihood
    column of the observed value.
    """
    space = belief.space
    comps = []
    for name, size, prior in zip(space.names, space.sizes, belief.components):
        o = int(observation[name])
        if not 0 <= o < size:
            raise ValueError(f"observation {o} outside the value space of {name!r}")
        if not model.is_observable(name):
            comps.append(one_hot(size, o))
            continue
        z = model.obs_table(name, action)
        try:
            comps.append(update_attribute_belief(prior, model.transition(name, action), z[:, o]))
        except DegenerateEvidenceError as err:
            raise DegenerateEvidenceError(
                f"attribute {name!r}: observation {o} has zero likelihood", attribute=name
            ) from err
    return FactoredBelief(space, tuple(comps))


def quantize_vector(probs, step: float = 0.1) -> tuple[int, ...]:
    if not 0 < step <= 1:
        raise ValueError(f"quantization step must be in (0, 1], got {step}")
    # the 1e-9 nudge makes exact ties like 0.35 / 0.1 = 3.4999... round up
    q = np.floor(np.asarray(probs, dtype=float) / step + 0.5 + 1e-9)
    return tuple(int(v) for v in q)


def quantize(belief: FactoredBelief | Sequence, step: float = 0.1, attributes=None) -> tuple[int, ...]:
    """Round each probability to the nearest multiple of ``step`` (ties round up).

    Returns the concatenated integer multiples, e.g. (0.26, 0.74) -> (3, 7).
    The belief itself is left untouched.
    """
    if isinstance(belief, FactoredBelief):
        names = belief.space.names if attributes is None else attributes
        comps = [belief[n] for n in names]
    else:
        comps = [belief] if np.ndim(belief[0]) == 0 else list(belief)
    key: tuple[int, ...] = ()
    for c in comps:
        key += quantize_vector(c, step)
    return key


# -- exact joint filter, used as an oracle for the factored approximation --

MAX_JOINT_STATES = 10_000


def joint_filter_oracle(
    joint_prior, joint_transition, joint_obs_likelihood, max_states: int = MAX_JOINT_STATES
) -> np.ndarray:
    """Exact Bayes filter step over the flattened joint state space."""
    prior = np.asarray(joint_prior, dtype=float).ravel()
    if prior.size > max_states:
        raise StateSpaceTooLarge(f"{prior.size} joint states exceeds the limit of {max_states}")
    T = np.asarray(joint_transition, dtype=float)
    lik = np.asarray(joint_obs_likelihood, dtype=float).ravel()
    post = (prior @ T) * lik
    total = post.sum()
    if not total > 0:
        raise DegenerateEvidenceError("observation has zero likelihood under the joint prediction")
    return post / total


def joint_product(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product of per-attribute vectors or matrices (first attribute varies slowest)."""
    out = np.asarray(factors[0], dtype=float)
    for f in factors[1:]:
        out = np.kron(out, np.asarray(f, dtype=float))
    return out


def marginals(joint, sizes: Sequence[int]) -> list[np.ndarray]:
    """Per-attribute marginals of a flattened joint distribution."""
    j = np.asarray(joint, dtype=float).reshape(tuple(sizes))
    axes = range(len(sizes))
    return [j.sum(axis=tuple(a for a in axes if a != k)) for k in axes]
