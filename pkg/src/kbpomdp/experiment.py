"""Five-way method comparison: training, greedy evaluation, and CSV/policy output."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .gridworld import PARTIAL, GridMap
from .knowledge import BiasBelief, KnowledgeBase, compute_bias
from .learner import (
    BeliefTracker,
    EpisodeRecord,
    Hyperparams,
    MethodVariant,
    QTable,
    run_episode,
    train,
)

log = logging.getLogger(__name__)

DEFAULT_METHODS = tuple(MethodVariant)
DEFAULT_SEEDS = (1, 2, 3, 4, 5)
ROLLING_WINDOW = 100
POLICY_MAGIC = b"KBPOMDP-POLICY 1\n"


class ConfigError(ValueError):
    pass


# -- configuration ----------------------------------------------------------

_HYPER_KEYS = [f.name for f in fields(Hyperparams) if f.name != "seed"]


@dataclass(frozen=True)
class ExperimentConfig:
    """Run-wide settings: every hyperparameter except the seed, plus the comparison grid."""

    hyper: Hyperparams = field(default_factory=Hyperparams)
    methods: tuple[MethodVariant, ...] = DEFAULT_METHODS
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    eval_episodes: int = 1000
    out_dir: str = "results"

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be >= 1")
        object.__setattr__(self, "methods", tuple(MethodVariant(m) for m in self.methods))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def hyper_for(self, seed: int) -> Hyperparams:
        return replace(self.hyper, seed=int(seed))


def config_keys() -> list[str]:
    return _HYPER_KEYS + ["methods", "seeds", "eval_episodes", "out_dir"]


def _parse_value(raw: str, kind):
    if kind is bool:
        low = raw.lower()
        if low not in ("true", "false"):
            raise ValueError(f"expected true/false, got {raw!r}")
        return low == "true"
    return kind(raw)


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse ``key = value`` lines; unknown or repeated keys are errors."""
    hyper_types = {f.name: type(getattr(Hyperparams(), f.name)) for f in fields(Hyperparams)}
    seen: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {line!r}")
        if key not in config_keys():
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        seen[key] = val
    try:
        hyper = Hyperparams(**{k: _parse_value(v, hyper_types[k]) for k, v in seen.items() if k in hyper_types})
        kwargs: dict = {"hyper": hyper}
        if "methods" in seen:
            kwargs["methods"] = tuple(MethodVariant(m.strip()) for m in seen["methods"].split(",") if m.strip())
        if "seeds" in seen:
            kwargs["seeds"] = tuple(int(s) for s in seen["seeds"].split(",") if s.strip())
        if "eval_episodes" in seen:
            kwargs["eval_episodes"] = int(seen["eval_episodes"])
        if "out_dir" in seen:
            kwargs["out_dir"] = seen["out_dir"]
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(f"{source}: {err}") from err


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for k in _HYPER_KEYS:
        v = getattr(cfg.hyper, k)
        lines.append(f"{k} = {str(v).lower() if isinstance(v, bool) else repr(v)}")
    lines.append("methods = " + ", ".join(m.value for m in cfg.methods))
    lines.append("seeds = " + ", ".join(str(s) for s in cfg.seeds))
    lines.append(f"eval_episodes = {cfg.eval_episodes}")
    lines.append(f"out_dir = {cfg.out_dir}")
    return "\n".join(lines) + "\n"


def load_config(path: str | os.PathLike | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return parse_config(Path(path).read_text(), str(path))


# -- evaluation -------------------------------------------------------------

@dataclass(frozen=True)
class EvalRow:
    method: MethodVariant
    mean_reward: float
    stderr: float
    success_rate: float
    n_episodes: int


def summarize(method, records: Sequence[EpisodeRecord]) -> EvalRow:
    """Mean total reward with its standard error, and the delivery rate."""
    rewards = np.array([r.reward for r in records], float)
    n = len(rewards)
    se = float(rewards.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    success = sum(r.success for r in records) / n
    return EvalRow(MethodVariant(method), float(rewards.mean()), se, success, n)


def evaluate_episodes(qtable: QTable, grid: GridMap, bias, variant, hyper: Hyperparams, episodes: int, rng) -> list[EpisodeRecord]:
    tracker = BeliefTracker(grid, bias, variant, hyper)
    return [run_episode(tracker, qtable, rng, learning=False, epsilon=0.0) for _ in range(episodes)]


def evaluate(qtable: QTable, grid: GridMap, bias, variant, hyper: Hyperparams, episodes: int, rng) -> EvalRow:
    """Greedy, non-learning evaluation of a trained table."""
    return summarize(variant, evaluate_episodes(qtable, grid, bias, variant, hyper, episodes, rng))


def eval_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), 1])


# -- comparison -------------------------------------------------------------

@dataclass
class RunResult:
    method: MethodVariant
    seed: int
    qtable: QTable
    curve: list[EpisodeRecord]
    eval_records: list[EpisodeRecord]


@dataclass
class ComparisonResult:
    config: ExperimentConfig
    runs: list[RunResult]
    summary: list[EvalRow]

    def curves(self, method) -> list[list[EpisodeRecord]]:
        return [r.curve for r in self.runs if r.method == MethodVariant(method)]

    def mean_curve(self, method) -> np.ndarray:
        """Per-episode reward averaged over seeds."""
        return np.mean([[e.reward for e in c] for c in self.curves(method)], axis=0)

    def row(self, method) -> EvalRow:
        return next(r for r in self.summary if r.method == MethodVariant(method))


def require_bias(methods, kb: KnowledgeBase | None) -> BiasBelief | None:
    """Bias belief for the configured methods; fails before any training if knowledge is missing."""
    needs = [m.value for m in methods if MethodVariant(m).uses_knowledge]
    if kb is None:
        if needs:
            raise ConfigError(f"methods {needs} need knowledge matrices")
        return None
    bias = compute_bias(kb)
    missing = [a for a in PARTIAL if a not in bias]
    if needs and missing:
        raise ConfigError(f"knowledge does not cover attributes {missing}")
    return bias


def run_single(method, seed: int, cfg: ExperimentConfig, grid: GridMap, bias) -> RunResult:
    hyper = cfg.hyper_for(seed)
    qtable, curve = train(hyper, grid, bias, method)
    records = evaluate_episodes(qtable, grid, bias, method, hyper, cfg.eval_episodes, eval_rng(seed))
    log.info("%s seed %d: eval success %.3f", MethodVariant(method).value, seed,
             sum(r.success for r in records) / len(records))
    return RunResult(MethodVariant(method), seed, qtable, curve, records)


def run_comparison(cfg: ExperimentConfig, grid: GridMap, kb: KnowledgeBase | None) -> ComparisonResult:
    """Train and evaluate every (method, seed) cell; summary rows follow ``cfg.methods``."""
    bias = require_bias(cfg.methods, kb)
    runs = [run_single(m, s, cfg, grid, bias) for m in cfg.methods for s in cfg.seeds]
    summary = [
        summarize(m, [e for r in runs if r.method == m for e in r.eval_records]) for m in cfg.methods
    ]
    return ComparisonResult(cfg, runs, summary)


# -- learning-curve metrics -------------------------------------------------

def rolling_mean(values, window: int = ROLLING_WINDOW) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` entries average the available prefix."""
    v = np.asarray(values, float)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def episodes_to_sustained_positive(rewards, window: int = ROLLING_WINDOW, sustain: int = ROLLING_WINDOW) -> int | None:
    """First episode from which the rolling mean reward stays above 0 for ``sustain`` episodes."""
    pos = rolling_mean(rewards, window) > 0
    run = 0
    for i, ok in enumerate(pos):
        run = run + 1 if ok else 0
        if run == sustain:
            return i - sustain + 1
    return None


# -- file output ------------------------------------------------------------

def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            f.write(text)
    except OSError as err:
        raise OSError(f"cannot write {path}: {err.strerror or err}") from err
    return path


def _fmt(v: float) -> str:
    return repr(float(v))


def curve_csv(curve: Sequence[EpisodeRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "reward", "steps", "success"])
    for i, r in enumerate(curve):
        w.writerow([i, _fmt(r.reward), r.steps, int(r.success)])
    return buf.getvalue()


def read_curve_csv(path) -> list[EpisodeRecord]:
    with open(path, newline="") as f:
        return [EpisodeRecord(float(row["reward"]), int(row["steps"]), row["success"] == "1") for row in csv.DictReader(f)]


def emit_curves(curves: dict, out_dir: str | os.PathLike, window: int = ROLLING_WINDOW, prefix: str = "curve") -> list[Path]:
    """Write one CSV per (method, seed) plus a combined per-method mean/rolling-mean file.

    ``curves`` maps method name to a mapping ``seed -> list[EpisodeRecord]``.
    """
    if not curves:
        raise ValueError("no curves to write")
    out = Path(out_dir)
    paths = []
    combined = {}
    for method, by_seed in curves.items():
        name = MethodVariant(method).value
        for seed, curve in sorted(by_seed.items()):
            paths.append(_write(out / f"{prefix}_{name}_seed{seed}.csv", curve_csv(curve)))
        combined[name] = np.mean([[e.reward for e in c] for c in by_seed.values()], axis=0)
    n = min(len(v) for v in combined.values())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode"] + [h for m in combined for h in (f"{m}_mean_reward", f"{m}_rolling{window}")])
    rolls = {m: rolling_mean(v[:n], window) for m, v in combined.items()}
    for i in range(n):
        w.writerow([i] + [c for m in combined for c in (_fmt(combined[m][i]), _fmt(rolls[m][i]))])
    paths.append(_write(out / f"{prefix}s_combined.csv", buf.getvalue()))
    return paths


SUMMARY_DIGITS = 4


def summary_csv(rows: Sequence[EvalRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "mean_reward", "stderr", "success_rate", "n_episodes"])
    for r in rows:
        w.writerow([r.method.value, f"{r.mean_reward:.{SUMMARY_DIGITS}f}", f"{r.stderr:.{SUMMARY_DIGITS}f}",
                    f"{r.success_rate:.{SUMMARY_DIGITS}f}", r.n_episodes])
    return buf.getvalue()


def format_summary(rows: Sequence[EvalRow]) -> str:
    lines = [f"{'method':<14}{'mean reward':>14}{'std. error':>12}{'success':>10}{'episodes':>10}"]
    for r in rows:
        lines.append(f"{r.method.value:<14}{r.mean_reward:>14.2f}{r.stderr:>12.2f}{100 * r.success_rate:>9.2f}%{r.n_episodes:>10}")
    return "\n".join(lines)


def write_comparison(result: ComparisonResult, out_dir: str | os.PathLike) -> list[Path]:
    out = Path(out_dir)
    curves = {m.value: {r.seed: r.curve for r in result.runs if r.method == m} for m in result.config.methods}
    evals = {m.value: {r.seed: r.eval_records for r in result.runs if r.method == m} for m in result.config.methods}
    paths = emit_curves(curves, out)
    paths += emit_curves(evals, out, prefix="eval")
    paths.append(_write(out / "summary.csv", summary_csv(result.summary)))
    paths.append(_write(out / "config.txt", format_config(result.config)))
    return paths


# -- policy files -----------------------------------------------------------

def write_policy(path, qtable: QTable, method, hyper: Hyperparams, bias: BiasBelief | None) -> Path:
    """Header line of JSON metadata, then zlib-compressed sorted keys and values.

    Keys are stored as little-endian int16 and values as little-endian float64,
    so a read-back table is identical to the one written.
    """
    keys, vals = qtable.sorted_arrays()
    meta = {
        "method": MethodVariant(method).value,
        "hyper": {f.name: getattr(hyper, f.name) for f in fields(Hyperparams)},
        "bias": None if bias is None else {a: [float(v) for v in bias[a]] for a in sorted(bias.dists)},
        "key_len": qtable.key_len,
        "n_actions": qtable.n_actions,
        "entries": int(len(keys)),
    }
    payload = keys.astype("<i2").tobytes() + vals.astype("<f8").tobytes()
    blob = POLICY_MAGIC + json.dumps(meta, sort_keys=True).encode() + b"\n" + zlib.compress(payload, 6)
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(blob)
    except OSError as err:
        raise OSError(f"cannot write {p}: {err.strerror or err}") from err
    return p


@dataclass
class Policy:
    qtable: QTable
    method: MethodVariant
    hyper: Hyperparams
    bias: BiasBelief | None


def read_policy(path) -> Policy:
    blob = Path(path).read_bytes()
    if not blob.startswith(POLICY_MAGIC):
        raise ValueError(f"{path}: not a policy file")
    header, _, body = blob[len(POLICY_MAGIC):].partition(b"\n")
    meta = json.loads(header)
    payload = zlib.decompress(body)
    n, L, A = meta["entries"], meta["key_len"], meta["n_actions"]
    keys = np.frombuffer(payload[: n * L * 2], "<i2").reshape(n, L)
    vals = np.frombuffer(payload[n * L * 2:], "<f8").reshape(n, A)
    qtable = QTable.from_arrays(keys, vals) if n else QTable(L, A)
    bias = None
    if meta["bias"] is not None:
        bias = BiasBelief({a: np.array(v) for a, v in meta["bias"].items()}, {})
    return Policy(qtable, MethodVariant(meta["method"]), Hyperparams(**meta["hyper"]), bias)
