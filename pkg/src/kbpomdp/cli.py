"""Command line entry point: ``kbpomdp {gen-knowledge,train,eval,compare}``.

Exit status is 0 on success, 1 for configuration or input errors and 2 for
failures while running.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .gridworld import MapFormatError, load_map
from .knowledge import derive_knowledge_from_map, load_knowledge, save_knowledge
from .learner import MethodVariant, train

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _InputError(Exception):
    pass


def _map(path):
    try:
        return load_map(path)
    except (OSError, MapFormatError) as err:
        raise _InputError(str(err)) from err


def _knowledge(path):
    if path is None:
        return None
    try:
        return load_knowledge(path)
    except (OSError, ValueError) as err:
        raise _InputError(str(err)) from err


def _config(path):
    try:
        return ex.load_config(path)
    except OSError as err:
        raise _InputError(str(err)) from err


def cmd_gen_knowledge(args) -> int:
    kb = derive_knowledge_from_map(_map(args.map))
    for p in save_knowledge(kb, args.out):
        print(p)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args.config)
    grid = _map(args.map)
    method = MethodVariant(args.method)
    bias = ex.require_bias([method], _knowledge(args.knowledge))
    hyper = cfg.hyper_for(args.seed)
    qtable, curve = train(hyper, grid, bias, method)
    out = Path(args.out)
    ex.emit_curves({method.value: {args.seed: curve}}, out)
    ex.write_policy(out / f"policy_{method.value}_seed{args.seed}.kbp", qtable, method, hyper, bias)
    ex._write(out / "config.txt", ex.format_config(cfg))
    tail = curve[-min(len(curve), 100):]
    if tail:
        print(f"{method.value} seed {args.seed}: {len(curve)} episodes, "
              f"last-{len(tail)} success {np.mean([r.success for r in tail]):.3f}, {len(qtable)} table entries")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        policy = ex.read_policy(args.policy)
    except (OSError, ValueError) as err:
        raise _InputError(str(err)) from err
    if args.episodes < 1:
        raise ex.ConfigError("--episodes must be >= 1")
    grid = _map(args.map)
    row = ex.evaluate(policy.qtable, grid, policy.bias, policy.method, policy.hyper, args.episodes, ex.eval_rng(args.seed))
    print(ex.format_summary([row]))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args.config)
    grid = _map(args.map)
    result = ex.run_comparison(cfg, grid, _knowledge(args.knowledge))
    ex.write_comparison(result, args.out or cfg.out_dir)
    print(ex.format_summary(result.summary))
    print("(reward error is the standard error of the per-episode mean)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kbpomdp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-knowledge", help="write knowledge matrices derived from a map")
    g.add_argument("--map", default=None, help="map file (default: packaged map)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_knowledge)

    t = sub.add_parser("train", help="train one method with one seed")
    t.add_argument("--config", default=None)
    t.add_argument("--map", default=None)
    t.add_argument("--knowledge", default=None)
    t.add_argument("--method", required=True, choices=[m.value for m in MethodVariant])
    t.add_argument("--seed", type=int, default=1)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a saved policy greedily")
    e.add_argument("--policy", required=True)
    e.add_argument("--map", default=None)
    e.add_argument("--episodes", type=int, default=1000)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="train and evaluate every configured method and seed")
    c.add_argument("--config", default=None)
    c.add_argument("--map", default=None)
    c.add_argument("--knowledge", default=None)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_OK if err.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (_InputError, ex.ConfigError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # noqa: BLE001
        print(f"runtime failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
