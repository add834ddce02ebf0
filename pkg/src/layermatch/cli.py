"""Command-line interface.

Exit codes: 0 success, 2 configuration error (including bad flag values),
3 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import assign
from .bank import FeatureBank, SyntheticSpec, gen_synthetic_bank, read_bank, write_bank
from .config import PRESETS, Hyperparams, TrainConfig, apply_preset
from .episodes import EvalReport, evaluate
from .errors import BankFormatError, ConfigurationError
from .matcher import load_matcher_params, save_matcher_params
from .pipeline import score_pair
from .training import train


def _parse_layer_ids(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigurationError(f"bad layer list {text!r}, expected e.g. 7,8") from None


def _parse_layer_dims(text: str) -> tuple[tuple[int, int, int, int], ...]:
    """Parse a bank shape spec like 7:3x3x256,8:3x3x512."""
    layers = []
    for part in text.split(","):
        try:
            lid, dims = part.split(":")
            h, w, c = dims.lower().split("x")
            layers.append((int(lid), int(h), int(w), int(c)))
        except ValueError:
            raise ConfigurationError(
                f"bad layer spec {part!r}, expected id:HxWxC"
            ) from None
    return tuple(layers)


def _parse_int_list(text: str, what: str) -> tuple[int, ...]:
    if not text.strip():
        return ()
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigurationError(f"bad {what} list {text!r}") from None


def _add_eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-way", type=int, default=5)
    p.add_argument("--k-shot", type=int, default=1)
    p.add_argument("--queries", type=int, default=15, help="query images per class")
    p.add_argument("--episodes", type=int, default=2000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--temperature", type=float, default=5.0)
    p.add_argument("--k-top", type=int, default=5)
    p.add_argument("--pooled", type=int, default=3)
    p.add_argument("--layers", default="7,8")
    p.add_argument("--assign", choices=("hungarian", "nn"), default="hungarian")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)


def _hyperparams(args) -> Hyperparams:
    try:
        hp = Hyperparams(
            n_way=args.n_way,
            k_shot=args.k_shot,
            query_per_class=args.queries,
            episode_count=args.episodes,
            seed=args.seed,
            layer_ids=_parse_layer_ids(args.layers),
            pooled=args.pooled,
            temperature=args.temperature,
            k_top=args.k_top,
            assign=args.assign,
        )
        if args.preset:
            hp = apply_preset(hp, args.preset)
        changes = {}
        if args.alpha is not None:
            changes["alpha"] = args.alpha
        if args.beta is not None:
            changes["beta"] = args.beta
        if changes:
            from dataclasses import replace

            hp = replace(hp, **changes)
        return hp
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None


def _load_matcher(arg: str | None):
    if arg is None or arg == "none":
        return None
    return load_matcher_params(arg)


def _write_report(report: EvalReport, path: str) -> None:
    if path.endswith(".json"):
        payload = {
            "accuracies": [float(a) for a in report.accuracies],
            "mean_accuracy": report.mean_accuracy,
            "ci95": report.ci95,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        return
    lines = ["episode,accuracy"]
    lines += [f"{i},{acc:.10g}" for i, acc in enumerate(report.accuracies)]
    lines.append(f"mean,{report.mean_accuracy:.10g}")
    lines.append(f"ci95,{report.ci95:.10g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_eval(args) -> int:
    hp = _hyperparams(args)
    bank = read_bank(args.bank)
    matcher = _load_matcher(args.params)
    report = evaluate(bank, matcher, hp)
    print(f"episodes {hp.episode_count}")
    print(f"mean_accuracy {report.mean_accuracy:.6f}")
    print(f"ci95 {report.ci95:.6f}")
    if args.report:
        _write_report(report, args.report)
    return 0


def _cmd_train(args) -> int:
    hp = _hyperparams(args)
    try:
        cfg = TrainConfig(
            epochs=args.epochs,
            learning_rate=args.lr,
            decay_factor=args.decay,
            decay_epochs=_parse_int_list(args.decay_epochs, "decay epoch"),
            beta=hp.beta,
            seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    bank = read_bank(args.bank)
    params, history = train(bank, hp, cfg)
    save_matcher_params(params.matcher, args.out_params)
    print("epoch,lr,mean_l1,mean_l2,mean_total,train_accuracy")
    for row in history:
        print(
            f"{row.epoch},{row.lr:.10g},{row.mean_l1:.6f},{row.mean_l2:.6f},"
            f"{row.mean_total:.6f},{row.train_accuracy:.6f}"
        )
    return 0


def _cmd_score_pair(args) -> int:
    hp = _hyperparams(args)
    bank = read_bank(args.bank)
    matcher = _load_matcher(args.params)
    for name, idx in (("support-idx", args.support_idx), ("query-idx", args.query_idx)):
        if not 0 <= idx < bank.image_count:
            raise ConfigurationError(
                f"--{name} {idx} out of range for a bank of {bank.image_count} images"
            )
    s_maps = {lid: bank.feature_map(lid, args.support_idx) for lid in hp.layer_ids}
    q_maps = {lid: bank.feature_map(lid, args.query_idx) for lid in hp.layer_ids}
    print(score_pair(s_maps, q_maps, matcher, hp).to_json())
    return 0


def _cmd_gen_synthetic(args) -> int:
    try:
        spec = SyntheticSpec(
            class_count=args.classes,
            images_per_class=args.per_class,
            layers=_parse_layer_dims(args.layers),
            prototype_scale=args.prototype_scale,
            noise_scale=args.noise_scale,
            seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    write_bank(gen_synthetic_bank(spec), args.out)
    return 0


def _bench_one(backend, costs: np.ndarray) -> float:
    backend.solve(costs[0])  # warm up any lazy allocation paths
    start = time.perf_counter()
    for cost in costs:
        backend.solve(cost)
    return (time.perf_counter() - start) / len(costs)


def _cmd_bench_assign(args) -> int:
    sizes = _parse_int_list(args.sizes, "size")
    if not sizes or any(d < 1 for d in sizes):
        raise ConfigurationError(f"--sizes must be positive integers, got {args.sizes!r}")
    if args.trials < 1:
        raise ConfigurationError(f"--trials must be >= 1, got {args.trials}")
    if args.impl == "both":
        names = assign.available_backends()
    elif args.impl == "auto":
        names = (assign.backend_name(),)
    else:
        try:
            assign.get_backend(args.impl)
        except RuntimeError as exc:
            raise ConfigurationError(str(exc)) from None
        names = (args.impl,)
    print("d,n,backend,mean_seconds")
    for d in sizes:
        n = d * d
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, d]))
        costs = rng.random((args.trials, n, n))
        for name in names:
            mean = _bench_one(assign.get_backend(name), costs)
            print(f"{d},{n},{name},{mean:.9g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layermatch",
        description="Few-shot evaluation over multi-layer feature banks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="episodic evaluation of a bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--params", default=None, help="matcher parameter file, or 'none'")
    p.add_argument("--report", default=None, help="write per-episode results (.csv or .json)")
    _add_eval_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("train", help="train matcher and classifier on a bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--out-params", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--decay", type=float, default=0.05)
    p.add_argument("--decay-epochs", default="4,6,8")
    _add_eval_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("score-pair", help="score one support/query image pair")
    p.add_argument("--bank", required=True)
    p.add_argument("--support-idx", type=int, required=True)
    p.add_argument("--query-idx", type=int, required=True)
    p.add_argument("--params", default=None)
    _add_eval_flags(p)
    p.set_defaults(func=_cmd_score_pair)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic feature bank")
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--layers", default="7:3x3x256,8:3x3x512")
    p.add_argument("--prototype-scale", type=float, default=10.0)
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("bench-assign", help="time the assignment solver")
    p.add_argument("--sizes", default="3,4,6,9,12", help="pooled grid sides d; n = d*d")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--impl", choices=("auto", "compiled", "python", "both"), default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_bench_assign)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BankFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
