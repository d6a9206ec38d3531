"""Command-line entry points.

    earnmore data build --input bars.csv --out data/ --window 10 --splits splits.json
    earnmore train --config config.json --data data/ --out run/ [--seed N]
    earnmore backtest --checkpoint run/checkpoint --data data/ --split test \
        [--events events.json] [--out report/] [--baselines market,blsw,csm]
    earnmore serve --data data/ --checkpoint run/checkpoint [--port 8700]
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import sys
from pathlib import Path

from . import evaluator, steering, trainer
from .marketdata import MarketDataset, build_dataset, load_ohlcv, parse_splits
from .portfolio_env import load_pool_events


def _cmd_data_build(args) -> int:
    splits = parse_splits(json.loads(Path(args.splits).read_text()))
    calendar = None
    if args.calendar:
        calendar = [dt.date.fromisoformat(line.strip())
                    for line in Path(args.calendar).read_text().splitlines()
                    if line.strip()]
    series = load_ohlcv(args.input, calendar=calendar)
    dataset = build_dataset(series, window=args.window, splits=splits)
    dataset.save(args.out)
    print(f"built dataset: {dataset.n_stocks} tickers x "
          f"{dataset.features.shape[1]} days x {dataset.n_features} features "
          f"-> {args.out}")
    return 0


def _cmd_train(args) -> int:
    dataset = MarketDataset.load(args.data)
    config = trainer.TrainConfig.from_file(args.config) if args.config \
        else trainer.TrainConfig()
    if args.seed is not None:
        config.seed = args.seed
    result = trainer.train(dataset, config, out_dir=args.out)
    last = result.log[-1] if result.log else {}
    print(f"trained {config.episodes} episodes "
          f"({len(result.log)} gradient steps) -> {args.out}")
    if last:
        print(f"final losses: j_q={last['j_q']:.3e} j_pi={last['j_pi']:.3e} "
              f"j_recon={last['j_recon']:.3e} alpha={last['alpha']:.3e}")
    return 0


def _cmd_backtest(args) -> int:
    dataset = MarketDataset.load(args.data)
    params, manifest = trainer.load_checkpoint(
        args.checkpoint, expected_dataset_manifest=dataset.manifest())
    events = load_pool_events(args.events) if args.events else None
    ckpt_config = manifest.get("config") or {}
    temperature = args.temperature
    if temperature is None:
        temperature = ckpt_config.get("temperature", 0.1)
    results = {"agent": evaluator.backtest(
        params, dataset, args.split, pool_events=events,
        temperature=temperature,
        sparsify_epsilon=ckpt_config.get("sparsify_epsilon", 0.0))}
    for name in (args.baselines.split(",") if args.baselines else []):
        name = name.strip()
        if name:
            results[name] = evaluator.run_baseline(name, dataset, args.split,
                                                   pool_events=events)
    for strategy, result in results.items():
        m = result.metrics_or_partial(split=args.split, strategy=strategy)
        print(f"{strategy:>8}: arr={m.arr:+.4f} sr={m.sr:+.3f} vol={m.vol:.4f} "
              f"mdd={m.mdd:.4f} cr={m.cr:+.3f} sor={m.sor:+.3f}")
    if args.out:
        evaluator.emit_report(results, args.split, args.out)
        print(f"report written to {args.out}")
    return 0


def _cmd_serve(args) -> int:
    dataset = MarketDataset.load(args.data)
    params, manifest = trainer.load_checkpoint(
        args.checkpoint, expected_dataset_manifest=dataset.manifest())
    ckpt_config = manifest.get("config") or {}
    service = steering.SteeringService(
        dataset, params,
        default_temperature=ckpt_config.get("temperature", 0.1),
        default_split=args.split,
        sparsify_epsilon=ckpt_config.get("sparsify_epsilon", 0.0))
    steering.serve(service, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="earnmore")
    sub = parser.add_subparsers(dest="command", required=True)

    data = sub.add_parser("data", help="dataset pipeline")
    data_sub = data.add_subparsers(dest="data_command", required=True)
    build = data_sub.add_parser("build", help="build a feature dataset from CSV bars")
    build.add_argument("--input", required=True)
    build.add_argument("--out", required=True)
    build.add_argument("--window", type=int, default=10)
    build.add_argument("--splits", required=True, help="JSON file of split date ranges")
    build.add_argument("--calendar", help="optional trading-day list, one ISO date per line")
    build.set_defaults(fn=_cmd_data_build)

    tr = sub.add_parser("train", help="train an agent")
    tr.add_argument("--config", help="TOML or JSON TrainConfig file")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--seed", type=int)
    tr.set_defaults(fn=_cmd_train)

    bt = sub.add_parser("backtest", help="run inference over a split")
    bt.add_argument("--checkpoint", required=True)
    bt.add_argument("--data", required=True)
    bt.add_argument("--split", required=True)
    bt.add_argument("--events", help="pool-events JSON file")
    bt.add_argument("--out")
    bt.add_argument("--baselines", help="comma list from market,blsw,csm")
    bt.add_argument("--temperature", type=float)
    bt.set_defaults(fn=_cmd_backtest)

    sv = sub.add_parser("serve", help="start the steering HTTP service")
    sv.add_argument("--data", required=True)
    sv.add_argument("--checkpoint", required=True)
    sv.add_argument("--port", type=int, default=8700)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--split", default="test")
    sv.set_defaults(fn=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
