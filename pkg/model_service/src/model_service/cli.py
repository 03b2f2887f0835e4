"""Command-line entry points: train a checkpoint, serve checkpoints."""
from __future__ import annotations

import argparse
import logging
import sys

from .models import ModelConfig
from .service import ServiceConfig, serve
from .train import TrainJobSpec, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="model-service", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune a model on harness example files")
    p.add_argument("--method", choices=["ti", "qa"], required=True)
    p.add_argument("--train", required=True, help="training-example JSONL (harness build-examples)")
    p.add_argument("--dev", required=True, help="dev-example JSONL")
    p.add_argument("--dev-corpus", required=True, help="dev corpus JSONL for scoring")
    p.add_argument("--ontology", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=None, help="default: 8 for TI, 32 for QA")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--target-f1", type=float, default=None)
    p.add_argument("--d-model", type=int, default=96)
    p.add_argument("--layers", type=int, default=2)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("serve", help="serve checkpoints over the wire protocol")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--ti-checkpoint")
    p.add_argument("--qa-checkpoint")
    p.add_argument("--max-concurrency", type=int, default=8)
    p.set_defaults(func=cmd_serve)
    return parser


def cmd_train(args) -> int:
    spec = TrainJobSpec(
        method=args.method.upper(),
        train_path=args.train,
        dev_path=args.dev,
        dev_corpus=args.dev_corpus,
        ontology=args.ontology,
        checkpoint_out=args.out,
        max_epochs=args.max_epochs,
        patience=args.patience,
        batch_size=args.batch_size,
        seed=args.seed,
        lr=args.lr,
        target_f1=args.target_f1,
        model=ModelConfig(d_model=args.d_model, num_layers=args.layers),
    )
    result = train(spec)
    print(
        f"checkpoint: {result.checkpoint_path}\nlog: {result.log_path}\n"
        f"best dev F1: {result.best_dev_f1:.4f} over {result.epochs_ran} epoch(s)"
    )
    return 0


def cmd_serve(args) -> int:
    serve(
        ServiceConfig(
            host=args.host,
            port=args.port,
            ti_checkpoint=args.ti_checkpoint,
            qa_checkpoint=args.qa_checkpoint,
            max_concurrency=args.max_concurrency,
        )
    )
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
