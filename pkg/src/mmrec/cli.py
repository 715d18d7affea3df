"""Command-line entry point for the pipeline and the service."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import torch

from . import pipeline
from .pipeline import PipelineConfig, PipelineError, load_config


def _build_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    for attr in ("corpus_dir", "output_dir", "seed", "strategy", "model_preset"):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, attr, value)
    if getattr(args, "ks", None):
        cfg.ks = tuple(int(k) for k in args.ks.split(","))
    return cfg.validate()


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config file (key = value lines)")
    p.add_argument("--corpus-dir")
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mmrec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("-n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rare-pairs", type=int, default=None)
    p.add_argument("--singletons", type=int, default=None)

    for name, help_text in (
        ("ingest", "parse and filter the corpus"),
        ("split", "split kept metamodels into train/val/test"),
        ("train-tokenizer", "train the subword vocabulary"),
        ("train", "train the model"),
        ("e2e", "run every stage and print the headline metrics"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name in ("e2e",):
            p.add_argument("--strategy", choices=["global", "local", "incremental"])
            p.add_argument("--ks", help="comma-separated cutoffs, e.g. 1,5,10,20")
            p.add_argument("--model-preset", dest="model_preset")
        if name == "train":
            p.add_argument("--model-preset", dest="model_preset")

    p = sub.add_parser("sample", help="generate test samples for a scenario")
    _add_common(p)
    p.add_argument("--strategy", choices=["global", "local", "incremental"])

    p = sub.add_parser("evaluate", help="score samples and write reports")
    _add_common(p)
    p.add_argument("--strategy", choices=["global", "local", "incremental"])
    p.add_argument("--ks", "--k", dest="ks", help="comma-separated cutoffs, e.g. 1,5,10,20")

    p = sub.add_parser("serve", help="run the recommendation service")
    p.add_argument("--checkpoint")
    p.add_argument("--vocab")
    p.add_argument("--output-dir", help="take checkpoint and vocab from a pipeline run")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)

    args = parser.parse_args(argv)
    torch.set_num_threads(1)
    try:
        return _dispatch(args)
    except (PipelineError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    log = lambda msg: print(msg, flush=True)

    if args.command == "synth":
        kwargs = {}
        if args.rare_pairs is not None:
            kwargs["rare_pairs"] = args.rare_pairs
        if args.singletons is not None:
            kwargs["singletons"] = args.singletons
        paths = pipeline.run_generate_synthetic(args.out, args.n, args.seed, **kwargs)
        print(f"wrote {len(paths)} metamodels to {args.out}")
        return 0

    if args.command == "serve":
        import uvicorn

        from .service import ServiceState, create_app

        ckpt, vocab = args.checkpoint, args.vocab
        if args.output_dir and not (ckpt and vocab):
            ckpt = ckpt or str(Path(args.output_dir) / "model.ckpt")
            vocab = vocab or str(Path(args.output_dir) / "vocab.json")
        if not ckpt or not vocab:
            print("error: serve needs --checkpoint and --vocab (or --output-dir)",
                  file=sys.stderr)
            return 1
        app = create_app(ServiceState(), checkpoint_path=ckpt, vocab_path=vocab)
        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    cfg = _build_config(args)

    if args.command == "ingest":
        manifest = pipeline.run_ingest(cfg)
        kept = sum(1 for e in manifest["entries"] if e["status"] == "kept")
        print(f"kept {kept}/{len(manifest['entries'])} metamodels")
    elif args.command == "split":
        splits = pipeline.run_split(cfg)
        print({name: len(ids) for name, ids in splits.items()})
    elif args.command == "train-tokenizer":
        vocab = pipeline.run_train_tokenizer(cfg)
        print(f"vocabulary size {len(vocab)}")
    elif args.command == "train":
        ckpt = pipeline.run_train(cfg, log=log)
        print(f"trained {len(ckpt.training_log)} epochs; "
              f"best val loss {min(e['val_loss'] for e in ckpt.training_log):.4f}")
    elif args.command == "sample":
        samples = pipeline.run_sample(cfg)
        print(f"wrote {len(samples)} samples for strategy {cfg.strategy}")
    elif args.command == "evaluate":
        reports = pipeline.run_evaluate(cfg, progress=log)
        _print_summary(reports, cfg)
    elif args.command == "e2e":
        reports = pipeline.run_end_to_end(cfg, log=log)
        _print_summary(reports, cfg)
    return 0


def _print_summary(reports, cfg) -> None:
    for name in ("model", "baseline"):
        block = reports[name].overall
        recalls = "  ".join(f"R@{k}={block.recall_at[k]:.3f}" for k in sorted(block.recall_at))
        print(f"{name:>8}: top1={block.top1:.3f}  {recalls}  (n={block.count})")


if __name__ == "__main__":
    sys.exit(main())
