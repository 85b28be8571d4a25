"""embed-trainer command line: train a checkpoint, export an EMB1 table."""

from __future__ import annotations

import argparse
import logging
import sys

from .train import (
    TrainConfig,
    export_table,
    load_checkpoint,
    load_patch_dir,
    save_checkpoint,
    train,
)

log = logging.getLogger("embed_trainer")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="embed-trainer", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="contrastive training over a patch directory")
    p.add_argument("--patches", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--lr", type=float, default=1e-3)

    p = sub.add_parser("export", help="embed patches and write an EMB1 table")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--patches", required=True)
    p.add_argument("--out", required=True, help="table path (.emb)")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cfg = TrainConfig(seed=args.seed, epochs=args.epochs,
                              batch_size=args.batch_size, tau=args.tau,
                              lr=args.lr)
            _, patches = load_patch_dir(args.patches)
            ckpt = train(patches, cfg)
            save_checkpoint(ckpt, args.out)
            log.info("trained %d epochs, loss %.4f -> %.4f, saved %s",
                     cfg.epochs, ckpt["epoch_losses"][0],
                     ckpt["epoch_losses"][-1], args.out)
        else:
            model, _ = load_checkpoint(args.model)
            ids, patches = load_patch_dir(args.patches)
            count = export_table(model, ids, patches, args.out)
            log.info("exported %d embeddings to %s", count, args.out)
    except (ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
