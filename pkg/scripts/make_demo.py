#!/usr/bin/env python3
"""Build a self-contained demo workspace: WET shards, language model, config.

Usage:
    python scripts/make_demo.py demo/
    corpusprep run -c demo/config.yaml -v
    corpusprep stats -c demo/config.yaml
"""
import argparse
from pathlib import Path

import yaml

from corpusprep import langid
from corpusprep.synth import DEMO_BLOCKLIST, build_mixed_corpus, labeled_corpus
from corpusprep.wet import write_wet_file


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("target", help="directory to create the demo in")
    ap.add_argument("--docs", type=int, default=2000, help="documents to generate")
    ap.add_argument("--shards", type=int, default=8, help="WET shard count")
    ap.add_argument("--seed", type=int, default=1234)
    ap.add_argument("--lines-per-lang", type=int, default=300, help="classifier training lines")
    args = ap.parse_args()

    target = Path(args.target)
    wet_dir = target / "wet"
    wet_dir.mkdir(parents=True, exist_ok=True)

    corpus = build_mixed_corpus(n_docs=args.docs, n_shards=args.shards, seed=args.seed)
    for i, shard in enumerate(corpus.shards):
        write_wet_file(wet_dir / f"crawl-{i:02d}.wet.gz", shard)
    print(f"wrote {args.shards} WET shards with {args.docs} documents under {wet_dir}")

    model = langid.train(labeled_corpus(args.lines_per_lang, seed=args.seed), seed=args.seed)
    langid.save_model(model, target / "model.npz")
    print(f"trained toy language model ({'/'.join(model.classes)}) -> {target / 'model.npz'}")

    (target / "blocklist.txt").write_text(DEMO_BLOCKLIST, encoding="utf-8")

    config = {
        "wet_paths": ["wet/*.wet.gz"],
        "snapshot": "2024-05",
        "output_dir": "out",
        "batch_size": 100,
        "workers": 4,
        "langid": {"model_path": "model.npz", "target_lang": "ro", "threshold": 0.5},
        "content_filter": {"blocklist_path": "blocklist.txt"},
    }
    (target / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
    print(f"config at {target / 'config.yaml'}; run:")
    print(f"  corpusprep run -c {target / 'config.yaml'} -v")


if __name__ == "__main__":
    main()
