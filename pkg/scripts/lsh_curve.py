#!/usr/bin/env python3
"""Measure the LSH banding candidate curve against the closed form.

For b bands of r rows, P(candidate | Jaccard J) = 1 - (1 - J^r)^b. This
script samples set pairs at controlled Jaccard values and prints measured vs
predicted candidate rates, plus the curve's characteristic threshold
(1/b)^(1/r).
"""
import argparse
import random

from corpusprep.dedup import MinHashParams, lsh_candidates, minhash_signature


def exact_pair(rng: random.Random, inter: int, union: int):
    universe = rng.sample(range(1 << 62), union)
    shared = universe[:inter]
    rest = universe[inter:]
    half = len(rest) // 2
    return set(shared) | set(rest[:half]), set(shared) | set(rest[half:])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", type=int, default=400, help="pairs per J value")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--bands", type=int, default=9)
    ap.add_argument("--rows", type=int, default=13)
    args = ap.parse_args()

    params = MinHashParams(
        seed=args.seed,
        num_permutations=args.bands * args.rows,
        bands=args.bands,
        rows=args.rows,
    )
    rng = random.Random(args.seed)
    threshold = (1 / args.bands) ** (1 / args.rows)
    print(f"bands={args.bands} rows={args.rows} curve threshold ~ {threshold:.3f}")
    print(f"{'J':>6} {'predicted':>10} {'measured':>10}")
    for inter, union in ((20, 100), (50, 100), (70, 100), (80, 100), (90, 100), (95, 100)):
        J = inter / union
        predicted = 1 - (1 - J**args.rows) ** args.bands
        hits = 0
        for _ in range(args.pairs):
            A, B = exact_pair(rng, inter, union)
            sigs = [("a", minhash_signature(A, params)), ("b", minhash_signature(B, params))]
            hits += bool(lsh_candidates(sigs, params))
        print(f"{J:>6.2f} {predicted:>10.3f} {hits / args.pairs:>10.3f}")


if __name__ == "__main__":
    main()
