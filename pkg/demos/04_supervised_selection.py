"""Supervised style-source selection: rank, pool, pair.

Stylization drifts image appearance away from the annotation, so style
sources are chosen from the training images a detector handles best
(lowest NME). Pool size trades diversity against control: top-1 uses one
trusted source for everything, the full pool degenerates to random style.
"""

import argparse
from pathlib import Path

from stylemark import (
    DetectorBackend,
    assign_styles,
    evaluate,
    fit_mean_shape,
    generate_dataset,
    rank_by_nme,
    sst_select,
)
from stylemark.selection import StylePool


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="demo_out/04_selection")
    args = parser.parse_args()
    out = Path(args.out)

    train = generate_dataset(out / "data", count=30, seed=11, image_size=64)

    # Rank training images by how well the built-in mean-shape baseline
    # predicts them from their own geometry.
    model = fit_mean_shape(train)
    predictions = evaluate(DetectorBackend.parse("mean-shape"), train, model=model)
    ranked = rank_by_nme(predictions, train)
    print("best 5 by NME:", [(r.id, round(r.nme, 2)) for r in ranked[:5]])

    for n in (1, 10, 25):
        pool = sst_select(ranked, n)
        pairing = assign_styles(train, pool, seed=5)
        distinct = len(set(pairing.style_ids()))
        print(f"pool n={n:>3}: {len(pool.members)} members, "
              f"{distinct} distinct styles used across {len(pairing.pairs)} pairs")
        pairing.save(out / f"pairing_top{n}.jsonl")

    # The unsupervised regime is the same machinery with the whole training
    # set as the pool.
    full = StylePool(n=len(train), members=tuple(train.ids()))
    random_style = assign_styles(train, full, seed=5)
    print("unsupervised pairing uses",
          len(set(random_style.style_ids())), "distinct styles")


if __name__ == "__main__":
    main()
