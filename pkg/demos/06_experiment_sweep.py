"""The full builtin experiment sweep at desk scale.

Twelve configurations: baseline on original and stylized test sets, full
stylized replacement, supervised replacement at three pool sizes, the
rotation control, four augmentation unions, and the cropped-vs-full
preprocessing study. With the pixel-blind mean-shape detector the absolute
numbers are not meaningful as accuracy; what the sweep demonstrates is the
protocol: determinism, provenance, cardinalities, and report wiring.
"""

import argparse
from pathlib import Path

from stylemark import Seeds, builtin_configs, default_region_map, \
    generate_dataset, run_sweep


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="demo_out/06_sweep")
    args = parser.parse_args()
    out = Path(args.out)

    root = generate_dataset(out / "root", count=60, seed=2025, image_size=64)
    configs = builtin_configs(n_train=45, n_test=15,
                              seeds=Seeds(split=3, pairing=5, rotation=8),
                              region_map=default_region_map(48))
    print(f"running {len(configs)} configurations on {len(root)} images")

    results = run_sweep(configs, root, out / "results")
    for result in results:
        if result.report is not None:
            print(f"  {result.name:<22} NME {result.report.nme:7.3f}  "
                  f"FR {result.report.fr_count:2d}  ({result.wall_time:.1f}s)")
        else:
            modes = result.study.modes
            print(f"  {result.name:<22} study: " + ", ".join(
                f"{mode} IoU={info['mean_iou']:.3f}" for mode, info in modes.items()))
    print(f"comparison table -> {out / 'results' / 'comparison.txt'}")
    print((out / "results" / "comparison.txt").read_text())


if __name__ == "__main__":
    main()
