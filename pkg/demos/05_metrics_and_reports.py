"""Metrics (NME, FR, per-region, IoU) and report emission.

Also shows the bundled reference comparison rows: published numbers kept
as fixtures so table formatting and the degradation/retention arithmetic
stay pinned to known values.
"""

import argparse
from pathlib import Path

import numpy as np

from stylemark import (
    BinaryMask,
    LandmarkSet,
    PlotSpec,
    TableRow,
    aggregate,
    default_region_map,
    emit_plot,
    emit_table,
    failure_rate,
    mask_iou,
    nme,
    per_region_nme,
)
from stylemark.fixtures import REFERENCE_PREPROCESSING, REFERENCE_TABLE_ROWS


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="demo_out/05_reports")
    args = parser.parse_args()
    out = Path(args.out)

    rng = np.random.default_rng(0)
    gt = LandmarkSet(rng.uniform(10, 50, (48, 2)))
    pred = LandmarkSet(gt.xy + rng.normal(0, 1.5, (48, 2)))
    score = nme(pred, gt)
    print(f"single-image NME: {score:.3f}%")

    regions = default_region_map(48)
    per = per_region_nme(pred, gt, regions)
    print("per-region:", {k: round(v, 2) for k, v in per.items()})

    per_image = {f"im{k:02d}": float(v)
                 for k, v in enumerate(rng.uniform(4, 14, 20))}
    count, fraction = failure_rate(list(per_image.values()), threshold=10.0)
    print(f"failure rate at 10%: {count} images ({fraction:.0%})")

    report = aggregate("demo", per_image, threshold=10.0)
    report.save(out / "metrics.json")

    a = BinaryMask(4, 4, rng.random((4, 4)) < 0.6)
    b = BinaryMask(4, 4, rng.random((4, 4)) < 0.6)
    print(f"mask IoU of two random 4x4 masks: {mask_iou(a, b):.3f}")

    rows = [TableRow(configuration=c, nme=n, fr=f)
            for c, n, f in REFERENCE_TABLE_ROWS]
    csv_path, txt_path = emit_table(rows, out / "reference_table")
    print(f"reference table -> {csv_path} and {txt_path}")
    print(txt_path.read_text())

    cf = REFERENCE_PREPROCESSING["CF-ST"]["loss"]
    fb = REFERENCE_PREPROCESSING["FB-ST"]["loss"]
    emit_plot(PlotSpec(
        kind="line_loss",
        series={"CF-ST": sorted(cf.items()), "FB-ST": sorted(fb.items())},
        output_path=out / "reference_loss.png",
        title="Reference loss checkpoints",
    ))
    print(f"loss-checkpoint plot -> {out / 'reference_loss.png'}")


if __name__ == "__main__":
    main()
