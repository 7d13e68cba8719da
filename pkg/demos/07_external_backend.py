"""The file-based protocol that plugs external style engines in.

The scheduler writes jobs/<job_id>/job.manifest, runs the backend command
with that path as its only argument, and expects the stylized image at
output_path plus an optional loss.csv. Any program in any language that
follows this contract works; here a tiny Python stub stands in for a
heavyweight neural engine. The neural_backend package in this repository
implements the same contract around a ViT appearance-transfer engine.
"""

import argparse
import textwrap
from pathlib import Path

from stylemark import generate_dataset, jobs_from_pairs, run_jobs, save_manifest

STUB = """
    import json, shutil, sys
    from pathlib import Path

    spec = json.load(open(sys.argv[1]))          # the job manifest
    shutil.copy(spec["content_path"], spec["output_path"])
    rows = ["epoch,total,appearance,structure,identity"]
    for e in range(1, 11):
        rows.append(f"{e},{1.0 / e:.4f},{0.5 / e:.4f},{0.4 / e:.4f},{0.1 / e:.4f}")
    Path(spec["output_path"]).parent.joinpath("loss.csv").write_text("\\n".join(rows))
"""


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="demo_out/07_protocol")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    dataset = generate_dataset(out / "data", count=6, seed=1, image_size=48)
    stub = out / "stub_backend.py"
    stub.write_text(textwrap.dedent(STUB))

    ids = dataset.ids()
    pairs = [(ids[k], ids[(k + 1) % len(ids)]) for k in range(6)]
    jobs = jobs_from_pairs(pairs, dataset, dataset, global_seed=9,
                           job_prefix="ext")
    outcome = run_jobs(jobs, f"external:python3 {stub}", 3, out / "work",
                       "Styled", dataset, timeout=60)
    print(f"{len(outcome.results)} jobs succeeded, {len(outcome.failures)} failed")

    first = outcome.results[0]
    print("job dir contents:",
          sorted(p.name for p in first.output_image_path.parent.iterdir()))
    print(f"loss curve: {len(first.loss_curve.rows)} rows, "
          f"final total {first.loss_curve.final_total():.4f}")
    save_manifest(outcome.manifest, out / "styled.jsonl")
    print(f"derived manifest -> {out / 'styled.jsonl'}")


if __name__ == "__main__":
    main()
