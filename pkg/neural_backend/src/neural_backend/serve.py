"""Serve one style-transfer job described by a job.manifest file.

Protocol: the manifest is JSON with content_path, style_path, output_path,
params, and seed. On success the stylized image lands at output_path with
the content's dimensions and a loss.csv with header
``epoch,total,appearance,structure,identity`` sits next to it. Exit 0 on
success; any failure exits nonzero with a diagnostic on stderr. One job
per process invocation; parallelism belongs to the caller.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .engine import LossRow, TransferEngine
from .params import NeuralJobParams

LOSS_HEADER = "epoch,total,appearance,structure,identity"


def _load_image(path: Path):
    import torch

    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)


def _save_image(tensor, path: Path) -> None:
    arr = (tensor.squeeze(0).permute(1, 2, 0).numpy() * 255.0).round()
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr.astype(np.uint8)).save(path)


def _write_loss_csv(rows: list[LossRow], path: Path) -> None:
    lines = [
        "# appearance/structure/identity are this engine's decomposition;"
        " components it cannot expose would be written as 0",
        LOSS_HEADER,
    ]
    for row in rows:
        lines.append(f"{row.epoch},{row.total:.6f},{row.appearance:.6f},"
                     f"{row.structure:.6f},{row.identity:.6f}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def serve_job(manifest_path: str | Path) -> int:
    """Run the job described by ``manifest_path``; returns the exit code."""
    manifest_path = Path(manifest_path)
    try:
        spec = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        print(f"cannot read job manifest {manifest_path}: {e}", file=sys.stderr)
        return 1
    try:
        content_path = Path(spec["content_path"])
        style_path = Path(spec["style_path"])
        output_path = Path(spec["output_path"])
        seed = int(spec.get("seed", 0))
        params = NeuralJobParams.from_mapping(spec.get("params", {}))
    except (KeyError, TypeError, ValueError) as e:
        print(f"bad job manifest {manifest_path}: {e}", file=sys.stderr)
        return 1
    try:
        content = _load_image(content_path)
        style = _load_image(style_path)
    except (FileNotFoundError, OSError) as e:
        print(str(e), file=sys.stderr)
        return 1

    engine = TransferEngine(params, seed=seed)

    def checkpoint(epoch, image):
        _save_image(image, output_path.parent / f"checkpoint_{epoch:06d}.png")

    try:
        output, rows = engine.run(content, style, on_checkpoint=checkpoint)
    except Exception as e:  # engine failures must not die silently
        print(f"transfer failed: {e}", file=sys.stderr)
        return 1
    _save_image(output, output_path)
    _write_loss_csv(rows, output_path.parent / "loss.csv")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="splice-backend",
        description="ViT appearance-transfer backend for the stylemark job protocol",
    )
    parser.add_argument("manifest", help="path to a job.manifest file")
    args = parser.parse_args(argv)
    return serve_job(args.manifest)


def run() -> None:
    sys.exit(main())
