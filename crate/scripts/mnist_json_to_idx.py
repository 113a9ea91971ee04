#!/usr/bin/env python3
"""Convert the digit JSON files of the npm `mnist` package into IDX files.

Each `<d>.json` holds `{"data": [...]}`, a flat list of 28x28 images with
intensities scaled to [0, 1] and rounded to three decimals; `round(v * 255)`
recovers the original byte. Samples are interleaved by class (0, 1, ..., 9,
0, 1, ...) while every class still has samples left, so prefixes stay close
to balanced.

usage: mnist_json_to_idx.py <digits_dir> <out_dir>
"""
import json
import struct
import sys
from pathlib import Path

SIDE = 28


def main() -> None:
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    per_class = []
    for d in range(10):
        flat = json.loads((src / f"{d}.json").read_text())["data"]
        n = len(flat) // (SIDE * SIDE)
        per_class.append([flat[i * SIDE * SIDE:(i + 1) * SIDE * SIDE] for i in range(n)])
    pixels = bytearray()
    labels = bytearray()
    for i in range(max(len(c) for c in per_class)):
        for d in range(10):
            if i >= len(per_class[d]):
                continue
            pixels.extend(min(255, max(0, round(v * 255))) for v in per_class[d][i])
            labels.append(d)
    n = len(labels)
    (out / "images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, n, SIDE, SIDE) + bytes(pixels))
    (out / "labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, n) + bytes(labels))
    print(f"wrote {n} samples to {out}")


if __name__ == "__main__":
    main()
