#!/usr/bin/env python3
"""Convert the 5000-image MNIST subset shipped with mlxtend into gzipped IDX files.

The subset holds 500 images per digit drawn from the official MNIST training
set, stored as CSV (784 pixel columns followed by the label). This script
writes the standard IDX containers so the Rust loader reads them unchanged:

    pip download --no-deps mlxtend
    python3 scripts/mnist_subset_to_idx.py mlxtend-*.whl data/mnist5k
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path


def main(wheel: str, out_dir: str) -> None:
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = gzip.decompress(raw).decode().strip().split("\n")
    pixels = bytearray()
    labels = bytearray()
    for row in rows:
        fields = [int(v) for v in row.split(",")]
        assert len(fields) == 785
        pixels.extend(fields[:784])
        labels.append(fields[784])
    n = len(rows)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(out / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(bytes(pixels))
    with gzip.GzipFile(out / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(labels))
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
