#!/usr/bin/env python3
"""Write the 5,000-digit MNIST subset bundled with mlxtend as IDX files.

Usage: make_mnist_subset.py OUT_DIR [--csv PATH]

The CSV holds one digit per row: 784 pixel values (0-255) followed by the
label. Rows are written in file order; no shuffling.
"""
import argparse
import gzip
import os
import struct


def default_csv():
    import mlxtend  # noqa: deferred so --csv works without the package

    return os.path.join(os.path.dirname(mlxtend.__file__), "data", "data", "mnist_5k.csv.gz")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("out_dir")
    parser.add_argument("--csv", default=None)
    args = parser.parse_args()

    path = args.csv or default_csv()
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rt") as f:
        rows = [line.strip().split(",") for line in f if line.strip()]

    pixels = bytearray()
    labels = bytearray()
    for row in rows:
        if len(row) != 785:
            raise SystemExit(f"unexpected row width {len(row)}")
        pixels.extend(int(float(v)) for v in row[:784])
        labels.append(int(float(row[784])))

    n = len(rows)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">BBBBIII", 0, 0, 0x08, 3, n, 28, 28))
        f.write(pixels)
    with open(os.path.join(args.out_dir, "labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">BBBBI", 0, 0, 0x08, 1, n))
        f.write(labels)
    print(f"wrote {n} digits to {args.out_dir}")


if __name__ == "__main__":
    main()
