#!/usr/bin/env python3
"""Write a small MNIST subset as standard IDX files.

Source: the 5000-sample MNIST CSV bundled with the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz, 784 pixel columns then the label).
Every `stride`-th row is kept so all digit classes are represented.
"""
import argparse
import gzip
import pathlib
import struct


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv_gz")
    ap.add_argument("out_dir")
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--stride", type=int, default=50)
    args = ap.parse_args()

    rows = gzip.open(args.csv_gz, "rt").read().splitlines()
    picked = rows[:: args.stride][: args.count]
    images = bytearray()
    labels = bytearray()
    for row in picked:
        values = [int(float(v)) for v in row.split(",")]
        images.extend(bytes(values[:784]))
        labels.append(values[784])

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = len(picked)
    (out / "images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, n, 28, 28) + images)
    (out / "labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, n) + labels)
    print(f"wrote {n} samples to {out}")


if __name__ == "__main__":
    main()
