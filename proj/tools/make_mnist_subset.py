#!/usr/bin/env python3
"""Write a 5000-image MNIST subset as gzipped IDX files.

The pixels come from the `mnist_5k.csv.gz` table shipped inside the mlxtend
wheel (a verbatim 5000-sample extract of MNIST). The first 4000 rows become
the train split and the remaining 1000 rows the test split, after a fixed
permutation (the source table is sorted by class). Files use the
official IDX file names so the loaders treat the directory like a full
MNIST download.

    python3 tools/make_mnist_subset.py --wheel mlxtend-*.whl --out data/mnist-5k
"""

import argparse
import gzip
import io
import pathlib
import struct
import zipfile

import numpy as np


def write_idx(path, array, magic):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", n) for n in array.shape)
    # mtime=0 keeps the gzip bytes reproducible.
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
        f.write(header)
        f.write(array.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--n-train", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=20190502)
    args = ap.parse_args()

    with zipfile.ZipFile(args.wheel) as z:
        blob = z.read("mlxtend/data/data/mnist_5k.csv.gz")
    table = np.loadtxt(gzip.open(io.BytesIO(blob)), delimiter=",")
    order = np.random.RandomState(args.seed).permutation(len(table))
    table = table[order]
    images = table[:, :-1].reshape(-1, 28, 28)
    labels = table[:, -1]

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = args.n_train
    write_idx(out / "train-images-idx3-ubyte.gz", images[:n], 0x00000803)
    write_idx(out / "train-labels-idx1-ubyte.gz", labels[:n], 0x00000801)
    write_idx(out / "t10k-images-idx3-ubyte.gz", images[n:], 0x00000803)
    write_idx(out / "t10k-labels-idx1-ubyte.gz", labels[n:], 0x00000801)


if __name__ == "__main__":
    main()
