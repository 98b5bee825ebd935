"""Build the bundled MNIST subset used by the desk-scale experiments.

Source: the `mnist` npm package (10,000 MNIST digits stored as JSON with
pixel intensities in [0, 1] rounded to three decimals). Pixels are mapped
back to bytes with round(v * 255), which is exact for that rounding.

Usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 scripts/make_mnist_subset.py package/src/digits data/mnist-subset
"""
import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np

TRAIN, TEST = 5000, 1000


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + payload)


def main(src, dest):
    images, labels = [], []
    for digit in range(10):
        data = json.loads(Path(src, f"{digit}.json").read_text())["data"]
        flat = np.asarray(data, dtype=np.float64).reshape(-1, 784)
        images.append(np.rint(flat * 255.0).astype(np.uint8))
        labels.append(np.full(len(flat), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(0).permutation(len(labels))
    images, labels = images[order], labels[order]
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    parts = {"train": slice(0, TRAIN), "t10k": slice(TRAIN, TRAIN + TEST)}
    for name, sl in parts.items():
        img, lab = images[sl], labels[sl]
        write_idx(dest / f"{name}-images-idx3-ubyte.gz", 0x803, (len(img), 28, 28), img.tobytes())
        write_idx(dest / f"{name}-labels-idx1-ubyte.gz", 0x801, (len(lab),), lab.tobytes())


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
