#!/usr/bin/env python3
"""Convert a USPS download to IDX files plus a dataset manifest.

Two common distributions are understood:

  * the LIBSVM files ``usps`` and ``usps.t`` (optionally ``.bz2``), with
    labels 1..10 and 256 features in [-1, 1];
  * ``usps.h5`` with ``train/data``, ``train/target``, ``test/data`` and
    ``test/target`` (features in [0, 1]; needs h5py).

Train and test are concatenated into the full 9298-image set. The manifest
subsamples 3000 images by default, which is what the desk-scale preset uses.

    python3 tools/data/usps_to_idx.py ~/Downloads/usps.bz2 ~/Downloads/usps.t.bz2 \\
        --out "$DCFAE_DATA_DIR/usps"
"""
import argparse
import bz2
import json
import os
import struct

import numpy as np


def write_idx(path, array, magic):
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in array.shape:
            f.write(struct.pack(">I", d))
        f.write(array.astype(np.uint8).tobytes())


def read_libsvm(path):
    opener = bz2.open if path.endswith(".bz2") else open
    images, labels = [], []
    with opener(path, "rt") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            labels.append(int(float(parts[0])) - 1)
            row = np.full(256, -1.0)
            for item in parts[1:]:
                idx, val = item.split(":")
                row[int(idx) - 1] = float(val)
            images.append(row)
    pixels = (np.asarray(images) + 1.0) / 2.0
    return pixels, np.asarray(labels)


def read_h5(path):
    import h5py

    with h5py.File(path, "r") as f:
        parts = [(f[s]["data"][:], f[s]["target"][:]) for s in ("train", "test")]
    pixels = np.concatenate([p for p, _ in parts])
    labels = np.concatenate([t for _, t in parts])
    return pixels, labels


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("inputs", nargs="+", help="usps[.bz2] and usps.t[.bz2], or usps.h5")
    ap.add_argument("--out", required=True)
    ap.add_argument("--subsample", type=int, default=3000, help="0 keeps all images")
    ap.add_argument("--subsample-seed", type=int, default=0)
    args = ap.parse_args()

    chunks = [read_h5(p) if p.endswith(".h5") else read_libsvm(p) for p in args.inputs]
    pixels = np.concatenate([c[0] for c in chunks]).reshape(-1, 16, 16)
    labels = np.concatenate([c[1] for c in chunks])
    if labels.min() < 0 or labels.max() > 9:
        raise SystemExit(f"unexpected label range {labels.min()}..{labels.max()}")

    os.makedirs(args.out, exist_ok=True)
    images = np.rint(np.clip(pixels, 0.0, 1.0) * 255.0)
    write_idx(os.path.join(args.out, "usps-images-idx3-ubyte"), images, 0x00000803)
    write_idx(os.path.join(args.out, "usps-labels-idx1-ubyte"), labels, 0x00000801)

    manifest = {
        "name": "usps",
        "format": "idx",
        "images": "usps-images-idx3-ubyte",
        "labels": "usps-labels-idx1-ubyte",
        "num_classes": 10,
        "canvas": 32,
    }
    if args.subsample:
        manifest["subsample"] = args.subsample
        manifest["subsample_seed"] = args.subsample_seed
    with open(os.path.join(args.out, "usps.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    print(f"wrote {images.shape[0]} images to {args.out}")


if __name__ == "__main__":
    main()
