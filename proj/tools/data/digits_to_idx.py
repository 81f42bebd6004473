#!/usr/bin/env python3
"""Write scikit-learn's bundled 8x8 digits as IDX files.

The 0..16 intensities are rescaled to 0..255 so the loader's byte / 255
normalization gives values in [0, 1].
"""
import argparse
import os
import struct

import numpy as np
from sklearn.datasets import load_digits


def write_idx(path, array, magic):
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in array.shape:
            f.write(struct.pack(">I", d))
        f.write(array.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir")
    args = ap.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)

    digits = load_digits()
    images = np.rint(digits.images * (255.0 / 16.0)).clip(0, 255)
    write_idx(os.path.join(args.out_dir, "digits-images-idx3-ubyte"), images, 0x00000803)
    write_idx(os.path.join(args.out_dir, "digits-labels-idx1-ubyte"), digits.target, 0x00000801)
    print(f"wrote {images.shape[0]} images of {images.shape[1]}x{images.shape[2]}")


if __name__ == "__main__":
    main()
