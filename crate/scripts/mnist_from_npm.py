#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into IDX files.

The package stores each image as 784 floats (byte / 255, rounded to three
decimals), which is enough to recover the original bytes exactly.

usage: mnist_from_npm.py <package-dir> <out-dir>
"""
import json
import os
import struct
import sys


def main():
    pkg, out = sys.argv[1], sys.argv[2]
    os.makedirs(out, exist_ok=True)
    images, labels = bytearray(), bytearray()
    count = 0
    for digit in range(10):
        with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as fh:
            data = json.load(fh)["data"]
        assert len(data) % 784 == 0
        for v in data:
            b = round(v * 255)
            assert abs(v * 255 - b) < 0.2 and 0 <= b <= 255
            images.append(b)
        n = len(data) // 784
        labels.extend([digit] * n)
        count += n
    with open(os.path.join(out, "train-images-idx3-ubyte"), "wb") as fh:
        fh.write(struct.pack(">IIII", 0x803, count, 28, 28))
        fh.write(images)
    with open(os.path.join(out, "train-labels-idx1-ubyte"), "wb") as fh:
        fh.write(struct.pack(">II", 0x801, count))
        fh.write(labels)
    print(f"wrote {count} images to {out}")


if __name__ == "__main__":
    main()
