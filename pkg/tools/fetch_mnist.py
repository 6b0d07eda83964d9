#!/usr/bin/env python3
"""Download the MNIST IDX archives into a data directory.

The library itself never touches the network; run this once wherever the
experiments should find real data:

    python tools/fetch_mnist.py [--out data]

Without these files the test suite and the sample configs fall back to the
built-in synthetic digit set.
"""

import argparse
import gzip
import os
import urllib.request

MIRROR = "https://ossci-datasets.s3.amazonaws.com/mnist/"
FILES = (
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
)


def fetch(out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name in FILES:
        target = os.path.join(out_dir, name[:-3])
        if os.path.exists(target):
            print(f"already present: {target}")
            continue
        url = MIRROR + name
        print(f"downloading {url}")
        with urllib.request.urlopen(url) as response:
            compressed = response.read()
        with open(target, "wb") as f:
            f.write(gzip.decompress(compressed))
        print(f"wrote {target} ({os.path.getsize(target)} bytes)")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data", help="destination directory")
    fetch(parser.parse_args().out)
