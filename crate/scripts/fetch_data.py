#!/usr/bin/env python3
"""Populate the local dataset cache used by splinecl.

Layout (root = $SPLINECL_DATA or ./data):

    <root>/mnist/train-images-idx3-ubyte
    <root>/mnist/train-labels-idx1-ubyte
    <root>/mnist/t10k-images-idx3-ubyte
    <root>/mnist/t10k-labels-idx1-ubyte
    <root>/cifar10/data_batch_{1..5}.bin, test_batch.bin
    <root>/cifar100/train.bin, test.bin

Sources:

  --source official   MNIST from https://ossci-datasets.s3.amazonaws.com/mnist/
                      CIFAR from https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz
                      and https://www.cs.toronto.edu/~kriz/cifar-100-binary.tar.gz
  --source npm        10,000 MNIST digits bundled in the npm package `mnist`
                      (v1.1.0), re-encoded as IDX. Every 7th digit of each class
                      goes to the test split. Use this when only a package
                      mirror is reachable.

SHA-256 digests of every written file are printed so runs can be pinned.
"""
import argparse
import gzip
import hashlib
import io
import json
import os
import random
import shutil
import struct
import subprocess
import sys
import tarfile
import tempfile
import urllib.request

MNIST_URL = "https://ossci-datasets.s3.amazonaws.com/mnist/"
MNIST_FILES = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
]
CIFAR10_URL = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"
CIFAR100_URL = "https://www.cs.toronto.edu/~kriz/cifar-100-binary.tar.gz"


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def mnist_from_npm(out):
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL)
        with tarfile.open(os.path.join(tmp, "mnist-1.1.0.tgz")) as tar:
            tar.extractall(tmp)
        train, test = [], []
        for digit in range(10):
            with open(os.path.join(tmp, "package", "src", "digits", f"{digit}.json")) as f:
                flat = json.load(f)["data"]
            n = len(flat) // 784
            for i in range(n):
                px = [min(255, max(0, round(v * 255))) for v in flat[i * 784:(i + 1) * 784]]
                (test if i % 7 == 0 else train).append((px, digit))
    rng = random.Random(20240611)
    rng.shuffle(train)
    rng.shuffle(test)
    os.makedirs(out, exist_ok=True)
    write_idx_images(os.path.join(out, MNIST_FILES[0]), [p for p, _ in train])
    write_idx_labels(os.path.join(out, MNIST_FILES[1]), [l for _, l in train])
    write_idx_images(os.path.join(out, MNIST_FILES[2]), [p for p, _ in test])
    write_idx_labels(os.path.join(out, MNIST_FILES[3]), [l for _, l in test])


def mnist_official(out):
    os.makedirs(out, exist_ok=True)
    for name in MNIST_FILES:
        with urllib.request.urlopen(MNIST_URL + name + ".gz") as r:
            payload = gzip.decompress(r.read())
        with open(os.path.join(out, name), "wb") as f:
            f.write(payload)


def cifar_official(url, out, members):
    os.makedirs(out, exist_ok=True)
    with urllib.request.urlopen(url) as r:
        blob = io.BytesIO(r.read())
    with tarfile.open(fileobj=blob) as tar:
        for m in tar.getmembers():
            base = os.path.basename(m.name)
            if base in members:
                with tar.extractfile(m) as src, open(os.path.join(out, base), "wb") as dst:
                    shutil.copyfileobj(src, dst)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--source", choices=["official", "npm"], default="official")
    ap.add_argument("--cifar", action="store_true", help="also fetch CIFAR-10/100 (official only)")
    args = ap.parse_args()
    root = os.environ.get("SPLINECL_DATA", os.path.join(os.getcwd(), "data"))
    mnist_dir = os.path.join(root, "mnist")
    if args.source == "npm":
        mnist_from_npm(mnist_dir)
    else:
        mnist_official(mnist_dir)
    if args.cifar:
        cifar_official(CIFAR10_URL, os.path.join(root, "cifar10"),
                       {f"data_batch_{i}.bin" for i in range(1, 6)} | {"test_batch.bin"})
        cifar_official(CIFAR100_URL, os.path.join(root, "cifar100"), {"train.bin", "test.bin"})
    for dirpath, _, files in sorted(os.walk(root)):
        for name in sorted(files):
            p = os.path.join(dirpath, name)
            print(f"{sha256(p)}  {os.path.relpath(p, root)}")


if __name__ == "__main__":
    sys.exit(main())
