#!/usr/bin/env python3
"""Convert test images into the 8-bit binary PGM files the bench and acceptance
runs expect (data/images/<name>.pgm) and write their SHA-256 sums.

Sources are given explicitly; nothing is downloaded. Examples:

  prepare_images.py --scipy-sdist scipy-0.16.1.tar.gz --bm3d-sdist bm3d-4.0.3.tar.gz
  prepare_images.py --image house=/path/to/house.png --image peppers=/path/to/peppers.tiff

Colour inputs are converted with ITU-R BT.601 luma weights and rounded.
"""

import argparse
import hashlib
import io
import pickle
import sys
import tarfile
from pathlib import Path

import numpy as np
from PIL import Image


def to_gray_u8(arr):
    arr = np.asarray(arr)
    if arr.ndim == 3:
        arr = arr[..., :3].astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    return np.clip(np.rint(arr), 0, 255).astype(np.uint8)


def write_pgm(path, img):
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def tar_member(tar_path, suffix):
    with tarfile.open(tar_path) as tar:
        for m in tar.getmembers():
            if m.name.endswith(suffix):
                return tar.extractfile(m).read()
    raise SystemExit(f"{tar_path}: no member ending in {suffix}")


def from_scipy_sdist(path):
    # scipy <= 0.16 ships lena/ascent as pickled uint8 arrays
    out = {}
    for name, member in (("lena", "scipy/misc/lena.dat"), ("ascent", "scipy/misc/ascent.dat")):
        arr = pickle.load(io.BytesIO(tar_member(path, member)), encoding="latin1")
        out[name] = to_gray_u8(arr)
    return out


def from_bm3d_sdist(path):
    data = tar_member(path, "examples/cameraman256.png")
    return {"cameraman": to_gray_u8(Image.open(io.BytesIO(data)))}


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", default="data/images", help="output directory")
    ap.add_argument("--scipy-sdist", help="scipy 0.16.x source tarball (lena, ascent)")
    ap.add_argument("--bm3d-sdist", help="bm3d 4.x source tarball (cameraman 256x256)")
    ap.add_argument("--image", action="append", default=[], metavar="NAME=PATH",
                    help="any image file readable by Pillow")
    args = ap.parse_args()

    images = {}
    if args.scipy_sdist:
        images.update(from_scipy_sdist(args.scipy_sdist))
    if args.bm3d_sdist:
        images.update(from_bm3d_sdist(args.bm3d_sdist))
    for spec in args.image:
        name, _, path = spec.partition("=")
        if not path:
            raise SystemExit(f"--image expects NAME=PATH, got {spec!r}")
        images[name] = to_gray_u8(Image.open(path))
    if not images:
        ap.error("no sources given")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sums = out / "SHA256SUMS"
    known = {}
    if sums.exists():
        for line in sums.read_text().splitlines():
            digest, _, fname = line.partition("  ")
            known[fname] = digest
    for name, img in sorted(images.items()):
        path = out / f"{name}.pgm"
        write_pgm(path, img)
        known[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
        print(f"{path}  {img.shape[1]}x{img.shape[0]}", file=sys.stderr)
    sums.write_text("".join(f"{d}  {f}\n" for f, d in sorted(known.items())))


if __name__ == "__main__":
    main()
