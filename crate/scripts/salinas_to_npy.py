#!/usr/bin/env python3
"""Convert the Salinas A .mat files into the NPY layout the acceptance suite reads.

    python3 scripts/salinas_to_npy.py SalinasA_corrected.mat SalinasA_gt.mat data/salinas_a

Writes cube.npy (83, 86, 224) float32 and gt.npy (83, 86) uint8.
"""
import argparse
import pathlib

import numpy as np
from scipy.io import loadmat


def only_array(path):
    arrays = {k: v for k, v in loadmat(path).items() if not k.startswith("__")}
    if len(arrays) != 1:
        raise SystemExit(f"{path}: expected one array, found {sorted(arrays)}")
    return next(iter(arrays.values()))


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("cube")
    parser.add_argument("gt")
    parser.add_argument("out", type=pathlib.Path)
    args = parser.parse_args()

    cube = np.ascontiguousarray(only_array(args.cube), dtype=np.float32)
    gt = np.ascontiguousarray(only_array(args.gt)).astype(np.uint8)
    if cube.ndim != 3 or gt.shape != cube.shape[:2]:
        raise SystemExit(f"shape mismatch: cube {cube.shape}, gt {gt.shape}")
    args.out.mkdir(parents=True, exist_ok=True)
    np.save(args.out / "cube.npy", cube)
    np.save(args.out / "gt.npy", gt)
    classes, counts = np.unique(gt, return_counts=True)
    print(f"cube {cube.shape}, classes {dict(zip(classes.tolist(), counts.tolist()))}")


if __name__ == "__main__":
    main()
