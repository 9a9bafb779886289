#!/usr/bin/env python3
# Copyright 2026 The dargan-cpp Authors
# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

# Prints the wide-band PESQ score of an estimate against a clean reference.
# Usage: pesq_adapter.py CLEAN.wav EST.wav

import argparse
import sys

import numpy as np
from pesq import pesq
from scipy.io import wavfile


def load(path):
    rate, x = wavfile.read(path)
    if x.dtype == np.int16:
        x = x.astype(np.float64) / 32768.0
    return rate, np.asarray(x, dtype=np.float64)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("clean")
    ap.add_argument("est")
    ap.add_argument("--mode", default="wb", choices=["wb", "nb"])
    args = ap.parse_args()
    rate, ref = load(args.clean)
    rate_est, deg = load(args.est)
    if rate != rate_est:
        sys.exit("sample rates differ")
    n = min(len(ref), len(deg))
    print(f"{pesq(rate, ref[:n], deg[:n], args.mode):.6f}")


if __name__ == "__main__":
    main()
