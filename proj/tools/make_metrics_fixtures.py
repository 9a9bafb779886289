# Copyright 2026 The dargan-cpp Authors
# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
"""Writes the metrics test fixtures and freezes reference composite scores.

Usage: make_metrics_fixtures.py --toolkit DIR_WITH_sepm.py --out tests/data/metrics
"""

import argparse
import importlib.util
import json
import pathlib

import numpy as np
from scipy.io import wavfile
from scipy.signal import lfilter

FS = 16000


def speech_like(rng, seconds):
    n = int(seconds * FS)
    t = np.arange(n) / FS
    f0 = 110 + 60 * rng.random() + 25 * np.sin(2 * np.pi * (0.5 + rng.random()) * t)
    phase = 2 * np.pi * np.cumsum(f0) / FS
    src = sum(np.cos(k * phase) / k for k in range(1, 30))
    out = np.zeros(n)
    for fc, bw in [(500 + 200 * rng.random(), 80), (1500 + 400 * rng.random(), 120),
                   (2500 + 300 * rng.random(), 160)]:
        r = np.exp(-np.pi * bw / FS)
        a = [1, -2 * r * np.cos(2 * np.pi * fc / FS), r * r]
        out += lfilter([1 - r], a, src)
    env = 0.5 * (1 - np.cos(2 * np.pi * 2.5 * t)) ** 2
    out += 0.02 * np.std(out) * lfilter([1.0], [1.0, -0.5], rng.standard_normal(n))
    out *= 0.1 + env
    return 0.4 * out / np.max(np.abs(out))


def quantize(x):
    return np.round(np.clip(x, -1, 1) * 32767).astype(np.int16)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--toolkit", required=True)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    spec = importlib.util.spec_from_file_location(
        "sepm", pathlib.Path(args.toolkit) / "sepm.py")
    sepm = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(sepm)

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(2026)
    refs = []
    for k in range(5):
        clean = speech_like(rng, 1.0 + 0.25 * k)
        noise = rng.standard_normal(clean.size)
        if k % 2:
            noise = lfilter([1.0], [1.0, -0.9], noise)
        snr = [40.0, 30.0, 25.0, 35.0, 45.0][k]
        gain = np.sqrt(np.mean(clean ** 2) / (np.mean(noise ** 2) * 10 ** (snr / 10)))
        est = clean + gain * noise
        if k == 4:
            est = lfilter([1.0, -0.2], [1.0], clean) + gain * noise
        cq, eq = quantize(clean), quantize(est)
        wavfile.write(out / f"pair{k}_clean.wav", FS, cq)
        wavfile.write(out / f"pair{k}_est.wav", FS, eq)
        c = cq.astype(np.float64) / 32767
        e = eq.astype(np.float64) / 32767
        pesq_mos, csig, cbak, covl, seg = sepm.composite(c, e, FS)
        refs.append({
            "pair": k,
            "pesq": float(pesq_mos),
            "llr": float(sepm.llr(c, e, FS)),
            "wss": float(sepm.wss(c, e, FS)),
            "segsnr": float(seg),
            "csig": float(csig),
            "cbak": float(cbak),
            "covl": float(covl),
        })
    (out / "composite_reference.json").write_text(json.dumps(refs, indent=2) + "\n")


if __name__ == "__main__":
    main()
