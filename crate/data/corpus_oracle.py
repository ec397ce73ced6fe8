"""Independent reference values for the bundled corpus.

Recomputes mean per-image PSNR and SSIM of the ZP and MIG baselines with
numpy and scikit-image. The Rust acceptance suite pins these numbers.
"""
import glob
import os

import numpy as np
from PIL import Image
from skimage.metrics import structural_similarity

HERE = os.path.dirname(os.path.abspath(__file__))


def psnr(a, b):
    mse = ((a.astype(np.float64) - b.astype(np.float64)) ** 2).mean()
    return 10.0 * np.log10(255.0 ** 2 / mse)


def ssim(a, b):
    vals = [
        structural_similarity(
            a[..., c].astype(np.float64),
            b[..., c].astype(np.float64),
            data_range=255,
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
        )
        for c in range(a.shape[2])
    ]
    return float(np.mean(vals))


def main():
    files = sorted(glob.glob(os.path.join(HERE, "corpus", "*.png")))
    for bits in (4, 6):
        shift = 8 - bits
        rows = {"zp": [], "mig": []}
        for f in files:
            a = np.array(Image.open(f).convert("RGB")).astype(np.int64)
            q = a >> shift
            zp = q << shift
            mig = np.floor(q * 255.0 / (2 ** bits - 1) + 0.5).astype(np.int64)
            rows["zp"].append((psnr(zp, a), ssim(zp, a)))
            rows["mig"].append((psnr(mig, a), ssim(mig, a)))
        for m, vals in rows.items():
            p = np.mean([v[0] for v in vals])
            s = np.mean([v[1] for v in vals])
            print(f"{m} {bits}->8  n={len(vals)}  psnr={p:.10f}  ssim={s:.10f}")


if __name__ == "__main__":
    main()
