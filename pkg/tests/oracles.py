"""Independent reference implementations used as test oracles.

These deliberately avoid the library's own code paths: brute-force pair
counting for AUC, an exhaustive threshold scan for Otsu, and a direct O(n^2)
DFT. They stay dumb so the implementations they check cannot share bugs with
them.
"""

import numpy as np

from forgescope.segment import OTSU_BINS


def pair_count_auc(scored):
    """Mann-Whitney statistic with half credit for ties."""
    pos = [s for s, l in scored if l == 1]
    neg = [s for s, l in scored if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def otsu_oracle(scores: np.ndarray) -> float:
    """Exhaustive scan over all 256 candidate thresholds."""
    bins = np.minimum((scores * OTSU_BINS).astype(np.int64), OTSU_BINS - 1).ravel()
    hist = np.bincount(bins, minlength=OTSU_BINS).astype(np.float64)
    total = hist.sum()
    idx = np.arange(OTSU_BINS, dtype=np.float64)
    best_var, best_k = -1.0, 0
    for k in range(OTSU_BINS - 1):
        n0 = hist[: k + 1].sum()
        n1 = total - n0
        if n0 == 0.0 or n1 == 0.0:
            continue
        mu0 = (hist[: k + 1] * idx[: k + 1]).sum() / n0
        mu1 = (hist[k + 1 :] * idx[k + 1 :]).sum() / n1
        var = (n0 / total) * (n1 / total) * (mu0 - mu1) ** 2
        if var > best_var:
            best_var, best_k = var, k
    return (best_k + 1) / OTSU_BINS


def dft_oracle(v: np.ndarray) -> np.ndarray:
    """Direct O(n^2) DFT magnitude of the mean-removed vector, bins 1..32."""
    n = len(v)
    v = v - v.mean()
    out = np.empty(32)
    for k in range(1, 33):
        re = sum(v[t] * np.cos(-2 * np.pi * k * t / n) for t in range(n))
        im = sum(v[t] * np.sin(-2 * np.pi * k * t / n) for t in range(n))
        out[k - 1] = np.hypot(re, im)
    return out
