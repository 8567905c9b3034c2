"""Slow, independently written reference computations used to pin expected values."""

import math

import numpy as np


def gaussian_window(size, sigma):
    c = (size - 1) / 2.0
    g = [math.exp(-((i - c) ** 2) / (2.0 * sigma * sigma)) for i in range(size)]
    s = sum(g)
    g = [v / s for v in g]
    return [[g[i] * g[j] for j in range(size)] for i in range(size)]


def ssim_bruteforce(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Weighted-window SSIM, one window at a time, over every fully contained window."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    w = np.array(gaussian_window(size, sigma))
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    h, wd, ch = a.shape
    vals = []
    for c in range(ch):
        for y in range(h - size + 1):
            for x in range(wd - size + 1):
                pa = a[y : y + size, x : x + size, c]
                pb = b[y : y + size, x : x + size, c]
                ma = float((w * pa).sum())
                mb = float((w * pb).sum())
                va = float((w * (pa - ma) ** 2).sum())
                vb = float((w * (pb - mb) ** 2).sum())
                cov = float((w * (pa - ma) * (pb - mb)).sum())
                vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def reflect_index(i, n):
    # mirror without repeating the edge sample: -1 -> 1, n -> n - 2
    while i < 0 or i >= n:
        i = -i if i < 0 else 2 * (n - 1) - i
    return i


def conv2d_reflect(img, kernel):
    img = np.asarray(img, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    kh, kw = k.shape
    ph, pw = kh // 2, kw // 2
    h, w = img.shape
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for i in range(kh):
                for j in range(kw):
                    acc += k[i, j] * img[reflect_index(y + i - ph, h), reflect_index(x + j - pw, w)]
            out[y, x] = acc
    return out


def log_edges_oracle(img, size=5, sigma=1.0):
    lap = [[0, 1, 0], [1, -4, 1], [0, 1, 0]]
    return conv2d_reflect(conv2d_reflect(img, gaussian_window(size, sigma)), lap)


def charbonnier_oracle(a, b, eps=1e-4):
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.mean(np.sqrt(d * d + eps * eps)))


def central_difference(f, x, h=1e-3):
    """Gradient of scalar f at float64 array x by central differences."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g
