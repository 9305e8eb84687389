"""Independent reference implementations used to check the fast kernels.

Everything here is deliberately naive: scalar loops, float64
accumulation, formulas transcribed directly.  Nothing imports the
engine's vectorized code paths.
"""

import numpy as np


def conv2d_oracle(x, weights, bias, stride, padding, dilation, groups):
    n, ci, h, w = x.shape
    co, cig, kh, kw = weights.shape
    sh, sw = stride
    ph, pw = padding
    dh, dw = dilation
    ho = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
    wo = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
    cog = co // groups
    out = np.zeros((n, co, ho, wo), dtype=np.float64)
    for b in range(n):
        for o in range(co):
            grp = o // cog
            for y in range(ho):
                for xo in range(wo):
                    acc = 0.0 if bias is None else float(bias[o])
                    for c in range(cig):
                        cin = grp * cig + c
                        for i in range(kh):
                            yy = y * sh - ph + i * dh
                            if yy < 0 or yy >= h:
                                continue
                            for j in range(kw):
                                xx = xo * sw - pw + j * dw
                                if xx < 0 or xx >= w:
                                    continue
                                acc += float(weights[o, c, i, j]) * float(x[b, cin, yy, xx])
                    out[b, o, y, xo] = acc
    return out


def transposed_conv2d_oracle(x, weights, bias, stride, padding):
    """Scatter form: every input element stamps its weighted kernel."""
    n, ci, h, w = x.shape
    ci_w, co, kh, kw = weights.shape
    assert ci == ci_w
    sh, sw = stride
    ph, pw = padding
    hf = (h - 1) * sh + kh
    wf = (w - 1) * sw + kw
    full = np.zeros((n, co, hf, wf), dtype=np.float64)
    for b in range(n):
        for c in range(ci):
            for y in range(h):
                for xx in range(w):
                    v = float(x[b, c, y, xx])
                    for o in range(co):
                        for i in range(kh):
                            for j in range(kw):
                                full[b, o, y * sh + i, xx * sw + j] += v * float(weights[c, o, i, j])
    out = full[:, :, ph: hf - ph, pw: wf - pw]
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)[None, :, None, None]
    return out


def bilinear_x2_oracle(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c, 2 * h, 2 * w), dtype=np.float64)
    for b in range(n):
        for ch in range(c):
            for t in range(2 * h):
                sy = min(max((t + 0.5) / 2.0 - 0.5, 0.0), h - 1)
                y0 = int(np.floor(sy))
                y1 = min(y0 + 1, h - 1)
                fy = sy - y0
                for u in range(2 * w):
                    sx = min(max((u + 0.5) / 2.0 - 0.5, 0.0), w - 1)
                    x0 = int(np.floor(sx))
                    x1 = min(x0 + 1, w - 1)
                    fx = sx - x0
                    v00 = float(x[b, ch, y0, x0])
                    v01 = float(x[b, ch, y0, x1])
                    v10 = float(x[b, ch, y1, x0])
                    v11 = float(x[b, ch, y1, x1])
                    out[b, ch, t, u] = (1 - fy) * ((1 - fx) * v00 + fx * v01) \
                        + fy * ((1 - fx) * v10 + fx * v11)
    return out


def avg_pool_oracle(x, kernel, stride, padding):
    """count_include_pad: padded cells contribute zeros, divisor is kh*kw."""
    n, c, h, w = x.shape
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    out = np.zeros((n, c, ho, wo), dtype=np.float64)
    for b in range(n):
        for ch in range(c):
            for y in range(ho):
                for xo in range(wo):
                    acc = 0.0
                    for i in range(kh):
                        yy = y * sh - ph + i
                        if yy < 0 or yy >= h:
                            continue
                        for j in range(kw):
                            xx = xo * sw - pw + j
                            if xx < 0 or xx >= w:
                                continue
                            acc += float(x[b, ch, yy, xx])
                    out[b, ch, y, xo] = acc / (kh * kw)
    return out


def channel_shuffle_oracle(x, groups):
    """Output channel j*g + i takes input channel i*k + j."""
    n, c, h, w = x.shape
    k = c // groups
    out = np.zeros_like(x)
    for i in range(groups):
        for j in range(k):
            out[:, j * groups + i] = x[:, i * k + j]
    return out


def bn_act_oracle(x, gamma, beta, mean, var, eps, activation, slope=None):
    n, c, h, w = x.shape
    out = np.zeros(x.shape, dtype=np.float64)
    for ch in range(c):
        y = (x[:, ch].astype(np.float64) - float(mean[ch])) \
            / np.sqrt(float(var[ch]) + eps) * float(gamma[ch]) + float(beta[ch])
        if activation == "relu":
            y = np.where(y > 0, y, 0.0)
        elif activation == "prelu":
            y = np.where(y > 0, y, float(slope[ch]) * y)
        out[:, ch] = y
    return out


def pcaa_oracle(x, attn):
    """Three-step attention formula: centers, recomposition."""
    n, c, h, w = x.shape
    k = attn.shape[1]
    out = np.zeros((n, c, h, w), dtype=np.float64)
    for b in range(n):
        centers = np.zeros((k, c), dtype=np.float64)
        for j in range(k):
            for y in range(h):
                for xx in range(w):
                    centers[j] += float(attn[b, j, y, xx]) * x[b, :, y, xx].astype(np.float64)
        for y in range(h):
            for xx in range(w):
                for j in range(k):
                    out[b, :, y, xx] += float(attn[b, j, y, xx]) * centers[j]
    return out


def focal_scalar_oracle(probs, labels, alpha, gamma, eps=1e-7):
    total = 0.0
    flat_p = np.asarray(probs, dtype=np.float64).reshape(-1)
    flat_g = np.asarray(labels, dtype=np.float64).reshape(-1)
    for p, g in zip(flat_p, flat_g):
        p = min(max(p, eps), 1.0 - eps)
        pt = p if g == 1.0 else 1.0 - p
        total += -alpha * (1.0 - pt) ** gamma * np.log(pt)
    return total / flat_p.size


def tversky_scalar_oracle(probs, labels, alpha, beta, smooth):
    tp = fp = fn = 0.0
    flat_p = np.asarray(probs, dtype=np.float64).reshape(-1)
    flat_g = np.asarray(labels, dtype=np.float64).reshape(-1)
    for p, g in zip(flat_p, flat_g):
        tp += p * g
        fp += p * (1.0 - g)
        fn += (1.0 - p) * g
    return 1.0 - (tp + smooth) / (tp + alpha * fp + beta * fn + smooth)


def dice_loss_oracle(probs, labels, smooth):
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    g = np.asarray(labels, dtype=np.float64).reshape(-1)
    inter = float(np.sum(p * g))
    return 1.0 - (2.0 * inter + smooth) / (float(np.sum(p)) + float(np.sum(g)) + smooth)


# ---------------------------------------------------------------------------
# Random case generators (all dims <= 8)


def random_conv_case(rng):
    while True:
        g = int(rng.choice([1, 1, 1, 2, 4]))
        cig = int(rng.integers(1, 5))
        cog = int(rng.integers(1, 5))
        ci, co = g * cig, g * cog
        if ci > 8 or co > 8:
            continue
        kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        dh, dw = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        sh, sw = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        ph, pw = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        if h + 2 * ph - dh * (kh - 1) - 1 < 0 or w + 2 * pw - dw * (kw - 1) - 1 < 0:
            continue
        n = int(rng.integers(1, 3))
        x = rng.uniform(-1, 1, size=(n, ci, h, w)).astype(np.float32)
        weights = rng.uniform(-1, 1, size=(co, cig, kh, kw)).astype(np.float32)
        bias = rng.uniform(-1, 1, size=co).astype(np.float32) if rng.uniform() < 0.5 else None
        return x, weights, bias, (sh, sw), (ph, pw), (dh, dw), g


def random_tconv_case(rng):
    while True:
        ci, co = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        sh, sw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        ph = int(rng.integers(0, max(1, kh)))
        pw = int(rng.integers(0, max(1, kw)))
        if (h - 1) * sh - 2 * ph + kh < 1 or (w - 1) * sw - 2 * pw + kw < 1:
            continue
        n = int(rng.integers(1, 3))
        x = rng.uniform(-1, 1, size=(n, ci, h, w)).astype(np.float32)
        weights = rng.uniform(-1, 1, size=(ci, co, kh, kw)).astype(np.float32)
        bias = rng.uniform(-1, 1, size=co).astype(np.float32) if rng.uniform() < 0.5 else None
        return x, weights, bias, (sh, sw), (ph, pw)


def random_nchw(rng, cmax=8):
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, cmax + 1))
    h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
    return rng.uniform(-1, 1, size=(n, c, h, w)).astype(np.float32)
