"""Brute-force reference implementations used only by the tests.

Deliberately naive: explicit loops, no scipy, no vectorized tricks shared
with the package code.
"""

import math

import numpy as np


def conv2d_same_zero_pad(P, K):
    """True 2-D convolution (flipped kernel), zero padding, same-size output."""
    H, W = P.shape
    kh, kw = K.shape
    ch, cw = kh // 2, kw // 2
    out = np.zeros((H, W))
    for i in range(H):
        for j in range(W):
            acc = 0.0
            for u in range(kh):
                for v in range(kw):
                    y, x = i - (u - ch), j - (v - cw)
                    if 0 <= y < H and 0 <= x < W:
                        acc += K[u, v] * P[y, x]
            out[i, j] = acc
    return out


def flood_fill_components(mask, connectivity):
    """List of pixel sets, discovered in raster order, via explicit stack DFS."""
    H, W = mask.shape
    if connectivity == 4:
        nbrs = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        nbrs = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for i in range(H):
        for j in range(W):
            if mask[i, j] and not seen[i, j]:
                stack, comp = [(i, j)], set()
                seen[i, j] = True
                while stack:
                    y, x = stack.pop()
                    comp.add((y, x))
                    for dy, dx in nbrs:
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < H and 0 <= xx < W and mask[yy, xx] and not seen[yy, xx]:
                            seen[yy, xx] = True
                            stack.append((yy, xx))
                comps.append(comp)
    return comps


def dice_count(G, P):
    g = {tuple(p) for p in np.argwhere(G)}
    p = {tuple(q) for q in np.argwhere(P)}
    if not g and not p:
        return 1.0
    return 2 * len(g & p) / (len(g) + len(p))


def directed_all_pairs(A, B):
    a = np.argwhere(A)
    b = np.argwhere(B)
    out = []
    for ya, xa in a:
        best = math.inf
        for yb, xb in b:
            best = min(best, math.sqrt((ya - yb) ** 2 + (xa - xb) ** 2))
        out.append(best)
    return out


def nearest_rank_oracle(values, q):
    s = sorted(values)
    n = len(s)
    # smallest rank r with r/n >= q/100, computed with integers
    r = next(r for r in range(1, n + 1) if 100 * r >= q * n)
    return s[r - 1]


def h95_oracle(G, P):
    return max(
        nearest_rank_oracle(directed_all_pairs(G, P), 95),
        nearest_rank_oracle(directed_all_pairs(P, G), 95),
    )


def lesion_counts_oracle(G, P, connectivity=8):
    """(N_G, N_c, N_f) by brute-force component overlap."""
    gc = flood_fill_components(G, connectivity)
    pc = flood_fill_components(P, connectivity)
    p_pix = {tuple(q) for q in np.argwhere(P)}
    g_pix = {tuple(q) for q in np.argwhere(G)}
    n_c = sum(1 for comp in gc if comp & p_pix)
    n_f = sum(1 for comp in pc if not (comp & g_pix))
    return len(gc), n_c, n_f


def seg_loss_oracle(p, y, lam, s, eps=1e-7, reduction="mean"):
    p = [min(max(v, eps), 1 - eps) for v in np.ravel(p)]
    y = list(np.ravel(y))
    dice = (2 * sum(a * b for a, b in zip(y, p)) + s) / (sum(a * a for a in y) + sum(b * b for b in p) + s)
    ll = [a * math.log(b) + (1 - a) * math.log(1 - b) for a, b in zip(y, p)]
    ce = sum(ll) / len(ll) if reduction == "mean" else sum(ll)
    return -lam * dice - (1 - lam) * ce
