"""Reference fixed-point trainer on plain Python lists.

Written from the update rules alone, with rational rounding, so it shares
no code with the package trainer.
"""
from __future__ import annotations

import math
from fractions import Fraction


def rnd(v: int, shift: int) -> int:
    return math.floor(Fraction(v, 2 ** shift) + Fraction(1, 2))


def mm(a, b):
    return [[sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]))]
            for i in range(len(a))]


def tr(a):
    return [list(r) for r in zip(*a)]


def step(ws, x, y, r: int, k: int):
    """One SGD step; returns a dict of every intermediate, plus the new weights."""
    L = len(ws)
    acts, zs = [x], []
    for l in range(L):
        z = mm(acts[-1], ws[l])
        zs.append(z)
        if l < L - 1:
            acts.append([[rnd(v, r) if v >= 0 else 0 for v in row] for row in z])
    gz = [[rnd(v, r) - t for v, t in zip(zr, yr)] for zr, yr in zip(zs[-1], y)]
    gzs, gas, gws = [None] * L, [None] * (L - 1), [None] * L
    gzs[-1] = gz
    for l in range(L - 1, -1, -1):
        gws[l] = mm(tr(gzs[l]), acts[l])
        if l > 0:
            ga = mm(gzs[l], tr(ws[l]))
            gas[l - 1] = ga
            gzs[l - 1] = [[rnd(g, r) if zv >= 0 else 0 for zv, g in zip(zr, gr)]
                          for zr, gr in zip(zs[l - 1], ga)]
    new = [[[wv - rnd(g, r + k) for wv, g in zip(wr, gr)] for wr, gr in zip(w, tr(gw))]
           for w, gw in zip(ws, gws)]
    return {"z": zs, "a": acts[1:], "gz": gzs, "ga": gas, "gw": gws, "w_new": new}
