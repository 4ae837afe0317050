"""Brute-force loss references: explicit per-pixel loops over python lists."""

import statistics


def bf_stats(values):
    m = statistics.fmean(values)
    s = statistics.stdev(values) if len(values) > 1 else None
    return m, s


def bf_global(p, g):
    V, U, H, W = p.shape
    dm = ds = 0.0
    for y in range(H):
        for x in range(W):
            mp, sp = bf_stats([float(p[v, u, y, x]) for v in range(V) for u in range(U)])
            mg, sg = bf_stats([float(g[v, u, y, x]) for v in range(V) for u in range(U)])
            dm += abs(mp - mg)
            ds += abs(sp - sg)
    return (dm + ds) / (H * W)


def bf_local(p, g):
    V, U, H, W = p.shape
    total = 0.0
    slices = [[(v, u) for v in range(V)] for u in range(U)] + [[(v, u) for u in range(U)] for v in range(V)]
    for views in slices:
        dm = ds = 0.0
        for y in range(H):
            for x in range(W):
                mp, sp = bf_stats([float(p[v, u, y, x]) for v, u in views])
                mg, sg = bf_stats([float(g[v, u, y, x]) for v, u in views])
                dm += abs(mp - mg)
                if sp is not None:
                    ds += abs(sp - sg)
        total += (dm + ds) / (H * W)
    return total / (U + V)


def bf_tv(f):
    *lead, H, W = f.shape
    flat = f.reshape(-1, H, W)
    sx = sum((flat[k, y, x + 1] - flat[k, y, x]) ** 2 for k in range(len(flat)) for y in range(H) for x in range(W - 1))
    sy = sum((flat[k, y + 1, x] - flat[k, y, x]) ** 2 for k in range(len(flat)) for y in range(H - 1) for x in range(W))
    return sx / (len(flat) * H * (W - 1)) + sy / (len(flat) * (H - 1) * W)
