"""Central finite-difference oracle for the autodiff tests."""

import numpy as np

from lfsynth.numerics import backward, zero_grad


def numeric_grad(f, t, idx, h=1e-4):
    old = t.data[idx]
    t.data[idx] = old + h
    fp = float(f().data)
    t.data[idx] = old - h
    fm = float(f().data)
    t.data[idx] = old
    return (fp - fm) / (2 * h)


def max_rel_error(f, tensors, n_samples=10, h=1e-4, seed=0, floor=1e-8):
    """Largest |analytic - numeric| / max(|analytic|, |numeric|) over sampled entries.

    ``f`` rebuilds the scalar objective from the current tensor values.
    """
    rng = np.random.default_rng(seed)
    zero_grad(tensors)
    backward(f(), tensors)
    analytic = [t.grad.copy() for t in tensors]
    worst = 0.0
    picks = []
    for ti, t in enumerate(tensors):
        for flat in range(t.data.size):
            picks.append((ti, flat))
    if len(picks) > n_samples:
        picks = [picks[i] for i in rng.choice(len(picks), n_samples, replace=False)]
    for ti, flat in picks:
        t = tensors[ti]
        idx = np.unravel_index(flat, t.shape)
        num = numeric_grad(f, t, idx, h)
        ana = float(analytic[ti][idx])
        denom = max(abs(ana), abs(num), floor)
        worst = max(worst, abs(ana - num) / denom)
    return worst
