"""Central controller: direct pending requests to empty outlets."""

from __future__ import annotations

import numpy as np


def direct(demands, free_outlets, scores, outlet_count: int | None = None) -> np.ndarray:
    """Greedy request-to-outlet matching.

    Parameters
    ----------
    demands : array_like
        ``E_k`` per entry point; entries ``<= 0`` carry no request.
    free_outlets : sequence of int
        Flat indices of outlets whose queue is empty.
    scores : array_like
        Per-outlet battery term ``H_i * eta_minus`` of the owning station,
        indexed by flat outlet index.
    outlet_count : int, optional
        Width of the returned matrix; defaults to ``len(scores)``.

    Returns
    -------
    ndarray
        Binary ``K x outlets`` assignment. The largest demand is served
        first and takes the free outlet maximising ``E_k + score``; ties go
        to the lower entry-point index and the lower outlet index.
    """
    demands = np.asarray(demands, dtype=float)
    scores = np.asarray(scores, dtype=float)
    n_out = len(scores) if outlet_count is None else outlet_count
    w = np.zeros((demands.size, n_out), dtype=int)

    pending = [k for k in range(demands.size) if demands[k] > 0]
    # stable sort keeps lower index first among equal demands
    pending.sort(key=lambda k: -demands[k])
    free = sorted(set(int(o) for o in free_outlets))
    if not pending or not free:
        return w

    # E_k is common to every candidate, so the best outlet is the best score
    free_scores = scores[free]
    order = np.argsort(-free_scores, kind="stable")
    for k, pos in zip(pending, order):
        w[k, free[pos]] = 1
    return w
