"""Baseline robust aggregation rules.

All aggregators are total functions: parameter vectors containing NaN
(possible after a bit-flip attack) are ordered as +inf wherever values are
compared, and earn zero trust in FLTrust, so no rule ever crashes on a
poisoned update. Outputs are float32 vectors of the common architecture;
the arithmetic runs in float64.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import DimensionError, InfeasibilityError
from .nn import ParamVector, cross_entropy_loss

__all__ = [
    "fedavg",
    "coordinate_median",
    "krum_select",
    "bulyan",
    "bulyan_detail",
    "lfr",
    "lfr_detail",
    "fltrust",
    "fltrust_detail",
]

log = logging.getLogger(__name__)


def _stack(updates) -> np.ndarray:
    if not updates:
        raise InfeasibilityError("no updates to aggregate")
    arch_id = updates[0].arch_id
    if any(u.arch_id != arch_id for u in updates):
        raise DimensionError("updates come from different architectures")
    return np.stack([u.values for u in updates]).astype(np.float64)


def _nan_as_inf(matrix: np.ndarray) -> np.ndarray:
    out = matrix.copy()
    out[np.isnan(out)] = np.inf
    return out


def fedavg(updates) -> ParamVector:
    """Coordinate-wise arithmetic mean with uniform weights."""
    stack = _stack(updates)
    return ParamVector(stack.mean(axis=0).astype(np.float32), updates[0].arch)


def coordinate_median(updates) -> ParamVector:
    """Coordinate-wise median; even counts average the two central values."""
    stack = _nan_as_inf(_stack(updates))
    return ParamVector(np.median(stack, axis=0).astype(np.float32), updates[0].arch)


def _pairwise_sq_dists(stack: np.ndarray) -> np.ndarray:
    n = len(stack)
    dists = np.zeros((n, n))
    for i in range(n):
        diff = stack[i + 1:] - stack[i]
        d = np.einsum("ij,ij->i", diff, diff)
        dists[i, i + 1:] = d
        dists[i + 1:, i] = d
    dists[np.isnan(dists)] = np.inf
    return dists


def krum_select(updates, f: int, m: int = 1) -> list:
    """Indices of the m updates with the lowest Krum scores.

    The score of update i is the sum of squared Euclidean distances to its
    n - f - 2 nearest other updates (n = the original update count).
    Selection is iterative: after each pick the scores are recomputed over
    the remaining set, summing over all remaining others once fewer than
    n - f - 2 are left. Ties go to the lower index.
    """
    n = len(updates)
    k_target = n - f - 2
    if k_target < 1:
        raise InfeasibilityError(f"krum needs n - f - 2 >= 1, got n={n}, f={f}")
    if not 0 < m <= n:
        raise InfeasibilityError(f"cannot select {m} of {n} updates")
    dists = _pairwise_sq_dists(_stack(updates))
    remaining = list(range(n))
    selected = []
    while len(selected) < m:
        k = min(k_target, len(remaining) - 1)
        best, best_score = None, None
        for i in remaining:
            others = np.sort(dists[i, [j for j in remaining if j != i]])
            score = float(np.sum(others[:k]))
            if best_score is None or score < best_score:
                best, best_score = i, score
        selected.append(best)
        remaining.remove(best)
    return selected


def bulyan_detail(updates, f: int):
    """Bulyan aggregate plus the krum-selected indices it averaged over."""
    n = len(updates)
    if n < 3:
        raise InfeasibilityError(f"bulyan needs at least 3 updates, got {n}")
    s = n - 2 * f if f < n / 2 else n - f
    s = max(1, s)
    f_score = min(f, n - 3)  # keep the krum scoring rule feasible at high f
    selected = krum_select(updates, f_score, s)
    stack = _nan_as_inf(_stack(updates))[selected]
    med = np.median(stack, axis=0)
    beta = max(1, s - 2 * f)
    # per coordinate, keep the beta values nearest the median; break ties by
    # rank distance from the central rank, then by position in the selection
    order = np.argsort(stack, axis=0, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(s)[:, None], axis=0)
    rows = np.broadcast_to(np.arange(s)[:, None], stack.shape)
    with np.errstate(invalid="ignore"):  # inf - inf keys sort last anyway
        keep = np.lexsort((rows, np.abs(ranks - (s - 1) / 2), np.abs(stack - med)), axis=0)[:beta]
    trimmed = np.take_along_axis(stack, keep, axis=0).mean(axis=0)
    return ParamVector(trimmed.astype(np.float32), updates[0].arch), selected


def bulyan(updates, f: int) -> ParamVector:
    """Krum-based selection of s = n-2f updates (n-f once f >= n/2), then a
    trimmed per-coordinate mean around the median of the selected set."""
    return bulyan_detail(updates, f)[0]


def lfr_detail(updates, global_model: ParamVector, val_set, f: int):
    """Loss-ranked aggregate plus the indices of the kept updates.

    Candidates are ranked by raw validation cross-entropy (equivalent to
    ranking loss impact against any shared baseline); the n - f lowest-loss
    updates are averaged. Non-finite losses rank last.
    """
    n = len(updates)
    if not 0 <= f < n:
        raise InfeasibilityError(f"need 0 <= f < n, got f={f}, n={n}")
    losses = np.empty(n)
    for i, u in enumerate(updates):
        loss = cross_entropy_loss(u, val_set)
        losses[i] = loss if np.isfinite(loss) else np.inf
    kept = sorted(int(i) for i in np.argsort(losses, kind="stable")[:n - f])
    return fedavg([updates[i] for i in kept]), kept


def lfr(updates, global_model: ParamVector, val_set, f: int) -> ParamVector:
    return lfr_detail(updates, global_model, val_set, f)[0]


def fltrust_detail(updates, server_update: ParamVector, global_model: ParamVector):
    """FLTrust aggregate plus the indices with positive trust.

    Client deltas are scored by ReLU-clipped cosine similarity against the
    server's own delta, rescaled to the server delta's norm, and combined
    with trust-proportional weights on top of the global model.
    """
    stack = _stack(updates)
    base = global_model.values.astype(np.float64)
    delta_s = server_update.values.astype(np.float64) - base
    norm_s = float(np.linalg.norm(delta_s))
    if norm_s == 0.0:
        log.warning("fltrust: server update equals the global model; keeping global model")
        return global_model.copy(), []
    deltas = stack - base
    norms = np.linalg.norm(deltas, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = (deltas @ delta_s) / (norms * norm_s)
    cos[~np.isfinite(cos)] = 0.0
    trust = np.maximum(cos, 0.0)
    trusted = [i for i in range(len(updates)) if trust[i] > 0]
    total = trust.sum()
    if total == 0.0:
        return global_model.copy(), []
    safe_norms = np.where(norms > 0, norms, 1.0)
    # only trusted rows enter the sum; a zero-trust NaN row must not poison it
    rescaled = deltas[trusted] * (norm_s / safe_norms[trusted])[:, None]
    combined = base + (trust[trusted, None] * rescaled).sum(axis=0) / total
    return ParamVector(combined.astype(np.float32), updates[0].arch), trusted


def fltrust(updates, server_update: ParamVector, global_model: ParamVector) -> ParamVector:
    return fltrust_detail(updates, server_update, global_model)[0]
