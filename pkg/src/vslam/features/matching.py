"""Hamming distances and descriptor matching for 256-bit descriptors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MatchParams:
    ratio: float = 0.75
    max_hamming: int = 50
    mutual: bool = True


def _as_words(d):
    d = np.ascontiguousarray(np.asarray(d, dtype=np.uint8))
    return d.reshape(d.shape[:-1] + (32,)).view(np.uint64)


def hamming(a, b) -> int:
    """Number of differing bits between two 32-byte descriptors."""
    return int(np.bitwise_count(_as_words(a) ^ _as_words(b)).sum())


def hamming_rows(a, b):
    """Row-wise distances of equally shaped (..., 32) descriptor arrays."""
    return np.bitwise_count(_as_words(a) ^ _as_words(b)).sum(axis=-1).astype(np.int64)


def hamming_matrix(a, b, chunk=512):
    """(len(a), len(b)) distance matrix."""
    wa, wb = _as_words(a), _as_words(b)
    out = np.empty((len(wa), len(wb)), dtype=np.int64)
    for i in range(0, len(wa), chunk):
        x = wa[i : i + chunk, None, :] ^ wb[None, :, :]
        out[i : i + chunk] = np.bitwise_count(x).sum(axis=-1)
    return out


def best_two(dist, axis=1):
    """Indices of the best match and the best/second-best distances along ``axis``."""
    dist = np.asarray(dist)
    if dist.shape[axis] == 0:
        n = dist.shape[1 - axis]
        big = np.full(n, np.iinfo(np.int64).max)
        return np.zeros(n, dtype=int), big, big
    idx = np.argmin(dist, axis=axis)
    d1 = np.take_along_axis(dist, np.expand_dims(idx, axis), axis).squeeze(axis)
    if dist.shape[axis] == 1:
        return idx, d1, np.full_like(d1, np.iinfo(np.int64).max)
    part = np.partition(dist, 1, axis=axis)
    d2 = np.take(part, 1, axis=axis)
    return idx, d1, d2


def match_descriptors(da, db, params: MatchParams | None = None, mask=None):
    """Match descriptor sets; returns an (M, 2) array of index pairs.

    A pair survives when it is the mutual best, within ``max_hamming`` and
    passes the ratio test best < ratio * second-best. ``mask`` (same shape as
    the distance matrix) disallows pairs where False.
    """
    params = params or MatchParams()
    if len(da) == 0 or len(db) == 0:
        return np.zeros((0, 2), dtype=int)
    dist = hamming_matrix(da, db)
    if mask is not None:
        dist = np.where(mask, dist, 10_000)
    ib, d1, d2 = best_two(dist, axis=1)
    ok = (d1 <= params.max_hamming) & (d1 < params.ratio * d2)
    if params.mutual:
        ia = np.argmin(dist, axis=0)
        ok &= ia[ib] == np.arange(len(da))
    rows = np.nonzero(ok)[0]
    pairs = np.stack([rows, ib[rows]], axis=1)
    # mutual check already makes this injective; guard the non-mutual path
    _, first = np.unique(pairs[:, 1], return_index=True)
    return pairs[np.sort(first)]


def match(a, b, params: MatchParams | None = None):
    """Match two FeatureFrames by descriptor."""
    return match_descriptors(a.descriptors, b.descriptors, params)
