"""Structural peeling over CSR-packed neighbor arrays.

The Monte Carlo failure trials peel tens of thousands of edges per probe;
this module packs the block neighbor lists into flat arrays and runs the
peel as a queue algorithm, JIT-compiled when numba is importable.  The pure
Python twin has identical semantics and doubles as the fallback and the
cross-check target for tests.
"""

from __future__ import annotations

import numpy as np

try:  # pragma: no cover - exercised indirectly
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (len(args) == 1 and callable(args[0])) else args[0]


def pack_blocks(blocks) -> tuple:
    """Flatten an iterable of int arrays into (edges, offsets) CSR form."""
    arrays = [np.asarray(b, dtype=np.int32) for b in blocks]
    if not arrays:
        return np.empty(0, np.int32), np.zeros(1, np.int64)
    offsets = np.zeros(len(arrays) + 1, dtype=np.int64)
    np.cumsum([a.size for a in arrays], out=offsets[1:])
    edges = np.concatenate(arrays) if arrays else np.empty(0, np.int32)
    return edges, offsets


@njit(cache=True)
def _peel_count_kernel(edges, offsets, n, stop_after):  # pragma: no cover
    n_blocks = offsets.shape[0] - 1
    # adjacency in CSR form: for each index, which blocks touch it
    touch = np.zeros(n + 1, dtype=np.int64)
    for e in range(edges.shape[0]):
        touch[edges[e] + 1] += 1
    adj_off = np.cumsum(touch)
    adj = np.empty(edges.shape[0], dtype=np.int64)
    cursor = adj_off[:-1].copy()
    for b in range(n_blocks):
        for e in range(offsets[b], offsets[b + 1]):
            i = edges[e]
            adj[cursor[i]] = b
            cursor[i] += 1

    residual = np.empty(n_blocks, dtype=np.int64)
    for b in range(n_blocks):
        residual[b] = offsets[b + 1] - offsets[b]
    decoded = np.zeros(n, dtype=np.bool_)
    count = 0
    stack = np.empty(n_blocks + n, dtype=np.int64)
    top = 0
    for b in range(n_blocks):
        if residual[b] == 1:
            stack[top] = b
            top += 1
    while top > 0 and count < stop_after:
        top -= 1
        b = stack[top]
        if residual[b] != 1:
            continue
        # find the one undecoded neighbor of block b
        target = -1
        for e in range(offsets[b], offsets[b + 1]):
            if not decoded[edges[e]]:
                target = edges[e]
                break
        if target < 0:
            continue
        decoded[target] = True
        count += 1
        residual[b] = 0
        for a in range(adj_off[target], adj_off[target + 1]):
            other = adj[a]
            if residual[other] > 0:
                residual[other] -= 1
                if residual[other] == 1:
                    if top >= stack.shape[0]:
                        grown = np.empty(stack.shape[0] * 2, dtype=np.int64)
                        grown[: stack.shape[0]] = stack
                        stack = grown
                    stack[top] = other
                    top += 1
    return count


def _peel_count_python(edges, offsets, n, stop_after) -> int:
    """Pure-Python twin of the kernel; same traversal, same result."""
    n_blocks = offsets.shape[0] - 1
    adj: list[list[int]] = [[] for _ in range(n)]
    for b in range(n_blocks):
        for e in range(offsets[b], offsets[b + 1]):
            adj[edges[e]].append(b)
    residual = [int(offsets[b + 1] - offsets[b]) for b in range(n_blocks)]
    decoded = [False] * n
    count = 0
    stack = [b for b in range(n_blocks) if residual[b] == 1]
    while stack and count < stop_after:
        b = stack.pop()
        if residual[b] != 1:
            continue
        target = -1
        for e in range(offsets[b], offsets[b + 1]):
            idx = int(edges[e])
            if not decoded[idx]:
                target = idx
                break
        if target < 0:
            continue
        decoded[target] = True
        count += 1
        residual[b] = 0
        for other in adj[target]:
            if residual[other] > 0:
                residual[other] -= 1
                if residual[other] == 1:
                    stack.append(other)
    return count


def peel_count(blocks, n: int, stop_after: int | None = None) -> int:
    """How many of the n intermediates peel out of these blocks."""
    edges, offsets = pack_blocks(blocks)
    stop = n if stop_after is None else min(stop_after, n)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise ValueError("neighbor index out of range")
    if _HAVE_NUMBA:
        return int(_peel_count_kernel(edges, offsets, n, stop))
    return _peel_count_python(edges, offsets, n, stop)
