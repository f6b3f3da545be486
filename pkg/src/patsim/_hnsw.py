"""Numba kernels for HNSW graph construction and layered best-first search.

The graph is a dense (layers, nodes, capacity) int32 adjacency block plus a
(layers, nodes) degree array. All kernels are single-threaded and free of
unordered reductions, so results are bit-reproducible for a fixed input.
Ties always break toward the lower node index.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _dist_to(matrix, idx, query):
    s = 0.0
    row = matrix[idx]
    for t in range(row.shape[0]):
        s += row[t] * query[t]
    return 1.0 - s


# Min-heap keyed by (distance, node); used for the exploration frontier.


@njit(cache=True, inline="always")
def _push_min(heap_d, heap_i, size, d, idx):
    pos = size
    while pos > 0:
        parent = (pos - 1) >> 1
        pd = heap_d[parent]
        pi = heap_i[parent]
        if d < pd or (d == pd and idx < pi):
            heap_d[pos] = pd
            heap_i[pos] = pi
            pos = parent
        else:
            break
    heap_d[pos] = d
    heap_i[pos] = idx
    return size + 1


@njit(cache=True, inline="always")
def _pop_min(heap_d, heap_i, size):
    top_d = heap_d[0]
    top_i = heap_i[0]
    size -= 1
    if size > 0:
        d = heap_d[size]
        idx = heap_i[size]
        pos = 0
        while True:
            child = 2 * pos + 1
            if child >= size:
                break
            right = child + 1
            cd = heap_d[child]
            ci = heap_i[child]
            if right < size:
                rd = heap_d[right]
                ri = heap_i[right]
                if rd < cd or (rd == cd and ri < ci):
                    child = right
                    cd = rd
                    ci = ri
            if cd < d or (cd == d and ci < idx):
                heap_d[pos] = cd
                heap_i[pos] = ci
                pos = child
            else:
                break
        heap_d[pos] = d
        heap_i[pos] = idx
    return top_d, top_i, size


# Max-heap keyed by (distance, node); holds the current best results so the
# worst can be evicted in O(log ef).


@njit(cache=True, inline="always")
def _push_max(heap_d, heap_i, size, d, idx):
    pos = size
    while pos > 0:
        parent = (pos - 1) >> 1
        pd = heap_d[parent]
        pi = heap_i[parent]
        if d > pd or (d == pd and idx > pi):
            heap_d[pos] = pd
            heap_i[pos] = pi
            pos = parent
        else:
            break
    heap_d[pos] = d
    heap_i[pos] = idx
    return size + 1


@njit(cache=True, inline="always")
def _pop_max(heap_d, heap_i, size):
    top_d = heap_d[0]
    top_i = heap_i[0]
    size -= 1
    if size > 0:
        d = heap_d[size]
        idx = heap_i[size]
        pos = 0
        while True:
            child = 2 * pos + 1
            if child >= size:
                break
            right = child + 1
            cd = heap_d[child]
            ci = heap_i[child]
            if right < size:
                rd = heap_d[right]
                ri = heap_i[right]
                if rd > cd or (rd == cd and ri > ci):
                    child = right
                    cd = rd
                    ci = ri
            if cd > d or (cd == d and ci > idx):
                heap_d[pos] = cd
                heap_i[pos] = ci
                pos = child
            else:
                break
        heap_d[pos] = d
        heap_i[pos] = idx
    return top_d, top_i, size


@njit(cache=True)
def _greedy_descent(matrix, adj_layer, deg_layer, start, query):
    cur = start
    cur_d = _dist_to(matrix, cur, query)
    improved = True
    while improved:
        improved = False
        best_nbr = -1
        best_d = cur_d
        for j in range(deg_layer[cur]):
            nbr = adj_layer[cur, j]
            d = _dist_to(matrix, nbr, query)
            if d < best_d or (d == best_d and best_nbr >= 0 and nbr < best_nbr):
                best_d = d
                best_nbr = nbr
        if best_nbr >= 0 and best_d < cur_d:
            cur = best_nbr
            cur_d = best_d
            improved = True
    return cur


@njit(cache=True)
def _layer_search(
    matrix, adj_layer, deg_layer, entries, n_entries, query, ef,
    marks, epoch, mask,
    cand_d, cand_i, best_d, best_i,
):
    """Best-first search on one layer.

    Only mask-passing nodes enter the result heap; traversal still walks
    every node so selective filters do not disconnect the search. Returns
    the result count; results are left in (best_d, best_i) as a max-heap.
    """
    cand_size = 0
    best_size = 0
    for e in range(n_entries):
        node = entries[e]
        if marks[node] == epoch:
            continue
        marks[node] = epoch
        d = _dist_to(matrix, node, query)
        cand_size = _push_min(cand_d, cand_i, cand_size, d, node)
        if mask[node]:
            best_size = _push_max(best_d, best_i, best_size, d, node)
            if best_size > ef:
                _, _, best_size = _pop_max(best_d, best_i, best_size)
    while cand_size > 0:
        d, node, cand_size = _pop_min(cand_d, cand_i, cand_size)
        if best_size >= ef and d > best_d[0]:
            break
        for j in range(deg_layer[node]):
            nbr = adj_layer[node, j]
            if marks[nbr] == epoch:
                continue
            marks[nbr] = epoch
            dn = _dist_to(matrix, nbr, query)
            if best_size < ef or dn < best_d[0]:
                cand_size = _push_min(cand_d, cand_i, cand_size, dn, nbr)
                if mask[nbr]:
                    best_size = _push_max(best_d, best_i, best_size, dn, nbr)
                    if best_size > ef:
                        _, _, best_size = _pop_max(best_d, best_i, best_size)
    return best_size


@njit(cache=True, inline="always")
def _drain_sorted(best_d, best_i, best_size, out_d, out_i):
    """Empty the max-heap into ascending (distance, node) order."""
    n = best_size
    size = best_size
    for pos in range(n - 1, -1, -1):
        d, idx, size = _pop_max(best_d, best_i, size)
        out_d[pos] = d
        out_i[pos] = idx
    return n


@njit(cache=True)
def _select_neighbors(matrix, cand_i, cand_d, n_cand, m, sel_out):
    """Diversity-aware selection; fills with pruned candidates up to m."""
    if n_cand <= m:
        for i in range(n_cand):
            sel_out[i] = cand_i[i]
        return n_cand
    kept = np.zeros(n_cand, dtype=np.uint8)
    n_sel = 0
    for pos in range(n_cand):
        if n_sel == m:
            break
        v = cand_i[pos]
        ok = True
        for s in range(n_sel):
            if _dist_to(matrix, v, matrix[sel_out[s]]) < cand_d[pos]:
                ok = False
                break
        if ok:
            sel_out[n_sel] = v
            n_sel += 1
            kept[pos] = 1
    if n_sel < m:
        for pos in range(n_cand):
            if n_sel == m:
                break
            if kept[pos] == 0:
                sel_out[n_sel] = cand_i[pos]
                n_sel += 1
    return n_sel


@njit(cache=True, inline="always")
def _sort_by_dist(dists, nodes, n):
    """Insertion sort ascending by (distance, node); small n only."""
    for i in range(1, n):
        d = dists[i]
        v = nodes[i]
        j = i - 1
        while j >= 0 and (dists[j] > d or (dists[j] == d and nodes[j] > v)):
            dists[j + 1] = dists[j]
            nodes[j + 1] = nodes[j]
            j -= 1
        dists[j + 1] = d
        nodes[j + 1] = v


@njit(cache=True)
def build_graph(matrix, levels, m, ef_construction):
    """Sequential deterministic HNSW construction.

    Returns (adj, deg, entry_point) with adj shaped
    (max_level + 1, n, 2m + 1); row capacity 2m applies on layer 0, m above.
    """
    n = matrix.shape[0]
    max_level = 0
    for i in range(n):
        if levels[i] > max_level:
            max_level = levels[i]
    cap = 2 * m + 1
    adj = np.full((max_level + 1, n, cap), -1, dtype=np.int32)
    deg = np.zeros((max_level + 1, n), dtype=np.int32)
    if n == 0:
        return adj, deg, -1
    marks = np.zeros(n, dtype=np.int64)
    epoch = 0
    ones = np.ones(n, dtype=np.uint8)
    cand_d = np.empty(n + 1, dtype=np.float64)
    cand_i = np.empty(n + 1, dtype=np.int32)
    heap_d = np.empty(ef_construction + 1, dtype=np.float64)
    heap_i = np.empty(ef_construction + 1, dtype=np.int32)
    found_d = np.empty(ef_construction, dtype=np.float64)
    found_i = np.empty(ef_construction, dtype=np.int32)
    entries = np.empty(ef_construction, dtype=np.int32)
    sel = np.empty(2 * m + 1, dtype=np.int32)
    prune_d = np.empty(cap, dtype=np.float64)
    prune_i = np.empty(cap, dtype=np.int32)
    prune_sel = np.empty(cap, dtype=np.int32)
    entry_point = 0
    entry_level = levels[0]
    for node in range(1, n):
        node_level = levels[node]
        query = matrix[node]
        cur = entry_point
        for layer in range(entry_level, node_level, -1):
            cur = _greedy_descent(matrix, adj[layer], deg[layer], cur, query)
        entries[0] = cur
        n_entries = 1
        top = node_level if node_level < entry_level else entry_level
        for layer in range(top, -1, -1):
            epoch += 1
            best_size = _layer_search(
                matrix, adj[layer], deg[layer], entries, n_entries, query,
                ef_construction, marks, epoch, ones, cand_d, cand_i, heap_d, heap_i,
            )
            n_found = _drain_sorted(heap_d, heap_i, best_size, found_d, found_i)
            # new nodes take the full layer budget (2m on layer 0); the extra
            # density buys noticeable recall on weakly clustered vectors
            limit = 2 * m if layer == 0 else m
            n_sel = _select_neighbors(matrix, found_i, found_d, n_found, limit, sel)
            for s in range(n_sel):
                adj[layer, node, s] = sel[s]
            deg[layer, node] = n_sel
            for s in range(n_sel):
                nbr = sel[s]
                dn = deg[layer, nbr]
                adj[layer, nbr, dn] = node
                dn += 1
                if dn > limit:
                    for t in range(dn):
                        prune_i[t] = adj[layer, nbr, t]
                        prune_d[t] = _dist_to(matrix, prune_i[t], matrix[nbr])
                    _sort_by_dist(prune_d, prune_i, dn)
                    n_kept = _select_neighbors(matrix, prune_i, prune_d, dn, limit, prune_sel)
                    for t in range(n_kept):
                        adj[layer, nbr, t] = prune_sel[t]
                    for t in range(n_kept, cap):
                        adj[layer, nbr, t] = -1
                    deg[layer, nbr] = n_kept
                else:
                    deg[layer, nbr] = dn
            for e in range(n_found):
                entries[e] = found_i[e]
            n_entries = n_found
            if n_entries == 0:
                entries[0] = cur
                n_entries = 1
        if node_level > entry_level:
            entry_point = node
            entry_level = node_level
    return adj, deg, entry_point


@njit(cache=True)
def graph_search(matrix, adj, deg, levels, entry_point, query, ef, mask):
    """Descend to layer 0, then run the filtered best-first search there.

    Returns (distances, nodes, count) sorted ascending by (distance, node).
    """
    n = matrix.shape[0]
    out_d = np.empty(ef, dtype=np.float64)
    out_i = np.empty(ef, dtype=np.int32)
    if entry_point < 0 or n == 0:
        return out_d, out_i, 0
    marks = np.zeros(n, dtype=np.int64)
    cand_d = np.empty(n + 1, dtype=np.float64)
    cand_i = np.empty(n + 1, dtype=np.int32)
    heap_d = np.empty(ef + 1, dtype=np.float64)
    heap_i = np.empty(ef + 1, dtype=np.int32)
    cur = entry_point
    for layer in range(levels[entry_point], 0, -1):
        cur = _greedy_descent(matrix, adj[layer], deg[layer], cur, query)
    entries = np.empty(1, dtype=np.int32)
    entries[0] = cur
    best_size = _layer_search(
        matrix, adj[0], deg[0], entries, 1, query, ef,
        marks, 1, mask, cand_d, cand_i, heap_d, heap_i,
    )
    count = _drain_sorted(heap_d, heap_i, best_size, out_d, out_i)
    return out_d, out_i, count
