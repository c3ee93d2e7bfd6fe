"""Pure-NumPy implementations of the per-frame hot kernels.

Selected at import time when the compiled extension is unavailable (or when
FPDETECT_PURE_PYTHON is set). Semantics match ``_core`` exactly; floating
point results may differ by summation order at the 1e-12 level.

All kernels hash points into a uniform grid whose cell size equals the query
radius, so a query only ever inspects the 27 surrounding cells.
"""
from collections import deque

import numpy as np

# Cell coordinates are packed into one int64 key; 2**20 bias keeps packing
# valid for |cell index| < 2**20 (kilometres at centimetre resolution).
_BIAS = 1 << 20
_SHIFT = 21


def _pack(cells):
    return ((cells[:, 0] + _BIAS) << (2 * _SHIFT)) | ((cells[:, 1] + _BIAS) << _SHIFT) | (cells[:, 2] + _BIAS)


def _expand_ranges(lo, hi):
    """Concatenate arange(lo[i], hi[i]) for all i."""
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    csum = np.cumsum(counts)
    within = np.arange(total, dtype=np.int64) - np.repeat(csum - counts, counts)
    return np.repeat(lo, counts) + within


class _Grid:
    """Points bucketed by cell key, sorted for searchsorted lookups."""

    def __init__(self, points, cell):
        self.points = points
        self.inv = 1.0 / cell
        cells = np.floor(points * self.inv).astype(np.int64)
        keys = _pack(cells)
        self.order = np.argsort(keys, kind="stable")
        self.keys = keys[self.order]

    def candidate_pairs(self, queries):
        """(qid, point_index) pairs for all points in the 27 cells around each query."""
        qcells = np.floor(queries * self.inv).astype(np.int64)
        m = len(queries)
        qids_parts = []
        cand_parts = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    nk = _pack(qcells + np.array([dx, dy, dz], dtype=np.int64))
                    lo = np.searchsorted(self.keys, nk, side="left")
                    hi = np.searchsorted(self.keys, nk, side="right")
                    counts = hi - lo
                    qids_parts.append(np.repeat(np.arange(m, dtype=np.int64), counts))
                    cand_parts.append(self.order[_expand_ranges(lo, hi)])
        return np.concatenate(qids_parts), np.concatenate(cand_parts)


def _pairs_within(points, queries, r, strict):
    if len(points) == 0 or len(queries) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    grid = _Grid(points, r)
    qids, cand = grid.candidate_pairs(queries)
    d = points[cand] - queries[qids]
    d2 = d[:, 0] ** 2 + d[:, 1] ** 2 + d[:, 2] ** 2
    keep = d2 < r * r if strict else d2 <= r * r
    return qids[keep], cand[keep]


def radius_neighbors(points, queries, r):
    """CSR neighbor lists: for each query, indices of points within r (inclusive).

    Returns (idx, off) with idx[off[i]:off[i+1]] the sorted neighbor indices
    of queries[i].
    """
    m = len(queries)
    qids, cand = _pairs_within(points, queries, r, strict=False)
    order = np.lexsort((cand, qids))
    qids, cand = qids[order], cand[order]
    off = np.zeros(m + 1, dtype=np.int64)
    np.add.at(off, qids + 1, 1)
    np.cumsum(off, out=off)
    return cand, off


def neighborhood_cov(points, r):
    """Per-point count and covariance of the neighborhood within r (self included).

    Returns (counts, cov) with cov packed per point as (xx, xy, xz, yy, yz, zz);
    covariance is the population covariance of the neighbor set.
    """
    n = len(points)
    qids, cand = _pairs_within(points, points, r, strict=False)
    counts = np.bincount(qids, minlength=n)
    # accumulate relative to the query point itself for conditioning
    d = points[cand] - points[qids]
    s1 = np.empty((n, 3))
    s2 = np.empty((n, 6))
    for c in range(3):
        s1[:, c] = np.bincount(qids, weights=d[:, c], minlength=n)
    prods = (
        d[:, 0] * d[:, 0], d[:, 0] * d[:, 1], d[:, 0] * d[:, 2],
        d[:, 1] * d[:, 1], d[:, 1] * d[:, 2], d[:, 2] * d[:, 2],
    )
    for c, pr in enumerate(prods):
        s2[:, c] = np.bincount(qids, weights=pr, minlength=n)
    cnt = np.maximum(counts, 1).astype(float)
    mu = s1 / cnt[:, None]
    cov = s2 / cnt[:, None]
    cov[:, 0] -= mu[:, 0] * mu[:, 0]
    cov[:, 1] -= mu[:, 0] * mu[:, 1]
    cov[:, 2] -= mu[:, 0] * mu[:, 2]
    cov[:, 3] -= mu[:, 1] * mu[:, 1]
    cov[:, 4] -= mu[:, 1] * mu[:, 2]
    cov[:, 5] -= mu[:, 2] * mu[:, 2]
    return counts.astype(np.int64), cov


def knn_mean_dist(points, k):
    """Mean distance from each point to its k nearest neighbors (self excluded).

    Exact: the cell-ring search expands until the k-th distance is provably
    inside the searched rings. Requires k < len(points).
    """
    n = len(points)
    if k < 1 or k >= n:
        raise ValueError("knn_mean_dist requires 1 <= k < n")
    ext = points.max(axis=0) - points.min(axis=0)
    scale = max(float(ext.max()), 1e-6)
    ext = np.maximum(ext, 1e-3 * scale)
    # aim for ~k points per cell so ring 1 usually suffices
    h = float((ext.prod() * k / n) ** (1.0 / 3.0))
    h = min(max(h, 1e-6), scale)

    inv = 1.0 / h
    cells = np.floor(points * inv).astype(np.int64)
    keys = _pack(cells)
    order = np.argsort(keys, kind="stable")
    skeys = keys[order]
    uniq, starts = np.unique(skeys, return_index=True)
    ends = np.append(starts[1:], n)

    out = np.empty(n)
    cell_of = {int(key): gi for gi, key in enumerate(uniq)}
    ucells = cells[order[starts]]

    for gi in range(len(uniq)):
        members = order[starts[gi]:ends[gi]]
        q = points[members]
        base = ucells[gi]
        ring = 1
        while True:
            cand_groups = []
            for dx in range(-ring, ring + 1):
                for dy in range(-ring, ring + 1):
                    for dz in range(-ring, ring + 1):
                        key = int(_pack(np.array([[base[0] + dx, base[1] + dy, base[2] + dz]]))[0])
                        gj = cell_of.get(key)
                        if gj is not None:
                            cand_groups.append(order[starts[gj]:ends[gj]])
            cand = np.concatenate(cand_groups)
            if len(cand) >= k + 1:
                d = points[cand][None, :, :] - q[:, None, :]
                d2 = d[:, :, 0] ** 2 + d[:, :, 1] ** 2 + d[:, :, 2] ** 2
                # drop the self column per row (exactly one zero from the point itself)
                part = np.partition(d2, k, axis=1)[:, : k + 1]
                part = np.sort(part, axis=1)
                kth = np.sqrt(part[:, k])
                if np.all(kth <= ring * h):
                    out[members] = np.sqrt(part[:, 1:]).sum(axis=1) / k
                    break
            ring += 1
    return out


def euclidean_labels(points, r):
    """Connected-component labels linking points at distance < r (strict).

    Component ids follow discovery order from the lowest point index.
    """
    n = len(points)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    idx, off = _csr_strict(points, r)
    next_label = 0
    for i in range(n):
        if labels[i] >= 0:
            continue
        labels[i] = next_label
        queue = deque([i])
        while queue:
            j = queue.popleft()
            for nb in idx[off[j]:off[j + 1]]:
                if labels[nb] < 0:
                    labels[nb] = next_label
                    queue.append(nb)
        next_label += 1
    return labels


def _csr_strict(points, r):
    qids, cand = _pairs_within(points, points, r, strict=True)
    order = np.lexsort((cand, qids))
    qids, cand = qids[order], cand[order]
    off = np.zeros(len(points) + 1, dtype=np.int64)
    np.add.at(off, qids + 1, 1)
    np.cumsum(off, out=off)
    return cand, off


def grow_pass(vox_xyz, vox_normals, nbr_idx, nbr_off, seed_vox, cents, norms,
              inv_spatial, w_n, cap2):
    """One flow-constrained growth pass over the voxel adjacency graph.

    Seeds claim their own voxel; each synchronous round, every unassigned
    neighbor of the frontier is claimed by the competing patch minimizing
    D^2 = inv_spatial * ds^2 + w_n * dn^2 (ties to the lower patch id),
    subject to ds^2 <= cap2. Returns per-voxel labels, -1 = unreached.
    """
    v = len(vox_xyz)
    labels = np.full(v, -1, dtype=np.int64)
    labels[seed_vox] = np.arange(len(seed_vox), dtype=np.int64)
    frontier = np.asarray(seed_vox, dtype=np.int64)
    while frontier.size:
        counts = nbr_off[frontier + 1] - nbr_off[frontier]
        src = np.repeat(frontier, counts)
        nb = nbr_idx[_expand_ranges(nbr_off[frontier], nbr_off[frontier + 1])]
        m = labels[nb] < 0
        src, nb = src[m], nb[m]
        if nb.size == 0:
            break
        p = labels[src]
        d = vox_xyz[nb] - cents[p]
        ds2 = d[:, 0] ** 2 + d[:, 1] ** 2 + d[:, 2] ** 2
        dot = np.abs(
            vox_normals[nb, 0] * norms[p, 0]
            + vox_normals[nb, 1] * norms[p, 1]
            + vox_normals[nb, 2] * norms[p, 2]
        )
        dn = 1.0 - dot
        d2 = ds2 * inv_spatial + w_n * (dn * dn)
        ok = ds2 <= cap2
        nb, p, d2 = nb[ok], p[ok], d2[ok]
        if nb.size == 0:
            break
        order = np.lexsort((p, d2, nb))
        nb, p = nb[order], p[order]
        first = np.ones(len(nb), dtype=bool)
        first[1:] = nb[1:] != nb[:-1]
        winners = nb[first]
        labels[winners] = p[first]
        frontier = winners
    return labels
