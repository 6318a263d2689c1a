"""Level III: tasks that need (nearly) the whole input at every agent.

Their adapters expose only the global solver; record-shaped inputs (edges,
points, user vectors, matrix slices) are split as multisets.
"""

from __future__ import annotations

import math
from collections import deque
from fractions import Fraction

import numpy as np

from ..core import TaskId
from .adapters import TaskAdapter
from .level1 import _uniform_ints
from .registry import InfeasibleParameters, TaskDef, register

ROUND_DIGITS = 6


def _tid(index: int) -> TaskId:
    return TaskId.from_index(index)


def _register(index, name, shape, solve, describe, make=_uniform_ints, composition="concat", default_params=None):
    def adapter(params):
        return TaskAdapter(_tid(index), global_solve=lambda x: solve(x, params))

    register(
        TaskDef(
            task_id=_tid(index),
            name=name,
            answer_shape=shape,
            composition=composition,
            make=make,
            solve=solve,
            adapter=adapter,
            describe=describe,
            default_params=default_params or {},
        )
    )


def _node_count(edges, params) -> int:
    return int(params.get("n_nodes") or 1 + max(max(e) for e in edges))


def _rounded(value: Fraction) -> float:
    return float(round(value, ROUND_DIGITS))


# III-21 Distributed Sort ------------------------------------------------------ #

_register(
    21,
    "Distributed Sort",
    "seq[int]",
    solve=lambda x, p: sorted(x),
    describe=lambda p: (
        "The agents jointly hold an integer array. Every agent must output the complete "
        "array sorted in ascending order, including values held by all other agents."
    ),
)


# III-22 Median of Medians ----------------------------------------------------- #


def _median(values) -> float:
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return float(ordered[mid])
    return (ordered[mid - 1] + ordered[mid]) / 2


_register(
    22,
    "Median of Medians",
    "real",
    solve=lambda x, p: _median(x),
    describe=lambda p: (
        "The agents jointly hold an integer array. Report the median of the whole array; "
        "for an even number of elements, report the mean of the two middle values. The "
        "medians of the individual pieces are not enough on their own."
    ),
)


# Graph generation shared by III-23 and III-24 --------------------------------- #


def _planted_graph(rng, n_nodes: int, n_components: int, n_edges: int) -> list[list[int]]:
    """Undirected multigraph with exactly ``n_components`` components.

    Nodes are dealt into that many non-empty groups (each of size >= 2 once
    extra edges are needed); each group gets a random spanning tree, and the
    remaining edge budget is spent on random intra-group edges.
    """
    order = rng.permutation(n_nodes).tolist()
    cuts = sorted(rng.choice(np.arange(2, n_nodes - 1, 2), size=n_components - 1, replace=False).tolist()) if n_components > 1 else []
    groups, start = [], 0
    for cut in cuts + [n_nodes]:
        groups.append(order[start:cut])
        start = cut
    edges = []
    for group in groups:
        for j in range(1, len(group)):
            parent = group[int(rng.integers(0, j))]
            edges.append([parent, group[j]])
    multi = [g for g in groups if len(g) >= 2]
    while len(edges) < n_edges:
        group = multi[int(rng.integers(0, len(multi)))]
        a, b = rng.choice(len(group), size=2, replace=False).tolist()
        edges.append([group[a], group[b]])
    order = rng.permutation(len(edges)).tolist()
    return [sorted(edges[j]) for j in order]


def _graph_params(n, k, params, lo, hi):
    n_nodes = int(params.get("n_nodes") or n * k)
    if n_nodes < 2:
        raise InfeasibleParameters("graph tasks need at least two nodes")
    cap = n_nodes // 2
    lo, hi = min(lo, cap), min(hi, cap)
    return n_nodes, max(lo, 1), max(hi, lo, 1)


def _make_components(streams, n, k, params):
    n_nodes, lo, hi = _graph_params(n, k, params, 2, n)
    rng = streams("values")
    components = int(params.get("n_components") or rng.integers(lo, hi + 1))
    if not 1 <= components <= n_nodes // 2:
        raise InfeasibleParameters(f"cannot plant {components} components on {n_nodes} nodes")
    edges = _planted_graph(rng, n_nodes, components, n * k)
    return edges, {**params, "n_nodes": n_nodes}


def _count_components(edges, n_nodes: int) -> int:
    parent = list(range(n_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    count = n_nodes
    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            count -= 1
    return count


_register(
    23,
    "Graph Components",
    "int",
    solve=lambda x, p: _count_components(x, _node_count(x, p)),
    make=_make_components,
    composition="multiset",
    describe=lambda p: (
        f"The agents jointly hold the edge list of an undirected graph on nodes 0 to "
        f"{int(p['n_nodes']) - 1}; each edge is a pair [u, v]. Report the number of "
        f"connected components of the whole graph (a node with no edges is its own component)."
    ),
)


# III-24 BFS Distance ------------------------------------------------------------ #


def _make_bfs_graph(streams, n, k, params):
    n_nodes, lo, hi = _graph_params(n, k, params, 1, 2)
    rng = streams("values")
    components = int(params.get("n_components") or rng.integers(lo, hi + 1))
    edges = _planted_graph(rng, n_nodes, components, n * k)
    return edges, {**params, "n_nodes": n_nodes, "source": int(params.get("source", 0))}


def _bfs_distances(edges, n_nodes: int, source: int) -> list[int]:
    adjacency = [[] for _ in range(n_nodes)]
    for u, v in edges:
        adjacency[u].append(v)
        adjacency[v].append(u)
    dist = [-1] * n_nodes
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


_register(
    24,
    "BFS Distance",
    "seq[int]",
    solve=lambda x, p: _bfs_distances(x, _node_count(x, p), int(p.get("source", 0))),
    make=_make_bfs_graph,
    composition="multiset",
    describe=lambda p: (
        f"The agents jointly hold the edge list of an undirected graph on nodes 0 to "
        f"{int(p['n_nodes']) - 1}. Report the list of shortest-path hop distances from node "
        f"{p['source']} to every node in id order, using -1 for unreachable nodes."
    ),
)


# III-25 K-Means Iteration ------------------------------------------------------- #


def _make_points(streams, n, k, params):
    lo, hi = params["value_range"]
    rng = streams("values")
    points = [[int(a), int(b)] for a, b in rng.integers(lo, hi + 1, size=(n * k, 2))]
    if params.get("centroids"):
        return points, params
    distinct = sorted({tuple(pt) for pt in points})
    n_clusters = int(params["k"])
    if len(distinct) < n_clusters:
        raise InfeasibleParameters("fewer distinct points than clusters")
    picks = streams("centroids").choice(len(distinct), size=n_clusters, replace=False).tolist()
    return points, {**params, "centroids": [list(distinct[j]) for j in picks]}


def _kmeans_step(points, centroids) -> list[list[float]]:
    sums = [[Fraction(0), Fraction(0)] for _ in centroids]
    counts = [0] * len(centroids)
    for x, y in points:
        dists = [(x - cx) ** 2 + (y - cy) ** 2 for cx, cy in centroids]
        best = dists.index(min(dists))
        sums[best][0] += x
        sums[best][1] += y
        counts[best] += 1
    out = []
    for c, (sx, sy), count in zip(centroids, sums, counts):
        if count == 0:
            out.append([float(c[0]), float(c[1])])
        else:
            out.append([_rounded(sx / count), _rounded(sy / count)])
    return out


_register(
    25,
    "K-Means Iteration",
    "seq[seq[real]]",
    solve=lambda x, p: _kmeans_step(x, p["centroids"]),
    make=_make_points,
    composition="multiset",
    default_params={"k": 3, "value_range": [0, 100]},
    describe=lambda p: (
        f"The agents jointly hold a set of 2-D integer points [x, y]. Starting from the "
        f"centroids {p['centroids']}, perform one k-means step: assign every point to its "
        f"nearest centroid by squared Euclidean distance (ties go to the lower centroid "
        f"index), then move each centroid to the mean of its assigned points (a centroid "
        f"with no points stays put). Report the new centroids in the same order, each "
        f"coordinate rounded to {ROUND_DIGITS} decimals."
    ),
)


# III-26 Global Distinct -------------------------------------------------------- #


def _make_dense(streams, n, k, params):
    if not params.get("value_range"):
        params = {**params, "value_range": [0, n * k]}
    return _uniform_ints(streams, n, k, params)


_register(
    26,
    "Global Distinct",
    "seq[int]",
    solve=lambda x, p: sorted(set(x)),
    make=_make_dense,
    composition="multiset",
    describe=lambda p: (
        "The agents each hold a bag of integers; the same value may appear at several "
        "agents. Report every distinct value of the union exactly once, in ascending order."
    ),
)


# III-27 Collaborative Filtering ------------------------------------------------- #


def _make_users(streams, n, k, params):
    total = n * k
    if total < 2:
        raise InfeasibleParameters("need at least two users")
    lo, hi = params["value_range"]
    vectors = streams("values").integers(lo, hi + 1, size=(total, int(params["dim"])))
    return [[uid, [int(v) for v in row]] for uid, row in enumerate(vectors)], params


def _most_similar_pair(users, params) -> list[int]:
    ids = np.array([u for u, _ in users])
    vecs = np.array([v for _, v in users], dtype=np.int64)
    order = np.argsort(ids, kind="stable")
    ids, vecs = ids[order], vecs[order]
    gram = vecs @ vecs.T
    upper = np.triu_indices(len(ids), k=1)
    scores = gram[upper]
    best = scores.max()
    # triu_indices enumerates pairs in lexicographic order, so the first hit is the tie-break winner
    hit = int(np.flatnonzero(scores == best)[0])
    return [int(ids[upper[0][hit]]), int(ids[upper[1][hit]])]


_register(
    27,
    "Collab. Filtering",
    "seq[int]",
    solve=_most_similar_pair,
    make=_make_users,
    composition="multiset",
    default_params={"dim": 4, "value_range": [0, 5]},
    describe=lambda p: (
        f"The agents jointly hold user records [user_id, vector], where each vector has "
        f"{p['dim']} integer entries. Find the pair of distinct users whose vectors have the "
        f"largest dot product and report it as [smaller id, larger id]; on ties pick the "
        f"lexicographically smallest pair."
    ),
)


# III-28 PageRank Step ------------------------------------------------------------ #


def _make_digraph(streams, n, k, params):
    total = n * k
    n_nodes = int(params.get("n_nodes") or max(2, math.ceil(total / 2)))
    rng = streams("values")
    edges = []
    for _ in range(total):
        u, v = rng.choice(n_nodes, size=2, replace=False).tolist()
        edges.append([u, v])
    return edges, {**params, "n_nodes": n_nodes}


def _pagerank_step(edges, n_nodes: int, damping: Fraction) -> list[float]:
    out_degree = [0] * n_nodes
    for u, _ in edges:
        out_degree[u] += 1
    start = Fraction(1, n_nodes)
    dangling = sum(start for u in range(n_nodes) if out_degree[u] == 0)
    incoming = [Fraction(0)] * n_nodes
    for u, v in edges:
        incoming[v] += start / out_degree[u]
    base = (1 - damping) / n_nodes + damping * dangling / n_nodes
    return [_rounded(base + damping * incoming[v]) for v in range(n_nodes)]


_register(
    28,
    "PageRank Step",
    "seq[real]",
    solve=lambda x, p: _pagerank_step(x, _node_count(x, p), Fraction(p["damping"])),
    make=_make_digraph,
    composition="multiset",
    default_params={"damping": "17/20"},
    describe=lambda p: (
        f"The agents jointly hold the directed edge list [u, v] of a graph on nodes 0 to "
        f"{int(p['n_nodes']) - 1} (repeated edges count separately). Starting from rank 1/n on "
        f"every node, perform one PageRank update with damping d = {float(Fraction(p['damping']))}: "
        f"new[v] = (1-d)/n + d * (sum over edges u->v of rank[u]/outdeg(u) + "
        f"total rank of nodes without out-edges / n). Report the new ranks in node order, "
        f"rounded to {ROUND_DIGITS} decimals."
    ),
)


# III-29 Load Balance ---------------------------------------------------------------- #


def _fits(loads, parts: int, cap: int) -> bool:
    used, current = 1, 0
    for x in loads:
        if current + x > cap:
            used += 1
            current = 0
        current += x
    return used <= parts


def _min_max_partition(loads, parts: int) -> int:
    lo, hi = max(loads), sum(loads)
    while lo < hi:
        mid = (lo + hi) // 2
        if _fits(loads, parts, mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


_register(
    29,
    "Load Balance",
    "int",
    solve=lambda x, p: _min_max_partition(x, int(p["parts"])),
    default_params={"parts": 3, "value_range": [1, 100]},
    describe=lambda p: (
        f"The agents jointly hold a sequence of task loads in agent order. Split the whole "
        f"sequence into at most {p['parts']} contiguous groups so that the largest group sum "
        f"is as small as possible, and report that smallest achievable maximum."
    ),
)


# III-30 Matrix Multiply --------------------------------------------------------------- #


def _make_matrices(streams, n, k, params):
    total = n * k
    rows, cols = math.ceil(total / 2), total // 2
    if cols < 1:
        raise InfeasibleParameters("matrix multiply needs at least two records")
    inner = int(params["inner"])
    lo, hi = params["value_range"]
    rng = streams("values")
    a = rng.integers(lo, hi + 1, size=(rows, inner))
    b = rng.integers(lo, hi + 1, size=(inner, cols))
    records = [["A", i, [int(v) for v in a[i]]] for i in range(rows)]
    records += [["B", j, [int(v) for v in b[:, j]]] for j in range(cols)]
    return records, {**params, "rows": rows, "cols": cols}


def _matmul(records, params) -> list[list[int]]:
    rows, cols = int(params["rows"]), int(params["cols"])
    a_rows = {i: r for tag, i, r in records if tag == "A"}
    b_cols = {j: c for tag, j, c in records if tag == "B"}
    if set(a_rows) != set(range(rows)) or set(b_cols) != set(range(cols)):
        raise ValueError("matrix records are incomplete")
    a = np.array([a_rows[i] for i in range(rows)], dtype=np.int64)
    b = np.array([b_cols[j] for j in range(cols)], dtype=np.int64).T
    return (a @ b).tolist()


_register(
    30,
    "Matrix Multiply",
    "seq[seq[int]]",
    solve=_matmul,
    make=_make_matrices,
    composition="multiset",
    default_params={"inner": 3, "value_range": [-9, 9]},
    describe=lambda p: (
        f"The agents jointly hold the rows of a {p['rows']}x{p['inner']} integer matrix A as "
        f"records ['A', i, row] and the columns of a {p['inner']}x{p['cols']} matrix B as "
        f"records ['B', j, column]. Report the full product C = A x B as a list of "
        f"{p['rows']} rows."
    ),
)
