"""Level II: tasks with neighbour dependencies, solved by scans over index order.

Segmented tasks produce one output per input position; each agent is
responsible for the outputs at its own positions.
"""

from __future__ import annotations

from ..core import TaskId
from .adapters import ScanSpec, TaskAdapter
from .level1 import _ints, _random_string, _uniform_ints
from .partition import shard_bounds
from .registry import InfeasibleParameters, TaskDef, register

HASH_MULTIPLIER = 31
HASH_MODULUS = 1_000_000_007


def _tid(index: int) -> TaskId:
    return TaskId.from_index(index)


def _register(index, name, shape, solve, scan, describe, make=_uniform_ints, segmented=True, default_params=None,
              input_kind="list"):
    def adapter(params):
        return TaskAdapter(_tid(index), global_solve=lambda x: solve(x, params), scan=scan(params))

    register(
        TaskDef(
            task_id=_tid(index),
            name=name,
            answer_shape=shape,
            composition="concat",
            make=make,
            solve=solve,
            adapter=adapter,
            describe=describe,
            default_params=default_params or {},
            segmented=segmented,
            input_kind=input_kind,
        )
    )


# II-11 Prefix Sum ----------------------------------------------------------- #


def _prefix_sums(values, start=0):
    out, acc = [], start
    for v in values:
        acc += v
        out.append(acc)
    return out


def _prefix_step(carry, shard):
    out = _prefix_sums(shard, carry)
    return out, out[-1]


_register(
    11,
    "Prefix Sum",
    "seq[int]",
    solve=lambda x, p: _prefix_sums(x),
    scan=lambda p: ScanSpec("single", init=0, step=_prefix_step),
    describe=lambda p: (
        "The agents jointly hold one integer sequence; agent 0 has the first block of "
        "positions, agent 1 the next block, and so on. The prefix sum at a position is the "
        "sum of every element from the start of the sequence up to and including it. "
        "Submit the prefix sums for the positions you hold, which requires the running "
        "total of all blocks before yours."
    ),
)


# II-12 Moving Average -------------------------------------------------------- #


def _moving_average(values, window, history=()):
    buf = list(history)
    out = []
    for v in values:
        buf.append(v)
        tail = buf[-window:]
        out.append(sum(tail) / len(tail))
    return out, buf[-(window - 1):] if window > 1 else []


def _moving_avg_scan(params):
    window = int(params["window"])
    return ScanSpec("single", init=[], step=lambda carry, shard: _moving_average(shard, window, carry))


_register(
    12,
    "Moving Average",
    "seq[real]",
    solve=lambda x, p: _moving_average(x, int(p["window"]))[0],
    scan=_moving_avg_scan,
    default_params={"window": 3},
    describe=lambda p: (
        f"The agents jointly hold an integer stream in index order (agent 0 first). For "
        f"every position, the moving average is the mean of the last {p['window']} values "
        f"ending at that position, or of all values so far near the start of the stream. "
        f"Submit the moving averages for your own positions; windows near the start of your "
        f"block reach back into the previous agent's values."
    ),
)


# II-13 Longest Palindrome ---------------------------------------------------- #


def _longest_palindrome(text: str) -> int:
    best = 0
    n = len(text)
    for centre in range(2 * n - 1):
        lo, hi = centre // 2, centre // 2 + centre % 2
        while lo >= 0 and hi < n and text[lo] == text[hi]:
            lo -= 1
            hi += 1
        best = max(best, hi - lo - 1)
    return best


def _make_text(streams, n, k, params):
    return _random_string(streams("values"), params["alphabet"], n * k), params


_register(
    13,
    "Longest Palindrome",
    "int",
    solve=lambda x, p: _longest_palindrome(x),
    scan=lambda p: ScanSpec(
        "scalar",
        init="",
        step=lambda carry, shard: (None, carry + shard),
        finish=_longest_palindrome,
    ),
    make=_make_text,
    segmented=False,
    input_kind="text",
    default_params={"alphabet": "abc"},
    describe=lambda p: (
        "The agents jointly hold one string, cut into consecutive pieces in agent order. "
        "Report the length of the longest palindromic substring of the full string. "
        "Palindromes can straddle the cut points between agents."
    ),
)


# II-14 1D Life Game ------------------------------------------------------------ #


def _life_cell(left: int, cell: int, right: int) -> int:
    live = left + right
    return 1 if (cell == 1 and live == 1) or (cell == 0 and live == 2) else 0


def _life(cells, left_ghost=0, right_ghost=0):
    padded = [left_ghost, *cells, right_ghost]
    return [_life_cell(padded[i - 1], padded[i], padded[i + 1]) for i in range(1, len(padded) - 1)]


def _make_cells(streams, n, k, params):
    return _ints(streams("values"), 0, 1, n * k), params


_register(
    14,
    "1D Life Game",
    "seq[int]",
    solve=lambda x, p: _life(x),
    scan=lambda p: ScanSpec(
        "double",
        init=0,
        step=lambda carry, shard: (carry, shard[-1]),
        reverse_init=0,
        reverse_step=lambda carry, shard: (carry, shard[0]),
        merge=lambda shard, left, right: _life(shard, left, right),
    ),
    make=_make_cells,
    describe=lambda p: (
        "The agents jointly hold a row of cells (1 = alive, 0 = dead) in agent order; cells "
        "beyond both ends of the row count as dead. Compute one generation: a live cell "
        "stays alive iff exactly one of its two neighbours is alive, and a dead cell becomes "
        "alive iff both neighbours are alive. Submit the next states of your own cells; your "
        "edge cells depend on the neighbouring agents' edge cells."
    ),
)


# II-15 Pattern Search (subsequence) ------------------------------------------ #


def _greedy_match(text: str, pattern: str, matched: int = 0) -> int:
    for ch in text:
        if matched < len(pattern) and ch == pattern[matched]:
            matched += 1
    return matched


def _make_subsequence(streams, n, k, params):
    alphabet = params["alphabet"]
    total = n * k
    pattern = params.get("pattern") or _random_string(streams("pattern"), alphabet, min(int(params["pattern_length"]), total))
    text = list(_random_string(streams("values"), alphabet, total))
    coin = streams("plant")
    plant = params.get("plant")
    if plant is None:
        plant = bool(coin.random() < 0.5)
    if plant:
        if len(pattern) > total:
            raise InfeasibleParameters("pattern longer than the text")
        slots = sorted(coin.choice(total, size=len(pattern), replace=False).tolist())
        for slot, ch in zip(slots, pattern):
            text[slot] = ch
    else:
        # Break the match: after the greedy prefix of len-1 chars, remove the last char.
        head = pattern[:-1]
        matched, cut = 0, None
        for i, ch in enumerate(text):
            if matched < len(head) and ch == head[matched]:
                matched += 1
                if matched == len(head):
                    cut = i
                    break
        if not head:
            cut = -1
        if cut is not None:
            last = pattern[-1]
            others = [c for c in alphabet if c != last]
            for i in range(cut + 1, total):
                if text[i] == last:
                    text[i] = others[int(coin.integers(0, len(others)))]
    out = {k_: v for k_, v in params.items() if k_ != "plant"}
    return "".join(text), {**out, "pattern": pattern}


def _pattern_scan(params):
    pattern = params["pattern"]
    return ScanSpec(
        "scalar",
        init=0,
        step=lambda carry, shard: (None, _greedy_match(shard, pattern, carry)),
        finish=lambda matched: matched == len(pattern),
    )


_register(
    15,
    "Pattern Search",
    "bool",
    solve=lambda x, p: _greedy_match(x, p["pattern"]) == len(p["pattern"]),
    scan=_pattern_scan,
    make=_make_subsequence,
    segmented=False,
    input_kind="text",
    default_params={"alphabet": "abcde", "pattern_length": 4},
    describe=lambda p: (
        f"The agents jointly hold one string, cut into consecutive pieces in agent order. "
        f"Decide whether '{p['pattern']}' occurs in the full string as a subsequence "
        f"(its characters appear in order, not necessarily adjacent). Answer true or false."
    ),
)


# II-16 Trapping Rain ---------------------------------------------------------- #


def _running_max(values, start):
    out, acc = [], start
    for v in values:
        acc = max(acc, v)
        out.append(acc)
    return out


def _trapped(heights, left_max, right_max):
    return [min(a, b) - h for h, a, b in zip(heights, left_max, right_max)]


def _rain(x):
    return _trapped(x, _running_max(x, 0), _running_max(x[::-1], 0)[::-1])


def _make_heights(streams, n, k, params):
    lo, hi = params["value_range"]
    return _ints(streams("values"), lo, hi, n * k), params


def _rain_scan(params):
    def forward(carry, shard):
        out = _running_max(shard, carry)
        return out, out[-1]

    def backward(carry, shard):
        out = _running_max(shard[::-1], carry)[::-1]
        return out, out[0]

    return ScanSpec("double", init=0, step=forward, reverse_init=0, reverse_step=backward, merge=_trapped)


_register(
    16,
    "Trapping Rain",
    "seq[int]",
    solve=lambda x, p: _rain(x),
    scan=_rain_scan,
    make=_make_heights,
    default_params={"value_range": [0, 10]},
    describe=lambda p: (
        "The agents jointly hold a row of bar heights in agent order. After rain, the water "
        "above a bar equals min(tallest bar at or left of it, tallest bar at or right of it) "
        "minus its own height. Submit the water amount above each of your own bars; the "
        "maxima run across every agent on each side."
    ),
)


# II-17 Diff Array -------------------------------------------------------------- #


def _differences(values, previous=0):
    out = []
    for v in values:
        out.append(v - previous)
        previous = v
    return out


_register(
    17,
    "Diff Array",
    "seq[int]",
    solve=lambda x, p: _differences(x),
    scan=lambda p: ScanSpec("single", init=0, step=lambda carry, shard: (_differences(shard, carry), shard[-1])),
    describe=lambda p: (
        "The agents jointly hold an integer sequence in agent order. Its difference array "
        "has d[0] = a[0] and d[i] = a[i] - a[i-1]. Submit the difference values at your own "
        "positions; your first position needs the last value held by the previous agent."
    ),
)


# II-18 List Ranking ------------------------------------------------------------ #


def _make_linked_list(streams, n, k, params):
    total = n * k
    order = streams("values").permutation(total).tolist()
    nodes = [[order[j], order[j + 1] if j + 1 < total else -1] for j in range(total)]
    shuffle = streams("shuffle")
    laid_out = []
    for start, stop in shard_bounds(total, n):
        block = nodes[start:stop]
        laid_out.extend(block[i] for i in shuffle.permutation(len(block)).tolist())
    return laid_out, params


def _local_ranks(shard, offset):
    nxt = {node: succ for node, succ in shard}
    pointed = set(nxt.values())
    heads = [node for node, _ in shard if node not in pointed]
    if len(heads) != 1:
        raise ValueError("list fragment must have exactly one local head")
    rank, node = {}, heads[0]
    while node in nxt and node not in rank:
        rank[node] = offset + len(rank)
        node = nxt[node]
    if len(rank) != len(shard):
        raise ValueError("list fragment is not a single contiguous run")
    return [rank[node] for node, _ in shard]


_register(
    18,
    "List Ranking",
    "seq[int]",
    solve=lambda x, p: _local_ranks(x, 0),
    scan=lambda p: ScanSpec("single", init=0, step=lambda carry, shard: (_local_ranks(shard, carry), carry + len(shard))),
    make=_make_linked_list,
    describe=lambda p: (
        "The agents jointly hold a singly linked list as [node, next] pairs (next = -1 marks "
        "the tail). Agent 0 holds the first stretch of the list, agent 1 the following "
        "stretch, and so on, but each agent's pairs are stored in shuffled order. The rank "
        "of a node is its distance from the head (the head has rank 0). Submit the rank of "
        "each of your pairs' nodes, in the order your pairs are listed."
    ),
)


# II-19 Merge Neighbors ---------------------------------------------------------- #


def _run_lengths_left(values, carry):
    prev_value, prev_len = carry
    out = []
    for v in values:
        prev_len = prev_len + 1 if v == prev_value else 1
        prev_value = v
        out.append(prev_len)
    return out, [prev_value, prev_len]


def _run_lengths(values):
    left, _ = _run_lengths_left(values, [None, 0])
    right, _ = _run_lengths_left(values[::-1], [None, 0])
    return [a + b - 1 for a, b in zip(left, right[::-1])]


def _merge_scan(params):
    def backward(carry, shard):
        out, carry = _run_lengths_left(shard[::-1], carry)
        return out[::-1], carry

    return ScanSpec(
        "double",
        init=[None, 0],
        step=lambda carry, shard: _run_lengths_left(shard, carry),
        reverse_init=[None, 0],
        reverse_step=backward,
        merge=lambda shard, left, right: [a + b - 1 for a, b in zip(left, right)],
    )


def _make_symbols(streams, n, k, params):
    return _ints(streams("values"), 0, int(params["n_symbols"]) - 1, n * k), params


_register(
    19,
    "Merge Neighbors",
    "seq[int]",
    solve=lambda x, p: _run_lengths(x),
    scan=_merge_scan,
    make=_make_symbols,
    default_params={"n_symbols": 3},
    describe=lambda p: (
        "The agents jointly hold a sequence of small integers in agent order. Adjacent equal "
        "elements merge into one run, and runs may continue across agent boundaries. For "
        "every position you hold, submit the length of the merged run containing it."
    ),
)


# II-20 Pipeline Hash ------------------------------------------------------------ #


def _hash_chain(values, state):
    out = []
    for v in values:
        state = (state * HASH_MULTIPLIER + v) % HASH_MODULUS
        out.append(state)
    return out


_register(
    20,
    "Pipeline Hash",
    "seq[int]",
    solve=lambda x, p: _hash_chain(x, int(p["init"])),
    scan=lambda p: ScanSpec(
        "single",
        init=int(p["init"]),
        step=lambda carry, shard: ((out := _hash_chain(shard, carry)), out[-1]),
    ),
    default_params={"init": 17},
    describe=lambda p: (
        f"The agents jointly hold an integer sequence in agent order. A rolling hash starts "
        f"at h = {p['init']} and for each element x becomes h = (h * {HASH_MULTIPLIER} + x) "
        f"mod {HASH_MODULUS}. Submit the hash value after each of your own positions; the "
        f"state entering your block depends on every earlier element."
    ),
)
