"""Level I: aggregation tasks (local reduce, then an associative combine)."""

from __future__ import annotations

import heapq
import math
from collections import Counter
from fractions import Fraction

from ..core import TaskId
from .adapters import AggPhase, TaskAdapter
from .partition import shard_bounds
from .registry import InfeasibleParameters, TaskDef, register

VOCABULARY = ("apple", "banana", "cherry", "date", "elder", "fig", "grape", "kiwi")


def _ints(rng, lo: int, hi: int, size: int) -> list[int]:
    return [int(v) for v in rng.integers(lo, hi + 1, size=size)]


def _value_range(params: dict, n: int, k: int) -> tuple[int, int]:
    if params.get("value_range"):
        lo, hi = params["value_range"]
        return int(lo), int(hi)
    return 0, 10 * n * k


def _uniform_ints(streams, n, k, params):
    lo, hi = _value_range(params, n, k)
    return _ints(streams("values"), lo, hi, n * k), {**params, "value_range": [lo, hi]}


def _tid(index: int) -> TaskId:
    return TaskId.from_index(index)


def _simple(
    index,
    name,
    shape,
    solve,
    local,
    combine,
    describe,
    make=_uniform_ints,
    composition="concat",
    finish=None,
    default_params=None,
    adapter=None,
):
    phase = AggPhase(local=local, combine=combine) if finish is None else AggPhase(local, combine, finish)

    adapter_override = adapter

    def adapter(params, _phase=phase):
        bound = AggPhase(
            local=lambda shard, prev, f=_phase.local: f(shard, params),
            combine=_phase.combine,
            finish=_phase.finish,
        )
        return TaskAdapter(_tid(index), global_solve=lambda x: solve(x, params), phases=(bound,))

    register(
        TaskDef(
            task_id=_tid(index),
            name=name,
            answer_shape=shape,
            composition=composition,
            make=make,
            solve=solve,
            adapter=adapter_override or adapter,
            describe=describe,
            default_params=default_params or {},
        )
    )


# I-01 Global Maximum ------------------------------------------------------- #

_simple(
    1,
    "Global Maximum",
    "int",
    solve=lambda x, p: max(x),
    local=lambda shard, p: max(shard),
    combine=max,
    describe=lambda p: (
        "The agents jointly hold one integer array, split into pieces. Report the largest "
        "integer in the whole array. Your piece alone does not tell you whether a larger "
        "value exists elsewhere, so gather the other agents' findings before answering."
    ),
)


# I-02 Word Frequency ------------------------------------------------------- #


def _make_words(streams, n, k, params):
    rng = streams("values")
    words = [VOCABULARY[int(i)] for i in rng.integers(0, len(VOCABULARY), size=n * k)]
    target = params.get("target") or VOCABULARY[int(streams("target").integers(0, len(VOCABULARY)))]
    return words, {**params, "target": target}


_simple(
    2,
    "Word Frequency",
    "int",
    solve=lambda x, p: sum(1 for w in x if w == p["target"]),
    local=lambda shard, p: sum(1 for w in shard if w == p["target"]),
    combine=lambda a, b: a + b,
    make=_make_words,
    describe=lambda p: (
        f"The agents jointly hold a long list of words. Report how many times the word "
        f"'{p['target']}' occurs in the complete list, counting every agent's words."
    ),
)


# I-03 Distributed Vote ----------------------------------------------------- #


def _make_votes(streams, n, k, params):
    total = n * k
    candidates = int(params["n_candidates"])
    if candidates < 1:
        raise InfeasibleParameters("need at least one candidate")
    if params.get("forced_value") is not None:
        return [int(params["forced_value"])] * total, params
    rng = streams("values")
    winner = int(rng.integers(0, candidates))
    majority = total // 2 + 1
    votes = [winner] * majority + _ints(rng, 0, candidates - 1, total - majority)
    order = streams("shuffle").permutation(total).tolist()
    return [votes[j] for j in order], params


def _majority(counts: Counter) -> int:
    total = sum(counts.values())
    best = min(counts, key=lambda c: (-counts[c], c))
    if 2 * counts[best] <= total:
        raise ValueError("no strict majority")
    return int(best)


def _merge_counts(a: dict, b: dict) -> dict:
    out = dict(a)
    for key, value in b.items():
        out[key] = out.get(key, 0) + value
    return dict(sorted(out.items()))


_simple(
    3,
    "Distributed Vote",
    "int",
    solve=lambda x, p: _majority(Counter(x)),
    local=lambda shard, p: dict(sorted(Counter(str(v) for v in shard).items())),
    combine=_merge_counts,
    finish=lambda counts, prev: _majority(Counter({int(c): v for c, v in counts.items()})),
    make=_make_votes,
    default_params={"n_candidates": 5},
    describe=lambda p: (
        f"Each agent holds some ballots; every ballot names a candidate id between 0 and "
        f"{int(p['n_candidates']) - 1}. One candidate received a strict majority of all "
        f"ballots cast. Report that candidate's id."
    ),
)


# I-04 Any Match ------------------------------------------------------------ #


def _random_string(rng, alphabet: str, length: int) -> str:
    return "".join(alphabet[int(i)] for i in rng.integers(0, len(alphabet), size=length))


def _make_strings(streams, n, k, params):
    alphabet, str_len, pat_len = params["alphabet"], int(params["string_length"]), int(params["pattern_length"])
    if pat_len > str_len:
        raise InfeasibleParameters("pattern longer than the strings")
    rng = streams("values")
    pattern = params.get("pattern") or _random_string(streams("pattern"), alphabet, pat_len)
    strings = []
    for _ in range(n * k):
        s = _random_string(rng, alphabet, str_len)
        while pattern in s:
            s = _random_string(rng, alphabet, str_len)
        strings.append(s)
    plant = params.get("plant")
    coin = streams("plant")
    if plant is None:
        plant = bool(coin.random() < 0.5)
    if plant:
        holder = int(coin.integers(0, n))
        start, stop = shard_bounds(n * k, n)[holder]
        slot = int(coin.integers(start, stop))
        offset = int(coin.integers(0, str_len - len(pattern) + 1))
        s = strings[slot]
        strings[slot] = s[:offset] + pattern + s[offset + len(pattern):]
    out = {k_: v for k_, v in params.items() if k_ != "plant"}
    return strings, {**out, "pattern": pattern}


_simple(
    4,
    "Any Match",
    "bool",
    solve=lambda x, p: any(p["pattern"] in s for s in x),
    local=lambda shard, p: any(p["pattern"] in s for s in shard),
    combine=lambda a, b: a or b,
    make=_make_strings,
    default_params={"alphabet": "abcdef", "string_length": 6, "pattern_length": 4},
    describe=lambda p: (
        f"The agents jointly hold a collection of short strings. Decide whether the "
        f"substring '{p['pattern']}' appears inside any string of the whole collection. "
        f"Answer true or false."
    ),
)


# I-05 Range Count ---------------------------------------------------------- #


def _make_range(streams, n, k, params):
    values, params = _uniform_ints(streams, n, k, params)
    if params.get("lo") is None or params.get("hi") is None:
        lo_v, hi_v = params["value_range"]
        a, b = sorted(_ints(streams("bounds"), lo_v, hi_v, 2))
        params = {**params, "lo": a, "hi": b}
    return values, params


def _in_range(x, p):
    return sum(1 for v in x if p["lo"] <= v <= p["hi"])


_simple(
    5,
    "Range Count",
    "int",
    solve=_in_range,
    local=_in_range,
    combine=lambda a, b: a + b,
    make=_make_range,
    describe=lambda p: (
        f"The agents jointly hold an integer array. Report how many elements of the whole "
        f"array lie in the closed interval [{p['lo']}, {p['hi']}]."
    ),
)


# I-06 Checksum (XOR) ------------------------------------------------------- #


def _xor_all(values) -> int:
    acc = 0
    for v in values:
        acc ^= v
    return acc


_simple(
    6,
    "Checksum (XOR)",
    "int",
    solve=lambda x, p: _xor_all(x),
    local=lambda shard, p: _xor_all(shard),
    combine=lambda a, b: a ^ b,
    describe=lambda p: (
        "The agents jointly hold a list of non-negative integer data blocks. Report the "
        "bitwise XOR of every block in the complete list."
    ),
)


# I-07 Average Value -------------------------------------------------------- #

_simple(
    7,
    "Average Value",
    "real",
    solve=lambda x, p: sum(x) / len(x),
    local=lambda shard, p: [sum(shard), len(shard)],
    combine=lambda a, b: [a[0] + b[0], a[1] + b[1]],
    finish=lambda sc, prev: sc[0] / sc[1],
    describe=lambda p: (
        "The agents jointly hold an integer array. Report the arithmetic mean of all of its "
        "elements as a decimal number."
    ),
)


# I-08 Set Union Size ------------------------------------------------------- #


def _make_dense(streams, n, k, params):
    if not params.get("value_range"):
        params = {**params, "value_range": [0, n * k]}
    return _uniform_ints(streams, n, k, params)


def _sorted_union(a: list, b: list) -> list:
    return sorted(set(a) | set(b))


_simple(
    8,
    "Set Union Size",
    "int",
    solve=lambda x, p: len(set(x)),
    local=lambda shard, p: sorted(set(shard)),
    combine=_sorted_union,
    finish=lambda union, prev: len(union),
    make=_make_dense,
    composition="multiset",
    describe=lambda p: (
        "The agents each hold a bag of integers, and the same value may be held by several "
        "agents. Report the number of distinct values in the union of all bags."
    ),
)


# I-09 Top-K Selection ------------------------------------------------------ #


def _top_k(values, k: int) -> list[int]:
    return heapq.nlargest(k, values)


def _top_k_adapter(params):
    k = int(params["k"])
    phase = AggPhase(
        local=lambda shard, prev: _top_k(shard, k),
        combine=lambda a, b: _top_k(a + b, k),
    )
    return TaskAdapter(_tid(9), global_solve=lambda x: _top_k(x, k), phases=(phase,))


_simple(
    9,
    "Top-K Selection",
    "seq[int]",
    solve=lambda x, p: _top_k(x, int(p["k"])),
    local=None,
    combine=None,
    adapter=_top_k_adapter,
    default_params={"k": 3},
    describe=lambda p: (
        f"The agents jointly hold an integer array. Report the {p['k']} largest elements of "
        f"the whole array in descending order, keeping repeated values."
    ),
)


# I-10 Standard Deviation --------------------------------------------------- #


def _pstdev(values) -> float:
    n = len(values)
    s = sum(values)
    # sum of (n*x - s)^2 is an exact integer; variance = that / n^3
    spread = sum((n * v - s) ** 2 for v in values)
    return math.sqrt(Fraction(spread, n**3))


def _std_adapter(params):
    mean_phase = AggPhase(
        local=lambda shard, prev: [sum(shard), len(shard)],
        combine=lambda a, b: [a[0] + b[0], a[1] + b[1]],
    )

    def spread_local(shard, sum_count):
        s, n = sum_count
        return sum((n * v - s) ** 2 for v in shard)

    spread_phase = AggPhase(
        local=spread_local,
        combine=lambda a, b: a + b,
        finish=lambda spread, sum_count: math.sqrt(Fraction(spread, sum_count[1] ** 3)),
    )
    return TaskAdapter(_tid(10), global_solve=_pstdev, phases=(mean_phase, spread_phase))


register(
    TaskDef(
        task_id=_tid(10),
        name="Standard Deviation",
        answer_shape="real",
        composition="concat",
        make=_uniform_ints,
        solve=lambda x, p: _pstdev(x),
        adapter=_std_adapter,
        describe=lambda p: (
            "The agents jointly hold an integer array. Report the population standard "
            "deviation of the whole array (divide by the element count). The global mean "
            "has to be known before squared deviations can be summed."
        ),
    )
)
