"""Mixed Tsirelson-type norm on finitely supported sequences.

The norming set W is the smallest set of finitely supported functionals that
contains every signed coordinate functional +-e_k* and is closed under

    f = b_1 f_1 + ... + b_a f_a,    1 <= a <= n,

where f_1 < ... < f_a come from W and are successive (the support of each
ends before the next begins).  The norm is ||x|| = sup_{f in W} f(x).

Two independent evaluators live here.  ``ts_norm_oracle`` follows the closure
rule literally with an explicit height budget: slow, transparent, used to
cross-check.  ``ts_norm`` is the production dynamic program over interval
partitions of the support; it prunes moves that provably never win
(single-child combinations are dominated because b_1 < 1, and on nonnegative
vectors interval partitions dominate arbitrary successive supports because
the span norm is monotone under span extension).

``enumerate_wfunctionals`` materializes the closure over a tiny index set so
tests can compare both evaluators against a brute-force maximum.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

import numpy as np

from bdx.errors import NotProperError
from bdx.weights import Params


# ---------------------------------------------------------------------------
# Sparse vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SparseVec:
    """Finitely supported vector: sorted (index, value) pairs, no zeros."""

    entries: tuple[tuple[int, float], ...]

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(k for k, _ in self.entries)

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.entries)

    @property
    def support_size(self) -> int:
        return len(self.entries)

    def get(self, index: int) -> float:
        for k, v in self.entries:
            if k == index:
                return v
            if k > index:
                return 0.0
        return 0.0

    def restrict(self, lo: int, hi: int) -> "SparseVec":
        """Keep coordinates with lo < index <= hi (half-open window)."""
        return SparseVec(tuple((k, v) for k, v in self.entries if lo < k <= hi))

    def scale(self, c: float) -> "SparseVec":
        if c == 0.0:
            return SparseVec(())
        return SparseVec(tuple((k, c * v) for k, v in self.entries))

    def add(self, other: "SparseVec") -> "SparseVec":
        acc = dict(self.entries)
        for k, v in other.entries:
            acc[k] = acc.get(k, 0.0) + v
        return sparse_vec(acc)

    def abs(self) -> "SparseVec":
        return SparseVec(tuple((k, builtins_abs(v)) for k, v in self.entries))

    def inf_norm(self) -> float:
        return max((builtins_abs(v) for _, v in self.entries), default=0.0)

    def l1_norm(self) -> float:
        return sum(builtins_abs(v) for _, v in self.entries)

    def lr_norm(self, r: float) -> float:
        if not self.entries:
            return 0.0
        return sum(builtins_abs(v) ** r for _, v in self.entries) ** (1.0 / r)


builtins_abs = abs


def sparse_vec(data: Union[dict, Iterable[tuple[int, float]]]) -> SparseVec:
    """Normalize to the sorted, zero-free canonical form."""
    if isinstance(data, dict):
        items = data.items()
    else:
        items = list(data)
    acc: dict[int, float] = {}
    for k, v in items:
        if k < 1:
            raise ValueError(f"indices start at 1, got {k}")
        acc[k] = acc.get(k, 0.0) + float(v)
    return SparseVec(tuple(sorted((k, v) for k, v in acc.items() if v != 0.0)))


def from_dense(values: Iterable[float], start: int = 1) -> SparseVec:
    return sparse_vec({start + i: v for i, v in enumerate(values)})


def parse_vec(text: str) -> SparseVec:
    """Parse 'idx:val idx:val ...' (whitespace separated)."""
    pairs = []
    for token in text.split():
        idx, _, val = token.partition(":")
        pairs.append((int(idx), float(val)))
    return sparse_vec(pairs)


def format_vec(x: SparseVec) -> str:
    return " ".join(f"{k}:{v:.12g}" for k, v in x.entries)


# ---------------------------------------------------------------------------
# Functional trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WLeaf:
    """Signed coordinate functional sign * e_index*."""

    index: int
    sign: int


@dataclass(frozen=True)
class WNode:
    """Weighted combination b_1 f_1 + ... + b_a f_a of successive children."""

    children: tuple["WFunctional", ...]


WFunctional = Union[WLeaf, WNode]


def support_bounds(f: WFunctional) -> tuple[int, int]:
    """(min, max) leaf index of the tree."""
    if isinstance(f, WLeaf):
        return f.index, f.index
    lo = support_bounds(f.children[0])[0]
    hi = support_bounds(f.children[-1])[1]
    return lo, hi


def leaf_count(f: WFunctional) -> int:
    if isinstance(f, WLeaf):
        return 1
    return sum(leaf_count(c) for c in f.children)


def height(f: WFunctional) -> int:
    if isinstance(f, WLeaf):
        return 0
    return 1 + max(height(c) for c in f.children)


def is_wfunctional(params: Params, f: WFunctional) -> bool:
    """Structural check: signs, arity, strict successiveness at every node."""
    if isinstance(f, WLeaf):
        return f.sign in (1, -1) and f.index >= 1
    if not (1 <= len(f.children) <= params.n):
        return False
    for a, b in itertools.pairwise(f.children):
        if support_bounds(a)[1] >= support_bounds(b)[0]:
            return False
    return all(is_wfunctional(params, c) for c in f.children)


def eval_functional(params: Params, f: WFunctional, x: SparseVec) -> float:
    if isinstance(f, WLeaf):
        return f.sign * x.get(f.index)
    return sum(
        params.b[i] * eval_functional(params, c, x) for i, c in enumerate(f.children)
    )


def is_proper(f: WFunctional) -> bool:
    """Proper trees have no single-child nodes and only positive leaves."""
    if isinstance(f, WLeaf):
        return f.sign == 1
    return len(f.children) >= 2 and all(is_proper(c) for c in f.children)


def properize(f: WFunctional) -> WFunctional:
    """Normal form that dominates f on nonnegative vectors.

    Single-child combinations are collapsed (their weight b_1 < 1 is dropped,
    which can only increase the value) and leaf signs are forced positive.
    For every x:  |f(x)| <= properize(f)(|x|).
    """
    if isinstance(f, WLeaf):
        return WLeaf(f.index, 1)
    if len(f.children) == 1:
        return properize(f.children[0])
    return WNode(tuple(properize(c) for c in f.children))


def height_check(f: WFunctional) -> tuple[int, int]:
    """Return (height, bound) for a proper tree; bound = leaf count - 1.

    Every internal node of a proper tree splits, so the deepest path sheds at
    least one extra leaf per level.  Raises NotProperError otherwise.
    """
    if not is_proper(f):
        raise NotProperError("height bound only holds for proper trees")
    h = height(f)
    bound = max(0, leaf_count(f) - 1)
    if h > bound:
        raise NotProperError(f"proper tree of height {h} exceeds leaf bound {bound}")
    return h, bound


def combine_successive(params: Params, fs: list[WFunctional]) -> WNode:
    """Build the prefix-weighted combination, validating arity and order."""
    if not (1 <= len(fs) <= params.n):
        raise ValueError(f"arity {len(fs)} outside 1..{params.n}")
    for a, b in itertools.pairwise(fs):
        if support_bounds(a)[1] >= support_bounds(b)[0]:
            raise ValueError("children are not successive")
    return WNode(tuple(fs))


# ---------------------------------------------------------------------------
# Oracle evaluator (written first; the production DP is checked against it)
# ---------------------------------------------------------------------------


def ts_norm_oracle(params: Params, x: SparseVec, support_cap: int = 8) -> float:
    """Norm by literal closure search with an explicit height budget.

    States are (span of the support array, remaining height).  Every closure
    move is kept: arity 1 (which the production DP prunes), stopping at any
    arity <= n, and leaves anywhere inside the span.  Signs are collapsed by
    evaluating on |x|: each leaf enters with a positive product of weights,
    so its sign is chosen independently and optimally.

    The height budget equals the support size: a functional can always be
    properized without decreasing its value on |x|, and proper trees with m
    distinct leaf indices have height < m.
    """
    m = x.support_size
    if m == 0:
        return 0.0
    if m > support_cap:
        raise ValueError(f"oracle limited to supports of size <= {support_cap}")
    vals = [builtins_abs(v) for v in x.values]
    b = params.b
    n = params.n
    cap = m

    best_memo: dict[tuple[int, int, int], float] = {}
    tail_memo: dict[tuple[int, int, int, int], float] = {}

    def best(lo: int, hi: int, h: int) -> float:
        key = (lo, hi, h)
        if key in best_memo:
            return best_memo[key]
        out = max(vals[lo:hi])
        if h >= 1:
            out = max(out, b[0] * best(lo, hi, h - 1))
            for s in range(lo + 1, hi):
                out = max(out, b[0] * best(lo, s, h - 1) + tail(1, s, hi, h))
        best_memo[key] = out
        return out

    def tail(i: int, lo: int, hi: int, h: int) -> float:
        key = (i, lo, hi, h)
        if key in tail_memo:
            return tail_memo[key]
        out = b[i] * best(lo, hi, h - 1)
        if i + 1 < n:
            for s in range(lo + 1, hi):
                out = max(out, b[i] * best(lo, s, h - 1) + tail(i + 1, s, hi, h))
        tail_memo[key] = out
        return out

    return best(0, m, cap)


# ---------------------------------------------------------------------------
# Production evaluator
# ---------------------------------------------------------------------------

_LEAF = -1  # decision sentinel: span resolved by a single coordinate
_WHOLE = -2  # decision sentinel: tail functional takes the whole span


def _ts_tables(params: Params, vals: list[float]):
    """Bottom-up interval DP.

    N[lo, hi] is the norm of the support slice [lo, hi); W[i, lo, hi] is the
    best value of a tail b_i f_i + ... + b_a f_a over that slice.  Interval
    partitions suffice on nonnegative input, prefix weights are optimal
    because b is decreasing, and arity-1 combinations are dominated, so N
    only branches on covering splits.  Decisions are recorded for witness
    reconstruction: split position, or _LEAF / _WHOLE.
    """
    m = len(vals)
    n = params.n
    b = params.b
    N = np.zeros((m + 1, m + 1))
    W = np.zeros((n, m + 1, m + 1))
    decN = np.full((m + 1, m + 1), _LEAF, dtype=np.int32)
    decW = np.full((n, m + 1, m + 1), _WHOLE, dtype=np.int32)
    argN = np.zeros((m + 1, m + 1), dtype=np.int32)

    v = np.asarray(vals)
    for length in range(1, m + 1):
        for lo in range(0, m - length + 1):
            hi = lo + length
            # best single coordinate in span
            pos = lo + int(np.argmax(v[lo:hi]))
            N[lo, hi] = v[pos]
            argN[lo, hi] = pos
            if length >= 2:
                s_range = np.arange(lo + 1, hi)
                cand = b[0] * N[lo, lo + 1 : hi] + W[1, lo + 1 : hi, hi]
                j = int(np.argmax(cand))
                if cand[j] > N[lo, hi]:
                    N[lo, hi] = cand[j]
                    decN[lo, hi] = s_range[j]
            for i in range(n - 1, 0, -1):
                W[i, lo, hi] = b[i] * N[lo, hi]
                if i + 1 < n and length >= 2:
                    s_range = np.arange(lo + 1, hi)
                    cand = b[i] * N[lo, lo + 1 : hi] + W[i + 1, lo + 1 : hi, hi]
                    j = int(np.argmax(cand))
                    if cand[j] > W[i, lo, hi]:
                        W[i, lo, hi] = cand[j]
                        decW[i, lo, hi] = s_range[j]
    return N, W, decN, decW, argN


def ts_norm(params: Params, x: SparseVec) -> float:
    if x.support_size == 0:
        return 0.0
    vals = [builtins_abs(v) for v in x.values]
    N, _, _, _, _ = _ts_tables(params, vals)
    return float(N[0, len(vals)])


def ts_norm_attaining(params: Params, x: SparseVec) -> tuple[float, WFunctional]:
    """Norm plus a proper functional from W that attains it on x.

    The DP runs on |x|; reconstructed leaves carry sign(x_k) so the returned
    functional attains the same value on x itself.
    """
    if x.support_size == 0:
        raise ValueError("zero vector has no norming functional")
    vals = [builtins_abs(v) for v in x.values]
    idx = x.indices
    raw = x.values
    m = len(vals)
    N, W, decN, decW, argN = _ts_tables(params, vals)

    def sign_at(pos: int) -> int:
        return 1 if raw[pos] >= 0 else -1

    def rebuild_n(lo: int, hi: int) -> WFunctional:
        s = int(decN[lo, hi])
        if s == _LEAF:
            pos = int(argN[lo, hi])
            return WLeaf(idx[pos], sign_at(pos))
        return WNode(tuple([rebuild_n(lo, s)] + rebuild_w(1, s, hi)))

    def rebuild_w(i: int, lo: int, hi: int) -> list[WFunctional]:
        s = int(decW[i, lo, hi])
        if s == _WHOLE:
            return [rebuild_n(lo, hi)]
        return [rebuild_n(lo, s)] + rebuild_w(i + 1, s, hi)

    f = rebuild_n(0, m)
    return float(N[0, m]), f


# ---------------------------------------------------------------------------
# Brute-force closure materializer (test corpus sizes only)
# ---------------------------------------------------------------------------


def enumerate_wfunctionals(
    params: Params, indices: tuple[int, ...], max_height: int | None = None
) -> Iterator[WFunctional]:
    """Yield every member of W with support inside ``indices``.

    The closure is graded by height and materialized up to ``max_height``
    (default: the number of indices, enough to realize the norm — see
    ts_norm_oracle).  Exponential; meant for supports of size <= 4.
    """
    idx = tuple(sorted(indices))
    if max_height is None:
        max_height = len(idx)

    # memo[(subset, h)] = all functionals with support exactly `subset`,
    # height <= h.  Subsets are contiguity-free: successiveness only orders
    # parts, so a part is any non-empty slice of the sorted subset.
    memo: dict[tuple[tuple[int, ...], int], list[WFunctional]] = {}

    def gen(subset: tuple[int, ...], h: int) -> list[WFunctional]:
        key = (subset, h)
        if key in memo:
            return memo[key]
        out: list[WFunctional] = []
        if len(subset) == 1:
            out.append(WLeaf(subset[0], 1))
            out.append(WLeaf(subset[0], -1))
        if h >= 1:
            for a in range(1, params.n + 1):
                for cuts in itertools.combinations(range(1, len(subset)), a - 1):
                    bounds = (0, *cuts, len(subset))
                    parts = [
                        subset[bounds[i] : bounds[i + 1]] for i in range(a)
                    ]
                    pools = [gen(p, h - 1) for p in parts]
                    for combo in itertools.product(*pools):
                        out.append(WNode(tuple(combo)))
        memo[key] = out
        return out

    seen_any = False
    for size in range(1, len(idx) + 1):
        for subset in itertools.combinations(idx, size):
            for f in gen(tuple(subset), max_height):
                seen_any = True
                yield f
    if not seen_any:
        return


# ---------------------------------------------------------------------------
# Named vectors and functionals
# ---------------------------------------------------------------------------


def branching_functional(
    params: Params, depth: int, start_index: int = 1
) -> tuple[WFunctional, SparseVec]:
    """Full n-ary tree of the given depth plus the indicator of its leaves.

    Evaluating the tree on the indicator gives (b_1 + ... + b_n)**depth,
    which certifies that the norm grows at the full branching rate.
    """
    counter = [start_index]

    def build(d: int) -> WFunctional:
        if d == 0:
            leaf = WLeaf(counter[0], 1)
            counter[0] += 1
            return leaf
        return WNode(tuple(build(d - 1) for _ in range(params.n)))

    f = build(depth)
    ones = sparse_vec({k: 1.0 for k in range(start_index, counter[0])})
    return f, ones


def prop14_vector(params: Params, level: int, start_index: int = 1) -> SparseVec:
    """Self-similar unit vector whose norm is exactly 1.

    Coordinates are indexed by words s of length ``level`` over the branch
    alphabet (lexicographic order).  With a_s the product of the branch
    weights along s, the coordinate is a_s**(rc/r).  The full branching tree
    with matching leaf weights gives value sum a_s**rc = 1, and Hoelder makes
    1 an upper bound as well, so the norm is exactly 1.
    """
    rc = params.r_conj
    expo = rc / params.r
    pairs = {}
    for pos, word in enumerate(itertools.product(range(params.n), repeat=level)):
        a_s = math.prod(params.b[c] for c in word)
        pairs[start_index + pos] = a_s**expo
    return sparse_vec(pairs)


def prop14_dual_norm_closed_form(params: Params, level: int, q: float) -> float:
    """l_q norm of prop14_vector in closed form: (sum b_i**(rc*q/r))**(level/q)."""
    base = sum(bi ** (params.r_conj * q / params.r) for bi in params.b)
    return base ** (level / q)
