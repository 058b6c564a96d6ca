"""Stage-by-stage construction of a biorthogonal system with extensions.

The index set Gamma is built in stages: stage 1 holds a single base node,
and stage rho > 1 adds nodes that each carry a recipe for extending any
function defined on the earlier stages.  A node gamma knows

  * its ``rank`` (the stage it joins),
  * an ``age`` a in 1..n and the branch weight b_a it applies,
  * a cut stage ``p``, a sign ``eps`` and a target ``xi`` of lower rank,
  * for age >= 2, a predecessor ``eta`` of age a-1 with rank(eta) <= p.

The extension i_q maps a function x on Gamma_q to all of Gamma by the
recursion

    x(gamma) = x(eta) + b_a * eps * ( x(xi) - (i_p r_p x)(xi) ),

with the eta term absent for age-1 nodes.  r_p restricts to Gamma_p, so the
subtracted term removes what stage p already explains: the node measures the
increment of x across the window (p, rank).  The base node carries no recipe.

Vectors are represented by their coefficients over the biorthogonal basis
d_delta = i_{rank(delta)}(e_delta); on those coefficients all the
finite-dimensional-decomposition projections act diagonally, and coordinates
are recovered with ``extend_coords``.

The extension engine keeps, besides the coordinate row of x itself, one row
per active cut p holding i_p r_p x.  Closure facts that make this work:
restricting i_p r_p x to Gamma_{p'} with p' <= p gives r_{p'} x again, and
re-extending an extended row reproduces it.  Rows are created when their cut
stage completes and dropped after the last node that cites them.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from bdx.errors import StageCapError
from bdx.weights import Params

BASE_KIND = "base"
AGE1_KIND = "age1"
AGEA_KIND = "agea"

# first_cut sentinel for the base node: larger than any stage
NO_CUT = math.inf


@dataclass(frozen=True)
class GammaNode:
    """One member of Gamma.  Fields unused by a kind hold sentinels."""

    id: int
    rank: int
    kind: str
    a: int = 1
    p: int = -1
    eta: int = -1
    eps: int = 0
    xi: int = -1

    def key(self) -> tuple:
        return (self.rank, self.kind, self.a, self.p, self.eta, self.eps, self.xi)


@dataclass(frozen=True)
class FilterConfig:
    """Deterministic trimming of the candidate set at each new stage.

    With every field at its default the build is exhaustive.  Caps select
    prefixes of a fixed candidate ordering, so two builds with equal
    configuration produce identical registries.

    xi_order chooses that ordering for target and predecessor nodes:
    "lex" walks them oldest first, "desc" newest first.  Recency matters
    when chasing norm growth: long chains want to cite fresh nodes.
    """

    max_new_per_stage: int | None = None
    cut_window: int | None = None
    include_zero_cut: bool = True
    eps_positive_only: bool = False
    xi_order: str = "lex"
    max_xi_per_cut: int | None = None
    max_eta_per_a: int | None = None
    max_p_per_eta: int | None = None
    max_xi_per_ext: int | None = None


class GammaRegistry:
    """Append-only store of GammaNodes grouped by stage."""

    def __init__(self, params: Params):
        self.params = params
        self.nodes: list[GammaNode] = []
        self.by_stage: list[list[int]] = [[]]  # stage 0 stays empty
        self.version = 0
        self._keys: dict[tuple, int] = {}
        self._enum_cache: dict[int, tuple[list[int], dict[int, int]]] = {}
        base = GammaNode(id=0, rank=1, kind=BASE_KIND)
        self.nodes.append(base)
        self.by_stage.append([0])
        self._keys[base.key()] = 0

    # -- inspection ---------------------------------------------------------

    @property
    def stage_count(self) -> int:
        return len(self.by_stage) - 1

    def node(self, node_id: int) -> GammaNode:
        return self.nodes[node_id]

    def stage_ids(self, rank: int) -> list[int]:
        return self.by_stage[rank]

    def gamma_count(self, horizon: int) -> int:
        return sum(len(self.by_stage[r]) for r in range(1, horizon + 1))

    def age_of(self, node_id: int) -> int:
        return self.nodes[node_id].a

    def first_cut(self, node_id: int) -> float:
        """Stage below which the node's whole recipe chain is blind.

        Age-1 nodes cite their own cut; older nodes inherit the cut of the
        age-1 root of their predecessor chain.  The base node never cites
        anything, hence the infinite sentinel.
        """
        node = self.nodes[node_id]
        while node.kind == AGEA_KIND:
            node = self.nodes[node.eta]
        if node.kind == BASE_KIND:
            return NO_CUT
        return node.p

    def enumeration(self, horizon: int) -> tuple[list[int], dict[int, int]]:
        """Ids of Gamma_horizon sorted by (rank, id), plus id -> position."""
        if horizon > self.stage_count:
            raise ValueError(f"horizon {horizon} exceeds stage count {self.stage_count}")
        cached = self._enum_cache.get(horizon)
        if cached is not None:
            return cached
        ids: list[int] = []
        for rank in range(1, horizon + 1):
            ids.extend(sorted(self.by_stage[rank]))
        pos = {g: k for k, g in enumerate(ids)}
        self._enum_cache[horizon] = (ids, pos)
        return ids, pos

    # -- growth ---------------------------------------------------------------

    def _check_fields(self, rank: int, kind: str, a: int, p: int, eta: int, eps: int, xi: int):
        n = self.params.n
        if kind == BASE_KIND:
            raise ValueError("only the seed stage holds the base node")
        if not (2 <= rank <= self.stage_count + 1):
            raise ValueError(f"rank {rank} outside 2..{self.stage_count + 1}")
        if eps not in (1, -1):
            raise ValueError(f"eps must be +-1, got {eps}")
        if not (0 <= xi < len(self.nodes)):
            raise ValueError(f"unknown target node {xi}")
        xi_rank = self.nodes[xi].rank
        if not (p < xi_rank <= rank - 1):
            raise ValueError(f"need p < rank(xi) <= rank-1, got p={p}, rank(xi)={xi_rank}, rank={rank}")
        if kind == AGE1_KIND:
            if a != 1 or eta != -1:
                raise ValueError("age-1 nodes carry no predecessor")
            if p < 0:
                raise ValueError(f"cut must be >= 0, got {p}")
        elif kind == AGEA_KIND:
            if not (2 <= a <= n):
                raise ValueError(f"age {a} outside 2..{n}")
            if not (0 <= eta < len(self.nodes)):
                raise ValueError(f"unknown predecessor node {eta}")
            eta_node = self.nodes[eta]
            if eta_node.kind == BASE_KIND:
                raise ValueError("the base node cannot head a chain")
            if eta_node.a != a - 1:
                raise ValueError(f"predecessor age {eta_node.a} != {a - 1}")
            if not (eta_node.rank <= p):
                raise ValueError(f"need rank(eta) <= p, got {eta_node.rank} > {p}")
        else:
            raise ValueError(f"unknown kind {kind!r}")

    def ensure_node(
        self, rank: int, kind: str, *, a: int = 1, p: int, eta: int = -1, eps: int, xi: int
    ) -> int:
        """Return the id of the described node, appending it if absent.

        Appending to an already-completed stage is allowed (constructive
        witnesses need nodes at specific earlier ranks); it bumps the
        registry version, which invalidates cached enumerations, so callers
        must re-extend coordinate vectors built before the append.
        """
        self._check_fields(rank, kind, a, p, eta, eps, xi)
        key = (rank, kind, a, p, eta, eps, xi)
        found = self._keys.get(key)
        if found is not None:
            return found
        node = GammaNode(id=len(self.nodes), rank=rank, kind=kind, a=a, p=p, eta=eta, eps=eps, xi=xi)
        self.nodes.append(node)
        if rank == self.stage_count + 1:
            self.by_stage.append([])
        self.by_stage[rank].append(node.id)
        self._keys[key] = node.id
        self.version += 1
        self._enum_cache.clear()
        return node.id

    def _ordered(self, ids: Iterable[int], order: str) -> list[int]:
        ids = sorted(ids, key=lambda g: (self.nodes[g].rank, g))
        return ids[::-1] if order == "desc" else ids

    def _candidates(self, filters: FilterConfig) -> Iterator[tuple]:
        """Yield node field tuples for the next stage in deterministic order."""
        rho = self.stage_count + 1
        n = self.params.n
        epss = (1,) if filters.eps_positive_only else (1, -1)
        ranked = [
            [gid for r in range(1, upto + 1) for gid in sorted(self.by_stage[r])]
            for upto in range(0, rho)
        ]

        # age-1 nodes: recent cuts first
        if filters.cut_window is None:
            ps = list(range(rho - 2, -1, -1))
        else:
            lo = max(0, (rho - 1) - filters.cut_window)
            ps = list(range(rho - 2, lo - 1, -1))
            if filters.include_zero_cut and 0 not in ps:
                ps.append(0)
        for p in ps:
            xis_all = [g for g in ranked[rho - 1] if self.nodes[g].rank > p]
            xis = self._ordered(xis_all, filters.xi_order)
            if filters.max_xi_per_cut is not None:
                xis = xis[: filters.max_xi_per_cut]
            for eps in epss:
                for xi in xis:
                    yield (rho, AGE1_KIND, 1, p, -1, eps, xi)

        # chain extensions
        for a in range(2, n + 1):
            etas_all = [
                g
                for g in ranked[rho - 1]
                if self.nodes[g].kind != BASE_KIND
                and self.nodes[g].a == a - 1
                and self.nodes[g].rank <= rho - 2
            ]
            etas = self._ordered(etas_all, filters.xi_order)
            if filters.max_eta_per_a is not None:
                etas = etas[: filters.max_eta_per_a]
            for eta in etas:
                pps = list(range(rho - 2, self.nodes[eta].rank - 1, -1))
                if filters.max_p_per_eta is not None:
                    pps = pps[: filters.max_p_per_eta]
                for p in pps:
                    xis_all = [g for g in ranked[rho - 1] if self.nodes[g].rank > p]
                    xis = self._ordered(xis_all, filters.xi_order)
                    if filters.max_xi_per_ext is not None:
                        xis = xis[: filters.max_xi_per_ext]
                    for xi in xis:
                        for eps in epss:
                            yield (rho, AGEA_KIND, a, p, eta, eps, xi)

    def add_stage(self, filters: FilterConfig | None = None, max_total_nodes: int | None = None) -> int:
        """Materialize the next stage; returns how many nodes were added."""
        filters = filters or FilterConfig()
        batch = list(self._candidates(filters))
        if filters.max_new_per_stage is not None:
            batch = batch[: filters.max_new_per_stage]
        if max_total_nodes is not None and len(self.nodes) + len(batch) > max_total_nodes:
            raise StageCapError(
                f"stage {self.stage_count + 1} would grow the registry to "
                f"{len(self.nodes) + len(batch)} nodes (cap {max_total_nodes})"
            )
        self.by_stage.append([])
        for rank, kind, a, p, eta, eps, xi in batch:
            node = GammaNode(id=len(self.nodes), rank=rank, kind=kind, a=a, p=p, eta=eta, eps=eps, xi=xi)
            self.nodes.append(node)
            self.by_stage[rank].append(node.id)
            self._keys[node.key()] = node.id
        self.version += 1
        self._enum_cache.clear()
        return len(batch)


def build_registry(
    params: Params,
    stages: int,
    filters: FilterConfig | None = None,
    max_total_nodes: int | None = None,
) -> GammaRegistry:
    reg = GammaRegistry(params)
    for _ in range(2, stages + 1):
        reg.add_stage(filters, max_total_nodes)
    return reg


def validate_registry(reg: GammaRegistry) -> list[str]:
    """Structural audit; returns human-readable violations (empty = sound)."""
    out = []
    seen = set()
    for node in reg.nodes:
        if node.key() in seen:
            out.append(f"node {node.id}: duplicate recipe")
        seen.add(node.key())
        if node.kind == BASE_KIND:
            if node.id != 0 or node.rank != 1:
                out.append(f"node {node.id}: stray base node")
            continue
        try:
            reg._check_fields(node.rank, node.kind, node.a, node.p, node.eta, node.eps, node.xi)
        except ValueError as exc:
            out.append(f"node {node.id}: {exc}")
        if node.id not in reg.by_stage[node.rank]:
            out.append(f"node {node.id}: missing from its stage bucket")
    return out


# ---------------------------------------------------------------------------
# Extension engine
# ---------------------------------------------------------------------------


def _cut_lifetimes(reg: GammaRegistry, horizon: int, cut_ceiling: float) -> dict[int, int]:
    """last rank citing each cut p with 1 <= p < cut_ceiling."""
    last: dict[int, int] = {}
    for rank in range(2, horizon + 1):
        for gid in reg.by_stage[rank]:
            p = reg.nodes[gid].p
            if 1 <= p < cut_ceiling:
                last[p] = rank
    return last


def extend_coords(reg: GammaRegistry, dcoeffs: dict[int, float], horizon: int) -> np.ndarray:
    """Coordinates over Gamma_horizon of x = sum dcoeffs[delta] * d_delta.

    Rank by rank, a node's coordinate is its own basis coefficient plus the
    extension increment computed from lower stages.  Cut rows i_p r_p x are
    maintained only while some remaining node cites p; a cut at or above the
    highest coefficient rank would reproduce x itself and is aliased away.
    """
    ids, pos = reg.enumeration(horizon)
    total = len(ids)
    live = {g: c for g, c in dcoeffs.items() if c != 0.0}
    maxd = 0
    for g in live:
        r = reg.nodes[g].rank
        if r > horizon:
            raise ValueError(f"coefficient at node {g} (rank {r}) exceeds horizon {horizon}")
        maxd = max(maxd, r)
    x = np.zeros(total)
    if not live:
        return x
    lifetimes = _cut_lifetimes(reg, horizon, maxd)
    rows: dict[int, np.ndarray] = {}
    b = reg.params.b
    nodes = reg.nodes
    for rank in range(1, horizon + 1):
        c = rank - 1
        if c in lifetimes and c >= 1:
            row = np.zeros(total)
            k = reg.gamma_count(c)
            row[:k] = x[:k]
            rows[c] = row
        for gid in sorted(reg.by_stage[rank]):
            node = nodes[gid]
            j = pos[gid]
            if node.kind == BASE_KIND:
                x[j] = live.get(gid, 0.0)
                continue
            w = b[node.a - 1] * node.eps
            jxi = pos[node.xi]
            jeta = pos[node.eta] if node.kind == AGEA_KIND else -1
            p = node.p
            if p == 0:
                sub_x = 0.0
            elif p >= maxd:
                sub_x = x[jxi]
            else:
                sub_x = rows[p][jxi]
            val = w * (x[jxi] - sub_x)
            if jeta >= 0:
                val += x[jeta]
            x[j] = val + live.get(gid, 0.0)
            for cut, row in rows.items():
                if p >= cut:
                    val = row[jeta] if jeta >= 0 else 0.0
                else:
                    sub = 0.0 if p == 0 else rows[p][jxi]
                    val = w * (row[jxi] - sub)
                    if jeta >= 0:
                        val += row[jeta]
                row[j] = val
        for cut in [c for c, last in lifetimes.items() if last == rank]:
            rows.pop(cut, None)
    return x


def fdd_coefficients(reg: GammaRegistry, coords: np.ndarray, horizon: int) -> np.ndarray:
    """Invert extend_coords: basis coefficients of arbitrary coordinates.

    The coefficient at a node is the coordinate minus the value the
    extension recipe predicts from the stages below; the base node predicts
    nothing.  One pass maintains the same cut rows as extend_coords, built
    from the given coordinates.
    """
    ids, pos = reg.enumeration(horizon)
    if len(coords) != len(ids):
        raise ValueError(f"expected {len(ids)} coordinates, got {len(coords)}")
    out = np.zeros(len(ids))
    lifetimes = _cut_lifetimes(reg, horizon, math.inf)
    rows: dict[int, np.ndarray] = {}
    b = reg.params.b
    nodes = reg.nodes
    for rank in range(1, horizon + 1):
        c = rank - 1
        if c in lifetimes and c >= 1:
            row = np.zeros(len(ids))
            k = reg.gamma_count(c)
            row[:k] = coords[:k]
            rows[c] = row
        for gid in sorted(reg.by_stage[rank]):
            node = nodes[gid]
            j = pos[gid]
            if node.kind == BASE_KIND:
                out[j] = coords[j]
                continue
            w = b[node.a - 1] * node.eps
            jxi = pos[node.xi]
            jeta = pos[node.eta] if node.kind == AGEA_KIND else -1
            p = node.p
            sub = 0.0 if p == 0 else rows[p][jxi]
            pred = w * (coords[jxi] - sub)
            if jeta >= 0:
                pred += coords[jeta]
            out[j] = coords[j] - pred
            for cut, row in rows.items():
                if p >= cut:
                    val = row[jeta] if jeta >= 0 else 0.0
                else:
                    subr = 0.0 if p == 0 else rows[p][jxi]
                    val = w * (row[jxi] - subr)
                    if jeta >= 0:
                        val += row[jeta]
                row[j] = val
        for cut in [cc for cc, last in lifetimes.items() if last == rank]:
            rows.pop(cut, None)
    return out


# ---------------------------------------------------------------------------
# Vectors, functionals, projections
# ---------------------------------------------------------------------------


def d_vector(reg: GammaRegistry, node_id: int) -> dict[int, float]:
    return {node_id: 1.0}


def d_star(dcoeffs: dict[int, float], node_id: int) -> float:
    """Coefficient functional of the biorthogonal basis."""
    return dcoeffs.get(node_id, 0.0)


def e_star(reg: GammaRegistry, gamma_id: int, dcoeffs: dict[int, float]) -> float:
    """Coordinate functional: the gamma coordinate of the extended vector."""
    horizon = max(
        reg.nodes[gamma_id].rank,
        max((reg.nodes[g].rank for g, c in dcoeffs.items() if c != 0.0), default=1),
    )
    coords = extend_coords(reg, dcoeffs, horizon)
    _, pos = reg.enumeration(horizon)
    return float(coords[pos[gamma_id]])


def fdd_project(dcoeffs: dict[int, float], reg: GammaRegistry, lo: int, hi: int) -> dict[int, float]:
    """P_(lo, hi]: keep basis coefficients with lo < rank <= hi."""
    return {g: c for g, c in dcoeffs.items() if c != 0.0 and lo < reg.nodes[g].rank <= hi}


def fdd_support(reg: GammaRegistry, dcoeffs: dict[int, float]) -> tuple[int, int]:
    """(min, max) rank carrying a nonzero coefficient; (0, 0) if none."""
    ranks = [reg.nodes[g].rank for g, c in dcoeffs.items() if c != 0.0]
    if not ranks:
        return (0, 0)
    return (min(ranks), max(ranks))


def bd_sup_norm(reg: GammaRegistry, dcoeffs: dict[int, float], horizon: int) -> float:
    """sup-norm of the coordinates materialized through the horizon stage.

    This is a lower approximation of the true norm; picking the horizon a
    few stages past the last coefficient is standard here because the
    extension operators are uniformly bounded.
    """
    coords = extend_coords(reg, dcoeffs, horizon)
    return float(np.max(np.abs(coords))) if len(coords) else 0.0


def argmax_coordinate(
    reg: GammaRegistry, dcoeffs: dict[int, float], lo: int, hi: int
) -> tuple[int, float]:
    """Largest |coordinate| over nodes with lo < rank <= hi."""
    coords = extend_coords(reg, dcoeffs, hi)
    ids, _ = reg.enumeration(hi)
    start = reg.gamma_count(lo)
    if start >= len(ids):
        raise ValueError(f"empty window ({lo}, {hi}]")
    k = start + int(np.argmax(np.abs(coords[start:])))
    return ids[k], float(coords[k])


# ---------------------------------------------------------------------------
# Operator norms of the extensions
# ---------------------------------------------------------------------------


def _extension_rows(reg: GammaRegistry, q: int, m: int):
    """Functional rows of e*_gamma ∘ i_q over Gamma_q, for all gamma in Gamma_m.

    row(gamma, cut) unwinds the recipe with every citation of a stage at or
    above the cut collapsing (restricting and re-extending changes nothing
    there).  Returns {gamma_id: row over Gamma_q} as dense arrays.
    """
    b = reg.params.b
    nodes = reg.nodes
    memo: dict[tuple[int, int], np.ndarray] = {}

    def row(gid: int, cut: int) -> np.ndarray:
        key = (gid, cut)
        got = memo.get(key)
        if got is not None:
            return got
        size = reg.gamma_count(cut)
        node = nodes[gid]
        if node.rank <= cut:
            _, pos_cut = reg.enumeration(cut)
            r = np.zeros(size)
            r[pos_cut[gid]] = 1.0
        elif node.kind == BASE_KIND:
            # base carries no recipe; i_0 is the zero map
            r = np.zeros(size)
        else:
            p = node.p
            if p >= cut:
                # restrict-and-extend changes nothing at or above the cut
                r = np.zeros(size)
            else:
                r = b[node.a - 1] * node.eps * row(node.xi, cut)
                if p > 0:
                    sub = np.zeros(size)
                    inner = row(node.xi, p)
                    sub[: len(inner)] = inner
                    r = r - b[node.a - 1] * node.eps * sub
            if node.kind == AGEA_KIND:
                r = r + row(node.eta, cut)
        memo[key] = r
        return r

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 16 * (m + 10)))
    try:
        ids_m, _ = reg.enumeration(m)
        return {gid: row(gid, q) for gid in ids_m}
    finally:
        sys.setrecursionlimit(old)


def op_norm_i(reg: GammaRegistry, q: int, m: int) -> float:
    """Norm of the stage-q extension measured through stage m.

    Equals the max l1 mass of the functional rows; the uniform bound this
    construction is designed around is C = 1 / (1 - 2 b_2).
    """
    rows = _extension_rows(reg, q, m)
    return max(float(np.sum(np.abs(r))) for r in rows.values())


def op_norm_window(reg: GammaRegistry, p: int, q: int, m: int) -> float:
    """Norm of P_(p,q] = i_q r_q - i_p r_p on stage-q vectors, through stage m."""
    rows_q = _extension_rows(reg, q, m)
    rows_p = _extension_rows(reg, p, m)
    worst = 0.0
    size = reg.gamma_count(q)
    for gid, rq in rows_q.items():
        padded = np.zeros(size)
        rp = rows_p[gid]
        padded[: len(rp)] = rp
        worst = max(worst, float(np.sum(np.abs(rq - padded))))
    return worst


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def dump_registry(reg: GammaRegistry) -> str:
    """One line per node: id rank kind a p eta eps xi."""
    lines = [f"# stages {reg.stage_count}"]
    for node in reg.nodes:
        lines.append(
            f"{node.id} {node.rank} {node.kind} {node.a} {node.p} {node.eta} {node.eps} {node.xi}"
        )
    return "\n".join(lines) + "\n"


def load_registry(params: Params, text: str) -> GammaRegistry:
    reg = GammaRegistry(params)
    stage_hint = 0
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "stages":
                stage_hint = int(parts[1])
            continue
        fid, frank, fkind, fa, fp, feta, feps, fxi = line.split()
        if fkind == BASE_KIND:
            continue
        while reg.stage_count < int(frank) - 1:
            reg.by_stage.append([])
        got = reg.ensure_node(
            int(frank), fkind, a=int(fa), p=int(fp), eta=int(feta), eps=int(feps), xi=int(fxi)
        )
        if got != int(fid):
            raise ValueError(f"id mismatch while loading: expected {fid}, assigned {got}")
    while reg.stage_count < stage_hint:
        reg.by_stage.append([])
    reg.version += 1
    reg._enum_cache.clear()
    return reg
