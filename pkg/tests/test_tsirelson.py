import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from bdx.errors import NotProperError
from bdx.tsirelson import (
    SparseVec,
    WLeaf,
    WNode,
    branching_functional,
    combine_successive,
    enumerate_wfunctionals,
    eval_functional,
    format_vec,
    from_dense,
    height_check,
    is_proper,
    is_wfunctional,
    parse_vec,
    prop14_dual_norm_closed_form,
    prop14_vector,
    properize,
    sparse_vec,
    ts_norm,
    ts_norm_attaining,
    ts_norm_oracle,
)
from bdx.weights import example_params


# -- strategies -------------------------------------------------------------

small_vec = st.dictionaries(
    st.integers(min_value=1, max_value=40),
    st.floats(min_value=-5.0, max_value=5.0, allow_nan=False, width=32),
    min_size=1,
    max_size=8,
).map(sparse_vec)


def tree_strategy(n, lo=1, hi=30):
    """Random member of W with support inside [lo, hi]."""
    leaf = st.builds(
        WLeaf,
        st.integers(min_value=lo, max_value=hi),
        st.sampled_from([1, -1]),
    )

    def extend(children):
        # sort by index and thin to a strictly successive family
        def assemble(fs):
            fs = sorted(fs, key=lambda f: _bounds(f))
            keep = []
            last = -1
            for f in fs:
                a, b = _bounds(f)
                if a > last:
                    keep.append(f)
                    last = b
            return WNode(tuple(keep[:n])) if keep else None

        return st.lists(children, min_size=1, max_size=n).map(assemble).filter(bool)

    return st.recursive(leaf, extend, max_leaves=12)


def _bounds(f):
    if isinstance(f, WLeaf):
        return f.index, f.index
    return _bounds(f.children[0])[0], _bounds(f.children[-1])[1]


# -- sparse vectors ---------------------------------------------------------


class TestSparseVec:
    def test_normal_form(self):
        x = sparse_vec([(3, 1.0), (1, 2.0), (3, -1.0)])
        assert x.entries == ((1, 2.0),)

    def test_rejects_nonpositive_index(self):
        with pytest.raises(ValueError):
            sparse_vec({0: 1.0})

    def test_restrict_window_is_half_open(self):
        x = from_dense([1.0, 2.0, 3.0, 4.0])
        assert x.restrict(1, 3).entries == ((2, 2.0), (3, 3.0))

    def test_norms(self):
        x = sparse_vec({1: 3.0, 5: -4.0})
        assert x.inf_norm() == 4.0
        assert x.l1_norm() == 7.0
        assert x.lr_norm(2.0) == pytest.approx(5.0, abs=1e-15)

    def test_parse_format_round_trip(self):
        x = sparse_vec({2: -0.5, 7: 1.25})
        assert parse_vec(format_vec(x)) == x

    def test_add_scale(self):
        x = sparse_vec({1: 1.0, 2: 2.0})
        y = sparse_vec({2: -2.0, 3: 1.0})
        assert x.add(y) == sparse_vec({1: 1.0, 3: 1.0})
        assert x.scale(0.0) == sparse_vec({})


# -- norm values ------------------------------------------------------------


class TestNormValues:
    def test_ones_closed_forms_two_branch(self, params2):
        # Norms of all-ones vectors follow the greedy head split:
        #   N(1) = 1, N(m) = b_1 N(m-1) + b_2 for m in 2..5.
        b1, b2 = params2.b
        expected = [1.0]
        for _ in range(4):
            expected.append(b1 * expected[-1] + b2)
        for m, want in enumerate(expected, start=1):
            got = ts_norm(params2, from_dense([1.0] * m))
            assert got == pytest.approx(want, abs=1e-12), m

    def test_singleton(self, params2):
        assert ts_norm(params2, sparse_vec({9: -2.5})) == 2.5

    def test_zero_vector(self, params2):
        assert ts_norm(params2, sparse_vec({})) == 0.0

    def test_pair_value(self, params2):
        b1, b2 = params2.b
        x = from_dense([1.0, 1.0])
        assert ts_norm(params2, x) == pytest.approx(b1 + b2, abs=1e-15)

    def test_norm_ignores_index_gaps(self, params2, rng):
        # The admissibility family only constrains the order of supports,
        # so the norm is invariant under order isomorphisms of the support.
        for _ in range(10):
            m = int(rng.integers(1, 9))
            vals = rng.normal(size=m)
            x = from_dense(vals)
            gaps = np.cumsum(rng.integers(1, 50, size=m))
            y = sparse_vec({int(g): float(v) for g, v in zip(gaps, vals)})
            assert ts_norm(params2, x) == pytest.approx(ts_norm(params2, y), abs=1e-12)


class TestOracleAgreement:
    def test_oracle_matches_dp_two_branch(self, params2, rng):
        for _ in range(60):
            m = int(rng.integers(1, 8))
            x = sparse_vec(
                {int(k): float(v) for k, v in zip(rng.choice(60, m, replace=False) + 1, rng.normal(size=m))}
            )
            if not x.entries:
                continue
            assert ts_norm_oracle(params2, x) == pytest.approx(
                ts_norm(params2, x), abs=1e-9
            )

    def test_oracle_matches_dp_three_branch(self, params3, rng):
        for _ in range(40):
            m = int(rng.integers(1, 8))
            x = sparse_vec({i + 1: float(v) for i, v in enumerate(rng.normal(size=m))})
            if not x.entries:
                continue
            assert ts_norm_oracle(params3, x) == pytest.approx(
                ts_norm(params3, x), abs=1e-9
            )

    def test_oracle_guards_large_support(self, params2):
        with pytest.raises(ValueError):
            ts_norm_oracle(params2, from_dense([1.0] * 9))

    def test_brute_force_closure_matches_both(self, params2, rng):
        # Ground truth at tiny supports: materialize W literally, take the
        # max.  This does not share the interval-partition argument with
        # either evaluator.
        for _ in range(12):
            m = int(rng.integers(1, 5))
            idx = tuple(int(k) for k in np.sort(rng.choice(12, m, replace=False) + 1))
            x = sparse_vec({k: float(v) for k, v in zip(idx, rng.normal(size=m))})
            if not x.entries:
                continue
            brute = max(
                eval_functional(params2, f, x)
                for f in enumerate_wfunctionals(params2, x.indices)
            )
            assert brute == pytest.approx(ts_norm(params2, x), abs=1e-12)
            assert brute == pytest.approx(ts_norm_oracle(params2, x), abs=1e-12)

    def test_closure_census_is_stable(self, params2):
        # Structural regression: the materialized closure over four indices
        # (height capped at the support size) has a fixed cardinality.
        census = sum(1 for _ in enumerate_wfunctionals(params2, (1, 2, 3, 4)))
        assert census == 13720
        # Independent recount by subset size: every functional is counted
        # once under its exact support.
        by_size = {}
        for f in enumerate_wfunctionals(params2, (1, 2, 3, 4)):
            lo, hi = _bounds(f)
            key = len({l.index for l in _leaves(f)})
            by_size[key] = by_size.get(key, 0) + 1
        # 4 singleton supports, C(4,2)=6 pairs, 4 triples, 1 quadruple share
        # counts by symmetry
        assert by_size[1] % 4 == 0
        assert by_size[2] % 6 == 0
        assert by_size[3] % 4 == 0
        assert sum(by_size.values()) == census


def _leaves(f):
    if isinstance(f, WLeaf):
        yield f
    else:
        for c in f.children:
            yield from _leaves(c)


# -- invariants -------------------------------------------------------------


class TestNormInvariants:
    @given(x=small_vec, c=st.floats(min_value=-3.0, max_value=3.0, allow_nan=False))
    @settings(max_examples=50, deadline=None)
    def test_homogeneous(self, x, c):
        p = example_params(2)
        assert ts_norm(p, x.scale(c)) == pytest.approx(
            abs(c) * ts_norm(p, x), rel=1e-12, abs=1e-12
        )

    @given(x=small_vec)
    @settings(max_examples=50, deadline=None)
    def test_sandwich(self, x):
        # sup norm below, l_r above: every f in W has conjugate norm <= 1
        # because the weights have unit conjugate mass and the supports of
        # siblings are disjoint.
        p = example_params(2)
        v = ts_norm(p, x)
        assert v >= x.inf_norm() - 1e-12
        assert v <= x.lr_norm(p.r) + 1e-12
        assert v <= x.l1_norm() + 1e-12

    @given(x=small_vec, signs=st.lists(st.sampled_from([1, -1]), min_size=8, max_size=8))
    @settings(max_examples=40, deadline=None)
    def test_unconditional(self, x, signs):
        p = example_params(2)
        y = SparseVec(
            tuple((k, s * v) for (k, v), s in zip(x.entries, itertools.cycle(signs)))
        )
        assert ts_norm(p, y) == pytest.approx(ts_norm(p, x), rel=1e-12, abs=1e-12)

    @given(x=small_vec, lo=st.integers(0, 20), hi=st.integers(21, 41))
    @settings(max_examples=40, deadline=None)
    def test_restriction_monotone(self, x, lo, hi):
        p = example_params(2)
        assert ts_norm(p, x.restrict(lo, hi)) <= ts_norm(p, x) + 1e-12

    @given(x=small_vec)
    @settings(max_examples=30, deadline=None)
    def test_attaining_functional_is_exact_and_legal(self, x):
        assume(x.entries)
        p = example_params(2)
        val, f = ts_norm_attaining(p, x)
        assert is_wfunctional(p, f)
        assert eval_functional(p, f, x) == pytest.approx(val, rel=1e-12, abs=1e-12)
        assert val == pytest.approx(ts_norm(p, x), abs=1e-15)


# -- functional trees -------------------------------------------------------


class TestFunctionalTrees:
    @given(f=tree_strategy(2), x=small_vec)
    @settings(max_examples=60, deadline=None)
    def test_properize_dominates(self, f, x):
        p = example_params(2)
        g = properize(f)
        assert is_proper(g)
        assert eval_functional(p, g, x.abs()) >= abs(eval_functional(p, f, x)) - 1e-12

    @given(f=tree_strategy(3, hi=24))
    @settings(max_examples=40, deadline=None)
    def test_properize_keeps_membership(self, f):
        p = example_params(3)
        assert is_wfunctional(p, f)
        assert is_wfunctional(p, properize(f))

    def test_height_check_rejects_chains(self):
        chain = WNode((WNode((WLeaf(1, 1),)),))
        with pytest.raises(NotProperError):
            height_check(chain)

    @given(f=tree_strategy(2))
    @settings(max_examples=40, deadline=None)
    def test_height_bound_after_properize(self, f):
        h, bound = height_check(properize(f))
        assert h <= bound

    def test_combine_validates(self, params2):
        with pytest.raises(ValueError):
            combine_successive(params2, [WLeaf(3, 1), WLeaf(2, 1)])
        with pytest.raises(ValueError):
            combine_successive(params2, [WLeaf(1, 1), WLeaf(2, 1), WLeaf(3, 1)])
        node = combine_successive(params2, [WLeaf(1, 1), WLeaf(5, 1)])
        assert eval_functional(params2, node, from_dense([1.0])) == params2.b[0]


# -- named families ----------------------------------------------------------


class TestBranching:
    @pytest.mark.parametrize("n,depth", [(2, 1), (2, 2), (2, 3), (2, 4), (3, 1), (3, 2), (3, 3)])
    def test_branching_rate(self, n, depth):
        p = example_params(n)
        f, ones = branching_functional(p, depth)
        target = sum(p.b) ** depth
        assert is_wfunctional(p, f)
        assert eval_functional(p, f, ones) == pytest.approx(target, rel=1e-12)
        assert ts_norm(p, ones) >= target - 1e-9

    def test_leaf_layout(self, params2):
        f, ones = branching_functional(params2, 3, start_index=10)
        assert ones.indices == tuple(range(10, 18))


class TestProp14Family:
    @pytest.mark.parametrize("n", [2, 3])
    @pytest.mark.parametrize("level", [1, 2, 3, 4])
    def test_unit_norm(self, n, level):
        p = example_params(n)
        x = prop14_vector(p, level)
        assert ts_norm(p, x) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("n", [2, 3])
    @pytest.mark.parametrize("level", [1, 2, 3, 4, 5])
    def test_dual_norm_closed_form_and_decay(self, n, level):
        p = example_params(n)
        x = prop14_vector(p, level)
        q = 2.0 * p.r_conj
        direct = x.lr_norm(q)
        closed = prop14_dual_norm_closed_form(p, level, q)
        assert direct == pytest.approx(closed, abs=1e-12)
        assert closed < 0.93**level

    def test_lr_norm_is_one(self, params2):
        # the vector sits exactly on the l_r sphere
        x = prop14_vector(params2, 3)
        assert x.lr_norm(params2.r) == pytest.approx(1.0, abs=1e-12)
