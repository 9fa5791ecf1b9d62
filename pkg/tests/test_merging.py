import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lota import (
    DigestMismatchError,
    ParameterMap,
    TaskVector,
    apply_adapter,
    digest,
    encode,
    merge_grid_search,
    merge_lota,
    task_arithmetic_merge,
    ties_merge,
)

F32 = np.float32


def base_map(values):
    return ParameterMap({"w": np.asarray(values, dtype=np.float32)})


def tv_for(base, values):
    return TaskVector(
        entries=ParameterMap({"w": np.asarray(values, dtype=np.float32)}),
        base_digest=digest(base),
    )


# -- independent brute-force reference (scalar float32 emulation) -----------


def oracle_trim_kept(values, k):
    order = sorted(range(len(values)), key=lambda i: (-abs(values[i]), i))
    return set(order[:k])


def oracle_ties(base_values, per_task_values, fractions, lam=1.0):
    n = len(base_values)
    kept_sets = [
        oracle_trim_kept(vals, int(math.floor(f * n + 0.5)))
        for vals, f in zip(per_task_values, fractions)
    ]
    out = []
    for i in range(n):
        contribs = sorted(
            F32(vals[i])
            for t, vals in enumerate(per_task_values)
            if i in kept_sets[t]
        )
        total = F32(0.0)
        for v in contribs:
            total = F32(total + v)
        if total > 0:
            matching = [v for v in contribs if v > 0]
        elif total < 0:
            matching = [v for v in contribs if v < 0]
        else:
            matching = []
        if matching:
            acc = F32(0.0)
            for v in matching:
                acc = F32(acc + v)
            merged = F32(acc / F32(len(matching)))
        else:
            merged = F32(0.0)
        out.append(F32(F32(base_values[i]) + F32(F32(lam) * merged)))
    return np.array(out, dtype=np.float32)


class TestTaskArithmetic:
    def test_single_vector_weight_one(self):
        base = base_map([1.0, -2.0, 0.5])
        tv = tv_for(base, [0.25, 0.0, -0.5])
        merged = task_arithmetic_merge(base, [tv], [1.0], lam=1.0)
        applied = apply_adapter(base, encode(tv))
        assert merged == applied

    def test_opposite_vectors_cancel(self):
        base = base_map([1.0, 2.0])
        tv = tv_for(base, [0.5, -0.25])
        neg = tv_for(base, [-0.5, 0.25])
        merged = task_arithmetic_merge(base, [tv, neg], [1.0, 1.0])
        assert merged == base

    def test_disjoint_supports(self):
        base = base_map([0.0, 0.0, 0.0, 0.0])
        a = tv_for(base, [1.0, 2.0, 0.0, 0.0])
        b = tv_for(base, [0.0, 0.0, 3.0, 4.0])
        merged = task_arithmetic_merge(base, [a, b], [1.0, 1.0])
        np.testing.assert_array_equal(merged["w"], [1.0, 2.0, 3.0, 4.0])

    def test_digest_mismatch_rejected(self):
        base, other = base_map([1.0]), base_map([2.0])
        tv = tv_for(other, [0.5])
        with pytest.raises(DigestMismatchError):
            task_arithmetic_merge(base, [tv], [1.0])


class TestTiesMerge:
    def test_single_task_full_fraction_is_task_arithmetic(self):
        base = base_map([1.0, -1.0, 0.25, 0.0])
        tv = tv_for(base, [0.5, 0.0, -0.125, 2.0])
        ties = ties_merge(base, [tv], [1.0], lam=1.0)
        plain = task_arithmetic_merge(base, [tv], [1.0], lam=1.0)
        assert ties == plain

    def test_sign_election_example(self):
        # kept values (+0.4, -0.1): elected +, mean over {0.4}
        base = base_map([0.0])
        a, b = tv_for(base, [0.4]), tv_for(base, [-0.1])
        merged = ties_merge(base, [a, b], [1.0, 1.0])
        assert merged["w"][0] == F32(0.4)

    def test_exact_sign_tie_resolves_to_zero(self):
        base = base_map([1.0])
        a, b = tv_for(base, [0.3]), tv_for(base, [-0.3])
        merged = ties_merge(base, [a, b], [1.0, 1.0])
        assert merged["w"][0] == F32(1.0)

    def test_support_subset_of_trimmed_union(self):
        rng = np.random.default_rng(0)
        base = base_map(np.zeros(40))
        tvs = [tv_for(base, rng.standard_normal(40)) for _ in range(3)]
        fractions = [0.2, 0.3, 0.1]
        merged = ties_merge(base, tvs, fractions)
        n = 40
        union = np.zeros(n, dtype=bool)
        for tv, f in zip(tvs, fractions):
            k = int(math.floor(f * n + 0.5))
            kept = oracle_trim_kept(list(tv.entries["w"]), k)
            union[list(kept)] = True
        assert not (merged["w"][~union] != 0.0).any()

    @pytest.mark.parametrize("seed", range(8))
    def test_random_instances_match_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = 5
        base_vals = rng.standard_normal(n).astype(np.float32)
        base = base_map(base_vals)
        vals = [rng.standard_normal(n).astype(np.float32) for _ in range(2)]
        tvs = [tv_for(base, v) for v in vals]
        fractions = [float(rng.choice([0.2, 0.4, 0.6, 1.0])) for _ in range(2)]
        lam = float(rng.choice([0.5, 1.0]))
        merged = ties_merge(base, tvs, fractions, lam=lam)
        expected = oracle_ties(base_vals, vals, fractions, lam)
        np.testing.assert_array_equal(merged["w"], expected)

    def test_exhaustive_small_grid(self):
        # every 2-task instance over n=2 coordinates, 5-value grid
        grid = [-0.2, -0.1, 0.0, 0.1, 0.2]
        base = base_map([0.05, -0.05])
        count = 0
        for a_vals in itertools.product(grid, repeat=2):
            for b_vals in itertools.product(grid, repeat=2):
                tvs = [tv_for(base, a_vals), tv_for(base, b_vals)]
                for frac in ((0.5, 0.5), (1.0, 0.5), (1.0, 1.0)):
                    merged = ties_merge(base, tvs, frac)
                    expected = oracle_ties([0.05, -0.05], [a_vals, b_vals], frac)
                    np.testing.assert_array_equal(merged["w"], expected)
                    count += 1
        assert count == 625 * 3

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(1, 6),
        st.integers(0, 2**32 - 1),
        st.integers(1, 3),
    )
    def test_oracle_property(self, n, seed, n_tasks):
        rng = np.random.default_rng(seed)
        base_vals = rng.standard_normal(n).astype(np.float32)
        base = base_map(base_vals)
        vals = [
            np.round(rng.standard_normal(n), 1).astype(np.float32)
            for _ in range(n_tasks)
        ]
        tvs = [tv_for(base, v) for v in vals]
        fractions = [float(rng.choice([0.25, 0.5, 0.75, 1.0])) for _ in range(n_tasks)]
        merged = ties_merge(base, tvs, fractions)
        expected = oracle_ties(base_vals, vals, fractions)
        np.testing.assert_array_equal(merged["w"], expected)


class TestMergeLota:
    def sparse_tv(self, base, positions, values):
        flat = np.zeros(base.total_elements, dtype=np.float32)
        flat[positions] = values
        return tv_for(base, flat)

    def test_disjoint_adapters_apply_both(self):
        base = base_map(np.zeros(10))
        a = encode(self.sparse_tv(base, [0, 3], [1.0, -2.0]))
        b = encode(self.sparse_tv(base, [5, 7], [0.5, 0.25]))
        merged = merge_lota(base, [a, b])
        both = apply_adapter(apply_adapter(base, a), b, check_digest=False)
        assert merged == both

    def test_same_adapter_twice_is_identity(self):
        base = base_map(np.zeros(8))
        adapter = encode(self.sparse_tv(base, [1, 4], [0.5, -0.75]))
        merged = merge_lota(base, [adapter, adapter])
        single = apply_adapter(base, adapter)
        assert merged == single

    def test_opposite_sign_overlap_resolves_to_zero(self):
        base = base_map(np.zeros(4))
        a = encode(self.sparse_tv(base, [2], [0.3]))
        b = encode(self.sparse_tv(base, [2], [-0.3]))
        merged = merge_lota(base, [a, b])
        assert merged["w"][2] == 0.0

    def test_permutation_invariant_bitwise(self):
        rng = np.random.default_rng(5)
        base = base_map(rng.standard_normal(30))
        adapters = []
        for i in range(3):
            flat = np.where(
                rng.random(30) < 0.3, rng.standard_normal(30), 0.0
            ).astype(np.float32)
            adapters.append(encode(tv_for(base, flat)))
        reference = merge_lota(base, adapters)
        for perm in itertools.permutations(range(3)):
            merged = merge_lota(base, [adapters[i] for i in perm])
            assert merged == reference


class TestGridSearch:
    def test_nine_cells_for_two_tasks(self):
        base = base_map(np.zeros(6))
        rng = np.random.default_rng(1)
        tvs = [tv_for(base, rng.standard_normal(6)) for _ in range(2)]
        result = merge_grid_search(
            base, tvs, [0.1, 0.2, 0.3], eval_fn=lambda pm: float(pm["w"].sum())
        )
        assert len(result.table) == 9

    def test_constant_objective_returns_first_cell(self):
        base = base_map(np.zeros(4))
        rng = np.random.default_rng(2)
        tvs = [tv_for(base, rng.standard_normal(4)) for _ in range(2)]
        result = merge_grid_search(base, tvs, [0.5, 1.0], eval_fn=lambda pm: 1.0)
        fractions = [e.trim_keep_fraction for e in result.best_spec.entries]
        assert fractions == [0.5, 0.5]

    def test_single_cell_grid(self):
        base = base_map(np.zeros(4))
        tvs = [tv_for(base, [1.0, 0.0, 0.0, 0.0])]
        result = merge_grid_search(base, tvs, [1.0], eval_fn=lambda pm: 0.0)
        assert len(result.table) == 1
        assert result.best_spec.entries[0].trim_keep_fraction == 1.0

    def test_fixed_fractions_shrink_grid(self):
        base = base_map(np.zeros(4))
        rng = np.random.default_rng(3)
        tvs = [tv_for(base, rng.standard_normal(4)) for _ in range(2)]
        result = merge_grid_search(
            base,
            tvs,
            [0.1, 0.2, 0.3],
            eval_fn=lambda pm: float(pm["w"].max()),
            fixed_fractions={0: 1.0},
        )
        assert len(result.table) == 3
        assert all(row["fractions"][0] == 1.0 for row in result.table)
