import itertools
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PRINTED_UMC_ROWS, S222, outcome_major_permutation
from nsbell.correlators import (
    CorrelatorTable,
    averaging_map,
    correlator_keys,
    full_correlator,
    key_from,
    key_rank,
    parity,
    parity_matrix,
    parity_transform,
    probabilities_from_correlators,
    reconstruction_map,
    settingwise_correlators,
    split_key,
    umc,
    umc_coefficient_vector,
    umc_coefficient_vector_scaled,
)
from nsbell.scenario import BehaviorVector, Scenario, ScenarioError, random_local_behavior, uniform_behavior


def umc_oracle(p: BehaviorVector, I, x_I) -> float:
    """Direct loop: average over the other parties' settings of sum_a chi_I(a) p(a|x)."""
    s = p.scenario
    total, count = 0.0, 0
    for x in s.setting_tuples():
        if tuple(x[i - 1] for i in I) != tuple(x_I):
            continue
        count += 1
        for a in s.outcome_tuples():
            total += (-1) ** sum(a[i - 1] for i in I) * p[a, x]
    return total / count


class TestParity:
    def test_values(self):
        assert parity((1, 2), (1, 1)) == 1
        assert parity((1,), (1, 0)) == -1
        assert parity((), (1, 1)) == 1

    def test_matrix_rows(self):
        H = parity_matrix(2)
        np.testing.assert_array_equal(H, [[1, 1, 1, 1], [1, 1, -1, -1], [1, -1, 1, -1], [1, -1, -1, 1]])
        assert not H.flags.writeable

    def test_orthogonality_identity(self):
        for n in range(1, 5):
            s = Scenario(n, 2)
            for a, b in itertools.product(s.outcome_tuples(), repeat=2):
                total = sum(parity(I, a) * parity(I, b) for I in s.subsets())
                assert total == (2 ** n if a == b else 0)


class TestKeys:
    def test_count_and_order(self):
        s = Scenario(2, 2)
        keys = correlator_keys(s)
        assert len(keys) == 9
        assert keys[0] == (-1, -1)
        assert [key_rank(s, k) for k in keys] == list(range(9))

    def test_split_and_build(self):
        key = key_from((1, 3), (2, 0), 3)
        assert key == (2, -1, 0)
        assert split_key(key) == ((1, 3), (2, 0))


class TestUMC:
    def test_printed_coefficient_vectors(self):
        perm = outcome_major_permutation()
        for (I, x_I), row in PRINTED_UMC_ROWS.items():
            c = umc_coefficient_vector(S222, I, x_I).entries
            assert [Fraction(v).limit_denominator(8) for v in c[perm]] == [Fraction(v) for v in row]

    @pytest.mark.parametrize("n,m", [(2, 2), (2, 3), (3, 2)])
    def test_matches_loop_oracle(self, n, m):
        s = Scenario(n, m)
        v = BehaviorVector(s, np.random.default_rng(n + m).uniform(0, 1, s.d))
        table = umc(v)
        for key in correlator_keys(s):
            I, x_I = split_key(key)
            if I:
                assert table[I, x_I] == pytest.approx(umc_oracle(v, I, x_I), abs=1e-14)
                c = umc_coefficient_vector(s, I, x_I)
                assert c.entries @ v.entries == pytest.approx(table[I, x_I], abs=1e-14)

    def test_empty_entry_is_mean_block_sum(self):
        s = Scenario(2, 2)
        v = BehaviorVector(s, np.arange(16, dtype=float))
        assert umc(v)[(), ()] == pytest.approx(np.mean(v.block_sums()))

    def test_scaled_vector_is_integral(self):
        c = umc_coefficient_vector_scaled(Scenario(3, 3), (2,), (1,))
        assert c.dtype == np.int64
        assert set(np.unique(c)) == {-1, 0, 1}

    def test_full_correlator_matches_settingwise(self):
        s = Scenario(3, 2)
        p = random_local_behavior(s, np.random.default_rng(3))
        sw = settingwise_correlators(p)
        for x in s.setting_tuples():
            assert full_correlator(p, x) == pytest.approx(sw[(1, 2, 3), x])

    def test_bad_key(self):
        with pytest.raises(ScenarioError):
            umc(uniform_behavior(S222))[(1,), (2,)]


class TestInverse:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.sampled_from([(2, 2), (2, 3), (3, 2)]))
    def test_round_trip_on_local_behaviours(self, seed, nm):
        s = Scenario(*nm)
        p = random_local_behavior(s, np.random.default_rng(seed))
        np.testing.assert_allclose(probabilities_from_correlators(umc(p)).entries, p.entries, atol=1e-12)

    def test_mapping_input_and_missing_keys(self):
        s = S222
        table = umc(uniform_behavior(s))
        mapping = dict(table.items())
        np.testing.assert_allclose(probabilities_from_correlators(mapping, s).entries, 0.25)
        mapping.pop(((1,), (0,)))
        with pytest.raises(ScenarioError, match="missing"):
            probabilities_from_correlators(mapping, s)

    def test_json_round_trip(self):
        table = umc(random_local_behavior(Scenario(2, 3), np.random.default_rng(0)))
        back = CorrelatorTable.from_json(json.loads(json.dumps(table.to_json())))
        np.testing.assert_array_equal(back.values, table.values)


class TestMaps:
    def test_shapes(self):
        s = Scenario(3, 2)
        assert parity_transform(s).shape == (64, 64)
        assert averaging_map(s).shape == (27, 64)
        assert reconstruction_map(s).shape == (64, 27)

    def test_exact_maps_are_fractions(self):
        T2 = averaging_map(Scenario(2, 3), exact=True)
        assert isinstance(T2[1, 2], Fraction) or T2[1, 2] == 0
        assert sum(T2[0]) == 1

    def test_weighted_rows_are_averages(self):
        s = Scenario(2, 2)
        T2 = averaging_map(s, weights=[1.0, 3.0, 1.0, 1.0])
        assert T2[key_rank(s, (0, -1)), 1] == pytest.approx(0.25)
        assert T2[key_rank(s, (0, -1)), 5] == pytest.approx(0.75)
        with pytest.raises(ScenarioError):
            averaging_map(s, weights=[1.0, 0.0, 1.0, 1.0])
