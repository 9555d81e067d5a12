"""Observation functions: worked example, invariances, batch consistency."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurols.observations import (ObservationKind, build_observation, obs_o1,
                                  obs_o2, obs_o3, obs_o4, signed_rank_values,
                                  zscores)

EXAMPLE_DELTAS = np.array([1.0, 4.0, -2.0, -5.0, 0.0, -7.0])
EXAMPLE_O3 = np.array([1 / 2, 1.0, -1 / 3, -2 / 3, 0.0, -1.0])
# z-scores of the worked deltas: mu = -1.5, population sigma = sqrt(81.5/6)
EXAMPLE_Z = np.array([0.67832345, 1.49231158, -0.13566469,
                      -0.94965283, 0.40699407, -1.49231158])

unique_deltas = st.lists(
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, width=64),
    min_size=2, max_size=40, unique=True)


class TestO1O2:
    def test_o1_is_delta_column(self):
        out = obs_o1(EXAMPLE_DELTAS)
        assert out.shape == (6, 1)
        assert np.array_equal(out[:, 0], EXAMPLE_DELTAS)

    def test_o1_zero(self):
        assert np.all(obs_o1(np.zeros(4)) == 0)

    def test_o2_structure(self):
        out = obs_o2(0.5, np.array([0.4, 0.6]))
        assert np.array_equal(out, [[0.5, 0.4], [0.5, 0.6]])

    def test_o2_columns_difference_reproduces_o1(self):
        rng = np.random.default_rng(0)
        deltas = rng.normal(size=12)
        f_x = 0.37
        out = build_observation(ObservationKind.O2, deltas, f_x, 0)
        assert np.allclose(out[:, 0] - out[:, 1], obs_o1(deltas)[:, 0])

    def test_o2_constant_neighbors(self):
        out = obs_o2(1.0, np.full(5, 0.25))
        assert np.all(out[:, 1] == 0.25)

    def test_o1_flip_on_separable_instance_negates_one_row(self):
        # with k=0 a flip touches only its own delta entry
        from neurols.instances import generate_nk
        from neurols.search import compute_deltas
        inst = generate_nk(8, 0, 3)
        x = np.random.default_rng(0).integers(0, 2, 8, dtype=np.uint8)
        before = obs_o1(compute_deltas(inst, x))
        y = x.copy()
        y[4] ^= 1
        after = obs_o1(compute_deltas(inst, y))
        assert after[4, 0] == pytest.approx(-before[4, 0], abs=1e-15)
        mask = np.arange(8) != 4
        assert np.allclose(after[mask], before[mask], atol=1e-15)


class TestO3:
    def test_worked_example(self):
        out = obs_o3(EXAMPLE_DELTAS, tiebreak_seed=42)
        assert np.allclose(out[:, 0], EXAMPLE_O3, atol=1e-15)

    def test_scale_invariance(self):
        for lam in [1e-6, 0.5, 3.0, 1e9]:
            a = obs_o3(EXAMPLE_DELTAS, 7)
            b = obs_o3(EXAMPLE_DELTAS * lam, 7)
            assert np.array_equal(a, b)

    def test_zero_deltas_map_to_zero(self):
        assert np.all(obs_o3(np.zeros(8), 1) == 0)

    def test_all_equal_deltas_random_permutation(self):
        n = 10
        out = obs_o3(np.full(n, 2.5), tiebreak_seed=99)[:, 0]
        assert sorted(out.tolist()) == pytest.approx([i / n for i in range(1, n + 1)])
        assert np.array_equal(out, obs_o3(np.full(n, 2.5), tiebreak_seed=99)[:, 0])
        other = obs_o3(np.full(n, 2.5), tiebreak_seed=100)[:, 0]
        assert not np.array_equal(out, other)

    def test_improving_and_deteriorating_multisets(self):
        rng = np.random.default_rng(4)
        deltas = rng.normal(size=21)
        out = obs_o3(deltas, 0)[:, 0]
        pos = sorted(out[deltas > 0].tolist())
        npos = int((deltas > 0).sum())
        assert pos == pytest.approx([i / npos for i in range(1, npos + 1)])
        neg = sorted(out[deltas < 0].tolist())
        nneg = int((deltas < 0).sum())
        assert neg == pytest.approx([-i / nneg for i in range(nneg, 0, -1)])

    def test_values_bounded(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            out = obs_o3(rng.normal(size=15), 3)
            assert np.all(out >= -1) and np.all(out <= 1)

    @given(unique_deltas)
    @settings(max_examples=60, deadline=None)
    def test_permutation_equivariance(self, vals):
        deltas = np.array(vals)
        n = len(deltas)
        perm = np.random.default_rng(len(vals)).permutation(n)
        a = obs_o3(deltas, 11)[:, 0]
        b = obs_o3(deltas[perm], 11)[:, 0]
        assert np.array_equal(a[perm], b)


class TestO4:
    def test_worked_example_zscores(self):
        out = obs_o4(EXAMPLE_DELTAS, 42)
        assert np.allclose(out[:, 0], EXAMPLE_O3, atol=1e-15)
        assert np.allclose(out[:, 1], EXAMPLE_Z, atol=1e-8)

    def test_z_column_standardized(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            z = obs_o4(rng.normal(size=33), 1)[:, 1]
            assert abs(z.mean()) < 1e-9
            assert abs(z.std() - 1.0) < 1e-9

    def test_scale_invariance_both_columns(self):
        deltas = np.random.default_rng(2).normal(size=17)
        for lam in [0.001, 7.0, 1e5]:
            assert np.allclose(obs_o4(deltas, 5), obs_o4(deltas * lam, 5), atol=1e-12)

    def test_sigma_zero_gives_zero_z(self):
        out = obs_o4(np.full(6, 3.0), 1)
        assert np.all(out[:, 1] == 0)

    def test_sample_stddev_switch(self):
        deltas = np.random.default_rng(9).normal(size=10)
        pop = obs_o4(deltas, 1)[:, 1]
        sample = obs_o4(deltas, 1, ddof=1)[:, 1]
        # sample sigma is larger by sqrt(n/(n-1)), shrinking the z values
        assert np.allclose(sample, pop * np.sqrt(9 / 10), atol=1e-12)

    def test_fitness_invariance(self):
        # rank and z-score views ignore the objective's offset entirely
        deltas = np.random.default_rng(3).normal(size=9)
        a = build_observation(ObservationKind.O4, deltas, 0.0, 13)
        b = build_observation(ObservationKind.O4, deltas, 123.45, 13)
        assert np.array_equal(a, b)


class TestBatching:
    def test_batch_rows_match_single(self):
        rng = np.random.default_rng(6)
        deltas = rng.normal(size=(9, 25))
        batch = signed_rank_values(deltas, 77)
        for i in range(9):
            single = signed_rank_values(deltas[i], 77)
            assert np.array_equal(batch[i], single)

    def test_zscores_batch(self):
        rng = np.random.default_rng(7)
        deltas = rng.normal(size=(5, 11))
        batch = zscores(deltas)
        for i in range(5):
            assert np.allclose(batch[i], zscores(deltas[i]), atol=1e-12)

    def test_input_dims(self):
        assert ObservationKind.O1.input_dim == 1
        assert ObservationKind.O2.input_dim == 2
        assert ObservationKind.O3.input_dim == 1
        assert ObservationKind.O4.input_dim == 2
