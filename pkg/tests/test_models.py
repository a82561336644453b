"""Model evaluation, automaton conversions, Hankel structure and gradients."""

import itertools

import numpy as np
import pytest

from specrnn.data import arithmetic_model
from specrnn.models import (
    Linear2RNN,
    VvWFA,
    change_of_basis,
    hankel_tt,
    mse_gradients,
    one_hot,
    random_rnn,
    rnn_from_wfa,
    wfa_from_rnn,
    zero_rnn,
)
from specrnn.tensor_ops import mode_vector_product


def random_wfa(rng, n, d, p, scale=0.5):
    return VvWFA(
        alpha=scale * rng.standard_normal(n),
        transitions=scale * rng.standard_normal((d, n, n)),
        Omega=scale * rng.standard_normal((p, n)),
    )


class TestEvaluation:
    def test_empty_sequence(self):
        m = random_rnn(3, 2, 2, seed=0)
        np.testing.assert_allclose(m.evaluate([]), m.Omega @ m.h0)

    def test_arithmetic_example(self):
        # running-difference model with bias channel: (2-1) + (5-3) = 3
        m = arithmetic_model()
        out = m.evaluate([np.array([1.0, 2.0, 1.0]), np.array([3.0, 5.0, 1.0])])
        np.testing.assert_allclose(out, [3.0], atol=1e-12)

    def test_one_hot_inputs_match_wfa(self):
        m = random_rnn(3, 3, 2, seed=1)
        wfa = wfa_from_rnn(m)
        word = [2, 0, 1, 2]
        np.testing.assert_allclose(
            m.evaluate([one_hot(s, 3) for s in word]), wfa.evaluate(word), atol=1e-12
        )

    def test_batch_matches_sequential(self):
        rng = np.random.default_rng(2)
        m = random_rnn(3, 2, 2, seed=3)
        batch = rng.standard_normal((6, 4, 2))
        out = m.evaluate_batch(batch)
        for i in range(6):
            np.testing.assert_allclose(out[i], m.evaluate(list(batch[i])), atol=1e-12)

    def test_per_step_outputs(self):
        rng = np.random.default_rng(3)
        m = random_rnn(2, 2, 1, seed=4)
        batch = rng.standard_normal((2, 3, 2))
        steps = m.evaluate_batch(batch, per_step=True)
        for i in range(2):
            for t in range(3):
                np.testing.assert_allclose(
                    steps[i, t], m.evaluate(list(batch[i, : t + 1])), atol=1e-12
                )

    def test_dimension_mismatch(self):
        m = random_rnn(2, 3, 1, seed=5)
        with pytest.raises(ValueError):
            m.evaluate([np.zeros(2)])


class TestWfaEvaluation:
    def test_empty_word(self):
        rng = np.random.default_rng(4)
        a = random_wfa(rng, 3, 2, 2)
        np.testing.assert_allclose(a.evaluate([]), a.Omega @ a.alpha)

    def test_single_symbol(self):
        rng = np.random.default_rng(5)
        a = random_wfa(rng, 3, 2, 2)
        np.testing.assert_allclose(
            a.evaluate([1]), a.Omega @ a.transitions[1].T @ a.alpha, atol=1e-12
        )

    def test_matrix_chain_oracle(self):
        rng = np.random.default_rng(6)
        a = random_wfa(rng, 4, 3, 2)
        word = [0, 2, 1, 2]
        chain = np.eye(4)
        for s in word:
            chain = chain @ a.transitions[s]
        np.testing.assert_allclose(a.evaluate(word), a.Omega @ chain.T @ a.alpha, atol=1e-12)

    def test_symbol_out_of_range(self):
        rng = np.random.default_rng(7)
        a = random_wfa(rng, 2, 2, 1)
        with pytest.raises(ValueError):
            a.evaluate([2])


class TestConversions:
    def test_round_trip_elementwise(self):
        rng = np.random.default_rng(8)
        a = random_wfa(rng, 3, 2, 2)
        back = wfa_from_rnn(rnn_from_wfa(a))
        np.testing.assert_array_equal(back.alpha, a.alpha)
        np.testing.assert_array_equal(back.transitions, a.transitions)
        np.testing.assert_array_equal(back.Omega, a.Omega)

    def test_exhaustive_words_up_to_length_4(self):
        rng = np.random.default_rng(9)
        a = random_wfa(rng, 3, 2, 2)
        m = rnn_from_wfa(a)
        for length in range(5):
            for word in itertools.product(range(2), repeat=length):
                np.testing.assert_allclose(
                    a.evaluate(word),
                    m.evaluate([one_hot(s, 2) for s in word]),
                    atol=1e-10,
                )

    def test_one_state_counter(self):
        # single-state automaton scaling by c per symbol: f(word) = c^|word|
        c = 0.5
        a = VvWFA(alpha=[1.0], transitions=[[[c]], [[c]]], Omega=[[1.0]])
        m = rnn_from_wfa(a)
        for length in range(4):
            word = [0] * length
            np.testing.assert_allclose(
                m.evaluate([one_hot(s, 2) for s in word]), [c**length], atol=1e-12
            )


class TestChangeOfBasis:
    def test_identity_is_noop(self):
        m = random_rnn(3, 2, 2, seed=10)
        same = change_of_basis(m, np.eye(3))
        np.testing.assert_allclose(same.A, m.A, atol=1e-12)
        np.testing.assert_allclose(same.h0, m.h0, atol=1e-12)
        np.testing.assert_allclose(same.Omega, m.Omega, atol=1e-12)

    @pytest.mark.parametrize("kind", ["scaling", "orthogonal"])
    def test_outputs_preserved(self, kind):
        rng = np.random.default_rng(11)
        m = random_rnn(3, 2, 2, seed=12)
        if kind == "scaling":
            basis = 2.0 * np.eye(3)
        else:
            basis, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        changed = change_of_basis(m, basis)
        assert not np.allclose(changed.h0, m.h0)
        assert not np.allclose(changed.Omega, m.Omega)
        for _ in range(20):
            xs = list(rng.standard_normal((5, 2)))
            a, b = m.evaluate(xs), changed.evaluate(xs)
            assert np.linalg.norm(a - b) <= 1e-8 * max(np.linalg.norm(a), 1e-9)

    def test_singular_basis_rejected(self):
        m = random_rnn(2, 2, 1, seed=13)
        with pytest.raises(ValueError):
            change_of_basis(m, np.zeros((2, 2)))


class TestHankel:
    def test_length1_columns_are_one_hot_values(self):
        m = random_rnn(3, 2, 2, seed=14)
        dense = hankel_tt(m, 1).to_dense()
        for i in range(2):
            np.testing.assert_allclose(dense[i], m.evaluate([one_hot(i, 2)]), atol=1e-12)

    def test_exhaustive_enumeration(self):
        m = random_rnn(2, 2, 2, seed=15)
        dense = hankel_tt(m, 3).to_dense()
        for word in itertools.product(range(2), repeat=3):
            np.testing.assert_allclose(
                dense[word], m.evaluate([one_hot(s, 2) for s in word]), atol=1e-10
            )

    def test_contraction_identity_on_random_sequences(self):
        rng = np.random.default_rng(16)
        m = random_rnn(3, 3, 2, seed=17)
        dense = hankel_tt(m, 4).to_dense()
        for _ in range(20):
            xs = list(rng.standard_normal((4, 3)))
            value = dense
            for x in xs:
                value = mode_vector_product(value, x, 0)
            np.testing.assert_allclose(value, m.evaluate(xs), atol=1e-9)

    def test_ranks_bounded_by_hidden_units(self):
        for n, d, p, length in ((2, 3, 1, 2), (4, 2, 2, 5), (5, 3, 2, 4)):
            m = random_rnn(n, d, p, seed=n + length)
            assert all(r <= n for r in hankel_tt(m, length).ranks)

    def test_multilinearity(self):
        rng = np.random.default_rng(18)
        m = random_rnn(3, 2, 2, seed=19)
        for _ in range(20):
            xs = list(rng.standard_normal((4, 2)))
            c = float(rng.standard_normal())
            slot = int(rng.integers(4))
            scaled = [c * x if i == slot else x for i, x in enumerate(xs)]
            lhs = m.evaluate(scaled)
            rhs = c * m.evaluate(xs)
            assert np.linalg.norm(lhs - rhs) <= 1e-9 * max(np.linalg.norm(rhs), 1e-9)
            extra = rng.standard_normal(2)
            added = [x + extra if i == slot else x for i, x in enumerate(xs)]
            other = [extra if i == slot else x for i, x in enumerate(xs)]
            lhs = m.evaluate(added)
            rhs = m.evaluate(xs) + m.evaluate(other)
            assert np.linalg.norm(lhs - rhs) <= 1e-9 * max(np.linalg.norm(rhs), 1e-9)


class TestGradients:
    def test_zero_residual_gives_zero_gradients(self):
        rng = np.random.default_rng(20)
        m = random_rnn(3, 2, 2, seed=21)
        batch = rng.standard_normal((4, 3, 2))
        targets = m.evaluate_batch(batch)
        for g in mse_gradients(m, batch, targets):
            np.testing.assert_allclose(g, 0.0, atol=1e-14)

    def test_single_length1_omega_gradient(self):
        rng = np.random.default_rng(22)
        m = random_rnn(2, 2, 2, seed=23)
        x = rng.standard_normal((1, 1, 2))
        y = rng.standard_normal((1, 2))
        _, _, g_omega = mse_gradients(m, x, y)
        h1 = np.einsum("isj,i,s->j", m.A, m.h0, x[0, 0])
        resid = m.Omega @ h1 - y[0]
        expected = 2.0 * np.outer(resid, h1) / y.size
        np.testing.assert_allclose(g_omega, expected, atol=1e-12)

    @pytest.mark.parametrize("per_step", [False, True])
    def test_finite_difference_agreement(self, per_step):
        rng = np.random.default_rng(24)
        step = 1e-5
        for trial in range(5):
            m = random_rnn(3, 2, 2, scale=0.4, seed=30 + trial)
            batch = rng.standard_normal((3, 3, 2))
            if per_step:
                targets = rng.standard_normal((3, 3, 2))
            else:
                targets = rng.standard_normal((3, 2))

            def loss(h0, a, omega):
                model = Linear2RNN(h0=h0, A=a, Omega=omega)
                preds = model.evaluate_batch(batch, per_step=per_step)
                return float(np.mean((preds - targets) ** 2))

            grads = mse_gradients(m, batch, targets)
            params = [m.h0.copy(), m.A.copy(), m.Omega.copy()]
            for which, grad in enumerate(grads):
                numeric = np.zeros_like(params[which])
                for idx in np.ndindex(*params[which].shape):
                    plus = [q.copy() for q in params]
                    minus = [q.copy() for q in params]
                    plus[which][idx] += step
                    minus[which][idx] -= step
                    numeric[idx] = (loss(*plus) - loss(*minus)) / (2 * step)
                rel = np.linalg.norm(grad - numeric) / max(np.linalg.norm(numeric), 1e-12)
                assert rel < 1e-4


class TestRandomAndSerialization:
    def test_zero_scale_gives_zero_function(self):
        m = random_rnn(3, 2, 2, scale=0.0, seed=0)
        assert np.all(m.A == 0)
        np.testing.assert_allclose(m.evaluate([np.ones(2)]), np.zeros(2))

    def test_seed_determinism(self):
        a = random_rnn(4, 3, 2, seed=99)
        b = random_rnn(4, 3, 2, seed=99)
        np.testing.assert_array_equal(a.A, b.A)
        np.testing.assert_array_equal(a.h0, b.h0)

    def test_reference_configuration_has_full_hankel_rank(self):
        # rank of the balanced length-4 Hankel matricization equals n=5
        hits = 0
        for seed in range(20):
            m = random_rnn(5, 3, 2, seed=seed)
            mat = hankel_tt(m, 4).to_dense().reshape(9, -1)
            s = np.linalg.svd(mat, compute_uv=False)
            hits += int(np.count_nonzero(s > 1e-10 * s[0]) == 5)
        assert hits == 20

    def test_json_round_trip(self, tmp_path):
        m = random_rnn(3, 2, 2, seed=41)
        path = tmp_path / "model.json"
        m.save(path)
        loaded = Linear2RNN.load(path)
        np.testing.assert_array_equal(loaded.h0, m.h0)
        np.testing.assert_array_equal(loaded.A, m.A)
        np.testing.assert_array_equal(loaded.Omega, m.Omega)

    def test_zero_model(self):
        m = zero_rnn(2, 3, 2)
        assert np.all(m.evaluate_batch(np.random.default_rng(0).standard_normal((3, 2, 3))) == 0)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            Linear2RNN(h0=np.zeros(2), A=np.zeros((3, 2, 2)), Omega=np.zeros((1, 2)))
        with pytest.raises(ValueError):
            VvWFA(alpha=np.zeros(2), transitions=np.zeros((2, 3, 2)), Omega=np.zeros((1, 2)))
