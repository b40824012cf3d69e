import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from grouprep import autodiff as ad
from grouprep.expm import expm, expm_frechet_adjoint


def numeric_grad(f, x, h=1e-5):
    """Central differences of a scalar function of an array."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def check_grad(build, *arrays, rtol=1e-5, atol=1e-8, seed=None):
    """``build`` maps DiffMatrix inputs to a DiffMatrix; compares AD and numeric gradients."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    probe = build(*[ad.constant(a) for a in arrays]).value
    w = np.random.default_rng(99).normal(size=probe.shape) if seed is None else seed

    def scalar(*vals):
        return float((build(*[ad.constant(v) for v in vals]).value * w).sum())

    params = [ad.parameter(a.copy()) for a in arrays]
    with ad.Tape() as tape:
        out = build(*params)
        tape.backward(out, seed=w)
    for k, a in enumerate(arrays):
        def f(x, k=k):
            vals = list(arrays)
            vals[k] = x
            return scalar(*vals)

        num = numeric_grad(f, a.copy())
        np.testing.assert_allclose(params[k].grad, num, rtol=rtol, atol=atol)


rng = np.random.default_rng(0)


class TestMatmul:
    def test_identity(self):
        X = rng.normal(size=(3, 3))
        np.testing.assert_array_equal((ad.constant(np.eye(3)) @ ad.constant(X)).value, X)

    def test_sum_gradient(self):
        A, B = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        check_grad(lambda a, b: a @ b, A, B, seed=np.ones((3, 3)), rtol=1e-6)

    def test_shape_error(self):
        with pytest.raises(ad.ShapeError):
            ad.constant(np.ones((2, 3))) @ ad.constant(np.ones((4, 2)))

    def test_batched_broadcast_gradient(self):
        A, B = rng.normal(size=(4, 3, 3)), rng.normal(size=(3, 3))
        check_grad(lambda a, b: a @ b, A, B)


class TestMatrixExp:
    def test_zero_is_identity(self):
        for n in (1, 3, 7):
            assert np.array_equal(expm(np.zeros((n, n))), np.eye(n))

    @pytest.mark.parametrize("scale", [1e-3, 0.5, 2.0, 10.0])
    def test_against_scipy(self, scale):
        r = np.random.default_rng(1)
        for _ in range(10):
            A = r.normal(size=(6, 6))
            A *= scale / np.linalg.norm(A, 2)
            ref = scipy.linalg.expm(A)
            assert np.linalg.norm(expm(A) - ref) / np.linalg.norm(ref) < 1e-12

    def test_batched(self):
        A = rng.normal(size=(2, 3, 4, 4))
        ref = np.stack([[scipy.linalg.expm(a) for a in row] for row in A])
        np.testing.assert_allclose(expm(A), ref, rtol=1e-12, atol=1e-14)

    def test_inverse(self):
        r = np.random.default_rng(2)
        for _ in range(20):
            A = r.normal(size=(5, 5))
            A *= r.uniform(0, 3) / np.linalg.norm(A, 2)
            assert np.linalg.norm(expm(A) @ expm(-A) - np.eye(5)) < 1e-10

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.0, 5.0))
    def test_invertible_up_to_norm_five(self, seed, frob):
        A = np.random.default_rng(seed).normal(size=(4, 4))
        A *= frob / max(np.linalg.norm(A), 1e-12)
        assert np.linalg.norm(expm(A) @ expm(-A) - np.eye(4)) < 1e-8

    def test_frechet_adjoint_against_scipy(self):
        r = np.random.default_rng(3)
        for _ in range(5):
            A, G = r.normal(size=(5, 5)), r.normal(size=(5, 5))
            ref = scipy.linalg.expm_frechet(A.T, G, compute_expm=False)
            np.testing.assert_allclose(expm_frechet_adjoint(A, G), ref, rtol=1e-10, atol=1e-12)

    def test_gradient_finite_differences(self):
        A = rng.normal(size=(5, 5)) * 0.5
        check_grad(ad.matrix_exp, A)

    def test_gradient_large_norm(self):
        A = rng.normal(size=(3, 3)) * 2.0
        check_grad(ad.matrix_exp, A)

    def test_non_square(self):
        with pytest.raises(ad.ShapeError):
            ad.matrix_exp(ad.constant(np.ones((2, 3))))


class TestShapes:
    def test_reshape_to_square_round_trip(self):
        v = np.arange(9.0).reshape(9, 1)
        m = ad.reshape_to_square(ad.constant(v))
        np.testing.assert_array_equal(m.value, np.arange(9.0).reshape(3, 3))

    def test_reshape_to_square_gradient(self):
        check_grad(lambda v: ad.matrix_exp(ad.reshape_to_square(v)), rng.normal(size=(1, 4)) * 0.3)

    def test_reshape_to_square_bad_length(self):
        with pytest.raises(ad.ShapeError):
            ad.reshape_to_square(ad.constant(np.ones(6)))

    def test_take_scatter(self):
        A = rng.normal(size=(3, 2, 2))
        check_grad(lambda a: ad.take(a, np.array([0, 2, 2, 1, 0])), A)

    def test_concat(self):
        check_grad(lambda a, b: ad.concat([a, b], axis=-1), rng.normal(size=(2, 3)), rng.normal(size=(2, 2)))


class TestBlockDiag:
    def test_single_block(self):
        A = rng.normal(size=(3, 3))
        np.testing.assert_array_equal(ad.block_diag([ad.constant(A)]).value, A)

    def test_exp_preserves_blocks(self):
        A, B = rng.normal(size=(2, 2)), rng.normal(size=(3, 3))
        lhs = expm(ad.block_diag([ad.constant(A), ad.constant(B)]).value)
        rhs = ad.block_diag([ad.constant(expm(A)), ad.constant(expm(B))]).value
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_gradient_scatter(self):
        check_grad(lambda a, b: ad.matrix_exp(ad.block_diag([a, b])),
                   rng.normal(size=(2, 2)) * 0.5, rng.normal(size=(2, 2)) * 0.5)

    def test_non_square_block(self):
        with pytest.raises(ad.ShapeError):
            ad.block_diag([ad.constant(np.ones((2, 3)))])


class TestActivations:
    @pytest.mark.parametrize("kind", ["tanh", "silu", "relu", "linear"])
    def test_gradient(self, kind):
        x = rng.normal(size=(3, 4))
        x[np.abs(x) < 1e-3] = 0.5  # keep relu away from its kink
        check_grad(lambda a: ad.activation(a, kind), x)

    def test_tanh_odd(self):
        x = rng.normal(size=(5, 5))
        pos = ad.activation(ad.constant(x), "tanh").value
        neg = ad.activation(ad.constant(-x), "tanh").value
        np.testing.assert_array_equal(neg, -pos)
        assert ad.activation(ad.constant(np.zeros(1)), "tanh").value[0] == 0.0

    def test_unknown(self):
        with pytest.raises(ValueError):
            ad.activation(ad.constant(np.ones(2)), "gelu")


class TestLosses:
    def test_mse_zero(self):
        x = rng.normal(size=(4, 3))
        assert ad.mse(ad.constant(x), x).value == 0.0

    def test_mse_gradient(self):
        t = rng.normal(size=(4, 3))
        check_grad(lambda p: ad.mse(p, t), rng.normal(size=(4, 3)), seed=np.ones(()))

    def test_mse_shape_error(self):
        with pytest.raises(ad.ShapeError):
            ad.mse(ad.constant(np.ones((2, 2))), np.ones((2, 3)))

    def test_frobenius_identity(self):
        assert ad.frobenius_norm(ad.constant(np.eye(3))).value == pytest.approx(np.sqrt(3))

    def test_frobenius_gradient(self):
        check_grad(ad.frobenius_norm, rng.normal(size=(3, 3)), seed=np.ones(()))
        check_grad(lambda a: ad.frobenius_norm(a, per_matrix=True), rng.normal(size=(2, 3, 3)))

    def test_cross_entropy_gradient(self):
        labels = np.array([0, 2, 1, 2])
        check_grad(lambda z: ad.softmax_cross_entropy(z, labels), rng.normal(size=(4, 3)), seed=np.ones(()))

    def test_cross_entropy_value(self):
        z = np.array([[0.0, 0.0]])
        assert ad.softmax_cross_entropy(ad.constant(z), [1]).value == pytest.approx(np.log(2))

    def test_cross_entropy_label_range(self):
        with pytest.raises(ad.ShapeError):
            ad.softmax_cross_entropy(ad.constant(np.zeros((1, 2))), [2])


class TestTape:
    def test_scalar_required(self):
        p = ad.parameter(np.ones((2, 2)))
        with ad.Tape() as tape:
            out = p @ p
            with pytest.raises(ad.ShapeError):
                tape.backward(out)

    def test_constants_not_recorded(self):
        with ad.Tape() as tape:
            ad.constant(np.ones((2, 2))) @ ad.constant(np.ones((2, 2)))
        assert tape.records == []

    def test_shared_input_accumulates(self):
        p = ad.parameter(np.array([[2.0]]))
        with ad.Tape() as tape:
            out = ad.sum_all(ad.mul(p, p))
            tape.backward(out)
        assert p.grad[0, 0] == pytest.approx(4.0)

    def test_deterministic_replay(self):
        def run():
            r = np.random.default_rng(5)
            a = ad.parameter(r.normal(size=(3, 3)))
            with ad.Tape() as tape:
                out = ad.frobenius_norm(ad.matrix_exp(a) @ a)
                tape.backward(out)
            return out.value, a.grad

        (v1, g1), (v2, g2) = run(), run()
        assert v1 == v2 and np.array_equal(g1, g2)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_detected(self):
        with pytest.raises(ad.NonFiniteError):
            ad.scale(ad.parameter(np.array([1e308])), 1e10)


class TestAdam:
    def test_zero_gradient_is_noop(self):
        p = {"x": ad.parameter(np.array([1.5, -2.0]))}
        st_ = ad.AdamState(p)
        ad.adam_step(p, {"x": np.zeros(2)}, st_)
        np.testing.assert_allclose(p["x"].value, [1.5, -2.0], atol=1e-12)

    def test_missing_gradient_is_zero(self):
        p = {"x": ad.parameter(np.array([1.0]))}
        ad.adam_step(p, {}, ad.AdamState(p))
        assert p["x"].value[0] == 1.0

    def test_one_step_decreases_square(self):
        p = {"x": ad.parameter(np.array([1.0]))}
        ad.adam_step(p, {"x": 2 * p["x"].value}, ad.AdamState(p, lr=0.1))
        assert abs(p["x"].value[0]) < 1.0

    def test_first_step_size_is_lr(self):
        p = {"x": ad.parameter(np.array([0.0]))}
        ad.adam_step(p, {"x": np.array([3.0])}, ad.AdamState(p, lr=0.01))
        assert p["x"].value[0] == pytest.approx(-0.01, rel=1e-6)

    def test_converges_on_quadratic(self):
        H = np.diag([1.0, 10.0])
        p = {"x": ad.parameter(np.array([3.0, -2.0]))}
        st_ = ad.AdamState(p, lr=1e-2)
        for _ in range(10_000):
            ad.adam_step(p, {"x": H @ p["x"].value}, st_)
        assert np.linalg.norm(p["x"].value) < 1e-3

    def test_shape_mismatch(self):
        p = {"x": ad.parameter(np.zeros(2))}
        with pytest.raises(ad.ShapeError):
            ad.adam_step(p, {"x": np.zeros(3)}, ad.AdamState(p))


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        r = np.random.default_rng(7)
        params = {"W": r.normal(size=(3, 4)), "b": r.normal(size=(4,)) * 1e-300, "s": np.array(np.pi)}
        path = tmp_path / "ck.json"
        ad.save_checkpoint(path, params, {"note": "x"})
        back, meta = ad.load_checkpoint(path)
        assert meta == {"note": "x"}
        for k, v in params.items():
            assert back[k].shape == v.shape
            assert np.array_equal(back[k], v)

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text('{"format": "other"}')
        with pytest.raises(ValueError):
            ad.load_checkpoint(path)

    def test_rejects_non_finite(self, tmp_path):
        with pytest.raises(ad.NonFiniteError):
            ad.save_checkpoint(tmp_path / "x.json", {"a": np.array([np.nan])})


def test_glorot_bounds():
    w = ad.glorot_uniform(np.random.default_rng(0), 30, 20)
    assert w.shape == (30, 20)
    assert np.abs(w).max() <= np.sqrt(6 / 50)
