import numpy as np
import pytest

from deepfea import autodiff as ad
from deepfea import kernels
from deepfea.autodiff import Tape, Tensor
from deepfea.errors import ContractError, ShapeError
from deepfea.kernels import load_backend


def brute_conv(x, w, bias, pad):
    """Nested-loop convolution oracle, 2D or 3D, zero padding."""
    nsp = x.ndim - 1
    co = w.shape[0]
    out_sp = tuple(x.shape[1 + a] + 2 * pad[a] - w.shape[2 + a] + 1
                   for a in range(nsp))
    y = np.zeros((co,) + out_sp)
    for c_out in range(co):
        for out_idx in np.ndindex(out_sp):
            acc = 0.0 if bias is None else bias[c_out]
            for c_in in range(x.shape[0]):
                for k_idx in np.ndindex(w.shape[2:]):
                    src = tuple(out_idx[a] + k_idx[a] - pad[a] for a in range(nsp))
                    if all(0 <= src[a] < x.shape[1 + a] for a in range(nsp)):
                        acc += w[(c_out, c_in) + k_idx] * x[(c_in,) + src]
            y[(c_out,) + out_idx] = acc
    return y


class TestConvSame:
    def test_identity_1x1_kernel(self):
        x = np.random.default_rng(0).standard_normal((3, 4, 5))
        w = np.zeros((3, 3, 1, 1))
        for c in range(3):
            w[c, c, 0, 0] = 1.0
        y = ad.conv_same(Tensor(x), Tensor(w))
        np.testing.assert_allclose(y.data, x)

    def test_zero_kernel_and_bias(self):
        x = Tensor(np.ones((2, 4, 4)))
        y = ad.conv_same(x, Tensor(np.zeros((5, 2, 3, 3))), Tensor(np.zeros(5)))
        assert not y.data.any()

    def test_matches_brute_force_2d(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((1, 4, 4))
        w = rng.standard_normal((2, 1, 3, 3))
        b = rng.standard_normal(2)
        y = ad.conv_same(Tensor(x), Tensor(w), Tensor(b))
        np.testing.assert_allclose(y.data, brute_conv(x, w, b, (1, 1)),
                                   rtol=1e-12, atol=1e-12)

    def test_matches_brute_force_3d(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((2, 3, 4, 3))
        w = rng.standard_normal((2, 2, 3, 3, 3))
        b = rng.standard_normal(2)
        y = ad.conv_same(Tensor(x), Tensor(w), Tensor(b))
        np.testing.assert_allclose(y.data, brute_conv(x, w, b, (1, 1, 1)),
                                   rtol=1e-12, atol=1e-12)

    def test_shape_preserved_for_odd_kernels(self):
        rng = np.random.default_rng(9)
        for sp in [(4, 6), (5, 5), (3, 4, 5)]:
            for k in (1, 3):
                x = rng.standard_normal((2,) + sp)
                w = rng.standard_normal((3, 2) + (k,) * len(sp))
                assert ad.conv_same(Tensor(x), Tensor(w)).data.shape == (3,) + sp

    def test_even_kernel_rejected(self):
        with pytest.raises(ShapeError):
            ad.conv_same(Tensor(np.zeros((1, 4, 4))),
                         Tensor(np.zeros((1, 1, 2, 2))))

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            ad.conv_same(Tensor(np.zeros((2, 4, 4))),
                         Tensor(np.zeros((1, 3, 3, 3))))

    def test_linearity(self):
        rng = np.random.default_rng(10)
        w = Tensor(rng.standard_normal((3, 2, 3, 3)))
        a = rng.standard_normal((2, 5, 5))
        b = rng.standard_normal((2, 5, 5))
        al, be = 1.7, -0.4
        lhs = ad.conv_same(Tensor(al * a + be * b), w).data
        rhs = al * ad.conv_same(Tensor(a), w).data + be * ad.conv_same(Tensor(b), w).data
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(rhs).max())


class TestConvValid:
    def test_averaging_kernel_maps_node_grid_to_element_grid(self):
        x = np.random.default_rng(1).standard_normal((1, 9, 9))
        w = np.full((1, 1, 2, 2), 0.25)
        y = ad.conv_valid(Tensor(x), Tensor(w))
        assert y.data.shape == (1, 8, 8)
        np.testing.assert_allclose(
            y.data[0], (x[0, :-1, :-1] + x[0, :-1, 1:] + x[0, 1:, :-1]
                        + x[0, 1:, 1:]) / 4.0)

    def test_1x1_kernel_is_per_node_linear_map(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((3, 5, 5))
        w = rng.standard_normal((2, 3, 1, 1))
        y = ad.conv_valid(Tensor(x), Tensor(w))
        assert y.data.shape == (2, 5, 5)
        np.testing.assert_allclose(y.data, np.einsum("oc,chw->ohw", w[:, :, 0, 0], x))

    def test_3d_element_grid_shape(self):
        x = np.zeros((4, 9, 9, 3))
        w = np.zeros((2, 4, 2, 2, 2))
        assert ad.conv_valid(Tensor(x), Tensor(w)).data.shape == (2, 8, 8, 2)

    def test_oversized_kernel_rejected(self):
        with pytest.raises(ShapeError):
            ad.conv_valid(Tensor(np.zeros((1, 3, 3))),
                          Tensor(np.zeros((1, 1, 4, 4))))

    def test_shape_law(self):
        rng = np.random.default_rng(3)
        for sp, k in [((5, 7), (2, 3)), ((6, 6), (1, 1)), ((4, 5, 6), (2, 2, 3))]:
            x = rng.standard_normal((2,) + sp)
            w = rng.standard_normal((1, 2) + k)
            expect = tuple(s - kk + 1 for s, kk in zip(sp, k))
            assert ad.conv_valid(Tensor(x), Tensor(w)).data.shape == (1,) + expect


class TestElementwise:
    def test_sigmoid_at_zero(self):
        y = ad.sigmoid(Tensor(np.zeros((3, 3))))
        np.testing.assert_array_equal(y.data, np.full((3, 3), 0.5))

    def test_tanh_at_zero(self):
        assert not ad.tanh(Tensor(np.zeros(4))).data.any()

    def test_hadamard_with_ones(self):
        a = np.random.default_rng(4).standard_normal((2, 3))
        y = ad.hadamard(Tensor(a), Tensor(np.ones((2, 3))))
        np.testing.assert_array_equal(y.data, a)

    def test_binary_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ad.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))
        with pytest.raises(ShapeError):
            ad.hadamard(Tensor(np.zeros((2, 2))), Tensor(np.zeros(4)))

    def test_named_dispatch(self):
        a = Tensor(np.array([0.0, 1.0]))
        np.testing.assert_array_equal(ad.elementwise("tanh", a).data, np.tanh(a.data))
        np.testing.assert_array_equal(
            ad.elementwise("scale", a, 3.0).data, 3.0 * a.data)
        with pytest.raises(ContractError):
            ad.elementwise("pow", a)

    def test_nan_rejected_in_checked_mode(self):
        with pytest.raises(ContractError):
            Tensor(np.array([1.0, np.nan]))
        Tensor(np.array([1.0, np.nan]), check=False)  # unchecked path allowed


class TestBackward:
    def test_sum_gradient_is_ones(self):
        a = Tensor(np.random.default_rng(5).standard_normal((3, 4)))
        with Tape() as tape:
            tape.backward(ad.sum_all(a))
        np.testing.assert_array_equal(a.grad, np.ones((3, 4)))

    def test_mse_gradient(self):
        rng = np.random.default_rng(6)
        a = Tensor(rng.standard_normal(8))
        const = Tensor(rng.standard_normal(8))
        with Tape() as tape:
            loss = ad.scale(ad.sq_diff_sum(a, const), 1.0 / 8)
            tape.backward(loss)
        np.testing.assert_allclose(a.grad, 2.0 * (a.data - const.data) / 8)

    def test_diamond_fanout_sums_paths(self):
        # f(x) = sum(x*x + x*x): two uses of the same intermediate
        x = Tensor(np.array([1.5, -2.0]))
        with Tape() as tape:
            sq = ad.hadamard(x, x)
            tape.backward(ad.sum_all(ad.add(sq, sq)))
        np.testing.assert_allclose(x.grad, 4.0 * x.data)

    def test_off_path_leaf_gets_zero(self):
        a = Tensor(np.ones(3))
        unused = Tensor(np.ones(3))
        with Tape() as tape:
            grads = tape.gradients(ad.sum_all(a), [a, unused])
        np.testing.assert_array_equal(grads[1], np.zeros(3))

    def test_non_scalar_root_rejected(self):
        a = Tensor(np.ones(3))
        with Tape() as tape:
            out = ad.scale(a, 2.0)
            with pytest.raises(ContractError):
                tape.backward(out)

    def test_grad_accumulates_across_backward_calls(self):
        a = Tensor(np.ones(2))
        with Tape() as tape:
            root = ad.sum_all(a)
            tape.backward(root)
            tape.backward(root)
        np.testing.assert_array_equal(a.grad, 2.0 * np.ones(2))


class TestGradCheck:
    def test_quadratic_is_near_exact(self):
        rng = np.random.default_rng(11)
        err = ad.grad_check(lambda x: ad.sum_all(ad.hadamard(x, x)),
                            [rng.standard_normal(5)])
        assert err < 1e-8

    def test_sigmoid_chain(self):
        rng = np.random.default_rng(12)
        err = ad.grad_check(
            lambda x: ad.sum_all(ad.sigmoid(ad.scale(ad.sigmoid(x), 3.0))),
            [rng.standard_normal((2, 3))])
        assert err < 1e-6

    def test_every_op_under_1e5(self):
        rng = np.random.default_rng(13)
        cases = []
        for ci, co in [(1, 1), (2, 3), (4, 2)]:
            for sp in [(3, 3), (4, 4), (2, 3, 4), (4, 4, 4)]:
                k_same = (3,) * len(sp)
                k_valid = (2,) * len(sp)
                x = rng.standard_normal((ci,) + sp)
                cases.append((lambda a, w, b: ad.sum_all(ad.tanh(
                    ad.conv_same(a, w, b))),
                    [x, rng.standard_normal((co, ci) + k_same),
                     rng.standard_normal(co)]))
                cases.append((lambda a, w: ad.sum_all(ad.sigmoid(
                    ad.conv_valid(a, w))),
                    [x, rng.standard_normal((co, ci) + k_valid)]))
        cases.append((lambda a, b: ad.sum_all(ad.hadamard(ad.add(a, b),
                                                          ad.tanh(b))),
                      [rng.standard_normal((3, 3)), rng.standard_normal((3, 3))]))
        cases.append((lambda a: ad.sum_all(ad.scale(ad.sigmoid(a), -2.5)),
                      [rng.standard_normal((2, 2, 2))]))
        cases.append((lambda a, b: ad.sq_diff_sum(a, b),
                      [rng.standard_normal(6), rng.standard_normal(6)]))
        for fn, args in cases:
            assert ad.grad_check(fn, args) < 1e-5


class TestBackendParity:
    """The compiled core and the NumPy fallback must agree bit-tightly."""

    def test_backends_agree(self):
        try:
            cy = load_backend("cython")
        except ImportError:
            pytest.skip("compiled core not built")
        py = load_backend("python")
        rng = np.random.default_rng(14)
        specs = [("conv2d_same", (3, 6, 7), (4, 3, 3, 3)),
                 ("conv2d_same", (1, 5, 5), (2, 1, 5, 1)),
                 ("conv2d_valid", (2, 6, 6), (3, 2, 2, 2)),
                 ("conv2d_valid", (4, 9, 9), (2, 4, 1, 1)),
                 ("conv3d_same", (2, 4, 5, 3), (3, 2, 3, 3, 3)),
                 ("conv3d_valid", (3, 4, 4, 4), (2, 3, 2, 2, 2))]
        for name, xs, ws in specs:
            x = rng.standard_normal(xs)
            w = rng.standard_normal(ws)
            b = rng.standard_normal(ws[0])
            fy = getattr(cy, name + "_fwd")(x, w, b)
            fp = getattr(py, name + "_fwd")(x, w, b)
            np.testing.assert_allclose(fy, fp, rtol=1e-13, atol=1e-13)
            gy = rng.standard_normal(fy.shape)
            for got, want in zip(getattr(cy, name + "_bwd")(x, w, gy),
                                 getattr(py, name + "_bwd")(x, w, gy)):
                np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_active_backend_is_reported(self):
        assert kernels.active_backend() in ("cython", "python")
