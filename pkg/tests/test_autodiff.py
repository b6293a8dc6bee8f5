import numpy as np
import pytest

from floodmit import autodiff as ad
from floodmit.autodiff import (
    Adam,
    Attention,
    Dense,
    FrozenParamsError,
    GraphMessagePass,
    GRUCell,
    ParamSet,
    ShapeError,
    Tensor,
    grad_check,
)

RNG = np.random.default_rng(7)


def test_square_gradient_at_3():
    x = Tensor(3.0, requires_grad=True)
    y = ad.square(x)
    y.backward()
    assert x.grad == pytest.approx(6.0)


def test_softmax_single_element():
    x = Tensor([2.5], requires_grad=True)
    y = ad.softmax(x)
    assert y.data[0] == pytest.approx(1.0)
    ad.reduce_sum(y).backward()
    assert x.grad[0] == pytest.approx(0.0)


def test_hinge_subgradients():
    c = 1.0
    for val, expected in [(0.5, 0.0), (2.0, 1.0), (1.0, 0.0)]:
        x = Tensor(val, requires_grad=True)
        ad.max_with_scalar(x, c).backward()
        assert x.grad == pytest.approx(expected)
    for val, expected in [(0.5, 1.0), (2.0, 0.0), (1.0, 0.0)]:
        x = Tensor(val, requires_grad=True)
        ad.min_with_scalar(x, c).backward()
        assert x.grad == pytest.approx(expected)


def test_grad_accumulates_on_reuse():
    x = Tensor(2.0, requires_grad=True)
    y = x * x + x * 3.0
    y.backward()
    assert x.grad == pytest.approx(2 * 2.0 + 3.0)


def test_matmul_shape_error_names_shapes():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.ones((4, 2)))
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        ad.matmul(a, b)


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_concat_and_slice_roundtrip_gradients():
    a = Tensor(RNG.normal(size=(2, 3)), requires_grad=True)
    b = Tensor(RNG.normal(size=(2, 2)), requires_grad=True)
    joined = ad.concat([a, b], axis=1)
    ad.reduce_sum(joined[:, 3:5]).backward()
    assert np.allclose(a.grad, 0.0)
    assert np.allclose(b.grad, 1.0)


def test_grad_check_sum_of_squares():
    def f(ts):
        return ad.reduce_sum(ad.square(ts[0]))

    err = grad_check(f, [Tensor(RNG.normal(size=(4,)))])
    assert err < 1e-6


def test_grad_check_constant():
    def f(ts):
        return Tensor(5.0) * 1.0

    err = grad_check(f, [Tensor(RNG.normal(size=(3,)))])
    assert err == 0.0


def test_grad_check_matmul_tanh_chain():
    W = RNG.normal(size=(3, 2))

    def f(ts):
        return ad.reduce_sum(ad.tanh(ad.matmul(ts[0], Tensor(W))))

    err = grad_check(f, [Tensor(RNG.normal(size=(2, 3)))])
    assert err < 1e-4


@pytest.mark.parametrize("op", [ad.relu, ad.tanh, ad.sigmoid, ad.square,
                                lambda x: ad.softmax(x, axis=-1)])
def test_grad_check_elementwise_ops(op):
    def f(ts):
        return ad.reduce_sum(ad.square(op(ts[0])))

    # keep away from relu's kink at 0
    point = Tensor(RNG.normal(size=(2, 4)) + np.sign(RNG.normal(size=(2, 4))) * 0.3)
    assert grad_check(f, [point]) < 1e-4


def test_grad_check_broadcast_add_mul():
    def f(ts):
        return ad.reduce_sum(ad.square(ts[0] + ts[1] * ts[2]))

    pt = [Tensor(RNG.normal(size=(3, 4))), Tensor(RNG.normal(size=(4,))),
          Tensor(RNG.normal(size=(3, 1)))]
    assert grad_check(f, pt) < 1e-4


def test_grad_check_batched_matmul():
    def f(ts):
        prod = ad.matmul(ts[0], ad.transpose(ts[0]))
        return ad.reduce_sum(ad.square(prod))

    assert grad_check(f, [Tensor(RNG.normal(size=(2, 3, 4)))]) < 1e-4


def test_no_grad_builds_no_graph():
    x = Tensor(2.0, requires_grad=True)
    with ad.no_grad():
        y = x * x
    assert not y.requires_grad
    assert y._parents == ()


class TestLayers:
    def test_dense_identity(self):
        ps = ParamSet()
        layer = Dense(ps, "d", 3, 3, RNG)
        layer.W.data[...] = np.eye(3)
        layer.b.data[...] = 0.0
        x = np.array([[1.0, 2.0, 3.0]])
        out = layer(Tensor(x))
        assert np.allclose(out.data, x)

    def test_attention_single_key_value(self):
        ps = ParamSet()
        attn = Attention(ps, "a", 4, RNG)
        x = Tensor(RNG.normal(size=(1, 1, 4)))
        out, w = attn(x)
        assert w.data.shape == (1, 1, 1)
        assert w.data[0, 0, 0] == pytest.approx(1.0)
        v = x.data @ attn.Wv.data
        assert np.allclose(out.data, v)

    def test_attention_rows_stochastic(self):
        ps = ParamSet()
        attn = Attention(ps, "a", 8, RNG)
        _, w = attn(Tensor(RNG.normal(size=(3, 5, 8))))
        assert np.allclose(w.data.sum(axis=-1), 1.0, atol=1e-9)
        assert (w.data >= 0).all()

    def test_gru_state_bounded(self):
        ps = ParamSet()
        cell = GRUCell(ps, "g", 2, 6, RNG)
        h = cell.init_state(4)
        for _ in range(50):
            h = cell(Tensor(RNG.normal(size=(4, 2)) * 5), h)
        assert (np.abs(h.data) < 1.0).all()

    def test_message_pass_zero_adjacency_is_dense(self):
        ps = ParamSet()
        mp = GraphMessagePass(ps, "m", np.zeros((3, 3)), 4, RNG)
        h = RNG.normal(size=(2, 3, 4))
        out = mp(Tensor(h))
        expected = np.tanh(h @ mp.W_self.data + mp.b.data)
        assert np.allclose(out.data, expected)

    @pytest.mark.parametrize("build", ["dense", "gru", "attention", "mp"])
    def test_layer_grad_check(self, build):
        ps = ParamSet()
        if build == "dense":
            layer = Dense(ps, "l", 3, 2, RNG)

            def f(ts):
                return ad.reduce_sum(ad.square(layer(ts[0])))

            pt = [Tensor(RNG.normal(size=(2, 3)))]
        elif build == "gru":
            cell = GRUCell(ps, "l", 2, 3, RNG)

            def f(ts):
                return ad.reduce_sum(ad.square(cell(ts[0], ts[1])))

            pt = [Tensor(RNG.normal(size=(2, 2))),
                  Tensor(RNG.normal(size=(2, 3)) * 0.5)]
        elif build == "attention":
            attn = Attention(ps, "l", 4, RNG)

            def f(ts):
                out, _ = attn(ts[0])
                return ad.reduce_sum(ad.square(out))

            pt = [Tensor(RNG.normal(size=(1, 3, 4)))]
        else:
            adj = (RNG.random((3, 3)) < 0.5).astype(float)
            mp = GraphMessagePass(ps, "l", adj, 4, RNG)

            def f(ts):
                return ad.reduce_sum(ad.square(mp(ts[0])))

            pt = [Tensor(RNG.normal(size=(2, 3, 4)))]
        assert grad_check(f, pt) < 1e-4

    def test_layer_param_grad_check(self):
        # gradients w.r.t. the weights themselves, not just the inputs
        ps = ParamSet()
        layer = Dense(ps, "l", 3, 2, RNG)
        x = RNG.normal(size=(4, 3))

        def f(ts):
            layer.W, layer.b = ts[0], ts[1]
            return ad.reduce_sum(ad.square(layer(Tensor(x))))

        pt = [Tensor(layer.W.data.copy()), Tensor(layer.b.data.copy())]
        assert grad_check(f, pt) < 1e-4


class TestAdam:
    def test_first_step_magnitude(self):
        ps = ParamSet()
        p = ps.register("w", np.array(1.0))
        opt = Adam(ps, lr=0.1)
        p.grad = np.array(1.0)
        opt.step()
        # bias-corrected first step moves by ~lr
        assert p.data == pytest.approx(1.0 - 0.1, abs=1e-6)

    def test_zero_gradient_no_move(self):
        ps = ParamSet()
        p = ps.register("w", np.array(2.0))
        opt = Adam(ps, lr=0.1)
        opt.step()
        assert p.data == pytest.approx(2.0)

    def test_frozen_rejected(self):
        ps = ParamSet()
        ps.register("w", np.array(1.0))
        opt = Adam(ps)
        ps.freeze()
        with pytest.raises(FrozenParamsError):
            opt.step()
        with pytest.raises(FrozenParamsError):
            Adam(ps)


class TestFrozenFlow:
    def test_gradients_flow_through_frozen_params(self):
        ps = ParamSet()
        layer = Dense(ps, "d", 3, 1, RNG)
        ps.freeze()
        before = ps.state_copy()

        x = Tensor(RNG.normal(size=(2, 3)), requires_grad=True)
        loss = ad.reduce_sum(ad.square(layer(x)))
        loss.backward()

        assert x.grad is not None and np.abs(x.grad).sum() > 0
        for name, t in ps.items():
            assert t.data.tobytes() == before[name].tobytes()


class TestSerialization:
    def test_roundtrip_bit_exact(self, tmp_path):
        ps = ParamSet()
        ps.register("a.W", RNG.normal(size=(3, 4)))
        ps.register("a.b", RNG.normal(size=(4,)))
        ps.register("scalar", np.array(3.25))
        ps.freeze()
        path = tmp_path / "params.fmtn"
        ps.save(path)
        loaded = ParamSet.load(path)
        assert loaded.frozen
        assert loaded.names() == ps.names()
        for name, t in ps.items():
            assert loaded[name].data.tobytes() == t.data.tobytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError, match="not a parameter container"):
            ParamSet.load(path)
