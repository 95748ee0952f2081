import numpy as np
import pytest

from signalgauge.architecture import ArchitectureSpec
from signalgauge.dataset_io import ImageDataset
from signalgauge.engine import (
    Dense,
    build_network,
    conv_backward,
    conv_forward,
    dense_forward,
    dropout,
    evaluate,
    load_parameters,
    maxpool_backward,
    maxpool_forward,
    save_parameters,
    sgd_step,
    softmax_cross_entropy,
    train,
)
from signalgauge.engine.training import as_input, batch_loss, train_step
from signalgauge.errors import BadLabel, EmptyDataset, ShapeMismatch

from conftest import toy_digits
from gradcheck import CHECKERS, numeric_grad, rel_error

SEEDS = range(20)


def tiny_spec(**kw):
    base = dict(conv_blocks=(2,), fc_layers=(64,), input_height=8, input_width=8, input_channels=1,
                num_classes=2, dropout_rate=0.0)
    base.update(kw)
    return ArchitectureSpec(**base)


# --- conv ------------------------------------------------------------------------

def test_conv_sum_of_ones():
    out = conv_forward(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1))
    assert out.shape == (1, 1, 1, 1) and out[0, 0, 0, 0] == 9.0


def test_conv_identity_kernel():
    x = np.random.default_rng(0).standard_normal((2, 1, 5, 4))
    assert np.array_equal(conv_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1)), x)


def test_conv_output_size_formula():
    x = np.zeros((1, 2, 9, 7))
    out = conv_forward(x, np.zeros((4, 2, 3, 3)), np.zeros(4), stride=2)
    assert out.shape == (1, 4, (9 - 3) // 2 + 1, (7 - 3) // 2 + 1)


def test_conv_matches_nested_loop_oracle():
    rng = np.random.default_rng(1)
    x, w, b = rng.standard_normal((2, 3, 6, 5)), rng.standard_normal((4, 3, 3, 2)), rng.standard_normal(4)
    out = conv_forward(x, w, b, stride=1)
    ref = np.zeros_like(out)
    for n in range(2):
        for k in range(4):
            for i in range(out.shape[2]):
                for j in range(out.shape[3]):
                    ref[n, k, i, j] = np.sum(x[n, :, i:i + 3, j:j + 2] * w[k]) + b[k]
    assert np.allclose(out, ref, atol=1e-12)


def test_conv_six_by_six_two_kernels_gradcheck():
    rng = np.random.default_rng(5)
    x, w, b = rng.standard_normal((1, 1, 6, 6)), rng.standard_normal((2, 1, 3, 3)), rng.standard_normal(2)
    r = rng.standard_normal((1, 2, 4, 4))
    loss = lambda: float(np.sum(conv_forward(x, w, b) * r))
    dx, dw, db = conv_backward(r, x, w)
    for analytic, arr in ((dx, x), (dw, w), (db, b)):
        assert rel_error(analytic, numeric_grad(loss, arr)) < 1e-3


def test_conv_shape_errors():
    with pytest.raises(ShapeMismatch):
        conv_forward(np.zeros((1, 2, 5, 5)), np.zeros((1, 3, 3, 3)), np.zeros(1))
    with pytest.raises(ShapeMismatch):
        conv_forward(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 3, 3)), np.zeros(1))


# --- pooling --------------------------------------------------------------------

def test_maxpool_window_max():
    out, _ = maxpool_forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), 2)
    assert out.tolist() == [[[[4.0]]]]


def test_maxpool_ties_go_to_first_index():
    x = np.ones((1, 1, 4, 4))
    out, arg = maxpool_forward(x, 2)
    dx = maxpool_backward(np.ones_like(out), arg, 2)
    expected = np.zeros((4, 4))
    expected[::2, ::2] = 1
    assert np.array_equal(dx[0, 0], expected)


def test_maxpool_requires_divisible_dims():
    with pytest.raises(ShapeMismatch):
        maxpool_forward(np.zeros((1, 1, 5, 4)), 2)


# --- dense, dropout, loss ------------------------------------------------------------

def test_dense_identity_and_bias():
    x = np.arange(4.0)[None]
    assert np.array_equal(dense_forward(x, np.eye(4), np.zeros(4)), x)
    b = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(dense_forward(np.zeros((1, 5)), np.ones((3, 5)), b), b[None])
    with pytest.raises(ShapeMismatch):
        dense_forward(np.zeros((1, 5)), np.ones((3, 4)), b)


def test_dense_ten_to_five_gradcheck():
    assert max(CHECKERS["dense"](s) for s in range(5)) < 1e-4


def test_dropout_identity_cases():
    x = np.random.default_rng(0).standard_normal(100)
    assert dropout(x, 0.0, "train", 1)[0] is x
    assert dropout(x, 0.7, "eval", 1)[0] is x
    with pytest.raises(ValueError):
        dropout(x, 1.0)


def test_dropout_monte_carlo():
    x = np.ones(10_000)
    out, mask = dropout(x, 0.5, "train", 123)
    survivors = np.count_nonzero(mask) / x.size
    assert 0.47 <= survivors <= 0.53
    assert abs(out.mean() - 1.0) <= 0.02
    assert set(np.unique(out)) <= {0.0, 2.0}


def test_softmax_ce_examples():
    loss, grad = softmax_cross_entropy(np.zeros(10), 3)
    assert loss == pytest.approx(np.log(10), abs=1e-12)
    assert grad[3] == pytest.approx(0.1 - 1)
    loss, grad = softmax_cross_entropy(np.array([1000.0, 0.0]), 0)
    assert loss == pytest.approx(0.0, abs=1e-12) and np.all(np.isfinite(grad))
    with pytest.raises(BadLabel):
        softmax_cross_entropy(np.zeros(3), 3)
    with pytest.raises(BadLabel):
        softmax_cross_entropy(np.zeros((2, 3)), np.array([0.5, 1.0]))


# --- finite-difference sweep, >= 20 seeded instances per layer type -----------------

@pytest.mark.parametrize("layer", sorted(CHECKERS))
@pytest.mark.parametrize("seed", SEEDS)
def test_layer_gradients(layer, seed):
    assert CHECKERS[layer](seed) < 1e-3


def test_whole_network_gradient():
    net = build_network(tiny_spec(), seed=3)
    for layer in net.layers:
        layer.params = {k: v.astype(np.float64) for k, v in layer.params.items()}
    net.layers[0].input_grad = True
    rng = np.random.default_rng(0)
    x = rng.random((3, 1, 8, 8))
    y = np.array([0, 1, 1])
    loss = lambda: softmax_cross_entropy(net.forward(x), y)[0]
    _, grad = softmax_cross_entropy(net.forward(x, train=True), y)
    dx = net.backward(grad)
    analytic = net.gradients()
    for name, p in net.named_parameters().items():
        assert rel_error(analytic[name], numeric_grad(loss, p)) < 1e-3, name
    assert rel_error(dx, numeric_grad(loss, x)) < 1e-3


# --- network ----------------------------------------------------------------------

def test_parameter_count_matches_closed_form():
    spec = ArchitectureSpec((32,), (784,))
    net = build_network(spec, seed=0)
    sizes = [p.size for p in net.named_parameters().values()]
    assert sizes == [288, 32, 6272 * 784, 784, 7840, 10]
    assert net.parameter_count() == 320 + 4_918_032 + 7_850 == spec.parameter_count()


def test_build_is_deterministic_per_seed():
    a, b, c = (build_network(tiny_spec(), s) for s in (7, 7, 8))
    for name, p in a.named_parameters().items():
        assert np.array_equal(p, b.named_parameters()[name])
        assert p.dtype == np.float32
    assert not np.array_equal(a.named_parameters()["0.w"], c.named_parameters()["0.w"])


def test_build_rejects_bad_spec():
    with pytest.raises(ShapeMismatch):
        build_network(tiny_spec(fc_layers=(50,)))


def test_layer_order():
    net = build_network(ArchitectureSpec((32, 64), (784, 392)))
    names = [type(layer).__name__ for layer in net.layers]
    assert names == ["Conv", "ReLU", "MaxPool", "Conv", "ReLU", "MaxPool", "Flatten",
                     "Dense", "ReLU", "Dense", "ReLU", "Dropout", "Dense"]


def test_eval_forward_is_pure():
    net = build_network(tiny_spec(dropout_rate=0.5), seed=1)
    x = np.random.default_rng(2).random((4, 1, 8, 8)).astype(np.float32)
    before = {k: v.copy() for k, v in net.named_parameters().items()}
    assert np.array_equal(net.forward(x), net.forward(x))
    for k, v in net.named_parameters().items():
        assert np.array_equal(v, before[k])


def test_sgd_step_arithmetic():
    net = build_network(tiny_spec(), seed=0)
    before = {k: v.copy() for k, v in net.named_parameters().items()}
    sgd_step(net, {k: np.ones_like(v) for k, v in before.items()}, 0.0)
    for k, v in net.named_parameters().items():
        assert np.array_equal(v, before[k])
    layer = Dense(1, 1, rng=np.random.default_rng(0))
    layer.params["w"][...] = 1.0
    from signalgauge.engine import Network
    single = Network([layer])
    sgd_step(single, {"0.w": np.array([[0.5]]), "0.b": np.zeros(1)}, 0.1)
    assert single.named_parameters()["0.w"][0, 0] == pytest.approx(0.95)
    with pytest.raises(ShapeMismatch):
        sgd_step(single, {"0.w": np.zeros(2), "0.b": np.zeros(1)}, 0.1)
    with pytest.raises(ShapeMismatch):
        sgd_step(single, {"0.w": np.zeros((1, 1))}, 0.1)


@pytest.mark.parametrize("seed", range(3))
def test_small_steps_descend(seed):
    ds = toy_digits(64, seed=seed)
    net = build_network(tiny_spec(), seed=seed)
    x, y = as_input(ds.images[:16]), ds.labels[:16]
    losses = [batch_loss(net, x, y)]
    for _ in range(10):
        train_step(net, x, y, 1e-4)
        losses.append(batch_loss(net, x, y))
    assert losses[1] < losses[0]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_parameter_file_round_trip(tmp_path):
    net = build_network(tiny_spec(conv_blocks=(2, 4), fc_layers=(64, 32)), seed=5)
    path = tmp_path / "net.sgnn"
    save_parameters(net, path)
    raw = path.read_bytes()
    assert raw[:4] == b"SGNN"
    back = load_parameters(path)
    assert back.spec == net.spec
    for k, v in net.named_parameters().items():
        assert np.array_equal(v, back.named_parameters()[k])
    other = build_network(net.spec, seed=99)
    load_parameters(path, other)
    assert np.array_equal(other.named_parameters()["0.w"], net.named_parameters()["0.w"])
    with pytest.raises(ShapeMismatch):
        load_parameters(path, build_network(tiny_spec(), 0))


# --- training and evaluation --------------------------------------------------------

def test_evaluate_forced_class_zero():
    net = build_network(tiny_spec(num_classes=10), seed=0)
    head = net.layers[-1]
    head.params["w"][...] = 0
    head.params["b"][...] = 0
    head.params["b"][0] = 5.0
    images = np.random.default_rng(0).integers(0, 256, (30, 8, 8), dtype=np.uint8)
    assert evaluate(net, ImageDataset(images, np.zeros(30, int))) == 1.0
    assert evaluate(net, ImageDataset(images, np.arange(30) % 9 + 1)) == 0.0
    with pytest.raises(EmptyDataset):
        evaluate(net, ImageDataset(images[:0], []))


def test_evaluate_matches_loop_oracle():
    ds = toy_digits(123, seed=4)
    net = build_network(tiny_spec(), seed=2)
    hits = 0
    for img, label in zip(ds.images, ds.labels):
        logits = net.forward(as_input(img[None]))[0]
        hits += int(np.argmax(logits) == label)
    assert evaluate(net, ds, batch_size=50) == hits / len(ds)


def test_zero_steps_is_chance_level():
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (1000, 8, 8), dtype=np.uint8)
    ds = ImageDataset(images, np.arange(1000) % 10)
    net = build_network(tiny_spec(num_classes=10), seed=0)
    res = train(net, ds, ds, steps=0, checkpoint_steps=[0])
    assert abs(res.final_test_accuracy - 0.1) <= 0.05
    assert res.checkpoint_accuracy == [res.final_test_accuracy]


def test_training_is_deterministic_and_learns():
    ds = toy_digits(400, seed=1)
    train_set, val = ds.take(range(300)), ds.take(range(300, 400))
    spec = tiny_spec(dropout_rate=0.5)
    runs = [train(build_network(spec, 3), train_set, val, steps=150, batch_size=16,
                  checkpoint_steps=[10, 150], seed=3, learning_rate=0.1) for _ in range(2)]
    a, b = runs
    assert a.checkpoint_accuracy == b.checkpoint_accuracy
    assert a.checkpoint_loss == b.checkpoint_loss
    assert a.final_test_accuracy >= 0.9
    assert all(0 <= v <= 1 for v in a.checkpoint_accuracy)


def test_train_argument_checks():
    ds = toy_digits(20)
    net = build_network(tiny_spec(), 0)
    with pytest.raises(ValueError):
        train(net, ds, ds, steps=5, checkpoint_steps=[4, 2])
    with pytest.raises(ValueError):
        train(net, ds, ds, steps=5, checkpoint_steps=[6])
    with pytest.raises(EmptyDataset):
        train(net, ds.take([]), ds, steps=5)


def test_test_set_is_reported_separately():
    ds = toy_digits(60, seed=2)
    res = train(build_network(tiny_spec(), 0), ds, ds, steps=3, checkpoint_steps=[3], test_set=ds.head(10))
    assert res.final_split == "test"
