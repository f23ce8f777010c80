import sys

import numpy as np
import pytest

from hazeattack import classifier as cl


def _rand_weights(rng, s=16, n=4):
    return cl.init_reference_weights(input_size=s, n_classes=n, seed=int(rng.integers(1 << 30)))


def test_zero_weights_give_zero_logits():
    w = cl.init_reference_weights(16, 4, seed=0)
    for name in ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b"):
        setattr(w, name, np.zeros_like(getattr(w, name)))
    logits = cl.forward(w, np.random.default_rng(0).random((16, 16, 3)))
    assert np.array_equal(logits, np.zeros(4))


def test_forward_deterministic_and_shape(rng):
    w = _rand_weights(rng)
    img = rng.random((16, 16, 3))
    l1 = cl.forward(w, img)
    l2 = cl.forward(w, img)
    assert np.array_equal(l1, l2)
    assert l1.shape == (4,)
    with pytest.raises(ValueError):
        cl.forward(w, rng.random((8, 8, 3)))


def test_softmax_cross_entropy_properties(rng):
    loss, grad = cl.softmax_cross_entropy(np.zeros(10), 3)
    assert abs(loss - np.log(10)) < 1e-12
    loss_sat, _ = cl.softmax_cross_entropy(
        np.array([0.0, 1000.0, 0.0]), 1)
    assert loss_sat < 1e-12
    for _ in range(10):
        logits = rng.standard_normal(7) * rng.uniform(1, 50)
        _, grad = cl.softmax_cross_entropy(logits, int(rng.integers(7)))
        assert abs(grad.sum()) < 1e-12
    with pytest.raises(ValueError):
        cl.softmax_cross_entropy(np.zeros(3), 5)


def test_input_gradient_matches_numeric_oracle(rng):
    worst = 0.0
    for trial in range(20):
        w = _rand_weights(rng)
        img = rng.random((16, 16, 3))
        y = int(rng.integers(4))
        analytic = cl.input_gradient(w, img, y)
        numeric = cl.numeric_input_gradient(lambda x: cl.forward(w, x), img, y)
        rel = np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)
        worst = max(worst, rel)
    assert worst < 1e-5


def test_numeric_gradient_on_linear_classifier(rng):
    # logits = W @ flatten(img): the analytic CE gradient is exact
    w_mat = rng.standard_normal((4, 6 * 6 * 3))
    img = rng.random((6, 6, 3))
    y = 2

    def forward_fn(x):
        return w_mat @ x.ravel()

    numeric = cl.numeric_input_gradient(forward_fn, img, y, h=1e-6)
    _, residual = cl.softmax_cross_entropy(forward_fn(img), y)
    exact = (w_mat.T @ residual).reshape(img.shape)
    assert np.linalg.norm(numeric - exact) / np.linalg.norm(exact) < 1e-7


def test_numeric_gradient_rejects_bad_step(rng):
    w = _rand_weights(rng)
    with pytest.raises(ValueError):
        cl.numeric_input_gradient(lambda x: cl.forward(w, x),
                                  rng.random((16, 16, 3)), 0, h=0.0)


def test_backprop_is_linear_in_logits_gradient(rng):
    w = _rand_weights(rng)
    img = rng.random((16, 16, 3))
    r1 = rng.standard_normal(4)
    r2 = rng.standard_normal(4)
    lhs = cl.backprop_logits_grad(w, img, r1 + 2.0 * r2)
    rhs = cl.backprop_logits_grad(w, img, r1) + 2.0 * cl.backprop_logits_grad(w, img, r2)
    assert np.allclose(lhs, rhs, atol=1e-12)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _constant_color_dataset(n_per_class=8, size=16):
    examples = []
    rng = np.random.default_rng(7)
    for i in range(n_per_class):
        red = np.zeros((size, size, 3))
        red[:, :, 0] = 0.8 + 0.05 * rng.random()
        blue = np.zeros((size, size, 3))
        blue[:, :, 2] = 0.8 + 0.05 * rng.random()
        examples.append(cl.LabeledExample(image=red, label=0))
        examples.append(cl.LabeledExample(image=blue, label=1))
    return examples


def test_training_separable_classes_reaches_full_accuracy():
    dataset = _constant_color_dataset()
    report = cl.train_reference(dataset, seed=0, epochs=5, lr=0.1,
                                batch_size=4, input_size=16)
    assert report.final_train_accuracy == 1.0


def test_training_is_seed_reproducible():
    dataset = _constant_color_dataset(4)
    r1 = cl.train_reference(dataset, seed=3, epochs=2, lr=0.05, input_size=16)
    r2 = cl.train_reference(dataset, seed=3, epochs=2, lr=0.05, input_size=16)
    for name in ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b"):
        assert np.array_equal(getattr(r1.weights, name), getattr(r2.weights, name))


def test_training_zero_lr_keeps_initialization():
    dataset = _constant_color_dataset(2)
    report = cl.train_reference(dataset, seed=5, epochs=3, lr=0.0, input_size=16)
    init = cl.init_reference_weights(16, 2, seed=5)
    for name in ("conv1_w", "fc_w"):
        assert np.array_equal(getattr(report.weights, name), getattr(init, name))


def test_training_rejects_empty_dataset():
    with pytest.raises(ValueError):
        cl.train_reference([], seed=0)


# ---------------------------------------------------------------------------
# Weight file
# ---------------------------------------------------------------------------

def test_weight_file_round_trip(tmp_path, rng):
    w = _rand_weights(rng, s=32, n=10)
    path = tmp_path / "w.bin"
    cl.save_weights(w, path)
    back = cl.load_weights(path)
    assert back.input_size == 32 and back.n_classes == 10
    # float32 quantization is idempotent: a second save is byte-identical
    path2 = tmp_path / "w2.bin"
    cl.save_weights(back, path2)
    assert path.read_bytes() == path2.read_bytes()
    img = rng.random((32, 32, 3))
    assert np.array_equal(cl.forward(back, img),
                          cl.forward(cl.load_weights(path2), img))


def test_weight_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"not a weight file at all")
    with pytest.raises(ValueError):
        cl.load_weights(path)


# ---------------------------------------------------------------------------
# Resize
# ---------------------------------------------------------------------------

def test_resize_identity(rng):
    img = rng.random((9, 9, 3))
    assert np.allclose(cl.resize_bilinear(img, 9, 9), img, atol=1e-12)


def test_resize_downsample_by_two_is_block_mean(rng):
    img = rng.random((8, 8))
    out = cl.resize_bilinear(img, 4, 4)
    blocks = img.reshape(4, 2, 4, 2).mean(axis=(1, 3))
    assert np.allclose(out, blocks, atol=1e-12)


def test_resize_adjoint_identity(rng):
    a2 = rng.random((11, 7))
    b2 = rng.random((5, 9))
    lhs = np.sum(cl.resize_bilinear(a2, 5, 9) * b2)
    rhs = np.sum(a2 * cl.resize_adjoint(b2, 11, 7))
    assert abs(lhs - rhs) < 1e-12
    a3 = rng.random((6, 10, 3))
    b3 = rng.random((13, 4, 3))
    lhs = np.sum(cl.resize_bilinear(a3, 13, 4) * b3)
    rhs = np.sum(a3 * cl.resize_adjoint(b3, 6, 10))
    assert abs(lhs - rhs) < 1e-12


def test_pipeline_loss_grad_matches_numeric(rng):
    # native 10x12 image -> resize to 16 -> CNN -> CE
    w = cl.init_reference_weights(16, 3, seed=9)
    clf = cl.ReferenceClassifier(w)
    img = rng.random((10, 12, 3))
    y = 1
    loss, grad = clf.loss_grad(img, y)
    step = 1e-5
    fd = np.zeros_like(img)
    it = np.nditer(img, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        up = img.copy()
        up[idx] += step
        down = img.copy()
        down[idx] -= step
        lu = cl.softmax_cross_entropy(clf.logits(up), y)[0]
        ld = cl.softmax_cross_entropy(clf.logits(down), y)[0]
        fd[idx] = (lu - ld) / (2 * step)
        it.iternext()
    assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-5


# ---------------------------------------------------------------------------
# External adapter
# ---------------------------------------------------------------------------

def _loopback_spec(weights_path, n_classes):
    return cl.AdapterSpec(
        model_id="loopback",
        command=(sys.executable, "-m", "hazeattack", "logits",
                 "--weights", str(weights_path)),
        n_classes=n_classes,
    )


def test_external_adapter_loopback_matches_in_process(tmp_path, rng):
    from hazeattack.imagecore import save_image, load_image
    w = _rand_weights(rng, s=16, n=4)
    wpath = tmp_path / "w.bin"
    cl.save_weights(w, wpath)
    img = rng.random((16, 16, 3))
    png = tmp_path / "img.png"
    save_image(img, png)

    adapter = cl.ExternalAdapter(_loopback_spec(wpath, 4))
    external = adapter.logits_for_file(png)
    in_process = cl.ReferenceClassifier(cl.load_weights(wpath)).logits_for_file(png)
    assert np.array_equal(external, in_process)

    # in-memory convenience wrapper goes through a temporary PNG
    via_memory = cl.external_forward(_loopback_spec(wpath, 4), load_image(png))
    assert np.array_equal(via_memory, in_process)


def test_external_adapter_malformed_response(tmp_path):
    spec = cl.AdapterSpec(model_id="bad", command=(sys.executable, "-c",
                          "print('definitely not scores')"), n_classes=3)
    with pytest.raises(cl.AdapterError, match="malformed"):
        cl.ExternalAdapter(spec).logits_for_file(tmp_path / "whatever.png")


def test_external_adapter_wrong_class_count(tmp_path):
    spec = cl.AdapterSpec(model_id="short", command=(sys.executable, "-c",
                          "print('[1.0, 2.0]')"), n_classes=5)
    with pytest.raises(cl.AdapterError, match="expected 5"):
        cl.ExternalAdapter(spec).logits_for_file(tmp_path / "x.png")


def test_external_adapter_process_failure(tmp_path):
    spec = cl.AdapterSpec(model_id="fail", command=(sys.executable, "-c",
                          "import sys; sys.exit(3)"), n_classes=2)
    with pytest.raises(cl.AdapterError, match="exited with 3"):
        cl.ExternalAdapter(spec).logits_for_file(tmp_path / "x.png")


def test_external_adapter_newline_response(tmp_path):
    spec = cl.AdapterSpec(model_id="lines", command=(sys.executable, "-c",
                          "print('1.5'); print('-2.0')"), n_classes=2)
    scores = cl.ExternalAdapter(spec).logits_for_file(tmp_path / "x.png")
    assert np.array_equal(scores, [1.5, -2.0])
