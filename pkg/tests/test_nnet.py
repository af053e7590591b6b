"""Network container formats, conv lowering, and the two forward modes."""

import json

import numpy as np
import pytest

from conftest import FIXTURES
from tamm.accumulator import AccumulatorSpec
from tamm.fdp import DotProductConfig
from tamm.formats import FLOAT32
from tamm.gemm import KernelConfig
from tamm.nnet import (
    Layer,
    Model,
    NNetError,
    _im2col,
    accuracy,
    forward,
    labels_path_for,
    load_dataset,
    load_model,
    model_from_dict,
    model_to_dict,
    predictions,
    read_idx,
    save_model,
    write_idx,
)

WIDE_CFG = KernelConfig(DotProductConfig(FLOAT32, AccumulatorSpec(9, 6, -48)))


def _tiny_model():
    kernel = np.zeros((2, 1, 3, 3), dtype=np.float32)
    kernel[0, 0, 1, 1] = 1.0   # identity tap
    kernel[1, 0, 0, 0] = 0.5   # shifted tap
    dense_w = np.arange(2 * 2 * 2 * 2, dtype=np.float32).reshape(2 * 2 * 2, 2).T / 8.0
    return Model(
        name="tiny",
        input_shape=(1, 4, 4),
        input_scale=16.0,
        layers=[
            Layer("conv2d", dict(kernel=kernel, bias=np.array([0.0, 0.25], dtype=np.float32),
                                 stride=1, pad=1)),
            Layer("relu", {}),
            Layer("maxpool", dict(size=2)),
            Layer("flatten", {}),
            Layer("dense", dict(weights=dense_w, bias=np.array([0.0, -1.0], dtype=np.float32))),
            Layer("softmax", {}),
        ],
    )


# ---------------------------------------------------------------------------
# IDX container.

def test_idx_round_trip_rank3(tmp_path):
    arr = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4)
    p = tmp_path / "a.idx"
    write_idx(p, arr)
    back = read_idx(p)
    assert back.dtype == np.uint8
    assert (back == arr).all()


def test_idx_round_trip_rank1(tmp_path):
    arr = np.array([9, 8, 7], dtype=np.uint8)
    p = tmp_path / "labels.idx"
    write_idx(p, arr)
    assert (read_idx(p) == arr).all()


def test_idx_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.idx"
    p.write_bytes(b"\x12\x34\x08\x01" + b"\x00" * 4)
    with pytest.raises(NNetError):
        read_idx(p)
    p.write_bytes(b"")
    with pytest.raises(NNetError):
        read_idx(p)


def test_idx_rejects_truncated_payload(tmp_path):
    arr = np.zeros((5, 5), dtype=np.uint8)
    p = tmp_path / "t.idx"
    write_idx(p, arr)
    p.write_bytes(p.read_bytes()[:-2])
    with pytest.raises(NNetError):
        read_idx(p)


def test_labels_path_inference():
    assert labels_path_for("digits_test_images.idx").endswith("digits_test_labels.idx")
    assert labels_path_for("/data/foo_images.idx") == "/data/foo_labels.idx"
    assert labels_path_for("plain.idx").endswith("plain-labels.idx")


def test_load_dataset_fixture(fixtures_dir):
    images, labels = load_dataset(f"{fixtures_dir}/digits_test_images.idx")
    assert images.shape[1:] == (8, 8)  # single-channel images stay rank 3
    assert labels.shape == (images.shape[0],)
    assert images.shape[0] >= 500
    assert labels.max() <= 9


# ---------------------------------------------------------------------------
# Model container.

def test_model_json_round_trip(tmp_path):
    model = _tiny_model()
    p = tmp_path / "m.json"
    save_model(model, p)
    with open(p) as fh:
        doc = json.load(fh)
    assert doc["format_version"] == 1
    back = load_model(p)
    assert back.name == model.name
    assert back.input_shape == model.input_shape
    assert len(back.layers) == len(model.layers)
    k0 = back.layers[0].params["kernel"]
    # weights come back widened to float64 but carry exact float32 values
    assert k0.dtype == np.float64
    assert (k0 == model.layers[0].params["kernel"].astype(np.float64)).all()
    assert (back.layers[4].params["weights"]
            == model.layers[4].params["weights"].astype(np.float64)).all()


def test_model_dict_validation_errors():
    good = model_to_dict(_tiny_model())
    bad = json.loads(json.dumps(good))
    bad["layers"][0]["type"] = "conv9d"
    with pytest.raises(NNetError, match="layer"):
        model_from_dict(bad)
    bad2 = json.loads(json.dumps(good))
    del bad2["layers"][4]["weights"]
    with pytest.raises(NNetError, match="weights"):
        model_from_dict(bad2)
    bad3 = json.loads(json.dumps(good))
    bad3["input_shape"] = [8, 8]
    with pytest.raises(NNetError):
        model_from_dict(bad3)


# ---------------------------------------------------------------------------
# Convolution lowering.

def _conv_direct(x, kernel, bias, stride, pad):
    n, c, h, w = x.shape
    oc, ic, kh, kw = kernel.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n, oc, oh, ow))
    for b in range(n):
        for o in range(oc):
            for i in range(oh):
                for j in range(ow):
                    patch = xp[b, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[b, o, i, j] = (patch * kernel[o]).sum() + bias[o]
    return out


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 0), (2, 1)])
def test_im2col_matches_direct_convolution(stride, pad):
    rng = np.random.default_rng(167)
    # integer-valued data keeps both routes exact, so order differences
    # in the summation cannot blur the comparison
    x = rng.integers(-4, 5, size=(2, 3, 6, 7)).astype(np.float64)
    kernel = rng.integers(-3, 4, size=(4, 3, 3, 2)).astype(np.float64)
    bias = rng.integers(-2, 3, size=4).astype(np.float64)
    cols, oh, ow = _im2col(x, kernel.shape[2], kernel.shape[3], stride, pad)
    assert cols.shape == (2 * oh * ow, 3 * kernel.shape[2] * kernel.shape[3])
    flat_k = kernel.reshape(4, -1)  # (oc, c*kh*kw) matches the patch order
    out = (cols @ flat_k.T + bias).reshape(2, oh, ow, 4).transpose(0, 3, 1, 2)
    assert (out == _conv_direct(x, kernel, bias, stride, pad)).all()


# ---------------------------------------------------------------------------
# Forward passes.

def test_forward_shapes_and_softmax_normalization():
    model = _tiny_model()
    rng = np.random.default_rng(173)
    images = rng.integers(0, 17, size=(5, 1, 4, 4)).astype(np.uint8)
    for mode in ("reference", "tailored"):
        scores = forward(model, images, cfg=WIDE_CFG, mode=mode)
        assert scores.shape == (5, 2)
        assert np.allclose(scores.sum(axis=1), 1.0, atol=1e-5)
        assert (scores >= 0).all()


def test_forward_modes_agree_with_wide_accumulator():
    model = _tiny_model()
    rng = np.random.default_rng(179)
    images = rng.integers(0, 17, size=(40, 1, 4, 4)).astype(np.uint8)
    ref = forward(model, images, mode="reference")
    got = forward(model, images, cfg=WIDE_CFG, mode="tailored")
    assert (predictions(ref) == predictions(got)).all()


def test_forward_rejects_unknown_mode_and_bad_shape():
    model = _tiny_model()
    images = np.zeros((1, 1, 4, 4), dtype=np.uint8)
    with pytest.raises(ValueError):
        forward(model, images, mode="quantum")
    with pytest.raises(ValueError):
        forward(model, np.zeros((1, 1, 5, 5), dtype=np.uint8))


def test_maxpool_and_relu_semantics():
    # one conv tap copies the input, so pooling acts on the raw pixels
    kernel = np.zeros((1, 1, 1, 1), dtype=np.float32)
    kernel[0, 0, 0, 0] = 1.0
    model = Model("pool", (1, 4, 4), 1.0, [
        Layer("conv2d", dict(kernel=kernel, bias=np.zeros(1, dtype=np.float32),
                             stride=1, pad=0)),
        Layer("maxpool", dict(size=2)),
        Layer("flatten", {}),
    ])
    img = np.array([[[[1, 2, 0, 0],
                      [3, 4, 0, 0],
                      [0, 0, 5, 0],
                      [0, 0, 0, 6]]]], dtype=np.uint8)
    out = forward(model, img, mode="reference")
    assert out.reshape(2, 2).tolist() == [[4.0, 0.0], [0.0, 6.0]]


def test_predictions_stable_on_ties():
    scores = np.array([[0.4, 0.4, 0.2], [0.1, 0.2, 0.7]])
    top1 = predictions(scores, k=1)
    assert top1[:, 0].tolist() == [0, 2]
    top2 = predictions(scores, k=2)
    assert top2[0].tolist() == [0, 1]


def test_accuracy_percentages():
    scores = np.array([[0.9, 0.1, 0.0, 0.0, 0.0, 0.0],
                       [0.1, 0.2, 0.3, 0.25, 0.1, 0.05],
                       [0.5, 0.2, 0.1, 0.1, 0.05, 0.05]])
    labels = np.array([0, 5, 3])
    top1, top5 = accuracy(scores, labels, k=5)
    assert top1 == pytest.approx(100.0 / 3)
    assert top5 == pytest.approx(200.0 / 3)


def test_fixture_model_loads_and_runs(fixtures_dir):
    model = load_model(f"{fixtures_dir}/digits_cnn.json")
    images, labels = load_dataset(f"{fixtures_dir}/digits_test_images.idx")
    scores = forward(model, images[:64], cfg=WIDE_CFG, mode="tailored")
    ref = forward(model, images[:64], mode="reference")
    assert (predictions(scores) == predictions(ref)).all()
    top1, _ = accuracy(ref, labels[:64], k=5)
    assert top1 > 50.0
