"""Desk-scale neural-net inference routed through the tailored GEMM.

Models are JSON files holding a layer list (conv2d, relu, maxpool,
flatten, dense, softmax) with float32 weights stored as base64
little-endian blobs.  Datasets are IDX-style binaries: big-endian magic
and dims, u8 payload, one file for images and one for labels.

Every matrix product of the forward pass goes through ``gemm.gemm`` with
the caller's kernel configuration.  ``mode="reference"`` instead runs a
plain float32 multiply-add chain per output element (one rounding per
multiply, one per add), the conventional-hardware baseline the tailored
results are compared against.
"""

from __future__ import annotations

import base64
import json
import os
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .buffers import MatrixBuffer
from .formats import FLOAT32
from .gemm import KernelConfig, gemm

__all__ = [
    "Layer",
    "Model",
    "NNetError",
    "accuracy",
    "forward",
    "labels_path_for",
    "load_dataset",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "predictions",
    "read_idx",
    "save_model",
    "write_idx",
]


class NNetError(ValueError):
    """Model or dataset file does not parse."""


_LAYER_TYPES = {"conv2d", "relu", "maxpool", "flatten", "dense", "softmax"}


@dataclass
class Layer:
    type: str
    params: dict = field(default_factory=dict)


@dataclass
class Model:
    name: str
    input_shape: tuple  # (channels, height, width)
    input_scale: float  # raw u8 pixels are divided by this
    layers: list


def _b64_to_f32(blob: str, shape, what: str) -> np.ndarray:
    try:
        raw = base64.b64decode(blob, validate=True)
    except Exception as exc:
        raise NNetError(f"{what}: bad base64 ({exc})") from exc
    n = int(np.prod(shape))
    if len(raw) != 4 * n:
        raise NNetError(f"{what}: {len(raw)} bytes, expected {4 * n} for shape {tuple(shape)}")
    arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
    return arr.astype(np.float64)


def _f32_to_b64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


def model_from_dict(doc: dict) -> Model:
    if not isinstance(doc, dict) or "layers" not in doc:
        raise NNetError("model JSON must be an object with a 'layers' list")
    name = str(doc.get("name", "model"))
    shape = doc.get("input_shape")
    if not (isinstance(shape, (list, tuple)) and len(shape) == 3):
        raise NNetError("input_shape must be [channels, height, width]")
    scale = float(doc.get("input_scale", 1.0))
    if scale <= 0:
        raise NNetError("input_scale must be positive")
    layers = []
    for idx, spec in enumerate(doc["layers"]):
        where = f"layer {idx}"
        if not isinstance(spec, dict) or "type" not in spec:
            raise NNetError(f"{where}: expected an object with a 'type'")
        ltype = spec["type"]
        if ltype not in _LAYER_TYPES:
            raise NNetError(f"{where}: unknown type {ltype!r}")
        params: dict = {}
        def blob(key):
            if key not in spec:
                raise NNetError(f"{where}: missing {key!r}")
            return spec[key]

        if ltype == "conv2d":
            kshape = spec.get("shape")
            if not (isinstance(kshape, (list, tuple)) and len(kshape) == 4):
                raise NNetError(f"{where}: conv2d shape must be [out, in, kh, kw]")
            params["kernel"] = _b64_to_f32(blob("kernel"), kshape, f"{where} kernel")
            params["bias"] = _b64_to_f32(blob("bias"), (kshape[0],), f"{where} bias")
            params["stride"] = int(spec.get("stride", 1))
            params["pad"] = int(spec.get("pad", 0))
            if params["stride"] < 1 or params["pad"] < 0:
                raise NNetError(f"{where}: bad stride/pad")
        elif ltype == "dense":
            wshape = spec.get("shape")
            if not (isinstance(wshape, (list, tuple)) and len(wshape) == 2):
                raise NNetError(f"{where}: dense shape must be [out, in]")
            params["weights"] = _b64_to_f32(blob("weights"), wshape, f"{where} weights")
            params["bias"] = _b64_to_f32(blob("bias"), (wshape[0],), f"{where} bias")
        elif ltype == "maxpool":
            params["size"] = int(spec.get("size", 2))
            if params["size"] < 1:
                raise NNetError(f"{where}: bad pool size")
        layers.append(Layer(ltype, params))
    return Model(name=name, input_shape=tuple(int(d) for d in shape),
                 input_scale=scale, layers=layers)


def model_to_dict(model: Model) -> dict:
    out = {
        "format_version": 1,
        "name": model.name,
        "input_shape": list(model.input_shape),
        "input_scale": model.input_scale,
        "layers": [],
    }
    for layer in model.layers:
        spec: dict = {"type": layer.type}
        if layer.type == "conv2d":
            k = layer.params["kernel"]
            spec["shape"] = list(k.shape)
            spec["kernel"] = _f32_to_b64(k)
            spec["bias"] = _f32_to_b64(layer.params["bias"])
            spec["stride"] = layer.params["stride"]
            spec["pad"] = layer.params["pad"]
        elif layer.type == "dense":
            w = layer.params["weights"]
            spec["shape"] = list(w.shape)
            spec["weights"] = _f32_to_b64(w)
            spec["bias"] = _f32_to_b64(layer.params["bias"])
        elif layer.type == "maxpool":
            spec["size"] = layer.params["size"]
        out["layers"].append(spec)
    return out


def load_model(path) -> Model:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise NNetError(f"{path}: {exc}") from exc
    return model_from_dict(doc)


def save_model(model: Model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


# IDX container: u16 zero, u8 dtype code, u8 rank, then rank u32 dims,
# all big-endian, then the payload.  Only the u8 code (0x08) is used here.

def read_idx(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(4)
        if len(head) != 4 or head[0] != 0 or head[1] != 0:
            raise NNetError(f"{path}: not an IDX file")
        code, rank = head[2], head[3]
        if code != 0x08:
            raise NNetError(f"{path}: unsupported IDX element code 0x{code:02X}")
        dims = struct.unpack(f">{rank}I", fh.read(4 * rank))
        n = int(np.prod(dims)) if rank else 1
        payload = fh.read(n)
        if len(payload) != n:
            raise NNetError(f"{path}: truncated payload ({len(payload)} of {n} bytes)")
        return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">HBB", 0, 0x08, arr.ndim))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def labels_path_for(images_path) -> str:
    """Companion label file: swap 'images' for 'labels', else add '-labels'."""
    path = os.fspath(images_path)
    if "images" in os.path.basename(path):
        head, tail = os.path.split(path)
        return os.path.join(head, tail.replace("images", "labels"))
    stem, ext = os.path.splitext(path)
    return f"{stem}-labels{ext}"


def load_dataset(images_path, labels_path=None):
    """-> (images u8 (N,C,H,W) or (N,H,W), labels u8 (N,))"""
    images = read_idx(images_path)
    if labels_path is None:
        labels_path = labels_path_for(images_path)
    labels = read_idx(labels_path)
    if labels.ndim != 1 or images.shape[0] != labels.shape[0]:
        raise NNetError(
            f"dataset mismatch: {images.shape[0]} images, {labels.shape} labels")
    return images, labels


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise NNetError(f"conv2d window {kh}x{kw} does not fit {h}x{w} input")
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
    # patch order (c, kh, kw) matches kernel.reshape(out, -1)
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(n * oh * ow, c * kh * kw), oh, ow


def _gemm_tailored(a: np.ndarray, b: np.ndarray, bias: Optional[np.ndarray],
                   cfg: Optional[KernelConfig], workers: int) -> np.ndarray:
    a_buf = MatrixBuffer.from_floats(np.ascontiguousarray(a), FLOAT32)
    b_buf = MatrixBuffer.from_floats(np.ascontiguousarray(b), FLOAT32)
    if bias is None:
        out = gemm(a_buf, b_buf, cfg=cfg, workers=workers)
    else:
        c_rows = np.ascontiguousarray(
            np.broadcast_to(bias, (a.shape[0], b.shape[1])))
        c_buf = MatrixBuffer.from_floats(c_rows, FLOAT32)
        out = gemm(a_buf, b_buf, c_buf, alpha=1.0, beta=1.0,
                   cfg=cfg, workers=workers)
    return out.to_floats()


def _gemm_reference(a: np.ndarray, b: np.ndarray,
                    bias: Optional[np.ndarray]) -> np.ndarray:
    # sequential float32 chain: s = f32(s + f32(a_ik * b_kj)), k ascending
    a32 = a.astype(np.float32)
    b32 = b.astype(np.float32)
    s = np.zeros((a.shape[0], b.shape[1]), dtype=np.float32)
    for k in range(a.shape[1]):
        s = s + a32[:, k, None] * b32[None, k, :]
    if bias is not None:
        s = s + bias.astype(np.float32)[None, :]
    return s.astype(np.float64)


def forward(model: Model, images: np.ndarray, cfg: Optional[KernelConfig] = None,
            mode: str = "tailored", workers: int = 1) -> np.ndarray:
    """Run inference; returns per-class scores, shape (N, classes).

    `images` is raw u8 pixel data (N,H,W) or (N,C,H,W); pixels are divided
    by the model's input_scale.  Activations travel as float64 arrays whose
    values are always exactly float32-representable.
    """
    if mode not in ("tailored", "reference"):
        raise ValueError(f"unknown mode {mode!r}")
    x = np.asarray(images).astype(np.float64) / model.input_scale
    if x.ndim == 3:
        x = x[:, None, :, :]
    if x.ndim != 4 or x.shape[1:] != model.input_shape:
        raise NNetError(
            f"input shape {x.shape[1:]} does not match model {model.input_shape}")
    x = x.astype(np.float32).astype(np.float64)

    def run_gemm(a, b, bias):
        if mode == "reference":
            return _gemm_reference(a, b, bias)
        return _gemm_tailored(a, b, bias, cfg, workers)

    for layer in model.layers:
        if layer.type == "conv2d":
            kern = layer.params["kernel"]
            oc, ic, kh, kw = kern.shape
            if x.shape[1] != ic:
                raise NNetError(f"conv2d expects {ic} channels, got {x.shape[1]}")
            cols, oh, ow = _im2col(x, kh, kw, layer.params["stride"], layer.params["pad"])
            out = run_gemm(cols, kern.reshape(oc, -1).T, layer.params["bias"])
            x = out.reshape(x.shape[0], oh, ow, oc).transpose(0, 3, 1, 2)
        elif layer.type == "dense":
            w = layer.params["weights"]
            if x.ndim != 2:
                raise NNetError("dense layer needs flattened input")
            if x.shape[1] != w.shape[1]:
                raise NNetError(f"dense expects {w.shape[1]} inputs, got {x.shape[1]}")
            x = run_gemm(x, w.T, layer.params["bias"])
        elif layer.type == "relu":
            x = np.maximum(x, 0.0)
        elif layer.type == "maxpool":
            s = layer.params["size"]
            n, c, h, w = x.shape
            if h % s or w % s:
                raise NNetError(f"maxpool {s} does not divide {h}x{w}")
            x = x.reshape(n, c, h // s, s, w // s, s).max(axis=(3, 5))
        elif layer.type == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif layer.type == "softmax":
            # monotone per row; ranking is unchanged
            z = x - x.max(axis=1, keepdims=True)
            e = np.exp(z)
            x = e / e.sum(axis=1, keepdims=True)
    if x.ndim != 2:
        raise NNetError("model did not end with per-class scores")
    return x


def predictions(scores: np.ndarray, k: int = 1) -> np.ndarray:
    """Top-k class indices per row, ties broken toward the lower index."""
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, :k]


def accuracy(scores: np.ndarray, labels: np.ndarray, k: int = 5):
    """-> (top1, topk) percentages."""
    top = predictions(scores, k)
    labels = np.asarray(labels).reshape(-1, 1)
    top1 = float(np.mean(top[:, :1] == labels) * 100.0)
    topk = float(np.mean((top == labels).any(axis=1)) * 100.0)
    return top1, topk
