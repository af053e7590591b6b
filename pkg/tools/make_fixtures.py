#!/usr/bin/env python3
"""Build the fixture network and dataset used by the accuracy-sweep tests.

Trains a tiny CNN (conv 1->3 3x3 pad 1, relu, maxpool 2, dense 48->10)
on the sklearn 8x8 digits, then exports:

    tests/fixtures/digits_cnn.json          model, base64 float32 blobs
    tests/fixtures/digits_test_images.idx   held-out u8 images
    tests/fixtures/digits_test_labels.idx   held-out u8 labels

Training happens here, offline; the shipped package only runs inference.
Before writing anything the script re-loads the artifacts through the
package loaders and checks the three properties the test suite relies
on, retrying with the next seed if one fails:

  1. widest accumulator <9,6,-48> predicts the same class as the plain
     float32 chain on every held-out sample;
  2. Top1 is non-increasing along the lsb sweep -48,-38,-28,-24,-20,-10;
  3. the degenerate <0,0,0> scratchpad scores within 3x chance.
"""

import os
import sys
import tempfile

import numpy as np
import torch
import torch.nn as tnn
from sklearn.datasets import load_digits
from sklearn.model_selection import train_test_split

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from tamm import nnet  # noqa: E402
from tamm.accumulator import AccumulatorSpec  # noqa: E402
from tamm.fdp import DotProductConfig  # noqa: E402
from tamm.formats import FLOAT32  # noqa: E402
from tamm.gemm import KernelConfig  # noqa: E402

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")
LSB_SWEEP = (-48, -38, -28, -24, -20, -10)


class TinyCNN(tnn.Module):
    def __init__(self):
        super().__init__()
        self.conv = tnn.Conv2d(1, 3, 3, stride=1, padding=1)
        self.pool = tnn.MaxPool2d(2)
        self.fc = tnn.Linear(48, 10)

    def forward(self, x):
        x = self.pool(torch.relu(self.conv(x)))
        return self.fc(x.flatten(1))


def train(seed: int):
    torch.manual_seed(seed)
    digits = load_digits()
    x_train, x_test, y_train, y_test = train_test_split(
        digits.images, digits.target, test_size=0.5, random_state=seed,
        stratify=digits.target)
    xt = torch.tensor(x_train[:, None, :, :] / 16.0, dtype=torch.float32)
    yt = torch.tensor(y_train, dtype=torch.long)

    net = TinyCNN()
    opt = torch.optim.Adam(net.parameters(), lr=0.03)
    loss_fn = tnn.CrossEntropyLoss()
    for _ in range(400):
        opt.zero_grad()
        loss = loss_fn(net(xt), yt)
        loss.backward()
        opt.step()
    net.eval()
    return net, x_test.astype(np.uint8), y_test.astype(np.uint8)


def export_model(net: TinyCNN) -> nnet.Model:
    conv_w = net.conv.weight.detach().numpy().astype(np.float64)
    conv_b = net.conv.bias.detach().numpy().astype(np.float64)
    fc_w = net.fc.weight.detach().numpy().astype(np.float64)
    fc_b = net.fc.bias.detach().numpy().astype(np.float64)
    layers = [
        nnet.Layer("conv2d", {"kernel": conv_w, "bias": conv_b, "stride": 1, "pad": 1}),
        nnet.Layer("relu"),
        nnet.Layer("maxpool", {"size": 2}),
        nnet.Layer("flatten"),
        nnet.Layer("dense", {"weights": fc_w, "bias": fc_b}),
    ]
    return nnet.Model(name="digits_cnn", input_shape=(1, 8, 8),
                      input_scale=16.0, layers=layers)


def _cfg(spec: AccumulatorSpec) -> KernelConfig:
    return KernelConfig(DotProductConfig(FLOAT32, spec))


def validate(model_path, images_path):
    model = nnet.load_model(model_path)
    images, labels = nnet.load_dataset(images_path)
    n = images.shape[0]
    report = {"samples": int(n)}

    ref = nnet.forward(model, images, mode="reference")
    ref_pred = nnet.predictions(ref, 1)[:, 0]
    report["reference_top1"] = float(np.mean(ref_pred == labels) * 100)

    widest = nnet.forward(model, images, cfg=_cfg(AccumulatorSpec(9, 6, -48)))
    widest_pred = nnet.predictions(widest, 1)[:, 0]
    same = int(np.sum(widest_pred == ref_pred))
    report["widest_matches_reference"] = same == n
    report["widest_agreement"] = f"{same}/{n}"

    top1s = []
    for lsb in LSB_SWEEP:
        scores = nnet.forward(model, images, cfg=_cfg(AccumulatorSpec(9, 6, lsb)))
        t1, _ = nnet.accuracy(scores, labels)
        top1s.append(t1)
    report["lsb_sweep_top1"] = top1s
    report["sweep_non_increasing"] = all(
        top1s[i] >= top1s[i + 1] for i in range(len(top1s) - 1))

    degen = nnet.forward(model, images, cfg=_cfg(AccumulatorSpec(0, 0, 0)))
    d1, _ = nnet.accuracy(degen, labels)
    report["degenerate_top1"] = d1
    report["degenerate_near_chance"] = d1 <= 30.0

    report["ok"] = (n >= 500 and report["widest_matches_reference"]
                    and report["sweep_non_increasing"]
                    and report["degenerate_near_chance"])
    return report


def main():
    os.makedirs(FIXTURES, exist_ok=True)
    for seed in range(20):
        print(f"--- seed {seed}")
        net, images, labels = train(seed)
        model = export_model(net)
        with tempfile.TemporaryDirectory() as tmp:
            mp = os.path.join(tmp, "digits_cnn.json")
            ip = os.path.join(tmp, "digits_test_images.idx")
            lp = os.path.join(tmp, "digits_test_labels.idx")
            nnet.save_model(model, mp)
            nnet.write_idx(ip, images)
            nnet.write_idx(lp, labels)
            report = validate(mp, ip)
            for key, val in report.items():
                print(f"  {key}: {val}")
            if report["ok"]:
                for src, name in ((mp, "digits_cnn.json"),
                                  (ip, "digits_test_images.idx"),
                                  (lp, "digits_test_labels.idx")):
                    with open(src, "rb") as fh:
                        data = fh.read()
                    with open(os.path.join(FIXTURES, name), "wb") as fh:
                        fh.write(data)
                print(f"fixtures written to {os.path.abspath(FIXTURES)} (seed {seed})")
                return 0
    print("no seed satisfied every property", file=sys.stderr)
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
