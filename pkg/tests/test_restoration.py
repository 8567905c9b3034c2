import csv

import numpy as np
import pytest
import torch
import torch.nn as nn

from uwrestore.checkpoint import CheckpointError
from uwrestore.restoration import (
    CAB,
    RestoreNet,
    RestoreNetConfig,
    RestoreTrainConfig,
    cab_forward,
    has_transposed_conv,
    load_restorer,
    lr_for_epoch,
    restoration_loss,
    restore,
    restore_array,
    save_restorer,
    train_restorer,
)
from uwrestore.restoration import train as T


def small(**kw):
    base = dict(depth=3, base_width=8, cab_per_scale=1, attention_reduction=4)
    base.update(kw)
    return RestoreNetConfig(**base)


def test_config_validation():
    RestoreNetConfig()
    for bad in (dict(depth=1), dict(base_width=4), dict(cab_per_scale=0), dict(attention_reduction=3), dict(variant="x")):
        with pytest.raises(ValueError):
            RestoreNetConfig(**bad)


def test_untrained_network_is_identity():
    net = RestoreNet(small()).eval()
    x = torch.rand(2, 3, 24, 24)
    with torch.no_grad():
        res, out = restore(net, x)
    assert torch.all(res == 0)
    assert torch.equal(out, x)


@pytest.mark.parametrize("size", [256, 250, 33])
def test_shape_preserved_with_padding(size):
    torch.manual_seed(0)
    net = RestoreNet(small(), zero_tail=False).eval()
    x = torch.rand(1, 3, size, size + 3)
    with torch.no_grad():
        res, out = restore(net, x)
    assert res.shape == out.shape == x.shape
    assert torch.allclose(out, x + res, atol=0)


def test_three_dim_input_and_array_api(rng):
    net = RestoreNet(small())
    img = rng.random((20, 21, 3))
    out = restore_array(net, img)
    assert out.shape == img.shape
    assert np.allclose(out, img.astype(np.float32), atol=1e-7)
    res, y = restore(net, torch.rand(3, 16, 16))
    assert y.shape == (3, 16, 16)


def test_no_transposed_convolution_anywhere():
    for v in ("full", "no_cal", "simple_unet"):
        net = RestoreNet(RestoreNetConfig(variant=v))
        assert not has_transposed_conv(net)
    probe = nn.Sequential(nn.ConvTranspose2d(3, 3, 2))
    assert has_transposed_conv(probe)


def test_cab_identity_when_gate_open_and_convs_zero():
    cab = CAB(8, 4, "full")
    for conv in (cab.conv1, cab.conv2):
        nn.init.zeros_(conv.weight)
        nn.init.zeros_(conv.bias)
    nn.init.zeros_(cab.attention.excite.weight)
    nn.init.constant_(cab.attention.excite.bias, 100.0)
    x = torch.randn(2, 8, 5, 5)
    assert torch.all(cab.attention.gate(x) == 1.0)
    assert torch.equal(cab_forward(cab, x), x)


def test_cab_gate_range_and_variants():
    torch.manual_seed(0)
    x = torch.randn(2, 8, 6, 6)
    full = CAB(8, 4, "full")
    g = full.attention.gate(full.conv2(full.act(full.conv1(x))))
    assert g.shape == (2, 8, 1, 1)
    assert torch.all((g > 0) & (g < 1))
    no_cal = CAB(8, 4, "no_cal")
    assert no_cal.attention is None
    body = no_cal.conv2(no_cal.act(no_cal.conv1(x)))
    assert torch.allclose(no_cal(x), x + body)
    simple = CAB(8, 4, "simple_unet")
    assert simple.attention is None
    assert torch.allclose(simple(x), simple.conv2(simple.act(simple.conv1(x))))
    with pytest.raises(ValueError):
        CAB(6, 4)
    with pytest.raises(ValueError):
        cab_forward(full, torch.randn(1, 4, 3, 3))


def test_gradient_reaches_every_parameter():
    torch.manual_seed(0)
    for v in ("full", "no_cal", "simple_unet"):
        net = RestoreNet(small(variant=v), zero_tail=False)
        _, y = restore(net, torch.rand(2, 3, 16, 16))
        (y**2).mean().backward()
        dead = [n for n, p in net.named_parameters() if p.grad is None or not torch.any(p.grad != 0)]
        assert not dead, (v, dead)


def test_restoration_loss_cases():
    x = torch.rand(1, 3, 12, 12)
    ext = lambda t: [t * 2.0]  # noqa: E731
    loss, parts = restoration_loss(x, x, 0.5, 0.5, ext)
    assert loss.item() == pytest.approx(1e-4 + 0 + 0.5 * 1e-4, rel=1e-5)
    assert parts["perceptual"] == 0.0
    y = torch.rand(1, 3, 12, 12)
    l0, p0 = restoration_loss(x, y, 0.0, 0.0)
    assert l0.item() == pytest.approx(p0["charbonnier"], rel=1e-6)
    assert p0["perceptual"] == 0.0 and p0["edge"] == 0.0
    assert RestoreTrainConfig().lambda_perceptual == 0.5 and RestoreTrainConfig().lambda_edge == 0.5


def test_lr_schedule():
    assert lr_for_epoch(0) == 3e-4 and lr_for_epoch(9) == 3e-4
    assert lr_for_epoch(10) == 1.5e-4 and lr_for_epoch(19) == 1.5e-4
    assert lr_for_epoch(70) == lr_for_epoch(75) == 3e-4 / 2**7


def test_patch_sampling_flips_seeded_and_balanced():
    inp = np.arange(4 * 4 * 3, dtype=np.float64).reshape(4, 4, 3)
    a = [T.sample_patch(inp, inp, 4, np.random.default_rng(s)) for s in range(400)]
    b = [T.sample_patch(inp, inp, 4, np.random.default_rng(s)) for s in range(400)]
    assert all(np.array_equal(x[0], y[0]) for x, y in zip(a, b))
    hflip = np.mean([p[0][0, 0, 0] in (inp[0, -1, 0], inp[-1, -1, 0]) for p in a])
    vflip = np.mean([p[0][0, 0, 0] in (inp[-1, 0, 0], inp[-1, -1, 0]) for p in a])
    assert 0.4 < hflip < 0.6 and 0.4 < vflip < 0.6
    # input and truth always receive the same crop and flips
    for x, y in [T.sample_patch(inp, inp + 1, 3, np.random.default_rng(s)) for s in range(20)]:
        assert np.array_equal(x + 1, y)


def _pairs(n=2, size=16):
    r = np.random.default_rng(0)
    out = []
    for _ in range(n):
        t = r.random((size, size, 3))
        out.append((np.clip(0.6 * t + 0.2, 0, 1), t))
    return out


def test_train_restorer_logs_and_checkpoints(tmp_path):
    torch.manual_seed(0)
    net = RestoreNet(small())
    cfg = RestoreTrainConfig(epochs=2, batch_size=2, crop_size=12, lambda_perceptual=0.0)
    res = train_restorer(net, _pairs(), cfg, out_dir=tmp_path, run_config="[run]\n")
    assert res.steps == 2 and res.lr_by_epoch == {0: 3e-4, 1: 3e-4}
    with open(tmp_path / "restore_log.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == T.LOG_COLUMNS and len(rows) == 3
    loaded, payload = load_restorer(tmp_path / "restorer.rsn")
    assert payload["epoch"] == 2 and payload["run_config"] == "[run]\n"
    probe = torch.rand(1, 3, 20, 20)
    with torch.no_grad():
        assert torch.equal(restore(loaded, probe)[1], restore(net.eval(), probe)[1])


def test_train_restorer_errors(monkeypatch):
    with pytest.raises(ValueError):
        train_restorer(RestoreNet(small()), [], RestoreTrainConfig(lambda_perceptual=0))
    with pytest.raises(ValueError):
        train_restorer(RestoreNet(small()), [(np.zeros((8, 8, 3)), np.zeros((9, 8, 3)))], RestoreTrainConfig(lambda_perceptual=0))
    monkeypatch.setattr(T.losses, "charbonnier", lambda a, b, cfg=None: (a - b).sum() * float("nan"))
    with pytest.raises(T.NonFiniteLoss, match="step 0"):
        train_restorer(RestoreNet(small()), _pairs(), RestoreTrainConfig(crop_size=8, lambda_perceptual=0))


def test_rsn1_checkpoint_integrity(tmp_path):
    net = RestoreNet(small())
    save_restorer(tmp_path / "a.rsn", net)
    raw = (tmp_path / "a.rsn").read_bytes()
    (tmp_path / "b.rsn").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        load_restorer(tmp_path / "b.rsn")
    flipped = bytearray(raw)
    flipped[-10] ^= 0xFF
    (tmp_path / "c.rsn").write_bytes(bytes(flipped))
    with pytest.raises(CheckpointError, match="sha256"):
        load_restorer(tmp_path / "c.rsn")
