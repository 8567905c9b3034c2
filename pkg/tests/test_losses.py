import hashlib
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import charbonnier_oracle, log_edges_oracle

from uwrestore import losses
from uwrestore.losses import (
    LossConfig,
    PerceptualUnavailable,
    VGGFeatures,
    adversarial_loss_d,
    adversarial_loss_g,
    adversarial_objective,
    charbonnier,
    disc_loss,
    edge_loss,
    gen_adv_loss,
    identity_image_loss,
    latent_recon_loss,
    load_vgg_features,
    perceptual_loss,
    ssim_loss,
)


@pytest.fixture(scope="module")
def vgg():
    with torch.random.fork_rng():
        torch.manual_seed(0)
        return VGGFeatures()


def rand(*shape, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(*shape, generator=g, dtype=torch.float64)


def test_charbonnier_floor_and_value():
    a = rand(1, 3, 8, 8)
    assert charbonnier(a, a).item() == pytest.approx(1e-4, rel=1e-12)
    b = a - 0.3
    # sqrt(0.09 + 1e-8), evaluated independently
    assert charbonnier(a, b).item() == pytest.approx(math.sqrt(0.09 + 1e-8), rel=1e-12)
    assert charbonnier(a, b).item() == pytest.approx(0.30000002, abs=1e-8)


def test_charbonnier_gradient_zero_at_equality():
    a = rand(2, 3, 4, 4).requires_grad_()
    charbonnier(a, a.detach().clone()).backward()
    assert torch.all(a.grad == 0)


def test_sum_reduction_is_mean_times_count():
    a, b = rand(1, 3, 6, 6, seed=1), rand(1, 3, 6, 6, seed=2)
    s = charbonnier(a, b, LossConfig(reduction="sum"))
    m = charbonnier(a, b)
    assert s.item() == pytest.approx(m.item() * a.numel(), rel=1e-12)
    es = edge_loss(a, b, LossConfig(reduction="sum"))
    em = edge_loss(a, b)
    assert es.item() == pytest.approx(em.item() * a.numel(), rel=1e-12)


def test_shape_mismatch_raises():
    a, b = rand(1, 3, 4, 4), rand(1, 3, 4, 5)
    for fn in (charbonnier, edge_loss, ssim_loss, latent_recon_loss, identity_image_loss):
        with pytest.raises(ValueError):
            fn(a, b)


def test_edge_loss_floor_and_constants():
    a = rand(1, 3, 12, 12)
    assert edge_loss(a, a).item() == pytest.approx(1e-4, rel=1e-12)
    c1 = torch.full((1, 3, 12, 12), 0.2, dtype=torch.float64)
    c2 = torch.full((1, 3, 12, 12), 0.9, dtype=torch.float64)
    assert edge_loss(c1, c2).item() == pytest.approx(1e-4, rel=1e-9)


def test_edge_loss_impulse_matches_direct_convolution():
    img = np.zeros((11, 11))
    img[5, 5] = 1.0
    expected = charbonnier_oracle(log_edges_oracle(img), np.zeros((11, 11)))
    got = edge_loss(torch.tensor(img)[None, None], torch.zeros(1, 1, 11, 11, dtype=torch.float64)).item()
    assert got == pytest.approx(expected, rel=1e-12)


def test_edge_loss_rejects_tiny_images():
    with pytest.raises(ValueError):
        edge_loss(rand(1, 1, 2, 2), rand(1, 1, 2, 2))


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(epsilon=0)
    with pytest.raises(ValueError):
        LossConfig(gaussian_kernel=4)
    with pytest.raises(ValueError):
        LossConfig(gaussian_sigma=-1)
    with pytest.raises(ValueError):
        LossConfig(reduction="max")


def test_ssim_loss_cases():
    a = rand(1, 3, 16, 16)
    assert ssim_loss(a, a).item() == pytest.approx(0.0, abs=1e-6)
    # mid-contrast image against its negative is structurally anti-correlated
    mid = 0.25 + 0.5 * a
    assert ssim_loss(mid, 1 - mid).item() > 1.0
    b = rand(1, 3, 16, 16, seed=5)
    assert ssim_loss(a, b).item() == pytest.approx(ssim_loss(b, a).item(), abs=1e-12)


def test_perceptual_identity_nonneg_and_blend(vgg):
    a = rand(1, 3, 32, 32, seed=3).float()
    b = rand(1, 3, 32, 32, seed=4).float()
    assert perceptual_loss(a, a, vgg).item() == 0.0
    vals = [perceptual_loss(a, (1 - t) * b + t * a, vgg).item() for t in (0.0, 0.5, 1.0)]
    assert vals[0] > vals[1] > vals[2] == 0.0
    assert perceptual_loss(a, b, vgg).item() >= 0


def test_vgg_is_frozen(vgg):
    assert not any(p.requires_grad for p in vgg.parameters())
    vgg.train()
    assert not vgg.training


def test_perceptual_missing_weights_policies(tmp_path, monkeypatch):
    monkeypatch.setattr(torch.hub, "get_dir", lambda: str(tmp_path / "hub"))
    with pytest.raises(PerceptualUnavailable, match="perceptual_on_missing"):
        load_vgg_features(LossConfig(perceptual_cache_dir=str(tmp_path)))
    assert load_vgg_features(LossConfig(perceptual_cache_dir=str(tmp_path), perceptual_on_missing="disable")) is None
    ext = load_vgg_features(LossConfig(perceptual_cache_dir=str(tmp_path), perceptual_on_missing="random"))
    assert isinstance(ext, VGGFeatures)
    with pytest.raises(PerceptualUnavailable):
        perceptual_loss(rand(1, 3, 8, 8), rand(1, 3, 8, 8), None)


def test_perceptual_checksum_is_verified(tmp_path, monkeypatch):
    monkeypatch.setattr(torch.hub, "get_dir", lambda: str(tmp_path / "hub"))
    bogus = tmp_path / losses.VGG16_FILE
    bogus.write_bytes(b"not a checkpoint")
    with pytest.raises(PerceptualUnavailable, match="checksum"):
        load_vgg_features(LossConfig(perceptual_cache_dir=str(tmp_path)))
    # a matching pin lets the loader go on to read the file
    prefix = hashlib.sha256(bogus.read_bytes()).hexdigest()[:8]
    with pytest.raises(Exception) as info:
        load_vgg_features(LossConfig(perceptual_cache_dir=str(tmp_path), perceptual_sha256_prefix=prefix))
    assert not isinstance(info.value, PerceptualUnavailable)


def test_adversarial_values():
    half = torch.full((4,), 0.5, dtype=torch.float64)
    assert adversarial_objective(half, half).item() == pytest.approx(2 * math.log(0.5), rel=1e-12)
    assert adversarial_objective(half, half).item() == pytest.approx(-1.386, abs=1e-3)
    assert adversarial_loss_d(half, half).item() == pytest.approx(-2 * math.log(0.5), rel=1e-12)
    perfect = adversarial_objective(torch.ones(3, dtype=torch.float64), torch.zeros(3, dtype=torch.float64)).item()
    assert perfect == pytest.approx(0.0, abs=1e-6)
    assert perfect <= 0.0
    g = [adversarial_loss_g(torch.tensor([p], dtype=torch.float64)).item() for p in (0.1, 0.4, 0.7, 0.99)]
    assert all(x > y for x, y in zip(g, g[1:]))


def test_adversarial_input_guards():
    with pytest.raises(ValueError):
        adversarial_loss_g(torch.tensor([1.5]))
    with pytest.raises(ValueError):
        adversarial_loss_d(torch.tensor([0.5]), torch.tensor([float("nan")]))


def test_logit_wrappers():
    real, fake = torch.randn(2, 1, 4, 4), torch.randn(2, 1, 4, 4)
    expected = adversarial_loss_d(torch.sigmoid(real), torch.sigmoid(fake))
    assert torch.allclose(disc_loss(real, fake), expected)
    assert torch.allclose(gen_adv_loss(fake), adversarial_loss_g(torch.sigmoid(fake)))
    assert torch.allclose(disc_loss(real, fake, "lsgan"), ((real - 1) ** 2).mean() + (fake**2).mean())
    assert torch.allclose(gen_adv_loss(fake, "lsgan"), ((fake - 1) ** 2).mean())


def test_l1_terms():
    a = rand(2, 8)
    assert latent_recon_loss(a, a).item() == 0.0
    assert latent_recon_loss(a + 0.5, a).item() == pytest.approx(0.5, rel=1e-12)
    perm = torch.randperm(a.numel())
    b = rand(2, 8, seed=9)
    p = lambda t: t.flatten()[perm]  # noqa: E731
    assert latent_recon_loss(p(a), p(b)).item() == pytest.approx(latent_recon_loss(a, b).item(), rel=1e-12)
    img = rand(1, 3, 5, 5)
    assert identity_image_loss(img, img).item() == 0.0
    assert identity_image_loss(img + 0.1, img).item() == pytest.approx(0.1, rel=1e-9)
    o = rand(1, 3, 5, 5, seed=11)
    assert identity_image_loss(img, o).item() == identity_image_loss(o, img).item()


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.floats(-1, 1))
def test_nonnegativity(seed, shift):
    a = rand(1, 3, 11, 11, seed=seed)
    b = (rand(1, 3, 11, 11, seed=seed + 1) + shift).clamp(0, 1)
    assert charbonnier(a, b).item() >= 0
    assert edge_loss(a, b).item() >= 0
    assert latent_recon_loss(a, b).item() >= 0
    assert identity_image_loss(a, b).item() >= 0
    assert 0.0 <= ssim_loss(a, b).item() <= 2.0
