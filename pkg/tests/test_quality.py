import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import ssim_bruteforce

from uwrestore.imaging import write_rgb
from uwrestore.quality import (
    MEAN_ID,
    QualityConfig,
    evaluate,
    psnr,
    read_report_csv,
    ssim,
    uciqe,
    uciqe_components,
    uicm,
    uiqm,
    uiqm_components,
    uism,
)


def test_psnr_closed_forms(rng):
    a = rng.random((8, 8, 3)) * 0.8
    assert psnr(a, a) == math.inf
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)
    assert psnr(a, a + 0.1, max_val=2.0) == pytest.approx(20.0 + 20 * math.log10(2), abs=1e-9)
    with pytest.raises(ValueError):
        psnr(a, a[:4])


def test_psnr_decreases_with_noise(rng):
    a = rng.random((32, 32, 3))
    noise = np.random.default_rng(7).standard_normal(a.shape)
    vals = [psnr(a, a + s * noise) for s in (0.01, 0.05, 0.2)]
    assert vals[0] > vals[1] > vals[2]


def test_ssim_trivial_cases(rng):
    a = rng.random((16, 16, 3))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    c = np.full((16, 16, 3), 0.5)
    assert ssim(c, c) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        ssim(a[:8, :8], a[:8, :8])


def test_ssim_matches_bruteforce_reference():
    a = np.random.default_rng(0).random((24, 24, 3))
    b = np.clip(a + np.random.default_rng(1).normal(0, 0.1, a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(ssim_bruteforce(a, b), abs=1e-10)


def test_ssim_agrees_with_skimage():
    from skimage.metrics import structural_similarity

    a = np.random.default_rng(2).random((20, 30, 3))
    b = np.clip(a + np.random.default_rng(3).normal(0, 0.1, a.shape), 0, 1)
    ref = structural_similarity(
        a, b, channel_axis=2, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0
    )
    assert ssim(a, b) == pytest.approx(ref, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000))
def test_symmetry(seed):
    r = np.random.default_rng(seed)
    a, b = r.random((12, 12, 3)), r.random((12, 12, 3))
    assert psnr(a, b) == psnr(b, a)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_uciqe_constant_image_components():
    gray = np.full((20, 20, 3), 0.5)
    c = uciqe_components(gray)
    assert c["chroma_std"] == 0.0
    assert c["contrast"] == 0.0
    c8 = uciqe_components(gray, QualityConfig(uciqe_variant="uint8_lab"))
    assert c8["chroma_std"] == 0.0 and c8["contrast"] == 0.0


def test_uciqe_contrast_monotone_in_scale():
    two_tone = np.full((20, 20, 3), 0.2)
    two_tone[:, 10:] = 0.8
    vals = [uciqe_components(two_tone * s)["contrast"] for s in (0.25, 0.5, 0.75, 1.0)]
    assert all(x < y for x, y in zip(vals, vals[1:]))


def test_uciqe_variants_and_errors(rng):
    img = rng.random((20, 20, 3))
    assert uciqe(img) != uciqe(img, QualityConfig(uciqe_variant="uint8_lab"))
    with pytest.raises(ValueError):
        uciqe(img[..., 0])
    with pytest.raises(ValueError):
        uciqe(img, QualityConfig(uciqe_variant="nope"))


def test_uicm_gray_is_zero():
    assert uicm(np.full((10, 10, 3), 0.37)) == 0.0


def test_uism_prefers_sharp_checkerboard():
    from scipy.ndimage import gaussian_filter

    yy, xx = np.mgrid[0:80, 0:80]
    board = np.where(((yy // 8) + (xx // 8)) % 2 == 0, 0.75, 0.25)
    sharp = np.repeat(board[..., None], 3, axis=2)
    blurred = np.stack([gaussian_filter(board, 2.0)] * 3, axis=2)
    assert uism(sharp) > uism(blurred)


def test_uiqm_components_and_errors(rng):
    img = rng.random((30, 30, 3))
    comp = uiqm_components(img)
    cfg = QualityConfig()
    expected = cfg.uiqm_c1 * comp["uicm"] + cfg.uiqm_c2 * comp["uism"] + cfg.uiqm_c3 * comp["uiconm"]
    assert uiqm(img) == pytest.approx(expected, rel=1e-12)
    assert uiqm(img, QualityConfig(uiqm_variant="rgb_blocks")) != uiqm(img)
    with pytest.raises(ValueError):
        uiqm(img[:5, :5])
    with pytest.raises(ValueError):
        uiqm(img[..., :2])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), h=st.sampled_from([20, 30]), w=st.sampled_from([20, 40]))
def test_no_reference_metrics_are_flip_invariant(seed, h, w):
    img = np.random.default_rng(seed).random((h, w, 3))
    flipped = img[:, ::-1]
    assert uciqe(flipped) == pytest.approx(uciqe(img), rel=1e-9, abs=1e-12)
    assert uiqm(flipped) == pytest.approx(uiqm(img), rel=1e-9, abs=1e-12)


@pytest.fixture
def image_dirs(tmp_path):
    r = np.random.default_rng(5)
    out, truth = tmp_path / "out", tmp_path / "truth"
    for i in range(3):
        t = r.random((24, 24, 3))
        write_rgb(truth / f"im{i}.png", t)
        write_rgb(out / f"im{i}.png", np.clip(t + r.normal(0, 0.05, t.shape), 0, 1))
    return out, truth


def test_evaluate_with_truth(image_dirs, tmp_path):
    out, truth = image_dirs
    rep = evaluate(out, truth, method="m", dataset="d")
    assert [r["image_id"] for r in rep.rows] == ["im0", "im1", "im2"]
    assert rep.columns == ["image_id", "psnr", "ssim", "uciqe", "uiqm"]
    assert all(set(r) == set(rep.columns) for r in rep.rows)
    path = rep.write(tmp_path / "rep")
    rows, mean = read_report_csv(path)
    for col in rep.columns[1:]:
        assert mean[col] == pytest.approx(float(np.mean([r[col] for r in rows])), rel=1e-12)
    assert rep.metadata["method"] == "m" and "timestamp" in rep.metadata
    assert MEAN_ID in rep.format_table()


def test_evaluate_without_truth(image_dirs):
    rep = evaluate(image_dirs[0])
    assert rep.columns == ["image_id", "uciqe", "uiqm"]
    assert "psnr" not in rep.rows[0]


def test_evaluate_is_byte_reproducible(image_dirs):
    out, truth = image_dirs
    assert evaluate(out, truth).to_csv() == evaluate(out, truth).to_csv()


def test_evaluate_reports_unmatched(image_dirs):
    out, truth = image_dirs
    write_rgb(out / "orphan.png", np.zeros((24, 24, 3)))
    rep = evaluate(out, truth)
    assert len(rep.rows) == 3
    assert any("orphan" in w for w in rep.warnings)


def test_inf_psnr_serialized(tmp_path):
    img = np.random.default_rng(0).random((16, 16, 3))
    write_rgb(tmp_path / "a" / "x.png", img)
    write_rgb(tmp_path / "b" / "x.png", img)
    csv_text = evaluate(tmp_path / "a", tmp_path / "b").to_csv()
    assert csv_text.splitlines()[1].split(",")[1] == "inf"
