import numpy as np
import pytest
import torch

from unitrans.adapters import ToyGenerator
from unitrans.applications import (contact_sheet, interpolate, load_png, mix, random_rect_mask,
                                   save_png, to_uint8, translate_degraded)
from unitrans.engine import Hyperparams, Translator
from unitrans.errors import ConfigError, DimensionError
from unitrans.objectives import Mask, area_downsample, loss_mse


def codes(g, seed=0):
    wa, wb = g.sample_w(2, seed)
    return wa, wb


def test_interpolation_endpoints_and_midpoint(toy):
    g = toy["generator"]
    wa, wb = codes(g)
    imgs = interpolate(wa, wb, 3, g)
    assert torch.equal(imgs[0], g.generate(wa)) and torch.equal(imgs[-1], g.generate(wb))
    assert torch.allclose(imgs[1], g.generate((wa + wb) / 2), atol=1e-12)
    with pytest.raises(DimensionError):
        interpolate(wa, wb[:4], 3, g)
    with pytest.raises(ConfigError):
        interpolate(wa, wb, 1, g)


def test_mix_boundaries_and_asymmetry(toy):
    g = toy["generator"]
    wa, wb = codes(g, 1)
    assert torch.equal(mix(wa, wb, g, 0), g.generate(wb))
    assert torch.equal(mix(wa, wb, g, g.n_layers), g.generate(wa))
    assert not torch.equal(mix(wa, wb, g), mix(wb, wa, g))
    with pytest.raises(ConfigError):
        mix(wa, wb, g, g.n_layers + 1)


def test_mix_default_split_on_eighteen_layers():
    g = ToyGenerator(n_layers=18)
    wa, wb = codes(g, 2)
    from unitrans.adapters import mix_styles
    assert torch.equal(mix(wa, wb, g), mix_styles(g, [wa, wb], [range(4), range(4, 18)]))


def test_random_rect_mask_area_and_seed():
    for seed in range(20):
        m = random_rect_mask(32, 32, seed)
        hole = 1 - m.coverage
        assert 0.2 <= hole <= 0.5
        ys, xs = np.nonzero((m.array == 0).numpy())
        assert (ys.max() - ys.min() + 1) * (xs.max() - xs.min() + 1) == len(ys)
    assert torch.equal(random_rect_mask(32, 32, 3).array, random_rect_mask(32, 32, 3).array)


def test_masked_mse_gradient_support():
    rng = np.random.default_rng(0)
    a = torch.as_tensor(rng.uniform(size=(3, 32, 32))).requires_grad_()
    b = torch.as_tensor(rng.uniform(size=(3, 32, 32)))
    m = torch.ones(32, 32, dtype=torch.float64)
    m[:, 16:] = 0
    g, = torch.autograd.grad(loss_mse(a, b, Mask(m)), a)
    assert bool((g[:, :, 16:] == 0).all()) and bool((g[:, :, :16] != 0).all())


@pytest.fixture(scope="module")
def src(source_generator):
    return source_generator.generate(source_generator.sample_w(1, 1000)[0])


def engine(toy, toy_stats, n=1):
    return Translator(toy["generator"], toy["image_encoder"], toy["text_encoder"], toy["extractor"],
                      toy_stats, "photo", "cartoon", Hyperparams(n_iterations=n))


def test_all_ones_mask_matches_unmasked_first_iteration(toy, toy_stats, src):
    plain = engine(toy, toy_stats).translate(src)
    masked = translate_degraded(src, "masked", engine(toy, toy_stats), Mask(torch.ones(32, 32)))
    assert masked.trace[0] == plain.trace[0]


def test_low_res_at_full_resolution_is_plain_translate(toy, toy_stats, src):
    plain = engine(toy, toy_stats, 2).translate(src)
    low = translate_degraded(src, "low_res", engine(toy, toy_stats, 2))
    assert torch.equal(plain.image, low.image) and plain.trace == low.trace


def test_low_res_input_runs(toy, toy_stats, src):
    small = area_downsample(src, (8, 8))
    r = translate_degraded(small, "low_res", engine(toy, toy_stats, 2))
    assert r.image.shape == (3, 32, 32)


def test_degraded_errors(toy, toy_stats, src):
    eng = engine(toy, toy_stats)
    with pytest.raises(ConfigError):
        translate_degraded(src, "masked", eng)
    with pytest.raises(ConfigError):
        translate_degraded(src, "blurred", eng)
    with pytest.raises(DimensionError):
        translate_degraded(src, "masked", eng, Mask(torch.ones(16, 16)))


def test_png_roundtrip_and_contact_sheet(tmp_path, toy):
    g = toy["generator"]
    img = g.generate(g.sample_w(1, 0)[0])
    path = save_png(img, tmp_path / "a.png")
    back = load_png(path)
    assert np.array_equal(to_uint8(back), to_uint8(img))
    sheet = contact_sheet([[img, img, img], [img, img, img]], tmp_path / "sheet.png", pad=2)
    assert load_png(sheet).shape == (3, 2 * 32 + 3 * 2, 3 * 32 + 4 * 2)
    with pytest.raises(DimensionError):
        contact_sheet([[img, img[:, :8, :8]]], tmp_path / "bad.png")
