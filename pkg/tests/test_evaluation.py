import math

import numpy as np
import pytest
import torch
from scipy.ndimage import gaussian_filter

import oracles
from unitrans.errors import ConfigError
from unitrans.evaluation import (BC_FLOOR, bhattacharyya_color, bhattacharyya_from_histograms,
                                 channel_histograms, clip_domain_similarity, evaluate_pairs,
                                 variance_of_laplacian)


def rand_img(seed, size=16):
    return torch.as_tensor(np.random.default_rng(seed).uniform(size=(3, size, size)))


class ConstantEncoder:
    """Embeds every image of a set to one fixed axis chosen by its first pixel."""

    def encode(self, batch):
        out = torch.zeros(batch.shape[0], 4, dtype=torch.float64)
        out[:, 0 if float(batch[0, 0, 0, 0]) < 0.5 else 1] = 1.0
        return out


def test_clip_similarity_identity_and_orthogonal(toy):
    imgs = [rand_img(i) for i in range(5)]
    assert clip_domain_similarity(imgs, imgs, toy["image_encoder"]) == pytest.approx(1.0, abs=1e-12)
    dark = [torch.zeros(3, 4, 4)] * 2
    light = [torch.ones(3, 4, 4)] * 2
    assert clip_domain_similarity(dark, light, ConstantEncoder()) == 0.0


def test_clip_similarity_symmetric_and_shuffle_invariant(toy):
    a = [rand_img(i) for i in range(4)]
    b = [rand_img(10 + i) for i in range(4)]
    enc = toy["image_encoder"]
    s = clip_domain_similarity(a, b, enc)
    assert s == pytest.approx(clip_domain_similarity(b, a, enc), abs=1e-12)
    assert s == pytest.approx(clip_domain_similarity(a[::-1], b, enc), abs=1e-12)
    with pytest.raises(ConfigError):
        clip_domain_similarity([], b, enc)


def test_bhattacharyya_two_bin_hand_value():
    got = bhattacharyya_from_histograms([0.5, 0.5], [0.25, 0.75])
    assert got == pytest.approx(-math.log(math.sqrt(0.125) + math.sqrt(0.375)), abs=1e-12)
    assert got == pytest.approx(0.034668, abs=1e-6)


def test_bhattacharyya_identity_and_clamp():
    img = rand_img(0)
    assert bhattacharyya_color(img, img) == 0.0
    black, white = torch.zeros(3, 4, 4), torch.ones(3, 4, 4)
    assert bhattacharyya_color(black, white, 16) == pytest.approx(-math.log(BC_FLOOR))
    with pytest.raises(ConfigError):
        bhattacharyya_color(img, img, bins=10)


def test_bhattacharyya_matches_oracle_and_properties():
    for seed in range(10):
        a, b = rand_img(seed), rand_img(seed + 100)
        for bins in (16, 32):
            want = np.mean([oracles.bhattacharyya(oracles.histogram(ca.flatten().tolist(), bins),
                                                  oracles.histogram(cb.flatten().tolist(), bins))
                            for ca, cb in zip(a, b)])
            assert bhattacharyya_color(a, b, bins) == pytest.approx(want, abs=1e-12)
        assert bhattacharyya_color(a, b) == bhattacharyya_color(b, a)
        perm = torch.as_tensor(np.random.default_rng(seed).permutation(256))
        shuffled = a.flatten(1)[:, perm].reshape(a.shape)
        assert bhattacharyya_color(a, b) == pytest.approx(bhattacharyya_color(shuffled, b), abs=1e-12)


def test_histograms_are_normalised():
    h = channel_histograms(rand_img(3), 16)
    assert h.shape == (3, 16) and np.allclose(h.sum(1), 1.0)


def test_vol_constant_and_impulse():
    assert variance_of_laplacian(torch.full((3, 8, 8), 0.4)) == pytest.approx(0.0, abs=1e-20)
    img = torch.zeros(3, 5, 5, dtype=torch.float64)
    img[:, 2, 2] = 1.0
    # valid 3x3 response: centre -4, four edge neighbours 1, corners 0
    assert variance_of_laplacian(img) == pytest.approx(20 / 9, abs=1e-12)


def test_vol_matches_oracle_and_constant_shift():
    for seed in range(5):
        img = rand_img(seed)
        gray = (0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]).tolist()
        assert variance_of_laplacian(img) == pytest.approx(oracles.variance_of_laplacian(gray), abs=1e-12)
        assert variance_of_laplacian(img + 0.1) == pytest.approx(variance_of_laplacian(img), abs=1e-12)


def test_vol_blur_ordering(toy):
    g = toy["generator"]
    for img in g.generate(g.sample_w(5, 7)):
        blurred = torch.as_tensor(gaussian_filter(img.numpy(), sigma=(0, 1.0, 1.0)))
        assert variance_of_laplacian(blurred) < variance_of_laplacian(img)


def test_evaluate_pairs_rows(toy):
    pairs = [{"task": "t", "result": rand_img(i), "reference": rand_img(i + 50)} for i in range(3)]
    rows = evaluate_pairs(pairs, ["clip", "bd", "vol"], toy["image_encoder"])
    assert [(r["metric"], r["bins"]) for r in rows] == [
        ("clip_similarity", ""), ("bhattacharyya", 16), ("bhattacharyya", 32), ("variance_of_laplacian", "")]
    with pytest.raises(ConfigError):
        evaluate_pairs(pairs, ["niqe"])
    with pytest.raises(ConfigError):
        evaluate_pairs(pairs, ["clip"])
