import json

import numpy as np
import pytest

from unitrans.adapters import ToyGenerator
from unitrans.domain_stats import (KL_KEYS, cache_path, collect_stats, derive_seed, format_kl_table,
                                   load_cache, save_cache)
from unitrans.errors import FingerprintError, InsufficientDataError, MissingStatsError


@pytest.fixture(scope="module")
def small(toy):
    return collect_stats(toy["generator"], toy["image_encoder"], n=1000, seed=3, domain_name="small")


def test_toy_stats_match_construction(toy, toy_stats):
    g = toy["generator"]
    assert toy_stats.n_samples == 5000 and toy_stats.p_stats.dim == 16 and toy_stats.clip_stats.dim == 512
    assert np.all(np.abs(toy_stats.p_stats.mean - g.p_mean) < 5 * g.p_std / np.sqrt(5000))
    assert toy_stats.kl_report["P(true)||P(pseudo)"] < 0.05
    assert all(v >= 0 for v in toy_stats.kl_report.values())
    assert set(toy_stats.kl_report) == set(KL_KEYS)


def test_collect_is_deterministic(toy, small):
    again = collect_stats(toy["generator"], toy["image_encoder"], n=1000, seed=3, domain_name="small")
    assert again.to_dict() == small.to_dict()


def test_skewed_generator_diverges(toy):
    b = collect_stats(ToyGenerator(skew=1.0), toy["image_encoder"], n=2000, seed=0)
    assert b.kl_report["P(true)||P(pseudo)"] > 0.5


def test_too_few_samples(toy):
    with pytest.raises(InsufficientDataError):
        collect_stats(toy["generator"], toy["image_encoder"], n=3)


def test_derived_seeds_are_distinct():
    seeds = {derive_seed(0, i) for i in range(100)}
    assert len(seeds) == 100 and derive_seed(0, 5) == derive_seed(0, 5)


def test_cache_roundtrip(tmp_path, small):
    path = save_cache(small, cache_path("small", tmp_path))
    assert path == tmp_path / "stats" / "small.stats"
    back = load_cache(path, small.generator_fingerprint, small.encoder_fingerprint)
    assert back.to_dict() == small.to_dict()
    assert np.array_equal(back.p_stats.std, small.p_stats.std)


def test_cache_tamper_and_fingerprint_rejection(tmp_path, small):
    path = save_cache(small, tmp_path / "s.stats")
    with pytest.raises(FingerprintError):
        load_cache(path, generator_fingerprint="0" * 16)
    record = json.loads(path.read_text())
    record["payload"]["generator_fingerprint"] = "deadbeef"
    path.write_text(json.dumps(record))
    with pytest.raises(FingerprintError):
        load_cache(path)


def test_missing_cache_names_stats_command(tmp_path):
    with pytest.raises(MissingStatsError) as err:
        load_cache(tmp_path / "stats" / "ffhq.stats")
    assert "unitrans stats --domain ffhq" in str(err.value)


def test_kl_table_layout(small):
    lines = format_kl_table([small, small]).splitlines()
    assert lines[0].split("\t") == ["domain", *KL_KEYS]
    assert len(lines) == 3 and lines[1].startswith("small\t")
