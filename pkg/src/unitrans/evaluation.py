"""Translation-quality metrics: CLIP domain similarity, colour distance, sharpness."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch
from scipy.signal import convolve2d

from .errors import ConfigError, DegenerateInputError, DimensionError

BC_FLOOR = 1e-12
LUMA_601 = (0.299, 0.587, 0.114)
LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
BINS = (16, 32)


def _as_array(img) -> np.ndarray:
    a = img.detach().cpu().numpy() if torch.is_tensor(img) else np.asarray(img)
    a = a.astype(np.float64)
    if a.ndim != 3 or a.shape[0] not in (1, 3):
        raise DimensionError(f"expected a C x H x W image, got shape {a.shape}")
    return a


def _mean_embedding(images, image_encoder) -> torch.Tensor:
    batch = torch.stack([torch.as_tensor(i) for i in images]) if not torch.is_tensor(images) else images
    with torch.no_grad():
        return image_encoder.encode(batch.to(torch.float64)).to(torch.float64).mean(0)


def clip_domain_similarity(result_images, target_images, image_encoder) -> float:
    """Cosine similarity between the mean embeddings of two image sets."""
    if len(result_images) == 0 or len(target_images) == 0:
        raise ConfigError("both image sets must be nonempty")
    a = _mean_embedding(result_images, image_encoder)
    b = _mean_embedding(target_images, image_encoder)
    na, nb = a.norm(), b.norm()
    if na == 0 or nb == 0:
        raise DegenerateInputError("mean embedding has zero norm")
    return float((a @ b) / (na * nb))


def channel_histograms(img, bins: int) -> np.ndarray:
    """Normalised per-channel histograms over [0, 1], shape (C, bins)."""
    a = _as_array(img)
    hists = [np.histogram(ch, bins=bins, range=(0.0, 1.0))[0] for ch in a]
    h = np.asarray(hists, dtype=np.float64)
    return h / h.sum(axis=1, keepdims=True)


def bhattacharyya_from_histograms(p: np.ndarray, q: np.ndarray) -> float:
    """``-ln(sum sqrt(p q))`` with the coefficient floored at 1e-12."""
    p, q = np.asarray(p, np.float64), np.asarray(q, np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"histogram shapes differ: {p.shape} vs {q.shape}")
    bc = np.sqrt(p * q).sum()
    return max(float(-np.log(max(bc, BC_FLOOR))), 0.0)


def bhattacharyya_color(I_a, I_b, bins: int = 32) -> float:
    """Channel-averaged Bhattacharyya distance between colour histograms."""
    if bins not in BINS:
        raise ConfigError(f"bins must be one of {BINS}")
    ha, hb = channel_histograms(I_a, bins), channel_histograms(I_b, bins)
    if ha.shape != hb.shape:
        raise DimensionError("images have different channel counts")
    return float(np.mean([bhattacharyya_from_histograms(p, q) for p, q in zip(ha, hb)]))


def to_gray(img) -> np.ndarray:
    a = _as_array(img)
    if a.shape[0] == 1:
        return a[0]
    return np.tensordot(LUMA_601, a, axes=1)


def variance_of_laplacian(img) -> float:
    """Variance of the 3 x 3 Laplacian response over the valid region of the luma image."""
    g = to_gray(img)
    if min(g.shape) < 3:
        raise DimensionError("image must be at least 3 x 3")
    return float(convolve2d(g, LAPLACIAN, mode="valid").var())


METRICS = {
    "clip": "clip_similarity",
    "bd": "bhattacharyya",
    "vol": "variance_of_laplacian",
}


def evaluate_pairs(pairs: Sequence[dict], metrics: Sequence[str], image_encoder=None,
                   bins: Sequence[int] = BINS, load=None) -> list[dict]:
    """Rows ``{task, metric, value, bins}`` for each task group in ``pairs``.

    Each pair record holds ``task``, ``result`` and ``reference`` image paths
    (or tensors when ``load`` is None).  Per-pair metrics are averaged per task.
    """
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ConfigError(f"unknown metrics {sorted(unknown)}; choose from {sorted(METRICS)}")
    if "clip" in metrics and image_encoder is None:
        raise ConfigError("the clip metric needs an image encoder")
    load = load or (lambda x: x)
    tasks: dict[str, list[tuple]] = {}
    for rec in pairs:
        tasks.setdefault(rec.get("task", "default"), []).append(
            (load(rec["result"]), load(rec["reference"])))
    rows = []
    for task, items in tasks.items():
        results = [r for r, _ in items]
        refs = [t for _, t in items]
        if "clip" in metrics:
            rows.append({"task": task, "metric": METRICS["clip"],
                         "value": clip_domain_similarity(results, refs, image_encoder), "bins": ""})
        if "bd" in metrics:
            for b in bins:
                v = np.mean([bhattacharyya_color(r, t, b) for r, t in items])
                rows.append({"task": task, "metric": METRICS["bd"], "value": float(v), "bins": b})
        if "vol" in metrics:
            rows.append({"task": task, "metric": METRICS["vol"],
                         "value": float(np.mean([variance_of_laplacian(r) for r in results])), "bins": ""})
    return rows
