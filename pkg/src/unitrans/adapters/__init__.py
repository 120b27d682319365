from .base import (Generator, ImageEncoder, PerceptualExtractor, TextEncoder,
                   mix_styles, resize_bicubic)
from .registry import available_keys, capabilities, load, read_registry
from .toy import ToyExtractor, ToyGenerator, ToyImageEncoder, ToyTextEncoder

__all__ = [
    "Generator", "ImageEncoder", "PerceptualExtractor", "TextEncoder",
    "ToyExtractor", "ToyGenerator", "ToyImageEncoder", "ToyTextEncoder",
    "available_keys", "capabilities", "load", "mix_styles", "read_registry",
    "resize_bicubic",
]
