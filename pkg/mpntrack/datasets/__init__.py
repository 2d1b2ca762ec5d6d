from . import synthetic, mot, transform

__all__ = [
    "synthetic",
    "mot",
    "transform",
]
