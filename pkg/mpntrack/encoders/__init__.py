from . import linear, features

__all__ = [
    "linear",
    "features",
]
