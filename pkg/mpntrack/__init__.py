__version__ = "0.1.0"

# encoders goes before engine, features.py and engine.py import each other's modules
from . import utils, graph, encoders, engine, model, criterion, trainer, validator, rounding, pipeline, metrics, datasets, ablation

__all__ = [
            "utils",
            "graph",
            "encoders",
            "engine",
            "model",
            "criterion",
            "trainer",
            "validator",
            "rounding",
            "pipeline",
            "metrics",
            "datasets",
            "ablation",
]
