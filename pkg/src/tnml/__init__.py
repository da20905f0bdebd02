"""Tensor-network classifiers with entanglement-based auditing and compression.

The package trains loop-free tensor networks (matrix product states and
binary tree tensor networks) on images encoded with the spin map, computes
per-pixel entanglement entropies of the trained weights, and compresses
models by Schmidt truncation with a per-link error budget.
"""

__version__ = "0.1.0"

from .analysis import CompressionReport, EntropyMap, compress, compression_sweep, entropy_map, feature_entropy
from .classifier import TNClassifier, evaluate, forward, predict
from .encoding import Dataset, encode_sample, generate_synthetic, load_dataset, save_dataset, split_dataset, spin_map
from .errors import FormatError, NumericalError, ShapeError, TNMLError
from .network import TensorNetwork, build_mps, build_ttn, canonicalize, schmidt_spectrum, truncate_link
from .persistence import load_model, save_model
from .poison import BackgroundSpeckle, PoisonSpec, SinglePixel, poison_background, poison_single_pixel
from .trainer import TrainConfig, TrainReport, init_model, train

__all__ = [
    "__version__",
    "CompressionReport", "EntropyMap", "compress", "compression_sweep", "entropy_map", "feature_entropy",
    "TNClassifier", "evaluate", "forward", "predict",
    "Dataset", "encode_sample", "generate_synthetic", "load_dataset", "save_dataset", "split_dataset", "spin_map",
    "FormatError", "NumericalError", "ShapeError", "TNMLError",
    "TensorNetwork", "build_mps", "build_ttn", "canonicalize", "schmidt_spectrum", "truncate_link",
    "load_model", "save_model",
    "BackgroundSpeckle", "PoisonSpec", "SinglePixel", "poison_background", "poison_single_pixel",
    "TrainConfig", "TrainReport", "init_model", "train",
]
