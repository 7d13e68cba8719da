"""ViT-based appearance-transfer backend for the stylemark job protocol."""

from .engine import TransferEngine
from .params import NeuralJobParams
from .serve import main, serve_job

__version__ = "0.1.0"
