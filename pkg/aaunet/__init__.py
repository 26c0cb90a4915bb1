__version__ = "0.1.0"

from .tensor import Tensor, GraphNode, Parameter, backward, no_grad, precision
from .blocks import VARIANTS, HaamConfig, build_variant
from .model import ModelConfig, AAUNet, AAUNetFactory, build_model
from .checkpoint import save_checkpoint, load_checkpoint
from .data import Manifest, load_manifest, load_dataset
from .training import TrainConfig, train, cross_validate
from .evaluation import evaluate_predictions, evaluate_model
