"""Fault injection for tensor dataflow graphs."""

from .config import FaultType, FIConfig, InjectMode, parse_config
from .graph import Graph, Node, OpKind, execute
from .modelio import load_bundle, load_model, save_bundle, save_model
from .tensor import DType, Tensor

__version__ = "0.1.0"
