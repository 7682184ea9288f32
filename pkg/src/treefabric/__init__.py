"""Unified-DAG compiler and cycle-level simulator for a reconfigurable tree
fabric running probabilistic and logical kernels."""
from .config import MachineConfig, load_config, parse_config
from .dag import Dag, DagNode, Kind, evaluate

__version__ = "0.1.0"

__all__ = ["MachineConfig", "load_config", "parse_config", "Dag", "DagNode", "Kind", "evaluate",
           "__version__"]
