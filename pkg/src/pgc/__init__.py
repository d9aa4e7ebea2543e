"""Exact inference and learning with probabilistic generating circuits."""
from .polyring import Poly
from .circuit import (Circuit, ClosureCircuit, MarginalQuery, Sum, Product, Var, Const,
                      marginal, likelihood, expand_joint, validate_semantics)
from .detring import Kernel, WeightedGraph, lensemble_gp, dpp_gp, spanning_tree_gp
from .compose import ScopedCircuit, GroupPartition, mix, product, hier_compose, det_pgc
from .learn import SimplePgcModel, TrainConfig, train, grid_search
from .data import Dataset

__version__ = "0.1.0"

__all__ = [
    "Poly", "Circuit", "ClosureCircuit", "MarginalQuery", "Sum", "Product", "Var", "Const",
    "marginal", "likelihood", "expand_joint", "validate_semantics",
    "Kernel", "WeightedGraph", "lensemble_gp", "dpp_gp", "spanning_tree_gp",
    "ScopedCircuit", "GroupPartition", "mix", "product", "hier_compose", "det_pgc",
    "SimplePgcModel", "TrainConfig", "train", "grid_search", "Dataset",
]
