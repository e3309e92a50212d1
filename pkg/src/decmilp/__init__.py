"""Exact finite-horizon Dec-POMDP planning with sequence-form mixed integer programs."""

__version__ = "0.1.0"

from .bounds import BoundPair, lower_bound, pomdp_upper_bound
from .dominance import DominanceResult, eliminate
from .formulation import Variant, add_bounds, build, write_lp
from .model import DecPomdp, ModelError, load_model, parse_model, validate_model
from .oracle import OracleResult, brute_force_optimal
from .pipeline import JointPolicy, SolveResult, extract_joint_policy, solve
from .sequences import PolicyTree, Sequence, SequenceSpace, all_spaces
from .valuation import JointSequenceTable, build_table, sequence_form_value, tree_value

__all__ = [
    "BoundPair", "DecPomdp", "DominanceResult", "JointPolicy", "JointSequenceTable", "ModelError",
    "OracleResult", "PolicyTree", "Sequence", "SequenceSpace", "SolveResult", "Variant", "add_bounds",
    "all_spaces", "brute_force_optimal", "build", "build_table", "eliminate", "extract_joint_policy",
    "load_model", "lower_bound", "parse_model", "pomdp_upper_bound", "sequence_form_value", "solve",
    "tree_value", "validate_model", "write_lp",
]
