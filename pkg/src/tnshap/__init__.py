"""Exact Shapley values and interaction indices on tensor-network surrogates.

The library factors a multilinear model into a tensor train or balanced
binary tree, probes it with diagonal selector scalings at Chebyshev-Gauss
nodes, and recovers exact order-k interaction indices from one small
Vandermonde solve per feature subset -- linearly many forward contractions
instead of the 2^n coalition sweep, which is also provided as the
enumeration oracle for verification.
"""

from .attribute import (
    INCLUSION_EXCLUSION,
    SIGNED_TOGGLE,
    AttributionSet,
    ProbePlan,
    chebyshev_nodes,
    explain,
    explain_batch,
    probe_value,
    read_attribution_csv,
    shapley_weights,
    sii_weights,
    write_attribution_csv,
)
from .config import get_worker_budget, set_worker_budget
from .fit import (
    CpTeacher,
    FitConfig,
    FitReport,
    build_training_set,
    eval_quality,
    fit_student,
    gen_cp_teacher,
    gen_tree_teacher,
    rank_sweep,
)
from .lift import BINARY, FOURIER, POLY, FeatureMap, LiftSpec, off_state, selector_apply, signed_toggle
from .model_io import load_model, model_from_json_dict, model_to_json_dict, save_model
from .oracle import (
    CoalitionTable,
    diagonal_coefficient_probe,
    dump_table,
    enumerate_game,
    exact_shapley,
    exact_sii,
    load_table,
    mobius_coefficients,
    size_grouped_sums,
    zeta_reconstruct,
)
from .tensor_net import (
    BTREE,
    TT,
    TensorNetworkModel,
    TnTopology,
    capped_uniform_bonds,
    cut_rank,
    materialize_full,
)

__version__ = "0.1.0"

__all__ = [
    "AttributionSet",
    "BINARY",
    "BTREE",
    "CoalitionTable",
    "CpTeacher",
    "FOURIER",
    "FeatureMap",
    "FitConfig",
    "FitReport",
    "INCLUSION_EXCLUSION",
    "LiftSpec",
    "POLY",
    "ProbePlan",
    "SIGNED_TOGGLE",
    "TT",
    "TensorNetworkModel",
    "TnTopology",
    "build_training_set",
    "capped_uniform_bonds",
    "chebyshev_nodes",
    "cut_rank",
    "diagonal_coefficient_probe",
    "dump_table",
    "enumerate_game",
    "eval_quality",
    "exact_shapley",
    "exact_sii",
    "explain",
    "explain_batch",
    "fit_student",
    "gen_cp_teacher",
    "gen_tree_teacher",
    "get_worker_budget",
    "load_model",
    "load_table",
    "materialize_full",
    "mobius_coefficients",
    "model_from_json_dict",
    "model_to_json_dict",
    "off_state",
    "probe_value",
    "rank_sweep",
    "read_attribution_csv",
    "save_model",
    "selector_apply",
    "set_worker_budget",
    "shapley_weights",
    "signed_toggle",
    "sii_weights",
    "size_grouped_sums",
    "write_attribution_csv",
    "zeta_reconstruct",
]
