"""Fleming-Viot particle systems on finite absorbed chains: genealogy, spine and side branches."""

__version__ = "0.1.0"

from .ctmc import (
    FiniteChainModel,
    Path,
    QProcess,
    QsdResult,
    expm_uniformized,
    lambda_t,
    load_model,
    qprocess_generator,
    qsd,
    simulate_path,
    simulate_qprocess,
    stationary_distribution,
    survival_conditioned_dist,
    transition_matrix,
    validate_model,
)
from .errors import FvSpineError, ModelValidationError, NodeCapExceeded
from .fv import FvRun, assemble_run, branch_counts, empirical_measure, read_bundle, simulate_fv, write_bundle
from .genealogy import Label, dhp, extract_spine, label_of, mrca_time, spine_window
from .pairchain import fixed_n_gap_report, product_generator, race_harmonic, spine_marginal
from .sidebranch import BranchingTree, extract_z_tree, simulate_v_tree, tree_statistics, v_tree_size_distribution

__all__ = [
    "FiniteChainModel",
    "Path",
    "QProcess",
    "QsdResult",
    "expm_uniformized",
    "lambda_t",
    "load_model",
    "qprocess_generator",
    "qsd",
    "simulate_path",
    "simulate_qprocess",
    "stationary_distribution",
    "survival_conditioned_dist",
    "transition_matrix",
    "validate_model",
    "FvSpineError",
    "ModelValidationError",
    "NodeCapExceeded",
    "FvRun",
    "assemble_run",
    "branch_counts",
    "empirical_measure",
    "read_bundle",
    "simulate_fv",
    "write_bundle",
    "Label",
    "dhp",
    "extract_spine",
    "label_of",
    "mrca_time",
    "spine_window",
    "fixed_n_gap_report",
    "product_generator",
    "race_harmonic",
    "spine_marginal",
    "BranchingTree",
    "extract_z_tree",
    "simulate_v_tree",
    "tree_statistics",
    "v_tree_size_distribution",
]
