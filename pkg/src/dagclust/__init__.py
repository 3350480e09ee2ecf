"""Joint DAG estimation and clustering of heterogeneous subjects.

Each subject's measurements follow a linear structural equation model
X = X W + Z with an acyclic weighted adjacency W.  Subjects are clustered
by fusing pairwise differences of their W estimates under a groupwise
truncated-lasso penalty, solved by a difference-of-convex outer loop with
an ADMM inner loop.
"""

from .matfun import matrix_exp, acyclicity_h, acyclicity_grad
from .sem import SubjectData, reconstruction_loss, reconstruction_grad
from .datagen import ScenarioSpec, Scenario, generate_cluster_dag, simulate_subject, generate_scenario
from .boxopt import BoxProblem, minimize_box, minimize_l1_smooth
from .single_dag import SingleFitOptions, fit_single_dag, run_baseline
from .dc_admm import Hyperparams, FitState, dc_admm_fit, init_estimates, admm_solve
from .clustering import ClusteringResult, dissimilarity_matrix, complete_linkage_cut, consensus_matrices, cluster_fit
from .metrics import ari, homogeneity_completeness, skeleton_of, edge_metrics, validation_recon_error
from .harness import GridSpec, rowwise_kfold, grid_search, run_experiment

__version__ = "0.1.0"
