"""Nonlinear eigenpair solvers for one-homogeneous functionals, the
Laplacian with pointwise nonlinearities, and black-box operators."""

from .core import (ConvergenceError, DegenerateInputError, DomainError, GridDomain,
                   WeightedGraph, build_grid_graph, build_knn_graph, inner, norm1, norm2,
                   normalize, zero_mean)
from .functionals import (GraphTV, L1Functional, ProxConfig, eval_J, moreau_project, prox,
                          subgrad_from_prox, subgrad_l1)
from .evaluation import (DiagnosticsReport, THETA_EIGEN, calibrable_lambda,
                         gradflow_decay_oracle, kdv_soliton, local_ratio_map,
                         prox_shrinkage_oracle, theta, threshold_cut_sweep)
from .flows import (EigenpairResult, FlowConfig, IterationRecord, agp_run, agp_step, fagp_run,
                    fagp_step, ng_run, ng_step, recover_eigen_residual)
from .physics import CGConfig, PointwiseQ, cg_run
from .power import (OperatorT, RelaxedEigenResult, bhpg_run, linear_power_step,
                    naive_nonlinear_power_step, rayleigh_dagger)

__version__ = "0.1.0"
