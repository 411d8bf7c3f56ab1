"""Forward and inverse Born series for scalar waves with polynomial nonlinearities."""

__version__ = "0.1.0"

from .discretization import (BoundarySource, DiskGrid, SensorLayout,
                             build_disk_grid, gaussian_boundary_source,
                             make_sensor_layout)
from .helmholtz import (Field, GreensOperator, HelmholtzOperator, assemble,
                        b_apply, check_wellposed, compute_mu, greens_operator,
                        solve_background)
from .forward import (BornSeries, ForwardOperators, Nonlinearity,
                      ScatteringData, born_sum, born_term_equal_args,
                      build_forward_operators, fixed_point_solve, k_n_apply,
                      scattering_data)
from .bounds import (BoundsReport, build_bounds_report, cubic_constants,
                     error_bound, general_constants,
                     generating_function_residual, inverse_radius,
                     nu_bound_check, nu_sequence)
from .inverse import (LinearizedMap, Reconstruction, Regularizer, assemble_k1,
                      ibs_reconstruct, operator_norm, projection,
                      pseudoinverse)
from .experiments import (ExperimentConfig, PhantomConfig, build_phantom,
                          config_hash, run_bounds, run_forward,
                          run_reconstruct, run_sweep)
