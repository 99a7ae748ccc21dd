"""Solver for an infinite-horizon investment-consumption problem where one
asset trades only at the arrival times of a Poisson clock.

The public surface mirrors the subsystems: closed-form market constants and
Merton benchmarks (``model``), lattice containers (``lattice``), the
nonlocal averaging operator (``gop``), the wealth-split maximization
(``hop``), the finite-horizon PDE stage (``hjb``), the outer fixed point
(``driver``), the Monte-Carlo oracle (``mc``), and the CLI (``cli``).
"""

from .driver import (IterationConfig, NoConvergence, PolicyBundle, Solution,
                     SolveReport, choose_horizon, extract_policy, iterate)
from .gop import JLaw, QuadratureRule, g_field, g_point, gauss_hermite
from .hjb import (CflUnsatisfiable, DegenerateJet, HamiltonianArgs,
                  NonFiniteValue, SolverConfig, boundary_x0,
                  hamiltonian_closed, solve_stage)
from .hop import h_apply, h_field
from .lattice import (GridSpec, RadialField, ShapeReport, ValueField,
                      interp1, interp2, load_field, save_field, shape_check)
from .mc import (InadmissiblePolicy, McResult, PathConfig, dpp_check,
                 moment_check, simulate_policy)
from .model import (DerivedConstants, MarketParams, UnboundedConjugate,
                    UtilityPower, WellPosednessViolated, compute_k_tilde,
                    derive_constants, merton_fractions, merton_value)

__version__ = "0.1.0"
