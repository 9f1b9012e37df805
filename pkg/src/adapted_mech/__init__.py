"""Mechanics on the horizontal/vertical splitting of a 2n-dimensional bundle chart.

A user-supplied nonlinear connection defines an adapted frame; scalar
Lagrangians or Hamiltonians over the chart then drive equations of motion
extracted point-wise, integrated with fixed or adaptive Runge-Kutta, and
audited by a randomized invariant suite.
"""

from .expr import (
    Expression, Jet2, ExprError, ExprSyntaxError, EvalDomainError,
    parse, print_expression, eval_jet, eval_value_grad, eval_value,
)
from .frame import (
    BundlePoint, Connection, FrameEval, AdaptedDerivatives,
    eval_frame, adapted_derivatives, apply_operator, apply_dual_operator,
    operator_matrix, dual_operator_matrix,
    vector_to_adapted, vector_to_natural,
    covector_to_adapted, covector_to_natural,
)
from .forms import (
    OneFormValue, TwoFormValue, ScalarField, OneFormField,
    wedge, interior, d_scalar, d_field, d_oneform,
    i_P_oneform, i_P_twoform, d_P_scalar, d_P_field,
)
from .lagrangian import (
    LagrangianSystem, SemisprayValue, DegenerateLagrangian,
    DegenerateEulerLagrange, mechanical_lagrangian, fundamental_form,
    semispray_solve, liouville_field, lagrangian_energy, denergy,
    rhs_coefficient_matching, rhs_euler_lagrange, el_form_residual,
)
from .hamiltonian import (
    HamiltonianSystem, liouville_forms, canonical_twoform,
    hamiltonian_vector_field, dhamiltonian, energy_drift_rate,
    dynamics_residual,
)
from .hamiltonian import rhs as hamiltonian_rhs
from .integrate import IntegratorConfig, Trajectory, integrate, sweep, flow
from .verify import CheckResult, run_suite

__version__ = "0.1.0"
