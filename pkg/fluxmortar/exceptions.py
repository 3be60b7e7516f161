"""
Error hierarchy for the flux-mortar solver.

Every error carries a machine-readable code, a message and a details dict, and
maps to the process exit code used by the management command.
"""


class FluxMortarError(Exception):
    """
    Base class for all solver errors.
    """
    code = 'FLUXMORTAR_ERROR'
    exit_code = 1

    def __init__(self, message, details=None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def as_dict(self):
        """Return the error in the response envelope used by the run manifest."""
        return {
            'success': False,
            'error': {
                'code': self.code,
                'message': self.message,
                'details': self.details,
            }
        }


class ConfigError(FluxMortarError):
    """
    Invalid run configuration. `details` holds the offending line numbers.
    """
    code = 'CONFIG_ERROR'
    exit_code = 2


class AssemblyFailure(FluxMortarError):
    """
    Base for geometry, mesh and discretization failures.
    """
    code = 'ASSEMBLY_ERROR'
    exit_code = 3


class InvalidGeometryError(AssemblyFailure):
    code = 'INVALID_GEOMETRY'


class InvalidDecompositionError(AssemblyFailure):
    code = 'INVALID_DECOMPOSITION'


class UnsupportedMeshError(AssemblyFailure):
    code = 'UNSUPPORTED_MESH'


class AssemblyError(AssemblyFailure):
    code = 'ASSEMBLY_ERROR'


class InterfaceMismatchError(AssemblyFailure):
    code = 'INTERFACE_MISMATCH'


class MortarConditionError(AssemblyFailure):
    """
    The mortar space is not controlled by the neighbouring trace spaces.
    """
    code = 'MORTAR_CONDITION'


class CoarseOperatorError(AssemblyFailure):
    code = 'COARSE_OPERATOR'


class SolverFailure(FluxMortarError):
    """
    Base for linear solver failures.
    """
    code = 'SOLVER_ERROR'
    exit_code = 4


class LinearSolverError(SolverFailure):
    code = 'LINEAR_SOLVER'


class ConvergenceError(SolverFailure):
    """
    The interface iteration hit max_it. `report` keeps the residual history.
    """
    code = 'NOT_CONVERGED'

    def __init__(self, message, report=None, details=None):
        super().__init__(message, details)
        self.report = report


class BreakdownError(SolverFailure):
    """
    Non-positive curvature met during conjugate gradients.
    """
    code = 'CG_BREAKDOWN'

    def __init__(self, message, report=None, iterate=None, details=None):
        super().__init__(message, details)
        self.report = report
        self.iterate = iterate


class CompatibilityError(SolverFailure):
    code = 'INCOMPATIBLE_DATA'


class AcceptanceError(FluxMortarError):
    """
    A post-run acceptance assertion failed.
    """
    code = 'ACCEPTANCE_FAILED'
    exit_code = 5
