"""Group synchronization algebra and decay diagnostics for coupled damped
second-order evolution systems on the unit interval."""

from .algebra import (
    CompatibilityError,
    CompatibilityReport,
    CouplingMatrix,
    GroupPartition,
    InvalidPartitionError,
    MatrixDomainError,
    RankReport,
    SingularMatrixError,
    StrongCompatibilityReport,
    SyncReduction,
    beta_matrix,
    build_sync_matrix,
    check_cp_compatibility,
    check_strong_compatibility,
    invsqrt_spd,
    rank_diagnostics,
    reduce_system,
    sqrt_spd,
)
from .diagnostics import (
    DecayFit,
    EnergyReport,
    InsufficientDataError,
    SizeCapError,
    SpectrumReport,
    energy_report,
    fit_decay,
    limit_energy,
    limit_residual,
    pinning_residual,
    spectrum,
    sync_error,
    synchronized_state,
)
from .integrator import (
    IntegrationError,
    MidpointStepper,
    SimConfig,
    State,
    Trajectory,
    full_energy,
    max_energy_growth,
    simulate,
)
from .models import (
    AssemblyError,
    CoupledSystem,
    DiscreteModel,
    ModelSpec,
    assemble,
    couple,
    damping_profile,
)

__version__ = "0.1.0"

__all__ = [
    "AssemblyError",
    "CompatibilityError",
    "CompatibilityReport",
    "CoupledSystem",
    "CouplingMatrix",
    "DecayFit",
    "DiscreteModel",
    "EnergyReport",
    "GroupPartition",
    "InsufficientDataError",
    "IntegrationError",
    "InvalidPartitionError",
    "MatrixDomainError",
    "MidpointStepper",
    "ModelSpec",
    "RankReport",
    "SimConfig",
    "SingularMatrixError",
    "SizeCapError",
    "SpectrumReport",
    "State",
    "StrongCompatibilityReport",
    "SyncReduction",
    "Trajectory",
    "assemble",
    "beta_matrix",
    "build_sync_matrix",
    "check_cp_compatibility",
    "check_strong_compatibility",
    "couple",
    "damping_profile",
    "energy_report",
    "fit_decay",
    "full_energy",
    "invsqrt_spd",
    "limit_energy",
    "limit_residual",
    "max_energy_growth",
    "pinning_residual",
    "rank_diagnostics",
    "reduce_system",
    "simulate",
    "spectrum",
    "sqrt_spd",
    "sync_error",
    "synchronized_state",
    "__version__",
]
