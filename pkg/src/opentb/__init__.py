"""opentb: tight-binding open-system transport with validated reduced dynamics.

Propagates lead-device-lead tight-binding systems, extracts the exact
dissipative terms and terminal currents of the device-block equation of
motion, closes that equation with pluggable dissipation functionals, and
ships two numerical companions: iterated Taylor continuation of gridded
analytic data and a finite-difference check of the density-potential
response identity.
"""

__version__ = "0.1.0"

from .model import (
    BiasProfile,
    DegenerateFillingError,
    Partition,
    PartitionedMatrix,
    TightBindingSystem,
    apply_bias,
    build_chain_system,
    equilibrium_density_matrix,
    ground_state_density_matrix,
    with_bond,
)
from .propagation import (
    DensityMatrixTrajectory,
    lead_occupation_sum,
    propagate_full,
    recurrence_time,
)
from .dissipation import (
    DissipationRecord,
    OracleRun,
    compute_Q,
    compute_Q_eigenbasis,
    current,
    landauer_current,
    record_dissipation,
    transmission,
)
from .reduced import (
    DissipationFunctional,
    ExactReplayFunctional,
    IsolatedFunctional,
    ReducedTrajectory,
    WideBandFunctional,
    propagate_reduced,
    wide_band_Q,
)
from .continuation import (
    ContinuationError,
    MultiIndex,
    SampledFunction,
    TaylorModel,
    certify_uniqueness,
    continue_along_path,
    fit_taylor,
)
from .rg_verifier import (
    Grid1D,
    GridWavefunction,
    PotentialField,
    check_rg_identity,
    compute_u,
    ground_state_1d,
    refinement_ladder,
)

__all__ = [name for name in dir() if not name.startswith("_")]
