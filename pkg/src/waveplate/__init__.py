"""Spectral Galerkin simulation of a wave chamber coupled to a clamped elastic wall."""
from .geometry import (
    ConfigurationError,
    Domain,
    Quadrature,
    WaveMode,
    BeamMode,
    PlateBasis,
    solve_beam_roots,
    eval_wave_mode,
    trace_wave_mode,
    build_plate_basis,
    wave_modes,
)
from .assembly import (
    SourceSpec,
    GalerkinOperators,
    assemble,
    project_wave_source,
    project_plate_source,
    eval_fields,
)
from .integrator import (
    ConvergenceError,
    ModalState,
    Trajectory,
    project_initial_data,
    rhs,
    step_rk4,
    step_implicit_midpoint,
    integrate,
)
from .diagnostics import (
    EnergyReport,
    energy,
    energy_report,
    identity_residual,
    gronwall_bound,
    volterra_majorant,
    blowup_time_estimate,
    weak_form_residual,
    weak_form_residuals,
    perturbation_energy,
)

__version__ = "0.1.0"
