"""Coverage probability and area spectral efficiency of dense small-cell networks
under piecewise LoS/NLoS path loss, computed analytically and by Monte Carlo."""

from .analytic import (
    AseRecord,
    CoverageRecord,
    NetworkParams,
    ase,
    coverage_probability,
    distance_pdf_los,
    distance_pdf_nlos,
    equivalent_distance_r1,
    equivalent_distance_r2,
    laplace_los,
    laplace_nlos,
    serving_pdf_total,
    sinr_ccdf_curve,
    toy_sir,
)
from .channel import (
    FadingKind,
    Link,
    LosProbabilityPiece,
    PathLossModel,
    PathLossPiece,
    los_probability,
    path_loss,
    preset_3gpp_case1,
    preset_single_slope,
    sample_fading,
)
from .errors import BracketError, ConfigError, ConvergenceError, DivergenceError, DomainError, QuadratureError
from .quadrature import QuadratureSpec, integrate, integrate_to_infinity, solve_monotone_root
from .simulation import (
    SimulationResult,
    TrialConfig,
    TrialOutcome,
    make_config,
    run_trial,
    run_trials,
    simulate_ase,
    simulate_coverage,
    truncation_radius,
)
from .sweep import SweepSpec, emit, parse_config, run_scenario, run_sweep

__version__ = "0.1.0"
