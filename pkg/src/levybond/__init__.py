"""Bond market simulation with Wiener and Poisson drivers.

Forward rates follow an HJM dynamic driven by one Brownian motion and a
finite-activity jump measure.  With finitely many jump atoms the package
constructs exact replicating bond portfolios; otherwise it certifies
non-replicability through growing moment-test bounds.
"""
from __future__ import annotations

from .errors import (
    ConfigError,
    DegenerateTestSetError,
    DependentRowsError,
    EmptyAnnulusError,
    InfiniteActivityError,
    LevyBondError,
    NonIntegrableError,
    NoThinAtomsError,
    NumericalError,
    ScenarioKindMismatchError,
    SingularSystemError,
)
from .levy import (
    DiscreteAtoms,
    Density,
    FiniteAtoms,
    Interval,
    annulus,
    compensator_integral,
    has_concentration_point,
    sample_jumps,
    total_mass,
    truncated_exponential_density,
    uniform_density,
)
from .hjm import (
    IntegratedCoefficients,
    MaturityGrid,
    ModelCoefficients,
    constant_sigma,
    drift_from_martingale_condition,
    exp_decay_sigma,
    integrate_coefficients,
    make_linear_gamma,
    separable_gamma,
    validate_coefficients,
)
from .paths import (
    BatchResult,
    DriftTable,
    JumpSnapshot,
    MarketState,
    PathRecord,
    build_drift_table,
    jump_log_multiplier,
    refine_sweep,
    reprice,
    simulate_batch,
    simulate_path,
    stochastic_integral,
)
from .claims import (
    ClaimSample,
    ClaimSpec,
    HedgeContext,
    PsiConstruction,
    bond_claim,
    classify_integrand,
    constant_psi_claim,
    make_constant_one_psi,
    make_exponential_psi,
    make_oscillating_psi,
    make_sqrt_psi,
    random_bounded_claim,
    truncate_claim_by_stopping,
)
from .hedge import (
    HedgeResult,
    minimal_prefix_length,
    run_hedge,
    select_columns,
    solve_strategy_step,
    verify_representation_match,
)
from .probe import (
    GammaCertificate,
    MomentTestSet,
    ProbeState,
    best_effort_residuals,
    concentration_probe,
    control_probe,
    discrete_support_probe,
    gamma_lower_bound,
    incompleteness_report,
    make_probe_state,
    make_test_set,
    optimize_betas,
)
from .scenarios import (
    EXPERIMENT_KINDS,
    Scenario,
    load_config,
    preset,
    preset_names,
    preset_summary,
    scenario_from_config,
)
from .experiments import ExperimentResult, run_scenario, sweep_scenario
from .report import render_figures, write_report, write_summary, write_tables

__version__ = "0.1.0"
