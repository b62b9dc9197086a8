//! Numerical laboratory for parabolic minimality and gradient flows.
//!
//! The crate builds up from sampled fields on uniform space-time grids
//! (`grid`, `field`) through integral functionals with growth and
//! continuity validators (`functional`), gradient-flow solvers for
//! double-well reaction-diffusion, nonlinear filtration, and p-Laplace
//! problems (`flow`), a falsifiable variational-inequality checker
//! (`minimality`), epsilon-sweep experiments that compare flows against
//! their limit problems (`sweep`), and a batch experiment runner behind
//! the `parmin` binary (`config`, `experiment`, `io`).

pub mod config;
pub mod error;
pub mod experiment;
pub mod field;
pub mod flow;
pub mod functional;
pub mod grid;
pub mod io;
pub mod minimality;
pub mod phi;
pub mod sweep;

pub use config::{parse_config, ExperimentConfig, ExperimentId};
pub use error::{Error, Result};
pub use experiment::{cli_main, list_experiments, run_experiment, Assertion, ExperimentReport};
pub use field::{sine_bank_spatial, sine_pairing_bank, sw_distance, SpaceTimeField, SpatialField, SwReport};
pub use flow::{
    solve, EstimateNorms, FlowBoundary, FlowFamily, FlowProblem, FlowSolution,
    InitialConvention, SolverMeta, Stepper,
};
pub use functional::{
    check_growth, check_hoelder, constant_coeff, count_interfaces_1d, evaluate_functional,
    ginzburg_landau_family, homogenized_coefficient_1d, isotropic_coeff, limit_perimeter_value,
    make_filtration, make_ginzburg_landau, make_growth_violator, make_hoelder_violator,
    make_p_laplace, oscillating_filtration_family_1d, peak_density, FamilyKind, FamilyLimit,
    FunctionalFamily, FunctionalSpec, ValidatorReport, SURFACE_TENSION,
};
pub use grid::{BoundaryKind, Grid};
pub use io::{
    field_from_snapshot, field_plot_csv, read_checkpoint, sidecar_text, snapshot_bytes,
    verify_manifest, ArtifactWriter,
};
pub use minimality::{
    check_parabolic_minimum, generate_eta_bank, resolution_tolerance, slack_decomposition,
    MinimalityReport, TestFunction,
};
pub use phi::{PhiComponent, PhiMap};
pub use sweep::{
    data_pairing_bank, layered_double_well_sweep, oscillating_filtration_sweep,
    recovery_sequence, run_sweep, sign_pattern, weak_l1_diagnostic, BankConfig, CellSchedule,
    EpsRecord, EpsSweepReport, MemberDiagnostics, MemberOutcome, SweepFlowConfig, SweepInitial,
};
