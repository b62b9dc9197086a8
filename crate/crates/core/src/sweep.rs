//! Small-parameter sweep experiments.
//!
//! A [`FunctionalFamily`] indexes energies by a layer / oscillation width
//! `eps` and carries a limit convention. This module solves the matching
//! gradient flows along a decreasing `eps` list and assembles, per
//! member: the energy of the computed trajectory, strong/weak convergence
//! diagnostics against a concrete limit candidate, the a-priori norms of
//! the solve, weak pairings of the initial data, and the
//! parabolic-minimality certificate where it applies. The limit candidate
//! is, in order of preference: a reference solve with the closed-form
//! limit coefficient; the sharp two-phase pattern when the members carry
//! layered data; otherwise the smallest-width member itself.
//!
//! The sweep also provides the explicit layered fields that attain the
//! interface-energy limit: [`recovery_sequence`] builds a product of
//! `tanh((x - a_i) / (sqrt(2) eps))` transition layers whose normalized
//! energy converges to one unit of [`SURFACE_TENSION`] per interface.
//! Resolving those layers is what drives the grid choice:
//! [`CellSchedule::MatchedToWidth`] scales the cell count like
//! `eps^(-3/2)`, which makes the quadrature error of the layer energy
//! fall by half per width halving instead of growing like `(h/eps)^2`
//! on a frozen grid.
//!
//! Members run in parallel; a member failure is recorded with its reason
//! and the sweep continues. Report assembly is sequential and
//! deterministic given the member results, so repeated runs of the same
//! configuration serialize to byte-identical artifacts.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{
    sine_bank_spatial, sine_pairing_bank, sw_distance, SpaceTimeField, SpatialField, SwReport,
};
use crate::flow::{
    solve, EstimateNorms, FlowBoundary, FlowFamily, FlowProblem, FlowSolution, InitialConvention,
    Stepper,
};
use crate::functional::{
    constant_coeff, count_interfaces_1d, evaluate_functional, ginzburg_landau_family,
    homogenized_coefficient_1d, isotropic_coeff, limit_perimeter_value,
    oscillating_filtration_family_1d, peak_density, FamilyLimit, FunctionalFamily, FunctionalSpec,
    ScalarCoeffFn,
};
use crate::grid::{BoundaryKind, Grid};
use crate::minimality::{
    check_parabolic_minimum, generate_eta_bank, resolution_tolerance, MinimalityReport,
};
use crate::phi::PhiMap;

/// Layered fields attaining the interface-energy limit: the product of
/// `tanh((x - a_i) / (sqrt(2) eps))` over the prescribed interface
/// locations, constant in time. The leftmost phase is `+1` and the sign
/// alternates across each interface.
///
/// Preconditions: 1D grid; `eps` positive; interfaces strictly increasing
/// and interior to the domain; consecutive interfaces more than
/// `6 sqrt(2) eps` apart, so neighbouring layers are decoupled to
/// round-off at the scale of the energies involved. Distance to the
/// domain walls is not constrained here — callers comparing energies
/// against the per-interface limit value should keep a comparable margin
/// to the walls, as the ready-made sweeps do.
pub fn recovery_sequence(grid: &Grid, interfaces: &[f64], eps: f64) -> Result<SpaceTimeField> {
    if grid.dim() != 1 {
        return Err(Error::Unsupported(
            "layered recovery fields are built on 1D grids".into(),
        ));
    }
    validate_interfaces(grid.extent(0), interfaces, eps)?;
    let profile = SpatialField::from_fn(grid.clone(), 1, BoundaryKind::Free, |x, _| {
        layer_value(x[0], interfaces, eps)
    })?;
    Ok(profile.constant_in_time())
}

/// The sharp two-phase pattern the layered fields converge to: alternating
/// `+1 / -1` starting from `+1` on the left, exactly `0` at interface
/// nodes, constant in time.
pub fn sign_pattern(grid: &Grid, interfaces: &[f64]) -> Result<SpaceTimeField> {
    if grid.dim() != 1 {
        return Err(Error::Unsupported(
            "two-phase sign patterns are built on 1D grids".into(),
        ));
    }
    check_interface_positions(grid.extent(0), interfaces)?;
    let profile = SpatialField::from_fn(grid.clone(), 1, BoundaryKind::Free, |x, _| {
        interfaces
            .iter()
            .map(|&a| {
                if x[0] > a {
                    1.0
                } else if x[0] < a {
                    -1.0
                } else {
                    0.0
                }
            })
            .product()
    })?;
    Ok(profile.constant_in_time())
}

fn layer_value(x: f64, interfaces: &[f64], eps: f64) -> f64 {
    let w = std::f64::consts::SQRT_2 * eps;
    interfaces.iter().map(|&a| ((x - a) / w).tanh()).product()
}

fn check_interface_positions(extent: (f64, f64), interfaces: &[f64]) -> Result<()> {
    let (lo, hi) = extent;
    let mut prev = f64::NEG_INFINITY;
    for &a in interfaces {
        if !a.is_finite() || a <= lo || a >= hi {
            return Err(Error::Unsupported(format!(
                "interface at {a} lies outside the open domain ({lo}, {hi})"
            )));
        }
        if a <= prev {
            return Err(Error::Unsupported(format!(
                "interfaces must be strictly increasing; {a} follows {prev}"
            )));
        }
        prev = a;
    }
    Ok(())
}

fn validate_interfaces(extent: (f64, f64), interfaces: &[f64], eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Unsupported(format!(
            "layer width eps = {eps} must be positive and finite"
        )));
    }
    check_interface_positions(extent, interfaces)?;
    let required = 6.0 * std::f64::consts::SQRT_2 * eps;
    let mut spacing = f64::INFINITY;
    for pair in interfaces.windows(2) {
        spacing = spacing.min(pair[1] - pair[0]);
    }
    if spacing <= required {
        return Err(Error::InterfacesTooClose { spacing, required });
    }
    Ok(())
}

/// Weak pairings of transformed initial data against a bank of bounded
/// smooth spatial test fields: for each member `v` of `seq`, the vector of
/// `|integral of (Phi(v) - Phi(limit)) . psi|` over the bank. Small values
/// across a rich bank witness weak convergence of the data at fixed
/// resolution.
pub fn weak_l1_diagnostic(
    seq: &[SpatialField],
    limit: &SpatialField,
    phi: &PhiMap,
    test_bank: &[SpatialField],
) -> Result<Vec<Vec<f64>>> {
    if phi.m() != limit.m() {
        return Err(Error::ShapeMismatch(format!(
            "state map has {} components, limit data {}",
            phi.m(),
            limit.m()
        )));
    }
    let phi_limit = phi.apply_spatial(limit)?;
    let limit_pairings: Vec<f64> = test_bank
        .iter()
        .map(|psi| phi_limit.inner_product(psi))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(seq.len());
    for member in seq {
        if member.grid() != limit.grid() || member.m() != limit.m() {
            return Err(Error::ShapeMismatch(
                "sequence member and limit data live on different grids or component counts"
                    .into(),
            ));
        }
        let phi_member = phi.apply_spatial(member)?;
        let mut pairings = Vec::with_capacity(test_bank.len());
        for (psi, lp) in test_bank.iter().zip(&limit_pairings) {
            pairings.push((phi_member.inner_product(psi)? - lp).abs());
        }
        out.push(pairings);
    }
    Ok(out)
}

/// Bounded smooth spatial test fields for weak pairings of data: per
/// component, the constant `1` (catching mass differences) followed by
/// the tensor-product sine modes of [`sine_bank_spatial`], each active in
/// one component and bounded by 1.
pub fn data_pairing_bank(grid: &Grid, m: usize, max_order: usize) -> Result<Vec<SpatialField>> {
    let mut bank = Vec::new();
    for c_active in 0..m {
        bank.push(SpatialField::from_fn(
            grid.clone(),
            m,
            BoundaryKind::Free,
            |_x, c| if c == c_active { 1.0 } else { 0.0 },
        )?);
    }
    bank.extend(sine_bank_spatial(grid, m, max_order)?);
    Ok(bank)
}

/// Builds the flow coefficients of one sweep member from its width.
pub type FlowForFn = Arc<dyn Fn(f64) -> Result<FlowFamily> + Send + Sync>;
/// Pointwise initial profile `(coords, component) -> value`.
pub type ProfileFn = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;

/// Initial state shared by the sweep members.
#[derive(Clone)]
pub enum SweepInitial {
    /// The same smooth profile for every member, evaluated pointwise.
    Profile(ProfileFn),
    /// Layered transition profile matched to the member's own width
    /// (scalar fields only); see [`recovery_sequence`].
    RecoveryLayers { interfaces: Vec<f64> },
}

impl std::fmt::Debug for SweepInitial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepInitial::Profile(_) => f.write_str("Profile(..)"),
            SweepInitial::RecoveryLayers { interfaces } => f
                .debug_struct("RecoveryLayers")
                .field("interfaces", interfaces)
                .finish(),
        }
    }
}

/// Spatial resolution policy across the sweep.
#[derive(Debug, Clone)]
pub enum CellSchedule {
    /// One grid for every member; cross-member field arithmetic
    /// (distances to a solved limit candidate) stays well defined.
    Fixed(Vec<usize>),
    /// Cells per axis grow as the width shrinks:
    /// `round(base * (base_eps / eps)^exponent)`, floored at 16. With
    /// layers of width `~eps` and a second-order quadrature the relative
    /// energy error scales like `(h/eps)^2 ~ eps^(2*exponent - 2)`
    /// relative to the anchor, so exponent `3/2` makes it fall like
    /// `sqrt(eps)` — halving per width halving — instead of growing
    /// like `eps^(-2)` on a frozen grid.
    MatchedToWidth {
        base: Vec<usize>,
        base_eps: f64,
        exponent: f64,
    },
}

impl CellSchedule {
    /// Cells per axis for the member of width `eps`.
    pub fn cells_for(&self, eps: f64) -> Vec<usize> {
        match self {
            CellSchedule::Fixed(cells) => cells.clone(),
            CellSchedule::MatchedToWidth {
                base,
                base_eps,
                exponent,
            } => base
                .iter()
                .map(|&b| {
                    let scaled = (b as f64) * (base_eps / eps).powf(*exponent);
                    (scaled.round() as usize).max(16)
                })
                .collect(),
        }
    }
}

/// How each member's flow is posed: coefficients per width, the grid
/// policy, the time horizon policy, and the boundary/stepper choices.
///
/// `time_rescale_power` sets the member horizon to
/// `t_final * eps^(-power)`: power `2` is the curvature timescale on
/// which layered fronts move, power `0` keeps one horizon for all
/// members. Diagnostics that compare a member against a *solved* limit
/// candidate need matching grids (fixed cells and power `0`) and are
/// skipped otherwise; comparisons against the closed-form sharp pattern
/// work on any grid.
#[derive(Clone)]
pub struct SweepFlowConfig {
    pub flow_for: FlowForFn,
    /// Flow whose solution serves as the limit candidate, for families
    /// with a closed-form limit energy.
    pub limit_flow: Option<FlowFamily>,
    pub phi: PhiMap,
    pub extent: Vec<(f64, f64)>,
    pub cell_schedule: CellSchedule,
    pub time_steps: usize,
    pub t_final: f64,
    pub time_rescale_power: f64,
    pub initial: SweepInitial,
    pub boundary: FlowBoundary,
    pub stepper: Stepper,
    /// Fraction of the explicit stability bound a step may use.
    pub step_safety: f64,
}

impl std::fmt::Debug for SweepFlowConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SweepFlowConfig")
            .field("extent", &self.extent)
            .field("cell_schedule", &self.cell_schedule)
            .field("time_steps", &self.time_steps)
            .field("t_final", &self.t_final)
            .field("time_rescale_power", &self.time_rescale_power)
            .field("initial", &self.initial)
            .field("boundary", &self.boundary)
            .field("stepper", &self.stepper)
            .field("step_safety", &self.step_safety)
            .finish()
    }
}

/// Seeded perturbation bank for the minimality certificate.
#[derive(Debug, Clone, Copy)]
pub struct BankConfig {
    pub count: usize,
    pub seed: u64,
    pub amplitude_range: (f64, f64),
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            count: 16,
            seed: 0x5eed,
            amplitude_range: (0.05, 0.5),
        }
    }
}

/// Diagnostics of one completed sweep member.
#[derive(Debug, Clone)]
pub struct MemberDiagnostics {
    /// Flow horizon actually used (`t_final * eps^(-power)`).
    pub horizon: f64,
    /// Spatial cells per axis actually used.
    pub cells: Vec<usize>,
    /// Space-time energy of the trajectory under the member's own
    /// functional.
    pub functional_value: f64,
    /// Spatial energy at time zero.
    pub initial_energy: f64,
    /// `initial_energy / eps` for interface-limit families, the
    /// space-time energy otherwise; see the report's normalization tag.
    pub normalized_value: f64,
    /// Largest increase between consecutive energy-trace entries
    /// (dissipative schemes keep this at round-off).
    pub max_energy_uptick: f64,
    /// Strong/weak distance to the limit candidate; absent when the
    /// candidate is a solved field on a different grid.
    pub sw: Option<SwReport>,
    pub norms: EstimateNorms,
    /// Largest weak pairing between the member's and the candidate's
    /// transformed initial data; absent when grids differ.
    pub initial_weak_pairing_max: Option<f64>,
    /// Certificate of the member against its own functional; absent with
    /// a note when the boundary or bank makes it inapplicable.
    pub minimality: Option<MinimalityReport>,
    pub minimality_note: Option<String>,
}

/// One row of the sweep: either full diagnostics or the failure reason.
#[derive(Debug, Clone)]
pub enum MemberOutcome {
    Completed(Box<MemberDiagnostics>),
    Failed { reason: String },
}

#[derive(Debug, Clone)]
pub struct EpsRecord {
    pub eps: f64,
    pub outcome: MemberOutcome,
}

impl EpsRecord {
    pub fn diagnostics(&self) -> Option<&MemberDiagnostics> {
        match &self.outcome {
            MemberOutcome::Completed(d) => Some(d),
            MemberOutcome::Failed { .. } => None,
        }
    }
}

/// Full record of one sweep: per-member diagnostics in the order of the
/// decreasing width list, plus the limit candidate's identity, its energy
/// under the limit convention, and its minimality certificate.
#[derive(Debug, Clone)]
pub struct EpsSweepReport {
    pub family_label: String,
    /// Which normalization `normalized_value` carries.
    pub normalization: String,
    pub time_rescale_power: f64,
    pub records: Vec<EpsRecord>,
    /// Identity of the limit candidate (reference solve, sharp pattern,
    /// or member id).
    pub limit_label: String,
    /// Energy of the limit candidate under the limit convention.
    pub limit_functional_value: Option<f64>,
    /// Lp norm (the family's p) of a solved limit candidate's state on its
    /// own grid — the natural normalizer for relative strong distances.
    /// `None` for pattern candidates, which are rebuilt per member grid.
    pub limit_state_lp: Option<f64>,
    pub limit_minimality: Option<MinimalityReport>,
    pub limit_minimality_note: Option<String>,
}

impl EpsSweepReport {
    pub fn eps_list(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.eps).collect()
    }

    pub fn all_completed(&self) -> bool {
        self.records.iter().all(|r| r.diagnostics().is_some())
    }

    /// Completed members as `(eps, diagnostics)` in list order.
    pub fn completed(&self) -> Vec<(f64, &MemberDiagnostics)> {
        self.records
            .iter()
            .filter_map(|r| r.diagnostics().map(|d| (r.eps, d)))
            .collect()
    }

    /// Smallest normalized value over the completed members.
    pub fn min_normalized_value(&self) -> Option<f64> {
        self.completed()
            .iter()
            .map(|(_, d)| d.normalized_value)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.min(v)))
            })
    }

    /// One row per member with every scalar diagnostic; failed members
    /// carry their reason in the status column and empty numeric cells.
    pub fn csv(&self) -> String {
        let mut out = String::from(
            "eps,status,horizon,cells,functional_value,initial_energy,normalized_value,\
             max_energy_uptick,strong_lp_distance,weak_gradient_pairing_max,gradient_lp_bound,\
             initial_weak_pairing_max,phi_dt_l2,state_l2,gradient_l2,min_slack,minimality_passed\n",
        );
        for rec in &self.records {
            match &rec.outcome {
                MemberOutcome::Failed { reason } => {
                    let clean = reason.replace([',', '\n'], ";");
                    out.push_str(&format!("{},failed: {clean},,,,,,,,,,,,,,,\n", rec.eps));
                }
                MemberOutcome::Completed(d) => {
                    let sw_strong = d.sw.as_ref().map(|s| s.strong_lp_distance);
                    let sw_weak = d.sw.as_ref().map(|s| {
                        s.weak_gradient_pairings
                            .iter()
                            .map(|&(_, v)| v)
                            .fold(0.0_f64, f64::max)
                    });
                    let sw_bound = d.sw.as_ref().map(|s| s.gradient_lp_bound);
                    let min_slack = d.minimality.as_ref().map(|m| m.min_slack);
                    let min_pass = d.minimality.as_ref().map(|m| m.passed);
                    let cells = d
                        .cells
                        .iter()
                        .map(|c| c.to_string())
                        .collect::<Vec<_>>()
                        .join("x");
                    out.push_str(&format!(
                        "{},ok,{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                        rec.eps,
                        d.horizon,
                        cells,
                        d.functional_value,
                        d.initial_energy,
                        d.normalized_value,
                        d.max_energy_uptick,
                        fmt_opt(sw_strong),
                        fmt_opt(sw_weak),
                        fmt_opt(sw_bound),
                        fmt_opt(d.initial_weak_pairing_max),
                        d.norms.phi_dt_l2,
                        d.norms.state_l2,
                        d.norms.gradient_l2,
                        fmt_opt(min_slack),
                        min_pass.map(|b| b.to_string()).unwrap_or_default(),
                    ));
                }
            }
        }
        out
    }

    /// Structured text summary: the sweep's identity, one line per
    /// member, and the limit candidate's verdict.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str("{\n");
        out.push_str(&format!("  family: \"{}\",\n", self.family_label));
        out.push_str(&format!("  normalization: \"{}\",\n", self.normalization));
        out.push_str(&format!(
            "  time_rescale_power: {},\n",
            self.time_rescale_power
        ));
        out.push_str("  members: [\n");
        for rec in &self.records {
            match &rec.outcome {
                MemberOutcome::Failed { reason } => {
                    out.push_str(&format!(
                        "    {{ eps: {}, status: \"failed\", reason: \"{}\" }},\n",
                        rec.eps,
                        reason.replace('"', "'")
                    ));
                }
                MemberOutcome::Completed(d) => {
                    out.push_str(&format!(
                        "    {{ eps: {}, status: \"ok\", normalized_value: {}, \
                         strong_lp_distance: {}, gradient_lp_bound: {}, min_slack: {} }},\n",
                        rec.eps,
                        d.normalized_value,
                        fmt_opt_text(d.sw.as_ref().map(|s| s.strong_lp_distance)),
                        fmt_opt_text(d.sw.as_ref().map(|s| s.gradient_lp_bound)),
                        fmt_opt_text(d.minimality.as_ref().map(|m| m.min_slack)),
                    ));
                }
            }
        }
        out.push_str("  ],\n");
        out.push_str("  limit: {\n");
        out.push_str(&format!("    label: \"{}\",\n", self.limit_label));
        out.push_str(&format!(
            "    functional_value: {},\n",
            fmt_opt_text(self.limit_functional_value)
        ));
        out.push_str(&format!(
            "    state_lp_norm: {},\n",
            fmt_opt_text(self.limit_state_lp)
        ));
        match (&self.limit_minimality, &self.limit_minimality_note) {
            (Some(m), _) => {
                out.push_str(&format!(
                    "    min_slack: {}, tolerance: {}, passed: {},\n",
                    m.min_slack, m.tolerance_used, m.passed
                ));
            }
            (None, Some(note)) => {
                out.push_str(&format!(
                    "    minimality: \"{}\",\n",
                    note.replace('"', "'")
                ));
            }
            (None, None) => {}
        }
        out.push_str("  },\n");
        out.push_str("}\n");
        out
    }

    /// Plot-ready `(eps, value)` series per diagnostic, completed members
    /// only; series with no data are omitted.
    pub fn plot_series(&self) -> Vec<(String, Vec<(f64, f64)>)> {
        let completed = self.completed();
        let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        let mut push = |name: &str, data: Vec<(f64, f64)>| {
            if !data.is_empty() {
                series.push((name.to_string(), data));
            }
        };
        push(
            "normalized_value",
            completed
                .iter()
                .map(|&(e, d)| (e, d.normalized_value))
                .collect(),
        );
        push(
            "initial_energy",
            completed
                .iter()
                .map(|&(e, d)| (e, d.initial_energy))
                .collect(),
        );
        push(
            "strong_lp_distance",
            completed
                .iter()
                .filter_map(|&(e, d)| d.sw.as_ref().map(|s| (e, s.strong_lp_distance)))
                .collect(),
        );
        push(
            "gradient_lp_bound",
            completed
                .iter()
                .filter_map(|&(e, d)| d.sw.as_ref().map(|s| (e, s.gradient_lp_bound)))
                .collect(),
        );
        push(
            "initial_weak_pairing_max",
            completed
                .iter()
                .filter_map(|&(e, d)| d.initial_weak_pairing_max.map(|v| (e, v)))
                .collect(),
        );
        push(
            "min_slack",
            completed
                .iter()
                .filter_map(|&(e, d)| d.minimality.as_ref().map(|m| (e, m.min_slack)))
                .collect(),
        );
        push(
            "state_l2",
            completed
                .iter()
                .map(|&(e, d)| (e, d.norms.state_l2))
                .collect(),
        );
        series
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt_text(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "null".into())
}

struct MemberRun {
    sol: FlowSolution,
    spec: FunctionalSpec,
}

/// The concrete stand-in for the limit field.
enum LimitCandidate {
    /// Solution of the configured limit flow (closed-form limit energy).
    Reference {
        field: SpaceTimeField,
        initial_data: SpatialField,
    },
    /// Closed-form sharp pattern; rebuilt on each member's own grid.
    SharpPattern { interfaces: Vec<f64> },
    /// Smallest-width member that completed.
    SmallestMember {
        field: SpaceTimeField,
        initial_data: SpatialField,
    },
    /// Every member failed, so nothing can stand in.
    Unavailable,
}

fn member_horizon(cfg: &SweepFlowConfig, eps: f64) -> Result<f64> {
    let horizon = cfg.t_final * eps.powf(-cfg.time_rescale_power);
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Unsupported(format!(
            "member horizon {horizon} (t_final = {}, eps = {eps}, rescale power = {}) \
             is not a positive finite time",
            cfg.t_final, cfg.time_rescale_power
        )));
    }
    Ok(horizon)
}

fn build_initial(cfg: &SweepFlowConfig, grid: &Grid, eps: f64) -> Result<SpatialField> {
    let m = cfg.phi.m();
    let kind = cfg.boundary.field_kind();
    match &cfg.initial {
        SweepInitial::Profile(f) => SpatialField::from_fn(grid.clone(), m, kind, |x, c| f(x, c)),
        SweepInitial::RecoveryLayers { interfaces } => {
            if m != 1 || grid.dim() != 1 {
                return Err(Error::Unsupported(
                    "layered initial data is scalar and one-dimensional".into(),
                ));
            }
            validate_interfaces(grid.extent(0), interfaces, eps)?;
            SpatialField::from_fn(grid.clone(), 1, kind, |x, _| {
                layer_value(x[0], interfaces, eps)
            })
        }
    }
}

fn run_member(family: &FunctionalFamily, cfg: &SweepFlowConfig, eps: f64) -> Result<MemberRun> {
    let spec = family.member_at(eps)?;
    let horizon = member_horizon(cfg, eps)?;
    let cells = cfg.cell_schedule.cells_for(eps);
    let grid = Grid::new(&cells, &cfg.extent, cfg.time_steps, horizon)?;
    let initial = build_initial(cfg, &grid, eps)?;
    let prob =
        FlowProblem::new(grid, (cfg.flow_for)(eps)?, cfg.phi.clone(), initial, cfg.boundary)?
            .with_stepper(cfg.stepper, cfg.step_safety)?
            .with_convention(InitialConvention::StateAtZero);
    let sol = solve(&prob)?;
    Ok(MemberRun { sol, spec })
}

/// The minimality certificate of one trajectory against one functional,
/// with the bank and tolerance derived from the solution itself. Returns
/// the report, or the reason the certificate does not apply here.
fn certify(
    sol: &FlowSolution,
    spec: &FunctionalSpec,
    phi: &PhiMap,
    boundary: FlowBoundary,
    bank_cfg: &BankConfig,
) -> (Option<MinimalityReport>, Option<String>) {
    if boundary != FlowBoundary::DirichletZero {
        return (
            None,
            Some(format!(
                "certificate needs homogeneous boundary values; flow boundary is {boundary:?}"
            )),
        );
    }
    let attempt = || -> Result<MinimalityReport> {
        let grid = sol.field.grid();
        let bank = generate_eta_bank(
            grid,
            sol.field.m(),
            bank_cfg.count,
            bank_cfg.seed,
            bank_cfg.amplitude_range,
        )?;
        let scale = peak_density(&sol.field, spec)?;
        let tol = resolution_tolerance(grid, scale);
        check_parabolic_minimum(&sol.field, phi, &sol.initial_data, spec, &bank, tol)
    };
    match attempt() {
        Ok(report) => (Some(report), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Solve the family's flows along a decreasing width list and assemble
/// the convergence-and-minimality report described on
/// [`EpsSweepReport`].
///
/// Preconditions: the list is nonempty, positive, and strictly
/// decreasing; the family carries a limit convention. A member solve
/// failure marks that record failed (with the reason) and the sweep
/// continues; a failed reference solve for a closed-form limit aborts the
/// sweep, because every comparison column depends on it.
pub fn run_sweep(
    family: &FunctionalFamily,
    cfg: &SweepFlowConfig,
    eps_list: &[f64],
    bank_cfg: &BankConfig,
) -> Result<EpsSweepReport> {
    if eps_list.is_empty() {
        return Err(Error::InvalidEpsList("the width list is empty".into()));
    }
    for pair in eps_list.windows(2) {
        if pair[1] >= pair[0] || !(pair[1].is_finite() && pair[0].is_finite()) {
            return Err(Error::InvalidEpsList(format!(
                "list must be strictly decreasing; {} follows {}",
                pair[1], pair[0]
            )));
        }
    }
    if !(eps_list[eps_list.len() - 1].is_finite() && eps_list[eps_list.len() - 1] > 0.0)
        || !eps_list[0].is_finite()
    {
        return Err(Error::InvalidEpsList(
            "every width must be positive and finite".into(),
        ));
    }
    if matches!(family.limit, FamilyLimit::Unknown) {
        return Err(Error::Unsupported(
            "the family carries no limit convention; a sweep needs a limit candidate".into(),
        ));
    }

    let members: Vec<(f64, std::result::Result<MemberRun, String>)> = eps_list
        .par_iter()
        .map(|&eps| (eps, run_member(family, cfg, eps).map_err(|e| e.to_string())))
        .collect();

    let mut limit_label;
    let mut limit_functional_value = None;
    let mut limit_minimality = None;
    let limit_minimality_note;
    let normalization;

    let candidate = match &family.limit {
        FamilyLimit::Spec(limit_spec) => {
            normalization = "space_time_energy".to_string();
            let flow = cfg.limit_flow.clone().ok_or_else(|| {
                Error::Unsupported(
                    "the family has a closed-form limit energy but no limit flow is configured"
                        .into(),
                )
            })?;
            // The reference uses the smallest width only to shape layered
            // initial data and pick the finest grid; profiles ignore it.
            let eps_ref = eps_list[eps_list.len() - 1];
            let grid = Grid::new(
                &cfg.cell_schedule.cells_for(eps_ref),
                &cfg.extent,
                cfg.time_steps,
                cfg.t_final,
            )?;
            let initial = build_initial(cfg, &grid, eps_ref)?;
            let prob = FlowProblem::new(grid, flow, cfg.phi.clone(), initial, cfg.boundary)?
                .with_stepper(cfg.stepper, cfg.step_safety)?
                .with_convention(InitialConvention::StateAtZero);
            let sol = solve(&prob)?;
            limit_label = "limit_reference_solve".to_string();
            limit_functional_value = Some(evaluate_functional(&sol.field, limit_spec)?);
            let (rep, note) = certify(&sol, limit_spec, &cfg.phi, cfg.boundary, bank_cfg);
            limit_minimality = rep;
            limit_minimality_note = note;
            LimitCandidate::Reference {
                field: sol.field,
                initial_data: sol.initial_data,
            }
        }
        FamilyLimit::PerimeterNormalized => {
            normalization = "initial_energy_per_width".to_string();
            limit_minimality_note = Some(
                "the limit energy is an interface count, not an integral density; \
                 the certificate does not apply"
                    .to_string(),
            );
            if let SweepInitial::RecoveryLayers { interfaces } = &cfg.initial {
                limit_label = format!("sharp_interface_pattern(k = {})", interfaces.len());
                limit_functional_value = Some(limit_perimeter_value(interfaces.len(), true));
                LimitCandidate::SharpPattern {
                    interfaces: interfaces.clone(),
                }
            } else {
                let mut chosen = LimitCandidate::Unavailable;
                limit_label = "unavailable (no member completed)".to_string();
                for (eps, run) in members.iter().rev() {
                    if let Ok(run) = run {
                        limit_label = format!("smallest_eps_member(eps = {eps})");
                        if run.sol.field.grid().dim() == 1 {
                            limit_functional_value = Some(limit_perimeter_value(
                                count_interfaces_1d(&run.sol.field),
                                true,
                            ));
                        }
                        chosen = LimitCandidate::SmallestMember {
                            field: run.sol.field.clone(),
                            initial_data: run.sol.initial_data.clone(),
                        };
                        break;
                    }
                }
                chosen
            }
        }
        FamilyLimit::Unknown => unreachable!("rejected above"),
    };

    // Pairing banks for solved candidates live on the candidate's grid;
    // the sharp pattern is rebuilt per member, banks included.
    let mut limit_state_lp = None;
    let fixed_banks = match &candidate {
        LimitCandidate::Reference { field, .. } | LimitCandidate::SmallestMember { field, .. } => {
            let grid = field.grid();
            let m = field.m();
            limit_state_lp = Some(field.lp_norm(family.p)?);
            Some((
                sine_pairing_bank(grid, m * grid.dim(), 3)?,
                data_pairing_bank(grid, m, 3)?,
            ))
        }
        _ => None,
    };

    let mut records = Vec::with_capacity(members.len());
    for (eps, run) in members {
        let run = match run {
            Ok(run) => run,
            Err(reason) => {
                records.push(EpsRecord {
                    eps,
                    outcome: MemberOutcome::Failed { reason },
                });
                continue;
            }
        };
        let diag = (|| -> Result<MemberDiagnostics> {
            let functional_value = evaluate_functional(&run.sol.field, &run.spec)?;
            let trace = &run.sol.energy_trace;
            let initial_energy = trace[0];
            let max_energy_uptick = trace
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max)
                .max(0.0);
            let normalized_value = match family.limit {
                FamilyLimit::PerimeterNormalized => initial_energy / eps,
                _ => functional_value,
            };
            let member_grid = run.sol.field.grid().clone();
            let m = run.sol.field.m();
            let mut sw = None;
            let mut initial_weak_pairing_max = None;
            match &candidate {
                LimitCandidate::Reference {
                    field,
                    initial_data,
                }
                | LimitCandidate::SmallestMember {
                    field,
                    initial_data,
                } => {
                    if &member_grid == field.grid() {
                        let (sw_bank, data_bank) =
                            fixed_banks.as_ref().expect("banks built with candidate");
                        sw = Some(sw_distance(&run.sol.field, field, sw_bank, family.p)?);
                        let pairings = weak_l1_diagnostic(
                            std::slice::from_ref(&run.sol.initial_data),
                            initial_data,
                            &PhiMap::identity(m),
                            data_bank,
                        )?;
                        initial_weak_pairing_max =
                            Some(pairings[0].iter().copied().fold(0.0_f64, f64::max));
                    }
                }
                LimitCandidate::SharpPattern { interfaces } => {
                    let pattern = sign_pattern(&member_grid, interfaces)?;
                    let sw_bank = sine_pairing_bank(&member_grid, m * member_grid.dim(), 3)?;
                    sw = Some(sw_distance(&run.sol.field, &pattern, &sw_bank, family.p)?);
                    let pattern_data = cfg.phi.apply_spatial(&pattern.at_time(0))?;
                    let data_bank = data_pairing_bank(&member_grid, m, 3)?;
                    let pairings = weak_l1_diagnostic(
                        std::slice::from_ref(&run.sol.initial_data),
                        &pattern_data,
                        &PhiMap::identity(m),
                        &data_bank,
                    )?;
                    initial_weak_pairing_max =
                        Some(pairings[0].iter().copied().fold(0.0_f64, f64::max));
                }
                LimitCandidate::Unavailable => {}
            }
            let (minimality, minimality_note) =
                certify(&run.sol, &run.spec, &cfg.phi, cfg.boundary, bank_cfg);
            Ok(MemberDiagnostics {
                horizon: member_grid.t_final(),
                cells: (0..member_grid.dim())
                    .map(|a| member_grid.cells(a))
                    .collect(),
                functional_value,
                initial_energy,
                normalized_value,
                max_energy_uptick,
                sw,
                norms: run.sol.estimate_norms,
                initial_weak_pairing_max,
                minimality,
                minimality_note,
            })
        })();
        records.push(EpsRecord {
            eps,
            outcome: match diag {
                Ok(d) => MemberOutcome::Completed(Box::new(d)),
                Err(e) => MemberOutcome::Failed {
                    reason: format!("diagnostics failed: {e}"),
                },
            },
        });
    }

    Ok(EpsSweepReport {
        family_label: family.label.clone(),
        normalization,
        time_rescale_power: cfg.time_rescale_power,
        records,
        limit_label,
        limit_functional_value,
        limit_state_lp,
        limit_minimality,
        limit_minimality_note,
    })
}

/// Ready-made sweep over the 1D quadratic family with oscillating
/// coefficient `profile(x / eps)`: members diffuse with the oscillating
/// coefficient, the limit candidate solves with the harmonic-mean
/// coefficient, and both start from the same smooth profile
/// `sin(pi (x - lo) / (hi - lo))` under homogeneous Dirichlet walls.
/// All members share one grid and horizon so the distance columns
/// materialize. The returned config has public fields; callers adjust
/// them before running.
pub fn oscillating_filtration_sweep(
    profile: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    extent: (f64, f64),
    cells: usize,
    time_steps: usize,
    t_final: f64,
) -> Result<(FunctionalFamily, SweepFlowConfig)> {
    let family = oscillating_filtration_family_1d(profile.clone(), extent, t_final)?;
    let a_bar = homogenized_coefficient_1d(&*profile)?;
    let flow_profile = profile.clone();
    let flow_for: FlowForFn = Arc::new(move |eps| {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidEpsList(format!(
                "eps = {eps} must be positive"
            )));
        }
        let pf = flow_profile.clone();
        let coeff: ScalarCoeffFn = Arc::new(move |x: &[f64], _t| pf(x[0] / eps));
        Ok(FlowFamily::Filtration {
            a: isotropic_coeff(coeff),
            source: None,
        })
    });
    let (lo, hi) = extent;
    let len = hi - lo;
    let initial: ProfileFn =
        Arc::new(move |x: &[f64], _c| (std::f64::consts::PI * (x[0] - lo) / len).sin());
    let cfg = SweepFlowConfig {
        flow_for,
        limit_flow: Some(FlowFamily::Filtration {
            a: constant_coeff(a_bar),
            source: None,
        }),
        phi: PhiMap::identity(1),
        extent: vec![extent],
        cell_schedule: CellSchedule::Fixed(vec![cells]),
        time_steps,
        t_final,
        time_rescale_power: 0.0,
        initial: SweepInitial::Profile(initial),
        boundary: FlowBoundary::DirichletZero,
        stepper: Stepper::SemiImplicit,
        step_safety: 0.9,
    };
    Ok((family, cfg))
}

/// Ready-made sweep over the 1D double-well family with layered initial
/// data: members relax the layered profile under their own width, the
/// limit candidate is the sharp two-phase pattern, and the normalized
/// initial energies converge to one [`SURFACE_TENSION`] unit per
/// interface. Cells follow [`CellSchedule::MatchedToWidth`] with exponent
/// `3/2` anchored at `base_cells` for `base_eps`, so the energy error
/// halves per width halving.
///
/// `time_rescale_power` defaults to `2.0` — the timescale on which layer
/// fronts move; set it to `0.0` to keep one horizon for all members.
pub fn layered_double_well_sweep(
    extent: (f64, f64),
    base_cells: usize,
    base_eps: f64,
    time_steps: usize,
    t_final: f64,
    interfaces: Vec<f64>,
) -> (FunctionalFamily, SweepFlowConfig) {
    let family = ginzburg_landau_family(1);
    let flow_for: FlowForFn = Arc::new(move |eps| {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidEpsList(format!(
                "eps = {eps} must be positive"
            )));
        }
        Ok(FlowFamily::GinzburgLandau { eps })
    });
    let cfg = SweepFlowConfig {
        flow_for,
        limit_flow: None,
        phi: PhiMap::identity(1),
        extent: vec![extent],
        cell_schedule: CellSchedule::MatchedToWidth {
            base: vec![base_cells],
            base_eps,
            exponent: 1.5,
        },
        time_steps,
        t_final,
        time_rescale_power: 2.0,
        initial: SweepInitial::RecoveryLayers { interfaces },
        boundary: FlowBoundary::ClampedFarField,
        stepper: Stepper::SemiImplicit,
        step_safety: 0.9,
    };
    (family, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{energy_trace, SURFACE_TENSION};

    fn space_grid(cells: usize, extent: (f64, f64)) -> Grid {
        Grid::new_1d(cells, extent, 1, 1.0).unwrap()
    }

    #[test]
    fn pure_phase_recovery_has_zero_energy() {
        let grid = space_grid(256, (-1.0, 1.0));
        let field = recovery_sequence(&grid, &[], 0.05).unwrap();
        assert_eq!(field.at(0, 0, 0), 1.0);
        assert_eq!(field.at(1, 128, 0), 1.0);
        let spec = crate::functional::make_ginzburg_landau(0.05, 1).unwrap();
        let trace = energy_trace(&field, &spec).unwrap();
        assert_eq!(trace[0], 0.0);
    }

    #[test]
    fn single_layer_energy_converges_to_surface_tension() {
        // Width-matched grids anchored at 8192 cells for the finest
        // member: the relative energy error halves per width halving.
        let schedule = CellSchedule::MatchedToWidth {
            base: vec![8192],
            base_eps: 0.0125,
            exponent: 1.5,
        };
        let sweep = [0.1, 0.05, 0.025, 0.0125];
        let mut errors = Vec::new();
        for &eps in &sweep {
            let cells = schedule.cells_for(eps)[0];
            let grid = space_grid(cells, (-1.0, 1.0));
            let field = recovery_sequence(&grid, &[0.0], eps).unwrap();
            let spec = crate::functional::make_ginzburg_landau(eps, 1).unwrap();
            let value = energy_trace(&field, &spec).unwrap()[0] / eps;
            errors.push((value - SURFACE_TENSION).abs() / SURFACE_TENSION);
        }
        for pair in errors.windows(2) {
            assert!(
                pair[1] < pair[0],
                "errors must shrink along the sweep: {errors:?}"
            );
        }
        assert!(
            errors[errors.len() - 1] <= 0.02,
            "finest member off by {}",
            errors[errors.len() - 1]
        );
    }

    #[test]
    fn layer_distance_to_sign_pattern_scales_like_sqrt_eps() {
        let grid = space_grid(8192, (-1.0, 1.0));
        let pattern = sign_pattern(&grid, &[0.0]).unwrap();
        // Closed-form tail: the squared distance of one layer to its sign
        // pattern is 2 sqrt(2) (2 ln 2 - 1) eps.
        let c = (2.0 * std::f64::consts::SQRT_2 * (2.0 * 2.0_f64.ln() - 1.0)).sqrt();
        let mut distances = Vec::new();
        for &eps in &[0.1, 0.05, 0.025, 0.0125] {
            let field = recovery_sequence(&grid, &[0.0], eps).unwrap();
            let d = field.sub(&pattern).unwrap().lp_norm(2.0).unwrap();
            let predicted = c * eps.sqrt();
            assert!(
                (d - predicted).abs() / predicted <= 0.02,
                "eps = {eps}: distance {d} vs predicted {predicted}"
            );
            distances.push(d);
        }
        for pair in distances.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!(
                (1.40..1.43).contains(&ratio),
                "halving rate {ratio} should be close to sqrt(2)"
            );
        }
    }

    #[test]
    fn two_layer_pattern_alternates_signs() {
        let grid = space_grid(4096, (-1.0, 1.0));
        let field = recovery_sequence(&grid, &[-0.5, 0.5], 0.025).unwrap();
        let value_near = |x: f64| {
            let i = ((x + 1.0) / grid.spacing(0)).round() as usize;
            field.at(0, i, 0)
        };
        // Plateau values miss the pure phases only by the tanh tails,
        // around 1.5e-6 a quarter-domain away from the interfaces.
        assert!((value_near(-0.75) - 1.0).abs() < 1e-5);
        assert!((value_near(0.0) + 1.0).abs() < 1e-5);
        assert!((value_near(0.75) - 1.0).abs() < 1e-5);
        assert_eq!(count_interfaces_1d(&field), 2);
        let spec = crate::functional::make_ginzburg_landau(0.025, 1).unwrap();
        let value = energy_trace(&field, &spec).unwrap()[0] / 0.025;
        assert!(
            (value - 2.0 * SURFACE_TENSION).abs() / (2.0 * SURFACE_TENSION) < 0.01,
            "two layers carry twice the unit energy, got {value}"
        );
    }

    #[test]
    fn crowded_interfaces_are_rejected() {
        let grid = space_grid(512, (-1.0, 1.0));
        let err = recovery_sequence(&grid, &[0.0, 0.05], 0.1).unwrap_err();
        match err {
            Error::InterfacesTooClose { spacing, required } => {
                assert!((spacing - 0.05).abs() < 1e-12);
                assert!((required - 6.0 * std::f64::consts::SQRT_2 * 0.1).abs() < 1e-12);
            }
            other => panic!("expected InterfacesTooClose, got {other:?}"),
        }
    }

    #[test]
    fn identical_data_pairs_to_exact_zero() {
        let grid = space_grid(128, (0.0, 1.0));
        let u0 = SpatialField::from_fn(grid.clone(), 1, BoundaryKind::Free, |x, _| {
            (std::f64::consts::PI * x[0]).sin()
        })
        .unwrap();
        let bank = data_pairing_bank(&grid, 1, 3).unwrap();
        let phi = PhiMap::power(1, 2.0).unwrap();
        let out = weak_l1_diagnostic(&[u0.clone(), u0.clone()], &u0, &phi, &bank).unwrap();
        for member in &out {
            for &p in member {
                assert_eq!(p, 0.0);
            }
        }
    }

    #[test]
    fn identity_map_pairings_match_direct_field_pairings() {
        let grid = space_grid(128, (0.0, 1.0));
        let u0 = SpatialField::from_fn(grid.clone(), 1, BoundaryKind::Free, |x, _| {
            (std::f64::consts::PI * x[0]).sin()
        })
        .unwrap();
        let u0e = SpatialField::from_fn(grid.clone(), 1, BoundaryKind::Free, |x, _| {
            (std::f64::consts::PI * x[0]).sin() + 0.3 * (3.0 * x[0]).cos()
        })
        .unwrap();
        let bank = data_pairing_bank(&grid, 1, 3).unwrap();
        let out = weak_l1_diagnostic(std::slice::from_ref(&u0e), &u0, &PhiMap::identity(1), &bank).unwrap();
        let diff = u0e
            .constant_in_time()
            .sub(&u0.constant_in_time())
            .unwrap();
        for (psi, &reported) in bank.iter().zip(out[0].iter()) {
            let direct = diff.pair(&psi.constant_in_time()).unwrap().abs();
            assert!(
                (reported - direct).abs() <= 1e-12,
                "pairing {reported} vs direct {direct}"
            );
        }
    }

    #[test]
    fn oscillating_data_pairings_obey_the_averaging_bound() {
        // |integral of sin(x/eps) phi| <= eps (|phi(0)| + |phi(1)| +
        // total variation of phi), by one integration by parts; the
        // pairing at the finest width must sit far below the coarsest.
        let grid = space_grid(4096, (0.0, 1.0));
        let u0 = SpatialField::from_fn(grid.clone(), 1, BoundaryKind::Free, |x, _| {
            (std::f64::consts::PI * x[0]).sin()
        })
        .unwrap();
        let bank = data_pairing_bank(&grid, 1, 3).unwrap();
        let h = grid.spacing(0);
        let mut max_pairing = Vec::new();
        for &eps in &[1.0 / 20.0, 1.0 / 80.0, 1.0 / 320.0] {
            let u0e = SpatialField::from_fn(grid.clone(), 1, BoundaryKind::Free, |x, _| {
                (std::f64::consts::PI * x[0]).sin() + (x[0] / eps).sin()
            })
            .unwrap();
            let out = weak_l1_diagnostic(
                std::slice::from_ref(&u0e),
                &u0,
                &PhiMap::identity(1),
                &bank,
            )
            .unwrap();
            let mut worst = 0.0_f64;
            for (psi, &pairing) in bank.iter().zip(out[0].iter()) {
                let vals = psi.values();
                let mut tv = 0.0;
                for w in vals.windows(2) {
                    tv += (w[1] - w[0]).abs();
                }
                let bound = eps * (vals[0].abs() + vals[vals.len() - 1].abs() + tv);
                assert!(
                    pairing <= bound * (1.0 + 0.05) + 5.0 * h * h,
                    "eps = {eps}: pairing {pairing} exceeds averaging bound {bound}"
                );
                worst = worst.max(pairing);
            }
            max_pairing.push(worst);
        }
        assert!(
            max_pairing[2] < max_pairing[0],
            "pairings must decay across a 16x width drop: {max_pairing:?}"
        );
    }

    #[test]
    fn mismatched_component_counts_are_rejected() {
        let grid = space_grid(64, (0.0, 1.0));
        let u0 = SpatialField::constant(grid.clone(), 2, BoundaryKind::Free, 1.0).unwrap();
        let bank = data_pairing_bank(&grid, 2, 2).unwrap();
        let err =
            weak_l1_diagnostic(std::slice::from_ref(&u0), &u0, &PhiMap::identity(1), &bank).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    fn degenerate_sweep() -> (FunctionalFamily, SweepFlowConfig) {
        oscillating_filtration_sweep(Arc::new(|_y| 1.0), (0.0, 1.0), 128, 40, 0.02).unwrap()
    }

    #[test]
    fn constant_coefficient_sweep_is_width_independent() {
        let (family, cfg) = degenerate_sweep();
        let bank = BankConfig {
            count: 8,
            seed: 11,
            amplitude_range: (0.05, 0.4),
        };
        let report = run_sweep(&family, &cfg, &[0.5, 0.25, 0.125], &bank).unwrap();
        assert!(report.all_completed());
        let completed = report.completed();
        let first = completed[0].1;
        for (_, d) in &completed {
            assert!((d.functional_value - first.functional_value).abs() <= 1e-12);
            assert!(
                d.sw.as_ref().unwrap().strong_lp_distance <= 1e-12,
                "identical members coincide with the limit solve"
            );
            assert!((d.norms.state_l2 - first.norms.state_l2).abs() <= 1e-12);
            assert!(d.initial_weak_pairing_max.unwrap() <= 1e-12);
        }
        // The limit candidate is a plain dissipative trajectory, so the
        // certificate must clear it.
        let lm = report.limit_minimality.as_ref().expect("limit certified");
        assert!(
            lm.passed,
            "limit candidate failed: min_slack = {}, tol = {}",
            lm.min_slack, lm.tolerance_used
        );
        assert!(report.limit_functional_value.unwrap().is_finite());
    }

    #[test]
    fn sweep_reports_are_deterministic() {
        let (family, cfg) = degenerate_sweep();
        let bank = BankConfig {
            count: 6,
            seed: 3,
            amplitude_range: (0.05, 0.4),
        };
        let a = run_sweep(&family, &cfg, &[0.5, 0.25], &bank).unwrap();
        let b = run_sweep(&family, &cfg, &[0.5, 0.25], &bank).unwrap();
        assert_eq!(a.csv(), b.csv());
        assert_eq!(a.summary(), b.summary());
    }

    #[test]
    fn oscillating_sweep_converges_to_the_effective_medium() {
        let (family, cfg) = oscillating_filtration_sweep(
            Arc::new(|y: f64| 2.0 + (2.0 * std::f64::consts::PI * y).sin()),
            (0.0, 1.0),
            512,
            60,
            0.05,
        )
        .unwrap();
        let bank = BankConfig {
            count: 8,
            seed: 5,
            amplitude_range: (0.05, 0.4),
        };
        let eps_list = [0.25, 0.125, 0.0625, 0.03125];
        let report = run_sweep(&family, &cfg, &eps_list, &bank).unwrap();
        assert!(report.all_completed());
        let completed = report.completed();
        let distances: Vec<f64> = completed
            .iter()
            .map(|(_, d)| d.sw.as_ref().unwrap().strong_lp_distance)
            .collect();
        for pair in distances.windows(2) {
            assert!(
                pair[1] < pair[0],
                "distance to the effective-medium solve must shrink: {distances:?}"
            );
        }
        let bounds: Vec<f64> = completed
            .iter()
            .map(|(_, d)| d.sw.as_ref().unwrap().gradient_lp_bound)
            .collect();
        let max_bound = bounds.iter().copied().fold(0.0_f64, f64::max);
        let min_bound = bounds.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(
            max_bound <= 2.0 * min_bound,
            "gradient norms must stay uniformly bounded: {bounds:?}"
        );
        // Every member is a dissipative trajectory of its own energy and
        // must clear the certificate; so must the limit candidate against
        // the limit energy.
        for (eps, d) in &completed {
            let m = d.minimality.as_ref().expect("member certified");
            assert!(m.passed, "member eps = {eps} failed: {}", m.min_slack);
        }
        let lm = report.limit_minimality.as_ref().expect("limit certified");
        assert!(lm.passed, "limit candidate failed: {}", lm.min_slack);
    }

    #[test]
    fn layered_sweep_tracks_the_interface_energy() {
        let (family, mut cfg) =
            layered_double_well_sweep((-1.0, 1.0), 2048, 0.05, 8, 1e-4, vec![0.0]);
        cfg.time_rescale_power = 0.0;
        let bank = BankConfig::default();
        let report = run_sweep(&family, &cfg, &[0.1, 0.05], &bank).unwrap();
        assert!(report.all_completed());
        assert!(report.limit_label.contains("sharp_interface_pattern"));
        assert_eq!(
            report.limit_functional_value.unwrap(),
            limit_perimeter_value(1, true)
        );
        let completed = report.completed();
        for (eps, d) in &completed {
            assert!(
                (d.normalized_value - SURFACE_TENSION).abs() / SURFACE_TENSION <= 0.05,
                "eps = {eps}: normalized energy {} strays from the unit value",
                d.normalized_value
            );
            assert!(
                d.max_energy_uptick <= 1e-10,
                "dissipative member gained energy: {}",
                d.max_energy_uptick
            );
            assert!(d.norms.v2_norm().is_finite());
            assert!(
                d.minimality.is_none() && d.minimality_note.is_some(),
                "certificate needs homogeneous walls and must say so"
            );
        }
        // Both members compare against the sharp pattern on their own
        // grids; the distance shrinks with the width.
        let d_coarse = completed[0].1.sw.as_ref().unwrap().strong_lp_distance;
        let d_fine = completed[1].1.sw.as_ref().unwrap().strong_lp_distance;
        assert!(
            d_fine < d_coarse,
            "distance to the sharp pattern must shrink: {d_coarse} then {d_fine}"
        );
        // Lower-bound shadow: the limit value never exceeds the smallest
        // recorded member energy by more than 5%.
        let min_norm = report.min_normalized_value().unwrap();
        assert!(limit_perimeter_value(1, true) <= min_norm * 1.05);
    }

    #[test]
    fn rescaled_horizons_scale_like_the_width_power() {
        let (family, cfg) = layered_double_well_sweep((-1.0, 1.0), 512, 0.05, 4, 1e-5, vec![0.0]);
        assert_eq!(cfg.time_rescale_power, 2.0);
        let report = run_sweep(&family, &cfg, &[0.1, 0.05], &BankConfig::default()).unwrap();
        assert!(report.all_completed());
        let completed = report.completed();
        let ratio = completed[0].1.horizon / completed[1].1.horizon;
        assert!(
            (ratio - 0.25).abs() < 1e-12,
            "halving the width quadruples the horizon, got ratio {ratio}"
        );
        // The coarse member runs on a coarser width-matched grid, yet the
        // sharp pattern is rebuilt per grid, so both distance columns
        // materialize.
        assert!(completed[0].1.cells[0] < completed[1].1.cells[0]);
        assert!(completed[0].1.sw.is_some());
        assert!(completed[1].1.sw.is_some());
    }

    #[test]
    fn failed_members_are_recorded_and_the_sweep_continues() {
        let (family, mut cfg) = degenerate_sweep();
        let inner = cfg.flow_for.clone();
        cfg.flow_for = Arc::new(move |eps| {
            if eps < 0.2 {
                return Err(Error::SolverFailure {
                    time_level: 0,
                    reason: "synthetic failure".into(),
                });
            }
            inner(eps)
        });
        let report =
            run_sweep(&family, &cfg, &[0.5, 0.25, 0.125], &BankConfig::default()).unwrap();
        assert!(!report.all_completed());
        assert_eq!(report.completed().len(), 2);
        match &report.records[2].outcome {
            MemberOutcome::Failed { reason } => assert!(reason.contains("synthetic failure")),
            other => panic!("expected a failed record, got {other:?}"),
        }
        let csv = report.csv();
        assert_eq!(csv.lines().count(), 4, "header plus one row per member");
        assert!(csv.contains("failed: "));
    }

    #[test]
    fn bad_width_lists_and_missing_limits_are_rejected() {
        let (family, cfg) = degenerate_sweep();
        let bank = BankConfig::default();
        assert!(matches!(
            run_sweep(&family, &cfg, &[], &bank),
            Err(Error::InvalidEpsList(_))
        ));
        assert!(matches!(
            run_sweep(&family, &cfg, &[0.1, 0.2], &bank),
            Err(Error::InvalidEpsList(_))
        ));
        assert!(matches!(
            run_sweep(&family, &cfg, &[0.2, 0.1, 0.1], &bank),
            Err(Error::InvalidEpsList(_))
        ));
        let mut no_limit = family.clone();
        no_limit.limit = FamilyLimit::Unknown;
        assert!(matches!(
            run_sweep(&no_limit, &cfg, &[0.2, 0.1], &bank),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn plot_series_cover_the_completed_members() {
        let (family, cfg) = degenerate_sweep();
        let report = run_sweep(&family, &cfg, &[0.5, 0.25], &BankConfig::default()).unwrap();
        let series = report.plot_series();
        let names: Vec<&str> = series.iter().map(|(n, _)| n.as_str()).collect();
        assert!(names.contains(&"normalized_value"));
        assert!(names.contains(&"strong_lp_distance"));
        assert!(names.contains(&"min_slack"));
        for (name, data) in &series {
            assert_eq!(data.len(), 2, "series {name} must cover both members");
            assert!(data.windows(2).all(|w| w[1].0 < w[0].0));
        }
    }
}
