//! Gradient-flow solvers.
//!
//! Three evolution problems are covered, one per built-in functional
//! family: the double-well reaction-diffusion equation
//! `u_t = eps^2 Lap(u) + u - u^3`, quadratic filtration problems
//! `d/dt Phi(u) = div(a grad u) + h` with a monotone state map `Phi`, and
//! weighted p-Laplace flows `d/dt Phi(u) = div(a |grad u|^(p-2) grad u)`.
//! All solvers march on uniform grids, record every time level, and
//! return a [`FlowSolution`] carrying the discrete time derivative of
//! `Phi(u)`, the energy trace of the matching functional, and the a
//! priori norms that the sweep experiments monitor for uniform bounds.
//!
//! A weak-residual check ([`residual::el_residual`]) measures how well a
//! recorded field satisfies the Euler-Lagrange weak form of its flow
//! against a bank of smooth, compactly supported test functions.

pub mod allen_cahn;
pub mod filtration;
pub mod linalg;
pub mod p_laplace;
pub mod residual;

use crate::error::{Error, Result};
use crate::field::{SpaceTimeField, SpatialField};
use crate::functional::{
    make_filtration, make_ginzburg_landau, make_p_laplace, sample_coeff_bounds, FunctionalSpec,
    MatrixCoeffFn, ScalarCoeffFn, SourceFn,
};
use crate::grid::{BoundaryKind, Grid};
use crate::phi::PhiMap;

/// Spatial boundary behavior of a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowBoundary {
    /// Homogeneous Dirichlet: the state is 0 on the boundary at all times.
    DirichletZero,
    /// Periodic identification of opposite faces.
    Periodic,
    /// Dirichlet data frozen at the initial boundary values (far-field
    /// clamp for profiles approaching nonzero constants).
    ClampedFarField,
}

impl FlowBoundary {
    /// Boundary kind of the fields produced under this flow boundary.
    pub fn field_kind(self) -> BoundaryKind {
        match self {
            FlowBoundary::DirichletZero => BoundaryKind::DirichletZero,
            FlowBoundary::Periodic => BoundaryKind::Periodic,
            FlowBoundary::ClampedFarField => BoundaryKind::Free,
        }
    }
}

/// Time-stepping mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stepper {
    /// Diffusion implicit (tridiagonal or alternating-direction solves),
    /// nonlinearities explicit or lagged. No step-size restriction.
    SemiImplicit,
    /// Forward Euler; requires
    /// `dt <= step_safety * h^2 / (2 * dim * max_diffusivity)`.
    Explicit,
}

/// Which initial-data convention the recorded `u0` follows.
///
/// The flows evolve `Phi(u)` in time, so the natural datum is
/// `Phi(u(.,0)) = u0`; the classical convention prescribes the state
/// `u(.,0) = u0` directly. Both are supported and both fields are stored
/// on the solution; the `Phi`-datum is the default because it is the one
/// paired against test functions in the weak form and the minimality
/// inequality. The two conventions coincide for the identity map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialConvention {
    /// The given initial field is the datum of `Phi(u(.,0)) = u0`;
    /// the solver starts from the state `Phi^{-1}(u0)`.
    PhiAtZero,
    /// The given initial field is the state `u(.,0)` itself; the datum is
    /// computed as `Phi(u(.,0))`.
    StateAtZero,
}

/// Coefficient data selecting one of the three built-in flows.
#[derive(Clone)]
pub enum FlowFamily {
    /// `u_t = eps^2 Lap(u) + u - u^3` (scalar, identity state map).
    GinzburgLandau { eps: f64 },
    /// `d/dt Phi(u)^k = div(a grad u^k) + h^k` with symmetric
    /// positive-definite `a` shared across components.
    Filtration {
        a: MatrixCoeffFn,
        source: Option<SourceFn>,
    },
    /// `d/dt Phi(u) = div(a |grad u|^(p-2) grad u)`, scalar, `p > 1`.
    /// The gradient magnitude is regularized as
    /// `(|grad u|^2 + delta_reg^2)^((p-2)/2)`.
    PLaplace { a: ScalarCoeffFn, p: f64, delta_reg: f64 },
}

impl std::fmt::Debug for FlowFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlowFamily::GinzburgLandau { eps } => {
                f.debug_struct("GinzburgLandau").field("eps", eps).finish()
            }
            FlowFamily::Filtration { source, .. } => f
                .debug_struct("Filtration")
                .field("has_source", &source.is_some())
                .finish(),
            FlowFamily::PLaplace { p, delta_reg, .. } => f
                .debug_struct("PLaplace")
                .field("p", p)
                .field("delta_reg", delta_reg)
                .finish(),
        }
    }
}

/// A complete initial-boundary value problem for one of the built-in
/// flows.
#[derive(Clone)]
pub struct FlowProblem {
    pub grid: Grid,
    pub family: FlowFamily,
    pub phi: PhiMap,
    /// Initial field, interpreted according to `initial_convention`.
    pub initial: SpatialField,
    pub initial_convention: InitialConvention,
    pub boundary: FlowBoundary,
    pub stepper: Stepper,
    /// Fraction of the explicit stability bound the step may use.
    pub step_safety: f64,
    /// Convergence tolerance of the inner Newton/lagged iterations,
    /// relative to the data scale.
    pub inner_tolerance: f64,
    pub max_inner_iterations: usize,
}

impl FlowProblem {
    pub fn new(
        grid: Grid,
        family: FlowFamily,
        phi: PhiMap,
        initial: SpatialField,
        boundary: FlowBoundary,
    ) -> Result<Self> {
        if initial.grid() != &grid {
            return Err(Error::ShapeMismatch(
                "initial field lives on a different grid than the flow".into(),
            ));
        }
        if phi.m() != initial.m() {
            return Err(Error::ShapeMismatch(format!(
                "state map has {} components, initial field {}",
                phi.m(),
                initial.m()
            )));
        }
        let expected = boundary.field_kind();
        if initial.boundary() != expected && boundary != FlowBoundary::ClampedFarField {
            return Err(Error::ShapeMismatch(format!(
                "initial field boundary kind {:?} does not match flow boundary {:?}",
                initial.boundary(),
                boundary
            )));
        }
        Ok(FlowProblem {
            grid,
            family,
            phi,
            initial,
            initial_convention: InitialConvention::PhiAtZero,
            boundary,
            stepper: Stepper::SemiImplicit,
            step_safety: 0.9,
            inner_tolerance: 1e-12,
            max_inner_iterations: 50,
        })
    }

    pub fn with_stepper(mut self, stepper: Stepper, step_safety: f64) -> Result<Self> {
        if !(step_safety > 0.0 && step_safety <= 1.0) {
            return Err(Error::InvalidExponent {
                p: step_safety,
                reason: "step_safety must lie in (0, 1]".into(),
            });
        }
        self.stepper = stepper;
        self.step_safety = step_safety;
        Ok(self)
    }

    pub fn with_convention(mut self, convention: InitialConvention) -> Self {
        self.initial_convention = convention;
        self
    }

    pub fn with_inner_solver(mut self, tolerance: f64, max_iterations: usize) -> Self {
        self.inner_tolerance = tolerance;
        self.max_inner_iterations = max_iterations;
        self
    }

    /// State at time zero under the configured convention.
    pub fn initial_state(&self) -> Result<SpatialField> {
        match self.initial_convention {
            InitialConvention::StateAtZero => Ok(self.initial.clone()),
            InitialConvention::PhiAtZero => self.phi.inverse_spatial(&self.initial),
        }
    }

    /// Datum `u0 = Phi(u(.,0))` under the configured convention.
    pub fn initial_data(&self) -> Result<SpatialField> {
        match self.initial_convention {
            InitialConvention::PhiAtZero => Ok(self.initial.clone()),
            InitialConvention::StateAtZero => self.phi.apply_spatial(&self.initial),
        }
    }

    /// The integral functional whose gradient flow this problem is.
    pub fn functional_spec(&self) -> Result<FunctionalSpec> {
        let dim = self.grid.dim();
        let m = self.initial.m();
        let extent = self.grid.extents().to_vec();
        let t_final = self.grid.t_final();
        match &self.family {
            FlowFamily::GinzburgLandau { eps } => Ok(make_ginzburg_landau(*eps, dim)?
                .with_sample_domain(extent, t_final)),
            FlowFamily::Filtration { a, source } => {
                make_filtration(a.clone(), source.clone(), m, dim, extent, t_final)
            }
            FlowFamily::PLaplace { a, p, .. } => {
                make_p_laplace(a.clone(), *p, m, dim, extent, t_final)
            }
        }
    }

    /// Largest diffusivity the family can exhibit, used for the explicit
    /// step bound. For the p-Laplace family this depends on the evolving
    /// gradient and is not available a priori.
    pub(crate) fn max_diffusivity(&self) -> Result<f64> {
        match &self.family {
            FlowFamily::GinzburgLandau { eps } => Ok(eps * eps),
            FlowFamily::Filtration { a, .. } => {
                let (_, hi) =
                    sample_coeff_bounds(a, self.grid.dim(), self.grid.extents(), self.grid.t_final())?;
                Ok(hi)
            }
            FlowFamily::PLaplace { .. } => Err(Error::Unsupported(
                "explicit stepping is not available for p-Laplace flows (gradient-dependent diffusivity); use the semi-implicit stepper".into(),
            )),
        }
    }

    /// Enforce the explicit step bound
    /// `dt <= step_safety * h^2 / (2 * dim * max_diffusivity)`.
    pub(crate) fn check_explicit_step(&self) -> Result<()> {
        if self.stepper != Stepper::Explicit {
            return Ok(());
        }
        let h = self.grid.max_spacing();
        let bound = self.step_safety * h * h
            / (2.0 * self.grid.dim() as f64 * self.max_diffusivity()?);
        if self.grid.dt() > bound {
            return Err(Error::StepSizeViolation {
                dt: self.grid.dt(),
                bound,
                scheme: "explicit".into(),
            });
        }
        Ok(())
    }
}

/// Scheme bookkeeping embedded in every solution.
#[derive(Debug, Clone)]
pub struct SolverMeta {
    pub scheme: String,
    pub steps: usize,
    pub dt: f64,
    pub max_spacing: f64,
    /// Gradient regularization of the p-Laplace solver, when applicable.
    pub delta_reg: Option<f64>,
    pub inner_tolerance: Option<f64>,
    pub max_inner_iterations: Option<usize>,
    /// Worst inner-iteration count over all time steps (0 for linear
    /// schemes).
    pub worst_inner_iterations: usize,
    pub worst_inner_residual: f64,
    /// Reaction stabilization shift of the semi-implicit double-well
    /// stepper, when applicable.
    pub stabilization: Option<f64>,
}

impl SolverMeta {
    pub fn new(scheme: impl Into<String>, grid: &Grid) -> Self {
        SolverMeta {
            scheme: scheme.into(),
            steps: grid.n_time_steps(),
            dt: grid.dt(),
            max_spacing: grid.max_spacing(),
            delta_reg: None,
            inner_tolerance: None,
            max_inner_iterations: None,
            worst_inner_iterations: 0,
            worst_inner_residual: 0.0,
            stabilization: None,
        }
    }

    /// Key-value lines for the metadata sidecar of serialized solutions.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("scheme".to_string(), self.scheme.clone()),
            ("steps".to_string(), self.steps.to_string()),
            ("dt".to_string(), format!("{}", self.dt)),
            ("max_spacing".to_string(), format!("{}", self.max_spacing)),
            (
                "worst_inner_iterations".to_string(),
                self.worst_inner_iterations.to_string(),
            ),
            (
                "worst_inner_residual".to_string(),
                format!("{}", self.worst_inner_residual),
            ),
        ];
        if let Some(d) = self.delta_reg {
            kv.push(("delta_reg".to_string(), format!("{d}")));
        }
        if let Some(t) = self.inner_tolerance {
            kv.push(("inner_tolerance".to_string(), format!("{t}")));
        }
        if let Some(n) = self.max_inner_iterations {
            kv.push(("max_inner_iterations".to_string(), n.to_string()));
        }
        if let Some(s) = self.stabilization {
            kv.push(("stabilization".to_string(), format!("{s}")));
        }
        kv
    }
}

/// The a priori quantities tracked per solve: the `L^2` norm of the
/// discrete `d/dt Phi(u)` over the space-time cylinder and the
/// `L^2([0,T], W^{1,2})` norm of the state. Sweeps monitor these for
/// uniform boundedness across the parameter.
#[derive(Debug, Clone, Copy)]
pub struct EstimateNorms {
    pub phi_dt_l2: f64,
    pub state_l2: f64,
    pub gradient_l2: f64,
}

impl EstimateNorms {
    pub fn v2_norm(&self) -> f64 {
        (self.state_l2 * self.state_l2 + self.gradient_l2 * self.gradient_l2).sqrt()
    }
}

/// Output of a flow solve: the full space-time state, the discrete time
/// derivative of `Phi(u)`, the per-level energy trace of the matching
/// functional, a priori norms, both initial fields, and scheme metadata.
#[derive(Debug, Clone)]
pub struct FlowSolution {
    pub field: SpaceTimeField,
    /// Forward differences `(Phi(u^{k+1}) - Phi(u^k)) / dt`; the last
    /// level repeats the final difference so the field spans the grid.
    pub phi_time_derivative: SpaceTimeField,
    /// Spatial integral of the flow's energy density at every time level.
    pub energy_trace: Vec<f64>,
    pub estimate_norms: EstimateNorms,
    /// Datum `u0` in the sense `Phi(u(.,0)) = u0`.
    pub initial_data: SpatialField,
    /// State at time zero.
    pub initial_state: SpatialField,
    pub meta: SolverMeta,
}

impl FlowSolution {
    /// Assemble the derived quantities from the raw level data produced
    /// by a stepper. `levels` is time-major with one full spatial slab
    /// (node-major, component-minor) per time level.
    pub(crate) fn assemble(
        prob: &FlowProblem,
        levels: Vec<f64>,
        meta: SolverMeta,
    ) -> Result<FlowSolution> {
        let grid = prob.grid.clone();
        let m = prob.initial.m();
        let field = SpaceTimeField::from_values(
            grid.clone(),
            m,
            prob.boundary.field_kind(),
            levels,
        )?;
        let n_levels = grid.n_time_levels();
        let slab = grid.n_space_nodes() * m;
        let dt = grid.dt();

        // Discrete d/dt Phi(u): forward differences, last level repeated.
        let mut dphi = vec![0.0; n_levels * slab];
        let mut phi_prev: Vec<f64> = field.level(0).to_vec();
        prob.phi.apply_in_place(&mut phi_prev)?;
        let mut phi_next = vec![0.0; slab];
        for k in 0..n_levels - 1 {
            phi_next.copy_from_slice(field.level(k + 1));
            prob.phi.apply_in_place(&mut phi_next)?;
            for i in 0..slab {
                dphi[k * slab + i] = (phi_next[i] - phi_prev[i]) / dt;
            }
            std::mem::swap(&mut phi_prev, &mut phi_next);
        }
        let (last, prev) = dphi.split_at_mut((n_levels - 1) * slab);
        prev.copy_from_slice(&last[(n_levels - 2) * slab..]);
        let phi_time_derivative =
            SpaceTimeField::from_values(grid.clone(), m, BoundaryKind::Free, dphi)?;

        let spec = prob.functional_spec()?;
        let energy_trace = crate::functional::energy_trace(&field, &spec)?;

        // ||d/dt Phi(u)||_{L^2(Omega_T)} with piecewise-constant-in-time
        // quadrature (one slab per step), spatial trapezoid weights.
        let mut acc = 0.0;
        for k in 0..n_levels - 1 {
            let lvl = phi_time_derivative.level(k);
            let mut slab_acc = 0.0;
            for s in 0..grid.n_space_nodes() {
                let w = grid.space_weight(s);
                for c in 0..m {
                    let v = lvl[s * m + c];
                    slab_acc += w * v * v;
                }
            }
            acc += slab_acc * grid.cell_volume() * dt;
        }
        let estimate_norms = EstimateNorms {
            phi_dt_l2: acc.sqrt(),
            state_l2: field.lp_norm(2.0)?,
            gradient_l2: field.gradient()?.lp_norm(2.0)?,
        };

        Ok(FlowSolution {
            initial_data: prob.initial_data()?,
            initial_state: field.at_time(0),
            field,
            phi_time_derivative,
            energy_trace,
            estimate_norms,
            meta,
        })
    }
}

/// Solve the problem with the solver matching its family.
pub fn solve(prob: &FlowProblem) -> Result<FlowSolution> {
    match prob.family {
        FlowFamily::GinzburgLandau { .. } => allen_cahn::solve_allen_cahn(prob),
        FlowFamily::Filtration { .. } => filtration::solve_filtration(prob),
        FlowFamily::PLaplace { .. } => p_laplace::solve_p_laplace(prob),
    }
}

/// Zero level set of a scalar 2D slice located by linear interpolation
/// along grid lines.
#[derive(Debug, Clone)]
pub struct ZeroLevelCircle {
    pub centroid: [f64; 2],
    /// Mean distance of the crossing points to their centroid.
    pub radius: f64,
    pub n_points: usize,
}

/// Find sign changes of a scalar level (node-major values, m = 1) along
/// every x- and y-line of a 2D grid and fit the mean-radius circle.
/// Returns `None` when the level has no sign change.
pub fn zero_level_circle(grid: &Grid, level: &[f64]) -> Option<ZeroLevelCircle> {
    assert_eq!(grid.dim(), 2, "front tracking is for 2D slices");
    let (nx, ny) = (grid.nodes(0), grid.nodes(1));
    let at = |ix: usize, iy: usize| level[ix * ny + iy];
    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut coords = [0.0; 2];
    for ix in 0..nx {
        for iy in 0..ny.saturating_sub(1) {
            let (a, b) = (at(ix, iy), at(ix, iy + 1));
            if a == 0.0 {
                grid.node_coords(ix * ny + iy, &mut coords);
                points.push(coords);
            } else if a * b < 0.0 {
                let frac = a / (a - b);
                grid.node_coords(ix * ny + iy, &mut coords);
                let y = coords[1] + frac * grid.spacing(1);
                points.push([coords[0], y]);
            }
        }
    }
    for iy in 0..ny {
        for ix in 0..nx.saturating_sub(1) {
            let (a, b) = (at(ix, iy), at(ix + 1, iy));
            if a * b < 0.0 {
                let frac = a / (a - b);
                grid.node_coords(ix * ny + iy, &mut coords);
                let x = coords[0] + frac * grid.spacing(0);
                points.push([x, coords[1]]);
            }
        }
    }
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let radius = points
        .iter()
        .map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    Some(ZeroLevelCircle {
        centroid: [cx, cy],
        radius,
        n_points: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SpatialField;
    use crate::grid::Grid;

    #[test]
    fn zero_level_circle_recovers_exact_radius() {
        let grid = Grid::new(&[256, 256], &[(-1.0, 1.0), (-1.0, 1.0)], 1, 1.0).unwrap();
        let r0 = 0.3;
        let f = SpatialField::from_fn(grid.clone(), 1, BoundaryKind::Free, |x, _| {
            r0 - (x[0] * x[0] + x[1] * x[1]).sqrt()
        })
        .unwrap();
        let circle = zero_level_circle(&grid, f.values()).unwrap();
        assert!(
            (circle.radius - r0).abs() < 2e-4,
            "tracked radius {} vs {}",
            circle.radius,
            r0
        );
        assert!(circle.centroid[0].abs() < 1e-10 && circle.centroid[1].abs() < 1e-10);
        assert!(circle.n_points > 100);
    }

    #[test]
    fn zero_level_circle_none_for_single_phase() {
        let grid = Grid::new(&[16, 16], &[(-1.0, 1.0), (-1.0, 1.0)], 1, 1.0).unwrap();
        let f = SpatialField::constant(grid.clone(), 1, BoundaryKind::Free, 1.0).unwrap();
        assert!(zero_level_circle(&grid, f.values()).is_none());
    }

    #[test]
    fn explicit_step_bound_is_enforced() {
        // eps^2 = 0.01, h = 1/64: bound = 0.9 * h^2 / (2 * 0.01).
        let grid = Grid::new_1d(64, (0.0, 1.0), 10, 1.0).unwrap(); // dt = 0.1, way too big
        let initial =
            SpatialField::constant(grid.clone(), 1, BoundaryKind::DirichletZero, 0.0).unwrap();
        let prob = FlowProblem::new(
            grid,
            FlowFamily::GinzburgLandau { eps: 0.1 },
            PhiMap::identity(1),
            initial,
            FlowBoundary::DirichletZero,
        )
        .unwrap()
        .with_stepper(Stepper::Explicit, 0.9)
        .unwrap();
        match prob.check_explicit_step() {
            Err(Error::StepSizeViolation { dt, bound, .. }) => {
                assert!(dt > bound);
            }
            other => panic!("expected StepSizeViolation, got {other:?}"),
        }
    }
}
