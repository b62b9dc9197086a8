//! Double-well reaction-diffusion stepper for
//! `u_t = eps^2 Lap(u) + u - u^3`.
//!
//! The default scheme treats diffusion implicitly (tridiagonal solves in
//! 1D, alternating-direction sweeps in 2D) and the reaction explicitly
//! with a stabilization shift `S >= 3 M^2 - 1`, `M = max(1, |u0|_inf)`,
//! which makes the step map monotone on `[-M, M]`. Combined with the
//! M-matrix structure of the implicit operator this preserves the
//! discrete comparison principle for any time step: states in `[-1, 1]`
//! stay there, and states above 1 stay above 1 when the boundary is
//! clamped there.
//!
//! The stepper is exposed directly (not only through the one-shot solve)
//! so long 2D runs can observe the state level by level without storing
//! the full space-time history.

use crate::error::{Error, Result};
use crate::flow::linalg::TridiagonalSolver;
use crate::flow::{FlowBoundary, FlowFamily, FlowProblem, FlowSolution, SolverMeta, Stepper};
use crate::grid::Grid;

pub struct AllenCahnStepper {
    grid: Grid,
    eps2: f64,
    boundary: FlowBoundary,
    stepper: Stepper,
    stabilization: f64,
    state: Vec<f64>,
    boundary_values: Vec<f64>,
    time_level: usize,
    tri: TridiagonalSolver,
    band_lower_x: Vec<f64>,
    band_diag_x: Vec<f64>,
    band_upper_x: Vec<f64>,
    band_lower_y: Vec<f64>,
    band_diag_y: Vec<f64>,
    band_upper_y: Vec<f64>,
    rhs_buf: Vec<f64>,
    out_buf: Vec<f64>,
    scratch: Vec<f64>,
}

impl AllenCahnStepper {
    pub fn new(prob: &FlowProblem) -> Result<Self> {
        let eps = match prob.family {
            FlowFamily::GinzburgLandau { eps } => eps,
            _ => {
                return Err(Error::Unsupported(
                    "double-well stepper needs the GinzburgLandau family".into(),
                ))
            }
        };
        if prob.initial.m() != 1 {
            return Err(Error::Unsupported(
                "double-well stepper is scalar (m = 1)".into(),
            ));
        }
        if !prob.phi.is_identity() {
            return Err(Error::Unsupported(
                "double-well stepper requires the identity state map".into(),
            ));
        }
        if prob.grid.dim() == 2 && prob.boundary == FlowBoundary::Periodic {
            return Err(Error::Unsupported(
                "periodic double-well stepping is available in 1D only".into(),
            ));
        }
        prob.check_explicit_step()?;
        let grid = prob.grid.clone();
        let state = prob.initial_state()?.values().to_vec();
        let boundary_values = match prob.boundary {
            FlowBoundary::DirichletZero => vec![0.0; state.len()],
            _ => state.clone(),
        };
        let m_bound = state
            .iter()
            .fold(1.0_f64, |acc, &v| acc.max(v.abs()));
        let stabilization = (3.0 * m_bound * m_bound - 1.0).max(0.0);
        let dt = grid.dt();
        let r_x = dt * eps * eps / (grid.spacing(0) * grid.spacing(0));
        let (nx, ny) = (grid.nodes(0), if grid.dim() == 2 { grid.nodes(1) } else { 1 });
        let n_max = nx.max(ny);

        // Interior rows of the x-sweep operator
        // (I + dt S - dt eps^2 D_xx); boundary rows are identities unless
        // periodic. The y-sweep operator carries no reaction shift.
        let assemble = |n: usize, r: f64, shift: f64, periodic: bool| {
            let mut lower = vec![-r; n];
            let mut diag = vec![1.0 + shift + 2.0 * r; n];
            let mut upper = vec![-r; n];
            if !periodic {
                diag[0] = 1.0;
                upper[0] = 0.0;
                lower[n - 1] = 0.0;
                diag[n - 1] = 1.0;
            }
            (lower, diag, upper)
        };
        let periodic = prob.boundary == FlowBoundary::Periodic;
        let (band_lower_x, band_diag_x, band_upper_x) = if periodic {
            assemble(nx - 1, r_x, dt * stabilization, true)
        } else {
            assemble(nx, r_x, dt * stabilization, false)
        };
        let (band_lower_y, band_diag_y, band_upper_y) = if grid.dim() == 2 {
            let r_y = dt * eps * eps / (grid.spacing(1) * grid.spacing(1));
            assemble(ny, r_y, 0.0, false)
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };

        Ok(AllenCahnStepper {
            eps2: eps * eps,
            boundary: prob.boundary,
            stepper: prob.stepper,
            stabilization,
            boundary_values,
            time_level: 0,
            tri: TridiagonalSolver::new(n_max),
            band_lower_x,
            band_diag_x,
            band_upper_x,
            band_lower_y,
            band_diag_y,
            band_upper_y,
            rhs_buf: vec![0.0; n_max],
            out_buf: vec![0.0; n_max],
            scratch: vec![0.0; state.len()],
            state,
            grid,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn time_level(&self) -> usize {
        self.time_level
    }

    /// Reaction stabilization shift used by the semi-implicit scheme.
    pub fn stabilization(&self) -> f64 {
        self.stabilization
    }

    /// Advance one time step.
    pub fn step(&mut self) -> Result<()> {
        match self.stepper {
            Stepper::SemiImplicit => self.step_semi_implicit()?,
            Stepper::Explicit => self.step_explicit()?,
        }
        self.time_level += 1;
        for (s, &v) in self.state.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "double-well step".into(),
                    time_level: self.time_level,
                    space_node: s,
                });
            }
        }
        Ok(())
    }

    /// Stabilized reaction right-hand side
    /// `(1 + dt S) u + dt (u - u^3)`, monotone in `u` on `[-M, M]`.
    fn reaction_rhs(&self, u: f64) -> f64 {
        let dt = self.grid.dt();
        (1.0 + dt * self.stabilization) * u + dt * (u - u * u * u)
    }

    fn step_semi_implicit(&mut self) -> Result<()> {
        match self.grid.dim() {
            1 => self.sweep_1d(),
            2 => self.sweep_2d(),
            _ => unreachable!(),
        }
    }

    fn sweep_1d(&mut self) -> Result<()> {
        let n = self.grid.nodes(0);
        if self.boundary == FlowBoundary::Periodic {
            let unknowns = n - 1;
            for i in 0..unknowns {
                self.rhs_buf[i] = self.reaction_rhs(self.state[i]);
            }
            let corner = self.band_lower_x[0];
            self.tri
                .solve_cyclic(
                    &self.band_lower_x,
                    &self.band_diag_x,
                    &self.band_upper_x,
                    corner,
                    corner,
                    &self.rhs_buf[..unknowns],
                    &mut self.out_buf[..unknowns],
                )
                .map_err(|reason| Error::SolverFailure {
                    time_level: self.time_level + 1,
                    reason,
                })?;
            self.state[..unknowns].copy_from_slice(&self.out_buf[..unknowns]);
            self.state[n - 1] = self.state[0];
        } else {
            self.rhs_buf[0] = self.boundary_values[0];
            self.rhs_buf[n - 1] = self.boundary_values[n - 1];
            for i in 1..n - 1 {
                self.rhs_buf[i] = self.reaction_rhs(self.state[i]);
            }
            self.tri
                .solve(
                    &self.band_lower_x,
                    &self.band_diag_x,
                    &self.band_upper_x,
                    &self.rhs_buf[..n],
                    &mut self.out_buf[..n],
                )
                .map_err(|reason| Error::SolverFailure {
                    time_level: self.time_level + 1,
                    reason,
                })?;
            self.state.copy_from_slice(&self.out_buf[..n]);
        }
        Ok(())
    }

    /// Lie-split alternating-direction step: the x-sweep carries the
    /// stabilized reaction, the y-sweep is pure diffusion. Both sweeps
    /// are monotone, so the split preserves the comparison principle.
    fn sweep_2d(&mut self) -> Result<()> {
        let (nx, ny) = (self.grid.nodes(0), self.grid.nodes(1));
        let at = |ix: usize, iy: usize| ix * ny + iy;
        // x-sweep into scratch.
        for iy in 0..ny {
            if iy == 0 || iy == ny - 1 {
                for ix in 0..nx {
                    self.scratch[at(ix, iy)] = self.boundary_values[at(ix, iy)];
                }
                continue;
            }
            self.rhs_buf[0] = self.boundary_values[at(0, iy)];
            self.rhs_buf[nx - 1] = self.boundary_values[at(nx - 1, iy)];
            for ix in 1..nx - 1 {
                self.rhs_buf[ix] = self.reaction_rhs(self.state[at(ix, iy)]);
            }
            self.tri
                .solve(
                    &self.band_lower_x,
                    &self.band_diag_x,
                    &self.band_upper_x,
                    &self.rhs_buf[..nx],
                    &mut self.out_buf[..nx],
                )
                .map_err(|reason| Error::SolverFailure {
                    time_level: self.time_level + 1,
                    reason,
                })?;
            for ix in 0..nx {
                self.scratch[at(ix, iy)] = self.out_buf[ix];
            }
        }
        // y-sweep back into state.
        for ix in 0..nx {
            if ix == 0 || ix == nx - 1 {
                for iy in 0..ny {
                    self.state[at(ix, iy)] = self.boundary_values[at(ix, iy)];
                }
                continue;
            }
            self.rhs_buf[..ny].copy_from_slice(&self.scratch[at(ix, 0)..at(ix, 0) + ny]);
            self.rhs_buf[0] = self.boundary_values[at(ix, 0)];
            self.rhs_buf[ny - 1] = self.boundary_values[at(ix, ny - 1)];
            self.tri
                .solve(
                    &self.band_lower_y,
                    &self.band_diag_y,
                    &self.band_upper_y,
                    &self.rhs_buf[..ny],
                    &mut self.out_buf[..ny],
                )
                .map_err(|reason| Error::SolverFailure {
                    time_level: self.time_level + 1,
                    reason,
                })?;
            self.state[at(ix, 0)..at(ix, 0) + ny].copy_from_slice(&self.out_buf[..ny]);
        }
        Ok(())
    }

    fn step_explicit(&mut self) -> Result<()> {
        let dt = self.grid.dt();
        let n = self.grid.n_space_nodes();
        match self.grid.dim() {
            1 => {
                let h2 = self.grid.spacing(0) * self.grid.spacing(0);
                let len = self.grid.nodes(0);
                for i in 0..len {
                    let lap = if self.boundary == FlowBoundary::Periodic {
                        let left = if i == 0 { len - 2 } else { i - 1 };
                        let right = if i == len - 1 { 1 } else { i + 1 };
                        (self.state[left] - 2.0 * self.state[i] + self.state[right]) / h2
                    } else if i == 0 || i == len - 1 {
                        self.scratch[i] = self.boundary_values[i];
                        continue;
                    } else {
                        (self.state[i - 1] - 2.0 * self.state[i] + self.state[i + 1]) / h2
                    };
                    let u = self.state[i];
                    self.scratch[i] = u + dt * (self.eps2 * lap + u - u * u * u);
                }
                if self.boundary == FlowBoundary::Periodic {
                    self.scratch[len - 1] = self.scratch[0];
                }
            }
            2 => {
                let (nx, ny) = (self.grid.nodes(0), self.grid.nodes(1));
                let hx2 = self.grid.spacing(0) * self.grid.spacing(0);
                let hy2 = self.grid.spacing(1) * self.grid.spacing(1);
                for ix in 0..nx {
                    for iy in 0..ny {
                        let s = ix * ny + iy;
                        if ix == 0 || ix == nx - 1 || iy == 0 || iy == ny - 1 {
                            self.scratch[s] = self.boundary_values[s];
                            continue;
                        }
                        let u = self.state[s];
                        let lap = (self.state[s - ny] - 2.0 * u + self.state[s + ny]) / hx2
                            + (self.state[s - 1] - 2.0 * u + self.state[s + 1]) / hy2;
                        self.scratch[s] = u + dt * (self.eps2 * lap + u - u * u * u);
                    }
                }
            }
            _ => unreachable!(),
        }
        self.state.copy_from_slice(&self.scratch[..n]);
        Ok(())
    }
}

/// Run the stepper over the whole time range and record every level.
pub fn solve_allen_cahn(prob: &FlowProblem) -> Result<FlowSolution> {
    let mut stepper = AllenCahnStepper::new(prob)?;
    let slab = prob.grid.n_space_nodes();
    let mut levels = Vec::with_capacity(prob.grid.n_time_levels() * slab);
    levels.extend_from_slice(stepper.state());
    for _ in 0..prob.grid.n_time_steps() {
        stepper.step()?;
        levels.extend_from_slice(stepper.state());
    }
    let scheme = match prob.stepper {
        Stepper::SemiImplicit => {
            if prob.grid.dim() == 2 {
                "double_well_semi_implicit_adi"
            } else {
                "double_well_semi_implicit"
            }
        }
        Stepper::Explicit => "double_well_explicit_euler",
    };
    let mut meta = SolverMeta::new(scheme, &prob.grid);
    meta.stabilization = Some(stepper.stabilization());
    FlowSolution::assemble(prob, levels, meta)
}
