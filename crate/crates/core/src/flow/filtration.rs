//! Quadratic filtration flows `d/dt Phi(u)^k = div(a grad u^k) + h^k` in
//! one space dimension, stepped by backward Euler.
//!
//! Each step solves the nonlinear system
//! `Phi(v) - dt L v = Phi(u) + dt h` per component with a damped Newton
//! iteration; `L` is the flux-form second-order operator with the
//! coefficient sampled at cell faces, so periodic runs conserve the total
//! of `Phi(u)` to the Newton tolerance by exact flux telescoping. The
//! Jacobian `diag(Phi') - dt L` is an irreducibly diagonally dominant
//! tridiagonal matrix for any nondecreasing state map, which keeps the
//! inner solves well posed. The same Newton kernel serves the lagged
//! diffusivity iteration of the p-Laplace stepper.

use crate::error::{Error, Result};
use crate::flow::linalg::TridiagonalSolver;
use crate::flow::{FlowBoundary, FlowFamily, FlowProblem, FlowSolution, SolverMeta, Stepper};
use crate::functional::{sample_coeff_bounds, MatrixCoeffFn, SourceFn};
use crate::phi::PhiMap;

/// Damped Newton solver for the per-step system
/// `Phi_c(v) - dt L v = b` with face-weighted flux operator `L`.
/// Reused by the filtration stepper (faces = coefficient values) and the
/// p-Laplace stepper (faces = lagged nonlinear diffusivity).
pub(crate) struct NewtonWorkspace {
    g: Vec<f64>,
    g_trial: Vec<f64>,
    v_trial: Vec<f64>,
    delta: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    tri: TridiagonalSolver,
}

impl NewtonWorkspace {
    pub(crate) fn new(unknowns: usize) -> Self {
        NewtonWorkspace {
            g: vec![0.0; unknowns],
            g_trial: vec![0.0; unknowns],
            v_trial: vec![0.0; unknowns],
            delta: vec![0.0; unknowns],
            lower: vec![0.0; unknowns],
            diag: vec![0.0; unknowns],
            upper: vec![0.0; unknowns],
            tri: TridiagonalSolver::new(unknowns),
        }
    }

    /// `G(v) = Phi_c(v) - dt L v - b`; rows 0 and n-1 are clamp rows
    /// `v - b` in the non-periodic layout.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn residual(
        phi: &PhiMap,
        comp: usize,
        v: &[f64],
        b: &[f64],
        faces: &[f64],
        dt_over_h2: f64,
        periodic: bool,
        out: &mut [f64],
    ) {
        let n = v.len();
        for i in 0..n {
            if !periodic && (i == 0 || i == n - 1) {
                out[i] = v[i] - b[i];
                continue;
            }
            let left = if i == 0 { n - 1 } else { i - 1 };
            let right = if i == n - 1 { 0 } else { i + 1 };
            let f_left = if i == 0 { n - 1 } else { i - 1 };
            let flux = faces[i] * (v[right] - v[i]) - faces[f_left] * (v[i] - v[left]);
            out[i] = phi.eval(comp, v[i]) - dt_over_h2 * flux - b[i];
        }
    }

    /// Solve for `v` in place starting from its current content.
    /// Returns `(iterations, final_residual)` or the stall reason.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn solve(
        &mut self,
        phi: &PhiMap,
        comp: usize,
        faces: &[f64],
        dt_over_h2: f64,
        periodic: bool,
        b: &[f64],
        v: &mut [f64],
        tol: f64,
        max_iters: usize,
    ) -> std::result::Result<(usize, f64), String> {
        let n = v.len();
        let mut history: Vec<f64> = Vec::new();
        for it in 0..=max_iters {
            Self::residual(phi, comp, v, b, faces, dt_over_h2, periodic, &mut self.g);
            let g_norm = self.g.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
            history.push(g_norm);
            if g_norm <= tol {
                return Ok((it, g_norm));
            }
            if it == max_iters {
                break;
            }
            for i in 0..n {
                if !periodic && (i == 0 || i == n - 1) {
                    self.lower[i] = 0.0;
                    self.diag[i] = 1.0;
                    self.upper[i] = 0.0;
                    continue;
                }
                let f_left = if i == 0 { n - 1 } else { i - 1 };
                self.lower[i] = -dt_over_h2 * faces[f_left];
                self.upper[i] = -dt_over_h2 * faces[i];
                self.diag[i] =
                    phi.derivative(comp, v[i]) + dt_over_h2 * (faces[f_left] + faces[i]);
            }
            for gi in self.g.iter_mut() {
                *gi = -*gi;
            }
            if periodic {
                let corner = -dt_over_h2 * faces[n - 1];
                self.tri.solve_cyclic(
                    &self.lower,
                    &self.diag,
                    &self.upper,
                    corner,
                    corner,
                    &self.g,
                    &mut self.delta,
                )?;
            } else {
                self.tri
                    .solve(&self.lower, &self.diag, &self.upper, &self.g, &mut self.delta)?;
            }
            let mut lambda = 1.0;
            loop {
                for ((trial, vi), &di) in self.v_trial.iter_mut().zip(v.iter()).zip(&self.delta) {
                    *trial = *vi + lambda * di;
                }
                Self::residual(
                    phi, comp, &self.v_trial, b, faces, dt_over_h2, periodic, &mut self.g_trial,
                );
                let trial_norm = self.g_trial.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
                if trial_norm < g_norm || lambda < 1e-3 {
                    v.copy_from_slice(&self.v_trial);
                    break;
                }
                lambda *= 0.5;
            }
        }
        let tail: Vec<String> = history
            .iter()
            .rev()
            .take(5)
            .rev()
            .map(|r| format!("{r:.3e}"))
            .collect();
        Err(format!(
            "Newton stalled after {max_iters} iterations; residual history [... {}]",
            tail.join(", ")
        ))
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()))
}

pub fn solve_filtration(prob: &FlowProblem) -> Result<FlowSolution> {
    let (a, source): (MatrixCoeffFn, Option<SourceFn>) = match &prob.family {
        FlowFamily::Filtration { a, source } => (a.clone(), source.clone()),
        _ => {
            return Err(Error::Unsupported(
                "filtration stepper needs the Filtration family".into(),
            ))
        }
    };
    if prob.grid.dim() != 1 {
        return Err(Error::Unsupported(
            "filtration stepping is implemented in 1D; 2D runs are covered by the double-well stepper".into(),
        ));
    }
    // Validates symmetry/positivity on seeded samples up front.
    sample_coeff_bounds(&a, 1, prob.grid.extents(), prob.grid.t_final())?;
    if prob.stepper == Stepper::Explicit && !prob.phi.is_identity() {
        return Err(Error::Unsupported(
            "explicit filtration stepping requires the identity state map".into(),
        ));
    }
    prob.check_explicit_step()?;

    let grid = prob.grid.clone();
    let n = grid.nodes(0);
    let m = prob.initial.m();
    let periodic = prob.boundary == FlowBoundary::Periodic;
    let unknowns = if periodic { n - 1 } else { n };
    let h = grid.spacing(0);
    let dt = grid.dt();
    let dt_over_h2 = dt / (h * h);

    let mut state: Vec<f64> = prob.initial_state()?.values().to_vec();
    let clamp: Vec<f64> = match prob.boundary {
        FlowBoundary::DirichletZero => vec![0.0; state.len()],
        _ => state.clone(),
    };
    let mut levels = Vec::with_capacity(grid.n_time_levels() * state.len());
    levels.extend_from_slice(&state);

    let n_faces = if periodic { unknowns } else { n - 1 };
    let mut faces = vec![0.0; n_faces];
    let mut v = vec![0.0; unknowns];
    let mut b = vec![0.0; unknowns];
    let mut source_buf = vec![0.0; m];
    let mut newton = NewtonWorkspace::new(unknowns);
    let mut worst_iters = 0usize;
    let mut worst_resid = 0.0_f64;

    let (lo, _hi) = grid.extent(0);
    let face_x = |i: usize| lo + (i as f64 + 0.5) * h;

    for k in 0..grid.n_time_steps() {
        let t_new = grid.time(k + 1);
        let t_old = grid.time(k);
        let t_coeff = if prob.stepper == Stepper::Explicit { t_old } else { t_new };
        for (i, f) in faces.iter_mut().enumerate() {
            let x = [face_x(i)];
            let aval = a(&x, t_coeff)[0][0];
            if !(aval.is_finite() && aval > 0.0) {
                return Err(Error::CoefficientNotSpd {
                    t: t_coeff,
                    x: x.to_vec(),
                    reason: format!("face coefficient {aval} not positive"),
                });
            }
            *f = aval;
        }

        if prob.stepper == Stepper::Explicit {
            explicit_step(prob, &source, &mut state, &clamp, &faces, t_old)?;
        } else {
            for c in 0..m {
                for i in 0..unknowns {
                    v[i] = state[i * m + c];
                    b[i] = if !periodic && (i == 0 || i == unknowns - 1) {
                        clamp[i * m + c]
                    } else {
                        let mut x = [0.0];
                        grid.node_coords(i, &mut x);
                        let mut src = 0.0;
                        if let Some(hf) = &source {
                            hf(&x, t_new, &mut source_buf);
                            src = source_buf[c];
                        }
                        prob.phi.eval(c, v[i]) + dt * src
                    };
                }
                let tol = prob.inner_tolerance * inf_norm(&b).max(1.0);
                let (iters, resid) = newton
                    .solve(
                        &prob.phi,
                        c,
                        &faces,
                        dt_over_h2,
                        periodic,
                        &b,
                        &mut v,
                        tol,
                        prob.max_inner_iterations,
                    )
                    .map_err(|reason| Error::SolverFailure {
                        time_level: k + 1,
                        reason: format!("component {c}: {reason}"),
                    })?;
                worst_iters = worst_iters.max(iters);
                worst_resid = worst_resid.max(resid);
                for i in 0..unknowns {
                    state[i * m + c] = v[i];
                }
                if periodic {
                    state[(n - 1) * m + c] = state[c];
                }
            }
        }

        for (s, &val) in state.iter().enumerate() {
            if !val.is_finite() {
                return Err(Error::NonFinite {
                    context: "filtration step".into(),
                    time_level: k + 1,
                    space_node: s / m,
                });
            }
        }
        levels.extend_from_slice(&state);
    }

    let scheme = match prob.stepper {
        Stepper::SemiImplicit => "filtration_backward_euler_newton",
        Stepper::Explicit => "filtration_explicit_euler",
    };
    let mut meta = SolverMeta::new(scheme, &grid);
    meta.inner_tolerance = Some(prob.inner_tolerance);
    meta.max_inner_iterations = Some(prob.max_inner_iterations);
    meta.worst_inner_iterations = worst_iters;
    meta.worst_inner_residual = worst_resid;
    FlowSolution::assemble(prob, levels, meta)
}

/// Forward-Euler step for the identity state map.
fn explicit_step(
    prob: &FlowProblem,
    source: &Option<SourceFn>,
    state: &mut [f64],
    clamp: &[f64],
    faces: &[f64],
    t_old: f64,
) -> Result<()> {
    let grid = &prob.grid;
    let n = grid.nodes(0);
    let m = prob.initial.m();
    let periodic = prob.boundary == FlowBoundary::Periodic;
    let unknowns = if periodic { n - 1 } else { n };
    let h = grid.spacing(0);
    let dt = grid.dt();
    let mut next = state.to_vec();
    let mut src = vec![0.0; m];
    let mut x = [0.0];
    for i in 0..unknowns {
        if !periodic && (i == 0 || i == n - 1) {
            next[i * m..(i + 1) * m].copy_from_slice(&clamp[i * m..(i + 1) * m]);
            continue;
        }
        let left = if i == 0 { unknowns - 1 } else { i - 1 };
        let right = if i == unknowns - 1 && periodic { 0 } else { i + 1 };
        let f_left = if i == 0 { unknowns - 1 } else { i - 1 };
        grid.node_coords(i, &mut x);
        if let Some(hf) = source {
            hf(&x, t_old, &mut src);
        }
        for c in 0..m {
            let flux = faces[i.min(faces.len() - 1)] * (state[right * m + c] - state[i * m + c])
                - faces[f_left] * (state[i * m + c] - state[left * m + c]);
            next[i * m + c] = state[i * m + c] + dt * (flux / (h * h) + src[c]);
        }
    }
    if periodic {
        for c in 0..m {
            next[(n - 1) * m + c] = next[c];
        }
    }
    state.copy_from_slice(&next);
    Ok(())
}
