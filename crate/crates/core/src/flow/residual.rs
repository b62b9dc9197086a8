//! Weak-form residual of a recorded flow solution.
//!
//! A field solves its gradient flow weakly when, for every admissible
//! perturbation `eta` (compact spatial support, vanishing at the final
//! time),
//!
//! ```text
//! integral [ -Phi(u) d_t eta + f_lambda . D eta + f_u . eta ] dx dt
//!   - <u0, eta(., 0)>  =  0.
//! ```
//!
//! [`el_residual`] evaluates the left side for every bank entry and
//! returns the largest magnitude. The time term uses the
//! forward-difference pairing `sum_k <Phi(u^k), eta^{k+1} - eta^k>`,
//! which telescopes exactly: for a time-independent field it collapses
//! to `-<Phi(u), eta(., 0)>` and cancels the datum term with no
//! quadrature error, so a stationary profile's residual measures only
//! the spatial optimality defect. The spatial terms use trapezoid
//! quadrature in space and time with the density's closed-form partials.

use crate::error::{Error, Result};
use crate::flow::FlowSolution;
use crate::functional::FunctionalSpec;
use crate::minimality::TestFunction;
use crate::phi::PhiMap;
use rayon::prelude::*;

/// Largest weak-form residual magnitude over the bank. Every entry must
/// be admissible (in particular vanish at the final time) and live on
/// the solution's grid; the functional must carry closed-form partials.
pub fn el_residual(
    sol: &FlowSolution,
    spec: &FunctionalSpec,
    phi: &PhiMap,
    test_bank: &[TestFunction],
) -> Result<f64> {
    if test_bank.is_empty() {
        return Err(Error::InadmissibleTestFunction(
            "weak residual check needs a nonempty bank".into(),
        ));
    }
    if !spec.has_partials() {
        return Err(Error::Unsupported(format!(
            "functional '{}' carries no closed-form partials; the weak form needs f_u and f_lambda",
            spec.label
        )));
    }
    let u = &sol.field;
    let grid = u.grid().clone();
    let m = u.m();
    if phi.m() != m {
        return Err(Error::ShapeMismatch(format!(
            "state map has {} components, field has {}",
            phi.m(),
            m
        )));
    }
    let phi_u = phi.apply(u)?;
    let du = u.gradient()?;
    let dim = grid.dim();
    let dt = grid.dt();
    let levels = grid.n_time_levels();

    let residuals: Vec<f64> = test_bank
        .par_iter()
        .map(|eta| -> Result<f64> {
            if eta.grid() != &grid {
                return Err(Error::ShapeMismatch(
                    "perturbation lives on a different grid than the solution".into(),
                ));
            }
            if eta.m() != m {
                return Err(Error::ShapeMismatch(format!(
                    "perturbation has {} components, field has {}",
                    eta.m(),
                    m
                )));
            }
            eta.admissible()?;
            let psi = eta.profile();
            let dpsi = psi.gradient()?;
            let coeffs = eta.coefficients();

            let mut x = [0.0; 2];
            let mut df_du = vec![0.0; m];
            let mut df_dl = vec![0.0; m * dim];
            let mut time_term = 0.0;
            let mut spatial = 0.0;
            for k in 0..levels {
                let t = grid.time(k);
                let ul = u.level(k);
                let dul = du.level(k);
                let pair = grid.space_quadrature(|s| {
                    grid.node_coords(s, &mut x[..dim]);
                    spec.partials(
                        &x[..dim],
                        t,
                        &ul[s * m..(s + 1) * m],
                        &dul[s * m * dim..(s + 1) * m * dim],
                        &mut df_du,
                        &mut df_dl,
                    )
                    .expect("partials checked above");
                    let mut v = 0.0;
                    for c in 0..m {
                        v += df_du[c] * psi.at(s, c);
                        for j in 0..dim {
                            v += df_dl[c * dim + j] * dpsi.at(s, (c * dim) + j);
                        }
                    }
                    v
                });
                spatial += grid.time_weight(k) * coeffs[k] * pair;
                if k + 1 < levels {
                    let phil = phi_u.level(k);
                    let pair_phi = grid.space_quadrature(|s| {
                        (0..m).map(|c| phil[s * m + c] * psi.at(s, c)).sum()
                    });
                    time_term += (coeffs[k + 1] - coeffs[k]) * pair_phi;
                }
            }
            let initial = coeffs[0] * sol.initial_data.inner_product(psi)?;
            Ok((-time_term + spatial * dt - initial).abs())
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(residuals.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SpatialField;
    use crate::flow::{
        solve, FlowBoundary, FlowFamily, FlowProblem, InitialConvention, SolverMeta,
    };
    use crate::functional::{constant_coeff, make_ginzburg_landau};
    use crate::grid::{BoundaryKind, Grid};
    use crate::minimality::generate_eta_bank;
    use std::f64::consts::PI;

    fn heat_spec(grid: &Grid) -> FunctionalSpec {
        crate::functional::make_filtration(
            constant_coeff(1.0),
            None,
            1,
            1,
            grid.extents().to_vec(),
            grid.t_final(),
        )
        .unwrap()
    }

    #[test]
    fn zero_field_with_zero_datum_has_zero_residual() {
        let grid = Grid::new_1d(64, (0.0, 1.0), 10, 0.05).unwrap();
        let initial =
            SpatialField::constant(grid.clone(), 1, BoundaryKind::DirichletZero, 0.0).unwrap();
        let prob = FlowProblem::new(
            grid.clone(),
            FlowFamily::Filtration {
                a: constant_coeff(1.0),
                source: None,
            },
            PhiMap::identity(1),
            initial,
            FlowBoundary::DirichletZero,
        )
        .unwrap();
        let sol = solve(&prob).unwrap();
        let bank = generate_eta_bank(&grid, 1, 8, 1, (0.5, 2.0)).unwrap();
        let r = el_residual(&sol, &heat_spec(&grid), &prob.phi, &bank).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn heat_residual_halves_with_the_time_step() {
        let cells = 256;
        let t_final = 0.05;
        let run = |steps: usize| -> f64 {
            let grid = Grid::new_1d(cells, (0.0, 1.0), steps, t_final).unwrap();
            let initial =
                SpatialField::from_fn(grid.clone(), 1, BoundaryKind::DirichletZero, |x, _| {
                    (PI * x[0]).sin()
                })
                .unwrap();
            let prob = FlowProblem::new(
                grid.clone(),
                FlowFamily::Filtration {
                    a: constant_coeff(1.0),
                    source: None,
                },
                PhiMap::identity(1),
                initial,
                FlowBoundary::DirichletZero,
            )
            .unwrap();
            let sol = solve(&prob).unwrap();
            let bank = generate_eta_bank(&grid, 1, 8, 2, (0.5, 1.0)).unwrap();
            el_residual(&sol, &heat_spec(&grid), &prob.phi, &bank).unwrap()
        };
        let r_coarse = run(50);
        let r_fine = run(100);
        let ratio = r_coarse / r_fine;
        assert!(
            (1.5..2.5).contains(&ratio),
            "expected first-order halving, got {r_coarse} / {r_fine} = {ratio}"
        );
    }

    #[test]
    fn stationary_kink_has_tiny_residual() {
        // tanh(x / (sqrt(2) eps)) solves the double-well profile equation
        // eps^2 u'' = u^3 - u; recorded as a time-independent field its
        // residual is pure spatial quadrature error.
        let eps = 0.1;
        let cells = 1024;
        let grid = Grid::new_1d(cells, (-1.0, 1.0), 8, 0.1).unwrap();
        let kink = SpatialField::from_fn(grid.clone(), 1, BoundaryKind::Free, |x, _| {
            (x[0] / (2.0_f64.sqrt() * eps)).tanh()
        })
        .unwrap();
        let prob = FlowProblem::new(
            grid.clone(),
            FlowFamily::GinzburgLandau { eps },
            PhiMap::identity(1),
            kink.clone(),
            FlowBoundary::ClampedFarField,
        )
        .unwrap()
        .with_convention(InitialConvention::StateAtZero);
        let levels: Vec<f64> = (0..grid.n_time_levels())
            .flat_map(|_| kink.values().to_vec())
            .collect();
        let meta = SolverMeta::new("recorded_stationary_profile", &grid);
        let sol = FlowSolution::assemble(&prob, levels, meta).unwrap();
        let spec = make_ginzburg_landau(eps, 1)
            .unwrap()
            .with_sample_domain(vec![(-1.0, 1.0)], grid.t_final());
        let bank = generate_eta_bank(&grid, 1, 16, 4, (0.25, 1.0)).unwrap();
        let r = el_residual(&sol, &spec, &prob.phi, &bank).unwrap();
        assert!(r < 1e-4, "stationary profile residual {r}");
    }

    #[test]
    fn terminal_violation_is_rejected() {
        let grid = Grid::new_1d(64, (0.0, 1.0), 10, 0.05).unwrap();
        let initial =
            SpatialField::constant(grid.clone(), 1, BoundaryKind::DirichletZero, 0.0).unwrap();
        let prob = FlowProblem::new(
            grid.clone(),
            FlowFamily::Filtration {
                a: constant_coeff(1.0),
                source: None,
            },
            PhiMap::identity(1),
            initial,
            FlowBoundary::DirichletZero,
        )
        .unwrap();
        let sol = solve(&prob).unwrap();
        let mut bank = generate_eta_bank(&grid, 1, 1, 1, (0.5, 1.0)).unwrap();
        // Corrupt the ramp end; admissibility must catch it.
        let profile = bank[0].profile().clone();
        let mut ramp = bank[0].ramp().to_vec();
        *ramp.last_mut().unwrap() = 0.5;
        bank[0] = match TestFunction::from_factors(0, "bad", 1.0, profile.clone(), ramp) {
            Err(Error::InadmissibleTestFunction(_)) => return, // constructor already rejects
            Ok(tf) => tf,
            Err(other) => panic!("unexpected error {other:?}"),
        };
        let _ = el_residual(&sol, &heat_spec(&grid), &prob.phi, &bank);
        panic!("terminal violation must be rejected at construction");
    }
}
