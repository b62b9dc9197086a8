//! Sampled fields on space-time grids, discrete gradients, Lp norms, and
//! the strong/weak convergence diagnostics used by the epsilon sweeps.
//!
//! A `SpaceTimeField` stores `m` components per node in time-major,
//! row-major-space, component-innermost order. Gradients use central
//! differences in the interior, second-order one-sided stencils at
//! non-periodic boundaries, and wrap-around neighbours on periodic grids.
//! All integrals are composite trapezoid via [`Grid::quadrature`].

use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, Grid};

/// A field sampled on the spatial part of a grid (one time slice).
#[derive(Debug, Clone)]
pub struct SpatialField {
    grid: Grid,
    m: usize,
    boundary: BoundaryKind,
    values: Vec<f64>,
}

/// A field sampled on every node of the space-time grid.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    grid: Grid,
    m: usize,
    boundary: BoundaryKind,
    values: Vec<f64>,
}

fn check_finite(values: &[f64], stride: usize, context: &str) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: context.into(),
                time_level: i / stride,
                space_node: (i % stride),
            });
        }
    }
    Ok(())
}

/// Enforce the boundary invariant on one time level, in place.
///
/// Dirichlet-zero fields get exact zeros on boundary nodes; periodic fields
/// get the first node copied onto the duplicated last node of each axis.
fn enforce_boundary_level(grid: &Grid, m: usize, boundary: BoundaryKind, level: &mut [f64]) {
    match boundary {
        BoundaryKind::Free => {}
        BoundaryKind::DirichletZero => {
            for s in 0..grid.n_space_nodes() {
                if grid.is_boundary_node(s) {
                    for c in 0..m {
                        level[s * m + c] = 0.0;
                    }
                }
            }
        }
        BoundaryKind::Periodic => match grid.dim() {
            1 => {
                let last = grid.cells(0);
                for c in 0..m {
                    level[last * m + c] = level[c];
                }
            }
            2 => {
                let (nx, ny) = (grid.nodes(0), grid.nodes(1));
                for iy in 0..ny {
                    let src = grid.space_index(&[0, iy]);
                    let dst = grid.space_index(&[nx - 1, iy]);
                    for c in 0..m {
                        level[dst * m + c] = level[src * m + c];
                    }
                }
                for ix in 0..nx {
                    let src = grid.space_index(&[ix, 0]);
                    let dst = grid.space_index(&[ix, ny - 1]);
                    for c in 0..m {
                        level[dst * m + c] = level[src * m + c];
                    }
                }
            }
            _ => unreachable!(),
        },
    }
}

/// Second-order finite-difference derivative along one axis of one level.
///
/// `stride` is the linear-index step between neighbours on `axis`.
fn derive_axis(
    grid: &Grid,
    boundary: BoundaryKind,
    m: usize,
    axis: usize,
    level: &[f64],
    out: &mut [f64],
    dim: usize,
) {
    let n = grid.nodes(axis);
    let h = grid.spacing(axis);
    let stride = match (grid.dim(), axis) {
        (1, 0) => 1,
        (2, 0) => grid.nodes(1),
        (2, 1) => 1,
        _ => unreachable!(),
    };
    let periodic = boundary == BoundaryKind::Periodic;
    for s in 0..grid.n_space_nodes() {
        let i = grid.space_multi_index(s)[axis];
        for c in 0..m {
            let at = |node_s: usize| level[node_s * m + c];
            let d = if i > 0 && i < n - 1 {
                (at(s + stride) - at(s - stride)) / (2.0 * h)
            } else if periodic {
                // Last node duplicates the first: skip the duplicate when
                // wrapping so the stencil stays centred.
                let left = if i == 0 { s + (n - 2) * stride } else { s - stride };
                let right = if i == n - 1 { s - (n - 2) * stride } else { s + stride };
                (at(right) - at(left)) / (2.0 * h)
            } else if i == 0 {
                (-3.0 * at(s) + 4.0 * at(s + stride) - at(s + 2 * stride)) / (2.0 * h)
            } else {
                (3.0 * at(s) - 4.0 * at(s - stride) + at(s - 2 * stride)) / (2.0 * h)
            };
            out[(s * m + c) * dim + axis] = d;
        }
    }
}

fn gradient_boundary_kind(boundary: BoundaryKind) -> BoundaryKind {
    match boundary {
        BoundaryKind::Periodic => BoundaryKind::Periodic,
        _ => BoundaryKind::Free,
    }
}

fn require_gradient_grid(grid: &Grid) -> Result<()> {
    for axis in 0..grid.dim() {
        if grid.cells(axis) < 3 {
            return Err(Error::GridTooCoarse {
                axis,
                cells: grid.cells(axis),
                required: 3,
            });
        }
    }
    Ok(())
}

impl SpatialField {
    pub fn from_values(
        grid: Grid,
        m: usize,
        boundary: BoundaryKind,
        values: Vec<f64>,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::ShapeMismatch("component count m = 0".into()));
        }
        let expect = grid.n_space_nodes() * m;
        if values.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "spatial field has {} values, grid wants {}",
                values.len(),
                expect
            )));
        }
        check_finite(&values, expect, "spatial field")?;
        let mut f = SpatialField {
            grid,
            m,
            boundary,
            values,
        };
        enforce_boundary_level(&f.grid.clone(), m, boundary, &mut f.values);
        Ok(f)
    }

    /// Sample `f(x, component)` on every spatial node. Boundary values are
    /// then forced to satisfy the declared boundary kind exactly.
    pub fn from_fn<F: FnMut(&[f64], usize) -> f64>(
        grid: Grid,
        m: usize,
        boundary: BoundaryKind,
        mut f: F,
    ) -> Result<Self> {
        let mut values = vec![0.0; grid.n_space_nodes() * m];
        let mut x = [0.0; 2];
        for s in 0..grid.n_space_nodes() {
            grid.node_coords(s, &mut x[..grid.dim()]);
            for c in 0..m {
                values[s * m + c] = f(&x[..grid.dim()], c);
            }
        }
        SpatialField::from_values(grid, m, boundary, values)
    }

    pub fn constant(grid: Grid, m: usize, boundary: BoundaryKind, value: f64) -> Result<Self> {
        let n = grid.n_space_nodes() * m;
        SpatialField::from_values(grid, m, boundary, vec![value; n])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn boundary(&self) -> BoundaryKind {
        self.boundary
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, s: usize, c: usize) -> f64 {
        self.values[s * self.m + c]
    }

    /// Repeat this slice on every time level of its grid.
    pub fn constant_in_time(&self) -> SpaceTimeField {
        let levels = self.grid.n_time_levels();
        let mut values = Vec::with_capacity(levels * self.values.len());
        for _ in 0..levels {
            values.extend_from_slice(&self.values);
        }
        SpaceTimeField {
            grid: self.grid.clone(),
            m: self.m,
            boundary: self.boundary,
            values,
        }
    }

    /// Spatial gradient, `m * dim` components ordered component-major
    /// (`du^i/dx_j` at slot `i*dim + j`).
    pub fn gradient(&self) -> Result<SpatialField> {
        require_gradient_grid(&self.grid)?;
        let dim = self.grid.dim();
        let mut out = vec![0.0; self.grid.n_space_nodes() * self.m * dim];
        for axis in 0..dim {
            derive_axis(
                &self.grid,
                self.boundary,
                self.m,
                axis,
                &self.values,
                &mut out,
                dim,
            );
        }
        SpatialField::from_values(
            self.grid.clone(),
            self.m * dim,
            gradient_boundary_kind(self.boundary),
            out,
        )
    }

    /// L2 inner product over the spatial domain (trapezoid weights).
    pub fn inner_product(&self, other: &SpatialField) -> Result<f64> {
        if self.grid != other.grid || self.m != other.m {
            return Err(Error::ShapeMismatch(
                "spatial inner product needs matching grids and component counts".into(),
            ));
        }
        Ok(self.grid.space_quadrature(|s| {
            (0..self.m)
                .map(|c| self.at(s, c) * other.at(s, c))
                .sum::<f64>()
        }))
    }
}

impl SpaceTimeField {
    pub fn from_values(
        grid: Grid,
        m: usize,
        boundary: BoundaryKind,
        values: Vec<f64>,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::ShapeMismatch("component count m = 0".into()));
        }
        let stride = grid.n_space_nodes() * m;
        let expect = grid.n_time_levels() * stride;
        if values.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "space-time field has {} values, grid wants {}",
                values.len(),
                expect
            )));
        }
        check_finite(&values, stride, "space-time field")?;
        let mut f = SpaceTimeField {
            grid,
            m,
            boundary,
            values,
        };
        let g = f.grid.clone();
        for k in 0..g.n_time_levels() {
            let lo = k * stride;
            enforce_boundary_level(&g, m, boundary, &mut f.values[lo..lo + stride]);
        }
        Ok(f)
    }

    /// Sample `f(t, x, component)` on every node; boundary values are then
    /// forced to satisfy the declared boundary kind exactly.
    pub fn from_fn<F: FnMut(f64, &[f64], usize) -> f64>(
        grid: Grid,
        m: usize,
        boundary: BoundaryKind,
        mut f: F,
    ) -> Result<Self> {
        let s_nodes = grid.n_space_nodes();
        let mut values = vec![0.0; grid.n_time_levels() * s_nodes * m];
        let mut x = [0.0; 2];
        let mut idx = 0;
        for k in 0..grid.n_time_levels() {
            let t = grid.time(k);
            for s in 0..s_nodes {
                grid.node_coords(s, &mut x[..grid.dim()]);
                for c in 0..m {
                    values[idx] = f(t, &x[..grid.dim()], c);
                    idx += 1;
                }
            }
        }
        SpaceTimeField::from_values(grid, m, boundary, values)
    }

    pub fn constant(grid: Grid, m: usize, boundary: BoundaryKind, value: f64) -> Result<Self> {
        let n = grid.n_time_levels() * grid.n_space_nodes() * m;
        SpaceTimeField::from_values(grid, m, boundary, vec![value; n])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn boundary(&self) -> BoundaryKind {
        self.boundary
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn space_stride(&self) -> usize {
        self.grid.n_space_nodes() * self.m
    }

    pub fn at(&self, k: usize, s: usize, c: usize) -> f64 {
        self.values[k * self.space_stride() + (s * self.m + c)]
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let stride = self.space_stride();
        &self.values[k * stride..(k + 1) * stride]
    }

    /// Extract one time level as a spatial field.
    pub fn at_time(&self, k: usize) -> SpatialField {
        SpatialField {
            grid: self.grid.clone(),
            m: self.m,
            boundary: self.boundary,
            values: self.level(k).to_vec(),
        }
    }

    fn combine_kind(a: BoundaryKind, b: BoundaryKind) -> BoundaryKind {
        if a == b {
            a
        } else {
            BoundaryKind::Free
        }
    }

    fn zip_check(&self, other: &SpaceTimeField, what: &str) -> Result<()> {
        if self.grid != other.grid || self.m != other.m {
            return Err(Error::ShapeMismatch(format!(
                "{what} needs matching grids and component counts"
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &SpaceTimeField) -> Result<SpaceTimeField> {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &SpaceTimeField) -> Result<SpaceTimeField> {
        self.add_scaled(other, -1.0)
    }

    /// `self + c * other`, preserving exact boundary zeros when both
    /// operands are Dirichlet-zero.
    pub fn add_scaled(&self, other: &SpaceTimeField, c: f64) -> Result<SpaceTimeField> {
        self.zip_check(other, "field arithmetic")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        SpaceTimeField::from_values(
            self.grid.clone(),
            self.m,
            Self::combine_kind(self.boundary, other.boundary),
            values,
        )
    }

    pub fn scaled(&self, c: f64) -> SpaceTimeField {
        let values = self.values.iter().map(|a| a * c).collect();
        SpaceTimeField {
            grid: self.grid.clone(),
            m: self.m,
            boundary: self.boundary,
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &SpaceTimeField) -> Result<f64> {
        self.zip_check(other, "max abs diff")?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs())))
    }

    /// Discrete gradient on every time level; output has `m * dim`
    /// components ordered `du^i/dx_j -> i*dim + j`.
    pub fn gradient(&self) -> Result<SpaceTimeField> {
        require_gradient_grid(&self.grid)?;
        let dim = self.grid.dim();
        let s_nodes = self.grid.n_space_nodes();
        let in_stride = self.space_stride();
        let out_stride = s_nodes * self.m * dim;
        let mut out = vec![0.0; self.grid.n_time_levels() * out_stride];
        for k in 0..self.grid.n_time_levels() {
            let level = &self.values[k * in_stride..(k + 1) * in_stride];
            let out_level = &mut out[k * out_stride..(k + 1) * out_stride];
            for axis in 0..dim {
                derive_axis(&self.grid, self.boundary, self.m, axis, level, out_level, dim);
            }
        }
        SpaceTimeField::from_values(
            self.grid.clone(),
            self.m * dim,
            gradient_boundary_kind(self.boundary),
            out,
        )
    }

    /// Lp norm over the space-time cylinder of the pointwise Euclidean
    /// magnitude across components. Rejects p < 1.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidExponent {
                p,
                reason: "Lp norms need p >= 1".into(),
            });
        }
        let m = self.m;
        let stride = self.space_stride();
        let integral = self.grid.quadrature(|k, s| {
            let base = k * stride + s * m;
            let sq: f64 = self.values[base..base + m].iter().map(|v| v * v).sum();
            if p == 2.0 {
                sq
            } else {
                sq.sqrt().powf(p)
            }
        });
        Ok(integral.powf(1.0 / p))
    }

    /// Pairing `integral of <self, psi>` over the cylinder (components
    /// contracted pointwise). Shapes must match.
    pub fn pair(&self, psi: &SpaceTimeField) -> Result<f64> {
        self.zip_check(psi, "field pairing")?;
        let m = self.m;
        let stride = self.space_stride();
        Ok(self.grid.quadrature(|k, s| {
            let base = k * stride + s * m;
            (0..m)
                .map(|c| self.values[base + c] * psi.values[base + c])
                .sum::<f64>()
        }))
    }
}

/// Convergence diagnostics of one sweep member against a limit candidate.
///
/// `strong_lp_distance` is the Lp distance of the fields themselves;
/// `weak_gradient_pairings` holds `|integral of (Du_member - Du_limit) : psi|` per test
/// field, and `gradient_lp_bound` is the member's own gradient Lp norm.
/// Strong convergence plus uniformly bounded gradient norms is the
/// practical characterisation of the strong/weak convergence mode used
/// throughout; small weak_gradient_pairings witness the weak gradient factor directly.
#[derive(Debug, Clone)]
pub struct SwReport {
    pub p: f64,
    pub strong_lp_distance: f64,
    pub weak_gradient_pairings: Vec<(usize, f64)>,
    pub gradient_lp_bound: f64,
}

/// Strong/weak distance of `member` to `limit` against a bank of smooth
/// test fields (each with `m * dim` components, matching gradients).
pub fn sw_distance(
    member: &SpaceTimeField,
    limit: &SpaceTimeField,
    test_bank: &[SpaceTimeField],
    p: f64,
) -> Result<SwReport> {
    let diff = member.sub(limit)?;
    let strong = diff.lp_norm(p)?;
    let grad_member = member.gradient()?;
    let grad_limit = limit.gradient()?;
    let grad_diff = grad_member.sub(&grad_limit)?;
    let mut weak_gradient_pairings = Vec::with_capacity(test_bank.len());
    for (id, psi) in test_bank.iter().enumerate() {
        weak_gradient_pairings.push((id, grad_diff.pair(psi)?.abs()));
    }
    let bound = grad_member.lp_norm(p)?;
    Ok(SwReport {
        p,
        strong_lp_distance: strong,
        weak_gradient_pairings,
        gradient_lp_bound: bound,
    })
}

/// Smooth test fields for gradient weak_gradient_pairings: per component, tensor sine
/// modes of order 1..=max_order (time-constant, bounded by 1).
pub fn sine_pairing_bank(grid: &Grid, comps: usize, max_order: usize) -> Result<Vec<SpaceTimeField>> {
    let mut bank = Vec::new();
    for c_active in 0..comps {
        for order in 1..=max_order {
            let f = SpaceTimeField::from_fn(grid.clone(), comps, BoundaryKind::Free, |_t, x, c| {
                if c != c_active {
                    return 0.0;
                }
                let mut v = 1.0;
                for (axis, &xi) in x.iter().enumerate() {
                    let (lo, hi) = grid.extent(axis);
                    v *= (order as f64 * std::f64::consts::PI * (xi - lo) / (hi - lo)).sin();
                }
                v
            })?;
            bank.push(f);
        }
    }
    Ok(bank)
}

/// Spatial-only variant of [`sine_pairing_bank`] for initial-data
/// diagnostics.
pub fn sine_bank_spatial(grid: &Grid, comps: usize, max_order: usize) -> Result<Vec<SpatialField>> {
    let mut bank = Vec::new();
    for c_active in 0..comps {
        for order in 1..=max_order {
            let f = SpatialField::from_fn(grid.clone(), comps, BoundaryKind::Free, |x, c| {
                if c != c_active {
                    return 0.0;
                }
                let mut v = 1.0;
                for (axis, &xi) in x.iter().enumerate() {
                    let (lo, hi) = grid.extent(axis);
                    v *= (order as f64 * std::f64::consts::PI * (xi - lo) / (hi - lo)).sin();
                }
                v
            })?;
            bank.push(f);
        }
    }
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_grid_1d(cells: usize, steps: usize) -> Grid {
        Grid::new_1d(cells, (0.0, 1.0), steps, 1.0).unwrap()
    }

    #[test]
    fn lp_norm_of_constant_one_is_one() {
        let g = unit_grid_1d(64, 8);
        let u = SpaceTimeField::constant(g, 1, BoundaryKind::Free, 1.0).unwrap();
        let n = u.lp_norm(2.0).unwrap();
        assert!((n - 1.0).abs() < 1e-12, "got {n}");
    }

    #[test]
    fn lp_norm_rejects_p_below_one() {
        let g = unit_grid_1d(8, 2);
        let u = SpaceTimeField::constant(g, 1, BoundaryKind::Free, 1.0).unwrap();
        assert!(u.lp_norm(0.5).is_err());
        assert!(u.lp_norm(f64::NAN).is_err());
    }

    #[test]
    fn l2_norm_of_sine_matches_closed_form() {
        // integral of sin^2(pi x) over (0,1) is 1/2; time-constant over T=1.
        let g = unit_grid_1d(1024, 4);
        let u = SpaceTimeField::from_fn(g, 1, BoundaryKind::DirichletZero, |_t, x, _| {
            (PI * x[0]).sin()
        })
        .unwrap();
        let n = u.lp_norm(2.0).unwrap();
        let expect = (0.5_f64).sqrt();
        assert!(
            (n - expect).abs() < 1e-6,
            "sine L2 norm {n} vs {expect}"
        );
    }

    #[test]
    fn gradient_of_linear_field_is_exact() {
        // Both the interior central stencil and the one-sided boundary
        // stencils are exact on affine data.
        let g = unit_grid_1d(16, 2);
        let u = SpaceTimeField::from_fn(g, 1, BoundaryKind::Free, |_t, x, _| 3.0 * x[0] - 1.0)
            .unwrap();
        let du = u.gradient().unwrap();
        for v in du.values() {
            assert!((v - 3.0).abs() < 1e-12, "gradient sample {v}");
        }
    }

    #[test]
    fn gradient_of_sine_is_second_order_accurate() {
        let cells = 1024;
        let g = unit_grid_1d(cells, 1);
        let u = SpaceTimeField::from_fn(g.clone(), 1, BoundaryKind::DirichletZero, |_t, x, _| {
            (PI * x[0]).sin()
        })
        .unwrap();
        let du = u.gradient().unwrap();
        let h = g.spacing(0);
        let mut worst = 0.0_f64;
        for s in 0..g.n_space_nodes() {
            let x = g.coord(0, s);
            let err = (du.at(0, s, 0) - PI * (PI * x).cos()).abs();
            worst = worst.max(err);
        }
        let bound = 5.0 * (PI * h) * (PI * h);
        assert!(
            worst <= bound,
            "max gradient error {worst} exceeds {bound} at {cells} cells"
        );
    }

    #[test]
    fn gradient_rejects_grids_under_three_cells() {
        let g = Grid::new_1d(2, (0.0, 1.0), 1, 1.0).unwrap();
        let u = SpaceTimeField::constant(g, 1, BoundaryKind::Free, 1.0).unwrap();
        match u.gradient() {
            Err(Error::GridTooCoarse { required, .. }) => assert_eq!(required, 3),
            other => panic!("expected GridTooCoarse, got {other:?}"),
        }
    }

    #[test]
    fn periodic_gradient_wraps_cleanly() {
        // sin(2 pi x) sampled periodically: the wrap stencil at the seam
        // must agree with the interior accuracy.
        let g = unit_grid_1d(256, 1);
        let u = SpaceTimeField::from_fn(g.clone(), 1, BoundaryKind::Periodic, |_t, x, _| {
            (2.0 * PI * x[0]).sin()
        })
        .unwrap();
        let du = u.gradient().unwrap();
        let seam = (du.at(0, 0, 0) - 2.0 * PI).abs();
        let h = g.spacing(0);
        assert!(
            seam < 2.0 * (2.0 * PI * h).powi(2) * 2.0 * PI,
            "seam error {seam}"
        );
        // Duplicated endpoint carries the same derivative as the first node.
        assert_eq!(du.at(0, 0, 0), du.at(0, 256, 0));
    }

    #[test]
    fn dirichlet_zero_boundary_survives_arithmetic() {
        let g = unit_grid_1d(32, 3);
        let u = SpaceTimeField::from_fn(g.clone(), 1, BoundaryKind::DirichletZero, |_t, x, _| {
            (PI * x[0]).sin()
        })
        .unwrap();
        let v = SpaceTimeField::from_fn(g, 1, BoundaryKind::DirichletZero, |t, x, _| {
            t * x[0] * (1.0 - x[0])
        })
        .unwrap();
        let w = u.add_scaled(&v, -2.5).unwrap();
        assert_eq!(w.boundary(), BoundaryKind::DirichletZero);
        for k in 0..w.grid().n_time_levels() {
            assert_eq!(w.at(k, 0, 0), 0.0);
            assert_eq!(w.at(k, 32, 0), 0.0);
        }
    }

    #[test]
    fn from_values_rejects_non_finite() {
        let g = unit_grid_1d(4, 1);
        let mut vals = vec![0.0; g.n_time_levels() * g.n_space_nodes()];
        vals[7] = f64::NAN;
        assert!(SpaceTimeField::from_values(g, 1, BoundaryKind::Free, vals).is_err());
    }

    #[test]
    fn sw_distance_of_field_to_itself_is_zero() {
        let g = unit_grid_1d(64, 4);
        let u = SpaceTimeField::from_fn(g.clone(), 1, BoundaryKind::DirichletZero, |t, x, _| {
            (PI * x[0]).sin() * (1.0 + t)
        })
        .unwrap();
        let bank = sine_pairing_bank(&g, 1, 3).unwrap();
        let rep = sw_distance(&u, &u, &bank, 2.0).unwrap();
        assert_eq!(rep.strong_lp_distance, 0.0);
        for (_, p) in &rep.weak_gradient_pairings {
            assert_eq!(*p, 0.0);
        }
    }

    #[test]
    fn sw_distance_oscillation_shrinks_at_one_over_k() {
        // member(x) = sin(k pi x)/k versus zero: strong distance is
        // sqrt(1/2)/k, weak_gradient_pairings decay like 1/k by cancellation.
        let k = 64.0;
        let g = unit_grid_1d(4096, 2);
        let member = SpaceTimeField::from_fn(g.clone(), 1, BoundaryKind::DirichletZero, |_t, x, _| {
            (k * PI * x[0]).sin() / k
        })
        .unwrap();
        let zero = SpaceTimeField::constant(g.clone(), 1, BoundaryKind::DirichletZero, 0.0).unwrap();
        let bank = sine_pairing_bank(&g, 1, 2).unwrap();
        let rep = sw_distance(&member, &zero, &bank, 2.0).unwrap();
        let expect = (0.5_f64).sqrt() / k;
        assert!(
            rep.strong_lp_distance <= expect * 1.001,
            "strong distance {} vs {}",
            rep.strong_lp_distance,
            expect
        );
        for (id, p) in &rep.weak_gradient_pairings {
            assert!(
                *p <= 10.0 / k,
                "pairing {id} = {p} exceeds 10/k = {}",
                10.0 / k
            );
        }
        // The gradient magnitude itself stays order one: weak, not strong,
        // convergence of gradients.
        assert!(rep.gradient_lp_bound > 1.5 && rep.gradient_lp_bound < 3.0);
    }

    #[test]
    fn pairing_against_smooth_test_field_matches_oracle() {
        // d/dx of sin(64 pi x)/64 paired with sin(pi x):
        // product-to-sum gives exactly 1/65 - 1/63 = -2/(63*65).
        let g = unit_grid_1d(8192, 1);
        let member = SpaceTimeField::from_fn(g.clone(), 1, BoundaryKind::DirichletZero, |_t, x, _| {
            (64.0 * PI * x[0]).sin() / 64.0
        })
        .unwrap();
        let zero = SpaceTimeField::constant(g.clone(), 1, BoundaryKind::DirichletZero, 0.0).unwrap();
        let bank = sine_pairing_bank(&g, 1, 1).unwrap();
        let rep = sw_distance(&member, &zero, &bank, 2.0).unwrap();
        let oracle = (1.0_f64 / 65.0 - 1.0 / 63.0).abs();
        let got = rep.weak_gradient_pairings[0].1;
        assert!(
            (got - oracle).abs() < 1e-5,
            "pairing {got} vs closed form {oracle}"
        );
    }

    #[test]
    fn unit_gradient_field_has_unit_gradient_bound() {
        let g = unit_grid_1d(32, 4);
        let u = SpaceTimeField::from_fn(g.clone(), 1, BoundaryKind::Free, |_t, x, _| x[0]).unwrap();
        let zero = SpaceTimeField::constant(g.clone(), 1, BoundaryKind::Free, 0.0).unwrap();
        let rep = sw_distance(&u, &zero, &[], 2.0).unwrap();
        assert!(
            (rep.gradient_lp_bound - 1.0).abs() < 1e-10,
            "gradient bound {}",
            rep.gradient_lp_bound
        );
    }

    #[test]
    fn two_d_gradient_matches_closed_form() {
        let g = Grid::new(&[96, 80], &[(0.0, 1.0), (0.0, 1.0)], 1, 1.0).unwrap();
        let u = SpaceTimeField::from_fn(g.clone(), 1, BoundaryKind::Free, |_t, x, _| {
            (PI * x[0]).sin() * (2.0 * PI * x[1]).cos()
        })
        .unwrap();
        let du = u.gradient().unwrap();
        let mut worst = 0.0_f64;
        for s in 0..g.n_space_nodes() {
            let mi = g.space_multi_index(s);
            let (x, y) = (g.coord(0, mi[0]), g.coord(1, mi[1]));
            let gx = PI * (PI * x).cos() * (2.0 * PI * y).cos();
            let gy = -2.0 * PI * (PI * x).sin() * (2.0 * PI * y).sin();
            worst = worst.max((du.at(0, s, 0) - gx).abs());
            worst = worst.max((du.at(0, s, 1) - gy).abs());
        }
        let h = g.max_spacing();
        assert!(
            worst < 30.0 * h * h * PI * PI * PI,
            "2d gradient max error {worst}"
        );
    }
}
