//! Uniform tensor grids over the space-time cylinder Omega x (0, T).
//!
//! Nodes sit on cell corners: an axis with `c` cells carries `c + 1` nodes,
//! the first and last exactly on the domain boundary. Space is limited to
//! dimension 1 or 2; space index order is row-major with x outermost
//! (`s = ix * ny + iy` in 2D). Quadrature is composite trapezoid in both
//! space and time, which is what every integral in this crate uses.

use crate::error::{Error, Result};

/// Spatial boundary treatment of a sampled field.
///
/// `DirichletZero` fields carry exact zeros on boundary nodes, `Periodic`
/// fields duplicate the first node at the last (wrap-around neighbours),
/// and `Free` marks fields with no boundary constraint, e.g. gradients or
/// clamped far-field states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    DirichletZero,
    Periodic,
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: Vec<usize>,
    extent: Vec<(f64, f64)>,
    n_time_steps: usize,
    t_final: f64,
}

impl Grid {
    /// Build a grid; `cells` and `extent` must both have length 1 or 2.
    pub fn new(
        cells: &[usize],
        extent: &[(f64, f64)],
        n_time_steps: usize,
        t_final: f64,
    ) -> Result<Self> {
        let dim = cells.len();
        if dim == 0 || dim > 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension {dim} out of range (1 or 2)"
            )));
        }
        if extent.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "extent has {} axes but cells has {}",
                extent.len(),
                dim
            )));
        }
        for (axis, &c) in cells.iter().enumerate() {
            if c == 0 {
                return Err(Error::InvalidGrid(format!("axis {axis} has zero cells")));
            }
        }
        for (axis, &(lo, hi)) in extent.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} extent ({lo}, {hi}) must be finite with lo < hi"
                )));
            }
        }
        if n_time_steps == 0 {
            return Err(Error::InvalidGrid("zero time steps".into()));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "t_final = {t_final} must be finite and positive"
            )));
        }
        Ok(Grid {
            dim,
            cells: cells.to_vec(),
            extent: extent.to_vec(),
            n_time_steps,
            t_final,
        })
    }

    /// Convenience constructor for a 1D grid.
    pub fn new_1d(cells: usize, extent: (f64, f64), n_time_steps: usize, t_final: f64) -> Result<Self> {
        Grid::new(&[cells], &[extent], n_time_steps, t_final)
    }

    /// Same spatial layout, different time axis.
    pub fn with_time(&self, n_time_steps: usize, t_final: f64) -> Result<Self> {
        Grid::new(&self.cells, &self.extent, n_time_steps, t_final)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    /// Node count along `axis`, always `cells + 1`.
    pub fn nodes(&self, axis: usize) -> usize {
        self.cells[axis] + 1
    }

    pub fn extent(&self, axis: usize) -> (f64, f64) {
        self.extent[axis]
    }

    /// All spatial extents, one `(lo, hi)` pair per axis.
    pub fn extents(&self) -> &[(f64, f64)] {
        &self.extent
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let (lo, hi) = self.extent[axis];
        (hi - lo) / self.cells[axis] as f64
    }

    /// Largest spatial spacing over all axes (the `h` in error bounds).
    pub fn max_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.spacing(a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn n_time_steps(&self) -> usize {
        self.n_time_steps
    }

    /// Number of stored time levels, `n_time_steps + 1`.
    pub fn n_time_levels(&self) -> usize {
        self.n_time_steps + 1
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_time_steps as f64
    }

    /// Coordinate of node `i` on `axis`; the last node is exactly the upper
    /// bound so boundary tests never see round-off.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let (lo, hi) = self.extent[axis];
        if i == self.cells[axis] {
            hi
        } else {
            lo + i as f64 * self.spacing(axis)
        }
    }

    /// Time of level `k`; the last level is exactly `t_final`.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_time_steps {
            self.t_final
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn n_space_nodes(&self) -> usize {
        (0..self.dim).map(|a| self.nodes(a)).product()
    }

    /// Linear space index from per-axis node indices.
    pub fn space_index(&self, idx: &[usize]) -> usize {
        match self.dim {
            1 => idx[0],
            2 => idx[0] * self.nodes(1) + idx[1],
            _ => unreachable!(),
        }
    }

    /// Per-axis node indices from the linear space index.
    pub fn space_multi_index(&self, s: usize) -> [usize; 2] {
        match self.dim {
            1 => [s, 0],
            2 => [s / self.nodes(1), s % self.nodes(1)],
            _ => unreachable!(),
        }
    }

    /// Fill `buf[..dim]` with the coordinates of space node `s`.
    pub fn node_coords(&self, s: usize, buf: &mut [f64]) {
        let mi = self.space_multi_index(s);
        for axis in 0..self.dim {
            buf[axis] = self.coord(axis, mi[axis]);
        }
    }

    fn axis_weight(&self, axis: usize, i: usize) -> f64 {
        if i == 0 || i == self.cells[axis] {
            0.5
        } else {
            1.0
        }
    }

    /// Trapezoid weight of space node `s` (product over axes), without the
    /// cell volume factor.
    pub fn space_weight(&self, s: usize) -> f64 {
        let mi = self.space_multi_index(s);
        (0..self.dim)
            .map(|a| self.axis_weight(a, mi[a]))
            .product()
    }

    /// Trapezoid weight of time level `k`.
    pub fn time_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.n_time_steps {
            0.5
        } else {
            1.0
        }
    }

    /// Product of the spatial spacings (volume of one cell).
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// Measure of the spatial domain.
    pub fn space_measure(&self) -> f64 {
        (0..self.dim)
            .map(|a| {
                let (lo, hi) = self.extent(a);
                hi - lo
            })
            .product()
    }

    /// Measure of the space-time cylinder.
    pub fn space_time_measure(&self) -> f64 {
        self.space_measure() * self.t_final
    }

    pub fn is_boundary_node(&self, s: usize) -> bool {
        let mi = self.space_multi_index(s);
        (0..self.dim).any(|a| mi[a] == 0 || mi[a] == self.cells[a])
    }

    /// Composite trapezoid quadrature over the space-time cylinder of a
    /// node function `(time level, space node) -> value`.
    pub fn quadrature<F: FnMut(usize, usize) -> f64>(&self, mut f: F) -> f64 {
        let vol = self.cell_volume();
        let dt = self.dt();
        let mut total = 0.0;
        for k in 0..self.n_time_levels() {
            let wt = self.time_weight(k);
            let mut level = 0.0;
            for s in 0..self.n_space_nodes() {
                level += self.space_weight(s) * f(k, s);
            }
            total += wt * level;
        }
        total * vol * dt
    }

    /// Composite trapezoid quadrature over the spatial domain only.
    pub fn space_quadrature<F: FnMut(usize) -> f64>(&self, mut f: F) -> f64 {
        let vol = self.cell_volume();
        let mut total = 0.0;
        for s in 0..self.n_space_nodes() {
            total += self.space_weight(s) * f(s);
        }
        total * vol
    }
}
