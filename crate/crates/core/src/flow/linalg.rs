//! Tridiagonal linear solves used by the implicit time steppers: the
//! Thomas algorithm for fixed-boundary systems and its Sherman-Morrison
//! extension for periodic (cyclically coupled) systems.

/// Reusable workspace for tridiagonal solves; the system size is taken
/// from the band slices, so one workspace serves sweeps of different
/// lengths.
///
/// Row `i` of the system reads
/// `lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1] = rhs[i]`
/// with `lower[0]` and `upper[n-1]` ignored.
pub struct TridiagonalSolver {
    c: Vec<f64>,
    d: Vec<f64>,
}

impl TridiagonalSolver {
    pub fn new(capacity: usize) -> Self {
        TridiagonalSolver {
            c: vec![0.0; capacity],
            d: vec![0.0; capacity],
        }
    }

    /// Thomas algorithm. Fails with the pivot index if elimination hits a
    /// zero pivot (the steppers only assemble diagonally dominant rows,
    /// so this indicates a broken assembly, not an unlucky matrix).
    pub fn solve(
        &mut self,
        lower: &[f64],
        diag: &[f64],
        upper: &[f64],
        rhs: &[f64],
        out: &mut [f64],
    ) -> Result<(), String> {
        let n = diag.len();
        debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n && out.len() == n);
        if n == 0 {
            return Ok(());
        }
        if self.c.len() < n {
            self.c.resize(n, 0.0);
            self.d.resize(n, 0.0);
        }
        if diag[0] == 0.0 {
            return Err("zero pivot at row 0".into());
        }
        self.c[0] = upper[0] / diag[0];
        self.d[0] = rhs[0] / diag[0];
        for i in 1..n {
            let denom = diag[i] - lower[i] * self.c[i - 1];
            if denom == 0.0 {
                return Err(format!("zero pivot at row {i}"));
            }
            self.c[i] = upper[i] / denom;
            self.d[i] = (rhs[i] - lower[i] * self.d[i - 1]) / denom;
        }
        out[n - 1] = self.d[n - 1];
        for i in (0..n - 1).rev() {
            out[i] = self.d[i] - self.c[i] * out[i + 1];
        }
        Ok(())
    }

    /// Periodic variant: the matrix additionally couples
    /// `corner_first * x[n-1]` into row 0 and `corner_last * x[0]` into
    /// row `n-1`. Solved by the Sherman-Morrison rank-one update of the
    /// plain tridiagonal system.
    #[allow(clippy::too_many_arguments)]
    pub fn solve_cyclic(
        &mut self,
        lower: &[f64],
        diag: &[f64],
        upper: &[f64],
        corner_first: f64,
        corner_last: f64,
        rhs: &[f64],
        out: &mut [f64],
    ) -> Result<(), String> {
        let n = diag.len();
        if n < 3 {
            return Err("cyclic solve needs at least 3 unknowns".into());
        }
        // A = T + u v^T with u = (gamma, 0, .., 0, corner_last)^T,
        // v = (1, 0, .., 0, corner_first / gamma)^T, where T equals the
        // given tridiagonal matrix with modified first and last diagonal
        // entries.
        let gamma = -diag[0];
        if gamma == 0.0 {
            return Err("zero pivot at row 0".into());
        }
        let mut mod_diag = diag.to_vec();
        mod_diag[0] = diag[0] - gamma;
        mod_diag[n - 1] = diag[n - 1] - corner_first * corner_last / gamma;
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = corner_last;
        let mut z = vec![0.0; n];
        self.solve(lower, &mod_diag, upper, rhs, out)?;
        self.solve(lower, &mod_diag, upper, &u, &mut z)?;
        let v_dot_y = out[0] + corner_first / gamma * out[n - 1];
        let v_dot_z = z[0] + corner_first / gamma * z[n - 1];
        let denom = 1.0 + v_dot_z;
        if denom == 0.0 {
            return Err("singular cyclic correction".into());
        }
        let factor = v_dot_y / denom;
        for (o, zi) in out.iter_mut().zip(&z) {
            *o -= factor * zi;
        }
        Ok(())
    }
}
