//! Uniform evaluation grids and functions sampled on them.
//!
//! Everything downstream (densities, transition tables, fitted component
//! curves) lives on a [`Grid1D`]. All integrals use the trapezoidal rule so
//! that one consistent quadrature underlies the algebraic identities the
//! estimator relies on; see [`GridFn::integrate`] and
//! [`GridFn2::integrate_out`].

use crate::error::{Error, Result};

/// Equally spaced points spanning a closed interval.
#[derive(Debug, Clone)]
pub struct Grid1D {
    lo: f64,
    hi: f64,
    points: Vec<f64>,
}

impl Grid1D {
    /// `m` equally spaced points on `[lo, hi]`, endpoints included.
    pub fn new(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "grid interval [{lo}, {hi}] must be finite with lo < hi"
            )));
        }
        if m < 2 {
            return Err(Error::Config(format!("grid needs at least 2 points, got {m}")));
        }
        let step = (hi - lo) / (m - 1) as f64;
        let mut points: Vec<f64> = (0..m).map(|i| lo + step * i as f64).collect();
        points[m - 1] = hi; // pin the endpoint exactly
        Ok(Grid1D { lo, hi, points })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.len() - 1) as f64
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Trapezoid quadrature weights: `step` everywhere, halved at the ends.
    pub fn trap_weights(&self) -> Vec<f64> {
        let step = self.step();
        let m = self.len();
        let mut w = vec![step; m];
        w[0] *= 0.5;
        w[m - 1] *= 0.5;
        w
    }

    /// Index range `[a, b)` of grid points inside `[center - half, center + half]`.
    pub fn window(&self, center: f64, half: f64) -> (usize, usize) {
        let step = self.step();
        let a = ((center - half - self.lo) / step).ceil().max(0.0) as usize;
        let b = (((center + half - self.lo) / step).floor() as isize + 1).max(0) as usize;
        (a.min(self.len()), b.min(self.len()))
    }

    pub fn same_as(&self, other: &Grid1D) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.len() == other.len()
    }
}

/// A real function sampled on a [`Grid1D`].
#[derive(Debug, Clone)]
pub struct GridFn {
    grid: Grid1D,
    values: Vec<f64>,
}

impl GridFn {
    /// Wrap sampled values; they must be finite and match the grid length.
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "constructing a grid function",
            });
        }
        Ok(GridFn { grid, values })
    }

    /// Sample a closure at every grid point.
    pub fn sample(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&x| f(x)).collect();
        GridFn::new(grid, values)
    }

    pub fn zeros(grid: Grid1D) -> Self {
        let values = vec![0.0; grid.len()];
        GridFn { grid, values }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Trapezoidal integral over the whole interval.
    pub fn integrate(&self) -> f64 {
        let w = self.grid.trap_weights();
        self.values.iter().zip(w).map(|(v, wi)| v * wi).sum()
    }

    /// Trapezoidal integral restricted to the grid nodes lying in `[a, b]`.
    ///
    /// The bounds are snapped to nodes (no partial cells), so the result is
    /// the plain trapezoid rule on the sub-grid `{x_i : a <= x_i <= b}`.
    /// Returns 0 when fewer than two nodes fall inside.
    pub fn integrate_between(&self, a: f64, b: f64) -> f64 {
        let step = self.grid.step();
        let start = (((a - self.grid.lo()) / step).ceil().max(0.0)) as usize;
        let end = ((((b - self.grid.lo()) / step).floor() as isize + 1).max(0) as usize)
            .min(self.grid.len());
        if start + 2 > end {
            return 0.0;
        }
        let step = self.grid.step();
        let mut total = 0.0;
        for i in start..end - 1 {
            total += 0.5 * step * (self.values[i] + self.values[i + 1]);
        }
        total
    }

    /// Trapezoidal integral of `self * weight` (same grid required).
    pub fn integrate_weighted(&self, weight: &GridFn) -> Result<f64> {
        if !self.grid.same_as(&weight.grid) {
            return Err(Error::GridMismatch);
        }
        let w = self.grid.trap_weights();
        Ok(self
            .values
            .iter()
            .zip(&weight.values)
            .zip(w)
            .map(|((v, p), wi)| v * p * wi)
            .sum())
    }

    /// Linear interpolation; `x` must lie inside the grid interval.
    pub fn eval_at(&self, x: f64) -> Result<f64> {
        let (lo, hi) = (self.grid.lo, self.grid.hi);
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain { x, lo, hi });
        }
        let step = self.grid.step();
        let pos = (x - lo) / step;
        let i = (pos.floor() as usize).min(self.grid.len() - 2);
        let frac = pos - i as f64;
        Ok(self.values[i] * (1.0 - frac) + self.values[i + 1] * frac)
    }

    /// Central second difference; endpoint values copy their inner neighbor.
    pub fn second_difference(&self) -> GridFn {
        let m = self.grid.len();
        let s2 = self.grid.step() * self.grid.step();
        let mut out = vec![0.0; m];
        for i in 1..m - 1 {
            out[i] = (self.values[i - 1] - 2.0 * self.values[i] + self.values[i + 1]) / s2;
        }
        out[0] = out[1.min(m - 1)];
        out[m - 1] = out[m - 2];
        GridFn {
            grid: self.grid.clone(),
            values: out,
        }
    }

    /// Pointwise combination with another function on the same grid.
    pub fn zip_with(&self, other: &GridFn, f: impl Fn(f64, f64) -> f64) -> Result<GridFn> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        GridFn::new(self.grid.clone(), values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GridFn> {
        GridFn::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Subtract a constant (recentering helper).
    pub fn shift(&self, c: f64) -> GridFn {
        GridFn {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v - c).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Which axis of a [`GridFn2`] an operation runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// The first (row) grid.
    A,
    /// The second (column) grid.
    B,
}

/// A real function sampled on the product of two grids, stored row-major
/// (rows indexed by the first grid).
#[derive(Debug, Clone)]
pub struct GridFn2 {
    grid_a: Grid1D,
    grid_b: Grid1D,
    values: Vec<f64>,
}

impl GridFn2 {
    pub fn zeros(grid_a: Grid1D, grid_b: Grid1D) -> Self {
        let values = vec![0.0; grid_a.len() * grid_b.len()];
        GridFn2 {
            grid_a,
            grid_b,
            values,
        }
    }

    pub fn new(grid_a: Grid1D, grid_b: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid_a.len() * grid_b.len() {
            return Err(Error::GridMismatch);
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "constructing a bivariate grid function",
            });
        }
        Ok(GridFn2 {
            grid_a,
            grid_b,
            values,
        })
    }

    pub fn grid_a(&self) -> &Grid1D {
        &self.grid_a
    }

    pub fn grid_b(&self) -> &Grid1D {
        &self.grid_b
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let nb = self.grid_b.len();
        &self.values[i * nb..(i + 1) * nb]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let nb = self.grid_b.len();
        &mut self.values[i * nb..(i + 1) * nb]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid_b.len() + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let nb = self.grid_b.len();
        &mut self.values[i * nb + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Integrate one axis away (trapezoid), optionally against a weight
    /// function living on the integrated-out grid. The result lives on the
    /// remaining grid.
    pub fn integrate_out(&self, axis: Axis, weight: Option<&GridFn>) -> Result<GridFn> {
        let (gone, kept) = match axis {
            Axis::A => (&self.grid_a, &self.grid_b),
            Axis::B => (&self.grid_b, &self.grid_a),
        };
        let mut w = gone.trap_weights();
        if let Some(wf) = weight {
            if !wf.grid().same_as(gone) {
                return Err(Error::GridMismatch);
            }
            for (wi, v) in w.iter_mut().zip(wf.values()) {
                *wi *= v;
            }
        }
        let (na, nb) = (self.grid_a.len(), self.grid_b.len());
        let mut out = vec![0.0; kept.len()];
        match axis {
            Axis::B => {
                for (i, o) in out.iter_mut().enumerate() {
                    let row = self.row(i);
                    *o = row.iter().zip(&w).map(|(v, wi)| v * wi).sum();
                }
            }
            Axis::A => {
                for i in 0..na {
                    let row = self.row(i);
                    let wi = w[i];
                    for j in 0..nb {
                        out[j] += row[j] * wi;
                    }
                }
            }
        }
        GridFn::new(kept.clone(), out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(m: usize) -> Grid1D {
        Grid1D::new(0.0, 1.0, m).unwrap()
    }

    #[test]
    fn grid_endpoints_exact() {
        let gr = Grid1D::new(0.1, 0.9, 7).unwrap();
        assert_eq!(gr.points()[0], 0.1);
        assert_eq!(gr.points()[6], 0.9);
        assert!(Grid1D::new(1.0, 0.0, 5).is_err());
        assert!(Grid1D::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn trapezoid_exact_for_linear() {
        let f = GridFn::sample(g(11), |x| 3.0 * x - 1.0).unwrap();
        assert!((f.integrate() - 0.5).abs() < 1e-14);
        let c = GridFn::sample(g(2), |_| 4.0).unwrap();
        assert!((c.integrate() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_quadratic_error_small() {
        let f = GridFn::sample(g(101), |x| x * x).unwrap();
        // composite trapezoid error for x^2 on [0,1]: step^2/6 * (b-a) f''/2 = 1/(6*100^2)
        assert!((f.integrate() - 1.0 / 3.0).abs() < 2e-5);
    }

    #[test]
    fn restricted_integral_matches_subgrid_trapezoid() {
        let f = GridFn::sample(g(11), |x| 3.0 * x - 1.0).unwrap();
        // nodes in [0.2, 0.8] are 0.2..=0.8; exact integral of 3x-1 there is 0.3
        assert!((f.integrate_between(0.2, 0.8) - 0.3).abs() < 1e-14);
        // bounds that are not nodes snap inward: [0.25, 0.75] -> nodes 0.3..=0.7
        let inner: f64 = (3..=6)
            .map(|i| 0.5 * 0.1 * ((3.0 * (i as f64) / 10.0 - 1.0) + (3.0 * (i as f64 + 1.0) / 10.0 - 1.0)))
            .sum();
        assert!((f.integrate_between(0.25, 0.75) - inner).abs() < 1e-14);
        // full range agrees with integrate(); degenerate ranges give zero
        assert!((f.integrate_between(-1.0, 2.0) - f.integrate()).abs() < 1e-14);
        assert_eq!(f.integrate_between(0.41, 0.49), 0.0);
        assert_eq!(f.integrate_between(0.8, 0.2), 0.0);
    }

    #[test]
    fn eval_at_interpolates_and_guards_domain() {
        let f = GridFn::sample(g(5), |x| 2.0 * x).unwrap();
        assert!((f.eval_at(0.375).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(f.eval_at(0.0).unwrap(), 0.0);
        assert_eq!(f.eval_at(1.0).unwrap(), 2.0);
        assert!(matches!(f.eval_at(1.0001), Err(Error::Domain { .. })));
        assert!(matches!(f.eval_at(-0.2), Err(Error::Domain { .. })));
    }

    #[test]
    fn eval_at_reproduces_nodes() {
        let f = GridFn::sample(g(17), |x| x.sin()).unwrap();
        for (&x, &v) in f.grid().points().iter().zip(f.values()) {
            assert_eq!(f.eval_at(x).unwrap(), v);
        }
    }

    #[test]
    fn second_difference_quadratic_exact() {
        let f = GridFn::sample(g(101), |x| x * x).unwrap();
        for v in f.second_difference().values() {
            assert!((v - 2.0).abs() < 1e-9);
        }
        // quartic: f'' = 12 x^2, fourth derivative bounds the error
        let q = GridFn::sample(g(101), |x| x.powi(4)).unwrap();
        let dd = q.second_difference();
        let mid = dd.eval_at(0.5).unwrap();
        assert!((mid - 3.0).abs() < 1e-3);
    }

    #[test]
    fn integrate_out_matches_brute_force() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(42);
        let (ga, gb) = (g(13), Grid1D::new(-1.0, 2.0, 9).unwrap());
        let values: Vec<f64> = (0..ga.len() * gb.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let f2 = GridFn2::new(ga.clone(), gb.clone(), values).unwrap();
        let wfn = GridFn::sample(gb.clone(), |x| 1.0 + x * x).unwrap();

        let got = f2.integrate_out(Axis::B, Some(&wfn)).unwrap();
        let wq = gb.trap_weights();
        for i in 0..ga.len() {
            let mut acc = 0.0;
            for j in 0..gb.len() {
                acc += f2.get(i, j) * wfn.values()[j] * wq[j];
            }
            assert!((got.values()[i] - acc).abs() < 1e-14);
        }

        let got_a = f2.integrate_out(Axis::A, None).unwrap();
        let wa = ga.trap_weights();
        for j in 0..gb.len() {
            let mut acc = 0.0;
            for i in 0..ga.len() {
                acc += f2.get(i, j) * wa[i];
            }
            assert!((got_a.values()[j] - acc).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let f = GridFn::sample(g(5), |x| x).unwrap();
        let h = GridFn::sample(g(7), |x| x).unwrap();
        assert!(matches!(f.integrate_weighted(&h), Err(Error::GridMismatch)));
        assert!(matches!(f.zip_with(&h, |a, b| a + b), Err(Error::GridMismatch)));
    }

    #[test]
    fn window_covers_support() {
        let gr = g(101);
        let (a, b) = gr.window(0.5, 0.1);
        assert_eq!((a, b), (40, 61));
        let (a, b) = gr.window(0.0, 0.15);
        assert_eq!((a, b), (0, 16));
        let (a, b) = gr.window(1.0, 0.2);
        assert_eq!((a, b), (80, 101));
    }

    #[test]
    fn non_finite_rejected() {
        let res = GridFn::new(g(3), vec![0.0, f64::NAN, 1.0]);
        assert!(matches!(res, Err(Error::NonFinite { .. })));
    }
}
