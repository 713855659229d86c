//! Kernel weight matrices, marginal and pairwise density estimates, and the
//! transition surfaces that couple axes during backfitting.
//!
//! Everything here is grid-based: a weight matrix holds, for each data
//! point, the kernel profile it paints onto the evaluation grid (stored as a
//! windowed column, since the shapes have compact support). Marginal
//! moments, pairwise products, and response smooths are all inner products
//! against these columns, which keeps the cost at `O(n · window)` instead of
//! `O(n · m)` and guarantees that every consumer sees *identical* weights.
//!
//! The local-linear adjustment `p̃ = S₀ - S₁²/S₂` and its pairwise analogue
//! are built from the same three moment functions that the marginal response
//! smoother uses, so the algebraic identities between density and regression
//! layers hold at machine precision rather than approximately.

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid1D, GridFn, GridFn2};
use crate::kernel::{BoundaryKernel, KernelMode, KernelShape, Side};

/// Kernel weights of one sample against one evaluation grid.
///
/// Entry `(g, i)` is `W_h(x_g, X_i)`; only the window where the shape is
/// non-zero is stored. Columns are indexed by data point.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    grid: Grid1D,
    /// First grid index covered by each column.
    starts: Vec<usize>,
    /// Window values for each column.
    cols: Vec<Vec<f64>>,
}

impl WeightMatrix {
    /// Evaluate the kernel of every data point on the grid.
    ///
    /// `renormalize` divides each column by its trapezoid integral so the
    /// discrete zeroth-moment condition holds exactly on this grid; use it
    /// for evaluation-side kernels whose continuum condition the quadrature
    /// rule would otherwise only approximate. It requires corrected mode
    /// (conventional kernels do not satisfy the condition to begin with).
    pub fn build<S: KernelShape>(
        kernel: &BoundaryKernel<S>,
        grid: &Grid1D,
        data: &[f64],
        renormalize: bool,
    ) -> Result<Self> {
        let (lo, hi) = kernel.interval();
        if grid.lo() != lo || grid.hi() != hi {
            return Err(Error::Config(format!(
                "grid [{}, {}] does not match kernel interval [{lo}, {hi}]",
                grid.lo(),
                grid.hi()
            )));
        }
        if data.is_empty() {
            return Err(Error::Data("empty sample".into()));
        }
        if renormalize && kernel.mode() != KernelMode::Corrected {
            return Err(Error::Config(
                "column renormalization requires a corrected kernel".into(),
            ));
        }
        for &x in data {
            if !x.is_finite() {
                return Err(Error::NonFinite { context: "sample" });
            }
            if x < lo || x > hi {
                return Err(Error::Domain { x, lo, hi });
            }
        }

        let h = kernel.h();
        let reach = kernel.reach();
        let shape = kernel.shape();
        // Data-side corrections depend on the grid point only: precompute.
        let grid_coeff: Option<Vec<(f64, f64)>> = match kernel.side() {
            Side::Data => Some(
                grid.points()
                    .iter()
                    .map(|&u| kernel.correction(u))
                    .collect::<Result<_>>()?,
            ),
            Side::Eval => None,
        };

        let trap = grid.trap_weights();
        let mut starts = Vec::with_capacity(data.len());
        let mut cols = Vec::with_capacity(data.len());
        for &x in data {
            let (g0, g1) = grid.window(x, reach);
            let point_coeff = match kernel.side() {
                Side::Data => None,
                Side::Eval => Some(kernel.correction(x)?),
            };
            let mut col = Vec::with_capacity(g1 - g0);
            for g in g0..g1 {
                let u = grid.points()[g];
                let t = (x - u) / h;
                let (a, b) = match kernel.side() {
                    Side::Data => grid_coeff.as_ref().unwrap()[g],
                    Side::Eval => point_coeff.unwrap(),
                };
                col.push((a + b * t) * shape.eval(t) / h);
            }
            if renormalize {
                let total: f64 = col
                    .iter()
                    .zip(&trap[g0..g1])
                    .map(|(w, tw)| w * tw)
                    .sum();
                if total.abs() < 1e-8 {
                    return Err(Error::SingularWindow { x });
                }
                for w in &mut col {
                    *w /= total;
                }
            }
            starts.push(g0);
            cols.push(col);
        }
        Ok(WeightMatrix { grid: grid.clone(), starts, cols })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// Number of data points (columns).
    pub fn n(&self) -> usize {
        self.cols.len()
    }

    /// Window of column `i` as `(first_grid_index, values)`.
    pub fn column(&self, i: usize) -> (usize, &[f64]) {
        (self.starts[i], &self.cols[i])
    }

    /// Trapezoid integral of column `i` over the grid.
    pub fn column_integral(&self, i: usize) -> f64 {
        let trap = self.grid.trap_weights();
        let g0 = self.starts[i];
        self.cols[i]
            .iter()
            .zip(&trap[g0..])
            .map(|(w, tw)| w * tw)
            .sum()
    }

    /// Linear combination of columns: `Σ_i coef[i] · col_i` on the grid.
    pub fn combine(&self, coef: &[f64]) -> GridFn {
        assert_eq!(coef.len(), self.n(), "coefficient length must match sample size");
        let mut out = vec![0.0; self.grid.len()];
        for (i, col) in self.cols.iter().enumerate() {
            let c = coef[i];
            if c == 0.0 {
                continue;
            }
            let g0 = self.starts[i];
            for (k, w) in col.iter().enumerate() {
                out[g0 + k] += c * w;
            }
        }
        GridFn::new(self.grid.clone(), out).expect("finite combination")
    }
}

/// The three kernel moment functions of one axis: in density language the
/// zeroth, first and second local moments; in regression language the
/// normal-equation coefficients of the local-linear fit.
#[derive(Debug, Clone)]
pub struct AxisMoments {
    /// `S₀(x) = n⁻¹ Σ W_h(x, Xᵢ)` — the kernel density estimate.
    pub mass: GridFn,
    /// `S₁(x) = n⁻¹ Σ W_h(x, Xᵢ)(Xᵢ - x)`.
    pub tilt: GridFn,
    /// `S₂(x) = n⁻¹ Σ W_h(x, Xᵢ)(Xᵢ - x)²`.
    pub spread: GridFn,
}

/// Compute the moment functions of a sample from its weight matrix.
pub fn axis_moments(weights: &WeightMatrix, data: &[f64]) -> Result<AxisMoments> {
    if data.len() != weights.n() {
        return Err(Error::Data(format!(
            "sample length {} does not match weight matrix columns {}",
            data.len(),
            weights.n()
        )));
    }
    let n = data.len() as f64;
    let unit: Vec<f64> = vec![1.0 / n; data.len()];
    let first: Vec<f64> = data.iter().map(|x| x / n).collect();
    let second: Vec<f64> = data.iter().map(|x| x * x / n).collect();
    let s0 = weights.combine(&unit);
    let sx = weights.combine(&first);
    let sxx = weights.combine(&second);
    let pts = weights.grid().points().to_vec();
    let tilt = GridFn::new(
        weights.grid().clone(),
        pts.iter()
            .enumerate()
            .map(|(g, &x)| sx.values()[g] - x * s0.values()[g])
            .collect(),
    )?;
    let spread = GridFn::new(
        weights.grid().clone(),
        pts.iter()
            .enumerate()
            .map(|(g, &x)| {
                sxx.values()[g] - 2.0 * x * sx.values()[g] + x * x * s0.values()[g]
            })
            .collect(),
    )?;
    Ok(AxisMoments { mass: s0, tilt, spread })
}

impl AxisMoments {
    /// Local-linear adjusted density `p̃ = S₀ - S₁²/S₂`.
    ///
    /// Fails with [`Error::DegenerateWindow`] where the second moment
    /// vanishes (no sample mass reaches that grid point).
    pub fn adjusted(&self) -> Result<GridFn> {
        let scale = self
            .spread
            .values()
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        let grid = self.mass.grid().clone();
        let mut out = Vec::with_capacity(grid.len());
        for g in 0..grid.len() {
            let s2 = self.spread.values()[g];
            if s2.abs() <= 1e-12 * scale || s2 == 0.0 {
                return Err(Error::DegenerateWindow { x: grid.points()[g] });
            }
            let s1 = self.tilt.values()[g];
            out.push(self.mass.values()[g] - s1 * s1 / s2);
        }
        GridFn::new(grid, out)
    }
}

/// A density with small or negative values raised to a positive floor.
#[derive(Debug, Clone)]
pub struct ClippedDensity {
    pub values: GridFn,
    /// The floor that was applied: 1% of the average level.
    pub floor: f64,
    /// Whether any grid value actually had to be raised.
    pub was_clipped: bool,
}

/// Raise a density estimate to a small positive floor so it can be used as
/// a denominator and as an integration weight.
///
/// The floor is 1% of the density's mean level over the interval. Fails
/// with [`Error::ZeroMass`] when the total mass is not positive, since no
/// meaningful floor exists then.
pub fn clip_to_floor(density: &GridFn) -> Result<ClippedDensity> {
    let total = density.integrate();
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let span = density.grid().hi() - density.grid().lo();
    let floor = 0.01 * total / span;
    let mut was_clipped = false;
    let mut vals = density.values().to_vec();
    for v in &mut vals {
        if *v < floor {
            was_clipped = true;
            *v = floor;
        }
    }
    let values = GridFn::new(density.grid().clone(), vals)?;
    Ok(ClippedDensity { values, floor, was_clipped })
}

/// Weighted sum of outer products of matching columns:
/// `P[g, q] = Σ_i coef[i] · A[g, i] · B[q, i]`.
///
/// With `coef = 1/n` and an evaluation-side kernel on the second axis this
/// is the pairwise density estimate of the two samples.
pub fn pair_product(a: &WeightMatrix, b: &WeightMatrix, coef: &[f64]) -> Result<GridFn2> {
    if a.n() != b.n() || coef.len() != a.n() {
        return Err(Error::Data(format!(
            "mismatched sample sizes: {} vs {} vs {} coefficients",
            a.n(),
            b.n(),
            coef.len()
        )));
    }
    let mut out = GridFn2::zeros(a.grid().clone(), b.grid().clone());
    let nb = b.grid().len();
    for i in 0..a.n() {
        let c = coef[i];
        if c == 0.0 {
            continue;
        }
        let (ga0, col_a) = a.column(i);
        let (gb0, col_b) = b.column(i);
        for (ka, wa) in col_a.iter().enumerate() {
            let row = (ga0 + ka) * nb;
            let cwa = c * wa;
            let vals = out.values_mut();
            for (kb, wb) in col_b.iter().enumerate() {
                vals[row + gb0 + kb] += cwa * wb;
            }
        }
    }
    Ok(out)
}

/// Pairwise analogue of the local-linear density adjustment.
///
/// Given the plain pair product `P₀`, the pair product with first-axis data
/// coefficients `Xᵢ/n` (`P_x`), and the first axis's own moments, returns
/// `p̃(x, y) = P₀(x, y) - P*(x, y)·S₁(x)/S₂(x)` where
/// `P*(x, y) = P_x(x, y) - x·P₀(x, y)` carries the first-axis tilt factor.
pub fn adjusted_pair(
    p0: &GridFn2,
    px: &GridFn2,
    first_axis: &AxisMoments,
) -> Result<GridFn2> {
    let grid_a = p0.grid_a().clone();
    let grid_b = p0.grid_b().clone();
    if !grid_a.same_as(px.grid_a()) || !grid_b.same_as(px.grid_b()) {
        return Err(Error::GridMismatch);
    }
    if !grid_a.same_as(first_axis.mass.grid()) {
        return Err(Error::GridMismatch);
    }
    let scale = first_axis
        .spread
        .values()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let nb = grid_b.len();
    let mut out = GridFn2::zeros(grid_a.clone(), grid_b);
    for ga in 0..grid_a.len() {
        let x = grid_a.points()[ga];
        let s1 = first_axis.tilt.values()[ga];
        let s2 = first_axis.spread.values()[ga];
        if s2.abs() <= 1e-12 * scale || s2 == 0.0 {
            return Err(Error::DegenerateWindow { x });
        }
        let ratio = s1 / s2;
        for gb in 0..nb {
            let v0 = p0.get(ga, gb);
            let vx = px.get(ga, gb);
            let tilted = vx - x * v0;
            *out.get_mut(ga, gb) = v0 - tilted * ratio;
        }
    }
    Ok(out)
}

/// Transition surface that couples two axes in the backfitting update:
///
/// `π(x, y) = p̃_pair(x, y)/p̃_first(x) - (∫ p̃_pair(u, y) du) / (∫ p̃_first)`.
///
/// The subtraction makes the surface exactly orthogonal to the first-axis
/// weight: `∫ π(x, y)·p̃_first(x) dx = 0` for every `y`, so coupling terms
/// cannot reintroduce a constant component.
pub fn transition(pair: &GridFn2, first: &GridFn) -> Result<GridFn2> {
    if !pair.grid_a().same_as(first.grid()) {
        return Err(Error::GridMismatch);
    }
    let mass = first.integrate();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let col_mass = pair.integrate_out(Axis::A, None)?;
    let nb = pair.grid_b().len();
    let mut out = GridFn2::zeros(pair.grid_a().clone(), pair.grid_b().clone());
    for ga in 0..pair.grid_a().len() {
        let p = first.values()[ga];
        if p == 0.0 {
            return Err(Error::SingularDensity { x: pair.grid_a().points()[ga] });
        }
        for gb in 0..nb {
            *out.get_mut(ga, gb) = pair.get(ga, gb) / p - col_mass.values()[gb] / mass;
        }
    }
    Ok(out)
}
