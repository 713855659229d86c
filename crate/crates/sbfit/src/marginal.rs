//! Marginal response smoothers: the local-linear fit that seeds each
//! backfitting component, its recentered version, and the Nadaraya–Watson
//! smoother kept as a baseline.
//!
//! The local-linear fit reuses the *same* moment functions (`S₀, S₁, S₂`)
//! that the density layer computes, so the regression and density sides of
//! the algorithm cannot drift apart numerically: the denominator here is
//! `S₀S₂ - S₁²`, exactly `p̃·S₂` for the adjusted density `p̃` of the same
//! axis.

use crate::density::{AxisMoments, WeightMatrix};
use crate::error::{Error, Result};
use crate::grid::GridFn;

/// Intercept and slope curves of a per-grid-point weighted line fit.
#[derive(Debug, Clone)]
pub struct LocalLinearMarginal {
    /// Fitted value at each grid point (the marginal smooth).
    pub estimate: GridFn,
    /// Fitted slope at each grid point (a derivative estimate).
    pub slope: GridFn,
}

/// Weighted least-squares line fit at every grid point.
///
/// At each `x` minimizes `Σᵢ [Yᵢ - a - b(Xᵢ-x)]² W_h(x, Xᵢ)` and returns
/// the closed-form solution
/// `a = (S₂T₀ - S₁T₁)/(S₀S₂ - S₁²)`, `b = (S₀T₁ - S₁T₀)/(S₀S₂ - S₁²)`,
/// where `T₀, T₁` are the response sums with the same weights and lag
/// factors as the moments.
pub fn local_linear_marginal(
    weights: &WeightMatrix,
    data: &[f64],
    responses: &[f64],
    moments: &AxisMoments,
) -> Result<LocalLinearMarginal> {
    if data.len() != responses.len() || data.len() != weights.n() {
        return Err(Error::Data(format!(
            "lengths disagree: {} covariates, {} responses, {} weight columns",
            data.len(),
            responses.len(),
            weights.n()
        )));
    }
    if data.len() < 2 {
        return Err(Error::Data("need at least two observations".into()));
    }
    if responses.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite { context: "responses" });
    }
    let n = data.len() as f64;
    let cy: Vec<f64> = responses.iter().map(|y| y / n).collect();
    let cxy: Vec<f64> = data
        .iter()
        .zip(responses)
        .map(|(x, y)| x * y / n)
        .collect();
    let t0 = weights.combine(&cy);
    let txy = weights.combine(&cxy);
    let grid = weights.grid().clone();
    let mut est = Vec::with_capacity(grid.len());
    let mut slope = Vec::with_capacity(grid.len());
    for (g, &x) in grid.points().iter().enumerate() {
        let s0 = moments.mass.values()[g];
        let s1 = moments.tilt.values()[g];
        let s2 = moments.spread.values()[g];
        let u0 = t0.values()[g];
        let u1 = txy.values()[g] - x * u0;
        let det = s0 * s2 - s1 * s1;
        let scale = s0.abs() * s2.abs() + s1 * s1;
        if det.abs() <= 1e-14 * scale || det == 0.0 {
            return Err(Error::SingularWindow { x });
        }
        est.push((s2 * u0 - s1 * u1) / det);
        slope.push((s0 * u1 - s1 * u0) / det);
    }
    Ok(LocalLinearMarginal {
        estimate: GridFn::new(grid.clone(), est)?,
        slope: GridFn::new(grid, slope)?,
    })
}

/// Recenter a curve so its weighted integral vanishes:
/// `out = curve - (∫ curve·w) / (∫ w)`.
pub fn normalize(curve: &GridFn, weight: &GridFn) -> Result<GridFn> {
    let mass = weight.integrate();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let level = curve.integrate_weighted(weight)? / mass;
    Ok(curve.shift(level))
}

/// Kernel-weighted local average (local constant fit):
/// `(n⁻¹ Σ W_h(x, Xᵢ) Yᵢ) / S₀(x)`.
pub fn nw_marginal(
    weights: &WeightMatrix,
    responses: &[f64],
    mass: &GridFn,
) -> Result<GridFn> {
    if responses.len() != weights.n() {
        return Err(Error::Data(format!(
            "lengths disagree: {} responses, {} weight columns",
            responses.len(),
            weights.n()
        )));
    }
    if responses.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite { context: "responses" });
    }
    let n = responses.len() as f64;
    let cy: Vec<f64> = responses.iter().map(|y| y / n).collect();
    let t0 = weights.combine(&cy);
    let grid = weights.grid().clone();
    let mut out = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        let denom = mass.values()[g];
        if denom == 0.0 {
            return Err(Error::SingularDensity { x: grid.points()[g] });
        }
        out.push(t0.values()[g] / denom);
    }
    GridFn::new(grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::axis_moments;
    use crate::grid::Grid1D;
    use crate::kernel::{Biweight, BoundaryKernel, KernelMode, Side};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn setup(
        n: usize,
        h: f64,
        mode: KernelMode,
        seed: u64,
    ) -> (Grid1D, Vec<f64>, WeightMatrix, AxisMoments) {
        let grid = Grid1D::new(0.0, 1.0, 41).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let k = BoundaryKernel::new(Biweight, h, 0.0, 1.0, Side::Data, mode).unwrap();
        let w = WeightMatrix::build(&k, &grid, &data, false).unwrap();
        let m = axis_moments(&w, &data).unwrap();
        (grid, data, w, m)
    }

    #[test]
    fn reproduces_linear_responses_in_both_modes() {
        for (mode, seed) in [(KernelMode::Corrected, 10u64), (KernelMode::Conventional, 11)] {
            let (grid, data, w, m) = setup(60, 0.25, mode, seed);
            let y: Vec<f64> = data.iter().map(|x| 1.5 - 2.0 * x).collect();
            let fit = local_linear_marginal(&w, &data, &y, &m).unwrap();
            for (g, &x) in grid.points().iter().enumerate() {
                assert!(
                    (fit.estimate.values()[g] - (1.5 - 2.0 * x)).abs() < 1e-10,
                    "mode {mode:?} x={x}"
                );
                assert!((fit.slope.values()[g] + 2.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_responses_give_constant_fit() {
        let (grid, data, w, m) = setup(30, 0.3, KernelMode::Corrected, 12);
        let y = vec![4.25; data.len()];
        let fit = local_linear_marginal(&w, &data, &y, &m).unwrap();
        for g in 0..grid.len() {
            assert!((fit.estimate.values()[g] - 4.25).abs() < 1e-11);
            assert!(fit.slope.values()[g].abs() < 1e-10);
        }
    }

    #[test]
    fn matches_normal_equations_oracle_on_tiny_sample() {
        let grid = Grid1D::new(0.0, 1.0, 21).unwrap();
        let data = vec![0.12, 0.35, 0.5, 0.71, 0.9];
        let y = vec![0.3, -0.1, 0.8, 0.25, -0.6];
        let k =
            BoundaryKernel::new(Biweight, 0.45, 0.0, 1.0, Side::Data, KernelMode::Corrected)
                .unwrap();
        let w = WeightMatrix::build(&k, &grid, &data, false).unwrap();
        let m = axis_moments(&w, &data).unwrap();
        let fit = local_linear_marginal(&w, &data, &y, &m).unwrap();
        // independent path: accumulate the 2×2 normal equations from raw
        // kernel values and solve by Cramer's rule
        for (g, &x) in grid.points().iter().enumerate() {
            let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (i, &xi) in data.iter().enumerate() {
                let wv = k.eval(x, xi).unwrap();
                let dx = xi - x;
                s0 += wv;
                s1 += wv * dx;
                s2 += wv * dx * dx;
                t0 += wv * y[i];
                t1 += wv * dx * y[i];
            }
            let det = s0 * s2 - s1 * s1;
            let a = (s2 * t0 - s1 * t1) / det;
            let b = (s0 * t1 - s1 * t0) / det;
            assert!((fit.estimate.values()[g] - a).abs() < 1e-10, "x={x}");
            assert!((fit.slope.values()[g] - b).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn normalize_centers_and_is_idempotent() {
        let (grid, data, w, m) = setup(50, 0.2, KernelMode::Corrected, 13);
        let weight = m.adjusted().unwrap();
        let y: Vec<f64> = data.iter().map(|x| (6.0 * x).sin() + 2.0).collect();
        let fit = local_linear_marginal(&w, &data, &y, &m).unwrap();
        let centered = normalize(&fit.estimate, &weight).unwrap();
        let resid = centered.integrate_weighted(&weight).unwrap();
        assert!(resid.abs() < 1e-10 * (1.0 + centered.sup_norm()));
        let twice = normalize(&centered, &weight).unwrap();
        for g in 0..grid.len() {
            assert!((twice.values()[g] - centered.values()[g]).abs() < 1e-12);
        }
        // constant input centers to zero
        let flat = GridFn::sample(grid, |_| 3.0).unwrap();
        let z = normalize(&flat, &weight).unwrap();
        assert!(z.sup_norm() < 1e-12);
    }

    #[test]
    fn nw_reproduces_constants_but_not_lines() {
        let (grid, data, w, m) = setup(80, 0.25, KernelMode::Conventional, 14);
        let flat = vec![2.5; data.len()];
        let nw = nw_marginal(&w, &flat, &m.mass).unwrap();
        for g in 0..grid.len() {
            assert!((nw.values()[g] - 2.5).abs() < 1e-11);
        }
        // on linear data the local-constant fit is biased at the ends
        // where the design is one-sided, while local linear stays exact
        let y: Vec<f64> = data.iter().map(|x| 3.0 * x).collect();
        let nw = nw_marginal(&w, &y, &m.mass).unwrap();
        let ll = local_linear_marginal(&w, &data, &y, &m).unwrap();
        let ll_err = (0..grid.len())
            .map(|g| (ll.estimate.values()[g] - 3.0 * grid.points()[g]).abs())
            .fold(0.0f64, f64::max);
        let nw_err = (0..grid.len())
            .map(|g| (nw.values()[g] - 3.0 * grid.points()[g]).abs())
            .fold(0.0f64, f64::max);
        assert!(ll_err < 1e-10);
        assert!(nw_err > 0.05, "local-constant boundary bias should be visible: {nw_err}");
    }

    #[test]
    fn denominator_identity_with_density_layer() {
        // S₀S₂ - S₁² == p̃·S₂ for the adjusted density of the same moments
        let (grid, _, _, m) = setup(40, 0.3, KernelMode::Corrected, 15);
        let ptilde = m.adjusted().unwrap();
        for g in 0..grid.len() {
            let det = m.mass.values()[g] * m.spread.values()[g] - m.tilt.values()[g].powi(2);
            let via_density = ptilde.values()[g] * m.spread.values()[g];
            assert!((det - via_density).abs() <= 1e-15 * det.abs().max(1.0));
        }
    }

    #[test]
    fn length_mismatches_are_rejected() {
        let (_, data, w, m) = setup(20, 0.3, KernelMode::Corrected, 16);
        let short = vec![1.0; data.len() - 1];
        assert!(local_linear_marginal(&w, &data, &short, &m).is_err());
        assert!(nw_marginal(&w, &short, &m.mass).is_err());
        let mut bad = vec![0.0; data.len()];
        bad[3] = f64::INFINITY;
        assert!(matches!(
            local_linear_marginal(&w, &data, &bad, &m),
            Err(Error::NonFinite { .. })
        ));
    }
}
