//! The additive-model solver: marginal seeds plus transition surfaces are
//! assembled once per fit, then Gauss–Seidel sweeps contract to the fixed
//! point of
//!
//! ```text
//! m̂_j(x_j) = seed_j(x_j) - Σ_{k≠j} ∫ m̂_k(x_k) π_jk(x_j, x_k) dx_k
//! ```
//!
//! A dense direct solve of the same discrete system is included as a test
//! oracle, along with the centering variants ("normings") that pin down the
//! additive decomposition, prediction, and the theoretical-bias diagnostics
//! used by the simulation harness.

use crate::density::{
    adjusted_pair, axis_moments, clip_to_floor, pair_product, transition, AxisMoments,
    WeightMatrix,
};
use crate::error::{Error, Result};
use crate::grid::{Grid1D, GridFn, GridFn2};
use crate::kernel::{make_compensating, Biweight, BoundaryKernel, KernelMode, Side};
use crate::marginal::{local_linear_marginal, normalize, nw_marginal};

/// Which constraint pins down the component constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norming {
    /// Zero integral against the adjusted density `p̃_j` — the solver's
    /// natural fixed-point centering; applying it is a no-op.
    AdjustedDensity,
    /// Zero integral against the plain density estimate `p̂_j`.
    RawDensity,
    /// Zero sample mean over the observed covariate values.
    SampleMean,
}

impl std::str::FromStr for Norming {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ptilde" => Ok(Norming::AdjustedDensity),
            "phat" => Ok(Norming::RawDensity),
            "sample-mean" => Ok(Norming::SampleMean),
            other => Err(Error::Config(format!(
                "unknown norming '{other}' (expected 'ptilde', 'phat' or 'sample-mean')"
            ))),
        }
    }
}

impl std::fmt::Display for Norming {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Norming::AdjustedDensity => "ptilde",
            Norming::RawDensity => "phat",
            Norming::SampleMean => "sample-mean",
        })
    }
}

/// Solver and smoothing options for one fit.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub kernel_mode: KernelMode,
    pub norming: Norming,
    /// Relative convergence tolerance; the sweep stops when the largest
    /// component change falls below `tol · (1 + max|Y|)`.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            kernel_mode: KernelMode::Corrected,
            norming: Norming::SampleMean,
            tol: 1e-8,
            max_sweeps: 200,
        }
    }
}

/// Non-fatal conditions observed during a fit.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitWarnings {
    /// Some density value had to be raised to the positive floor.
    pub clipped_density: bool,
    /// Convergence took more than half the sweep budget.
    pub slow_convergence: bool,
}

/// A fitted additive model on per-axis grids.
#[derive(Debug, Clone)]
pub struct AdditiveFit {
    /// Constant term of the decomposition.
    pub intercept: f64,
    /// Centered component curves, one per covariate.
    pub components: Vec<GridFn>,
    /// The centering convention the components currently satisfy.
    pub norming: Norming,
    pub sweeps: usize,
    pub final_residual: f64,
    pub warnings: FitWarnings,
    /// Per-axis centering weight (floored density) — kept so normings can
    /// be switched without refitting.
    center_weights: Vec<GridFn>,
    /// Per-axis plain density estimate.
    mass: Vec<GridFn>,
}

impl AdditiveFit {
    pub fn center_weight(&self, j: usize) -> &GridFn {
        &self.center_weights[j]
    }

    pub fn mass(&self, j: usize) -> &GridFn {
        &self.mass[j]
    }
}

/// The discrete fixed-point system: centered marginal seeds and the
/// transition surfaces coupling every ordered axis pair.
#[derive(Debug, Clone)]
pub struct BackfitSystem {
    /// Centered marginal smooth per axis — the update's constant term.
    pub seeds: Vec<GridFn>,
    /// `couplings[j][k]` is the surface integrating component `k` into the
    /// update of component `j`; `None` on the diagonal.
    pub couplings: Vec<Vec<Option<GridFn2>>>,
}

impl BackfitSystem {
    pub fn dims(&self) -> usize {
        self.seeds.len()
    }
}

fn validate_inputs(
    columns: &[Vec<f64>],
    responses: &[f64],
    grids: &[Grid1D],
    bandwidths: &[f64],
) -> Result<()> {
    let d = columns.len();
    if d == 0 {
        return Err(Error::Data("need at least one covariate".into()));
    }
    if grids.len() != d || bandwidths.len() != d {
        return Err(Error::Config(format!(
            "got {d} covariates but {} grids and {} bandwidths",
            grids.len(),
            bandwidths.len()
        )));
    }
    let n = responses.len();
    if n < d + 2 {
        return Err(Error::Data(format!(
            "need at least {} observations for {d} covariates, got {n}",
            d + 2
        )));
    }
    for (j, col) in columns.iter().enumerate() {
        if col.len() != n {
            return Err(Error::Data(format!(
                "covariate {j} has {} values but there are {n} responses",
                col.len()
            )));
        }
    }
    if responses.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite { context: "responses" });
    }
    Ok(())
}

/// Per-axis intermediate state shared by the two fit flavours.
struct AxisState {
    weights: WeightMatrix,
    moments: AxisMoments,
    center_weight: GridFn,
    clipped: bool,
}

fn build_axis_states(
    columns: &[Vec<f64>],
    grids: &[Grid1D],
    bandwidths: &[f64],
    mode: KernelMode,
    center_on_adjusted: bool,
) -> Result<Vec<AxisState>> {
    let mut states = Vec::with_capacity(columns.len());
    for (j, col) in columns.iter().enumerate() {
        let grid = &grids[j];
        let kernel = BoundaryKernel::new(
            Biweight,
            bandwidths[j],
            grid.lo(),
            grid.hi(),
            Side::Data,
            mode,
        )?;
        let weights = WeightMatrix::build(&kernel, grid, col, false)?;
        let moments = axis_moments(&weights, col)?;
        let raw = if center_on_adjusted {
            moments.adjusted()?
        } else {
            moments.mass.clone()
        };
        let clip = clip_to_floor(&raw)?;
        states.push(AxisState {
            weights,
            moments,
            center_weight: clip.values,
            clipped: clip.was_clipped,
        });
    }
    Ok(states)
}

/// Build the coupling surface carrying component `k` into the update of
/// component `j`, using the local-linear-adjusted pair estimate.
fn coupling_surface(
    state_j: &AxisState,
    col_j: &[f64],
    col_k: &[f64],
    grid_k: &Grid1D,
    h_k: f64,
    mode: KernelMode,
) -> Result<GridFn2> {
    let lk = BoundaryKernel::new(
        make_compensating(Biweight),
        h_k,
        grid_k.lo(),
        grid_k.hi(),
        Side::Eval,
        mode,
    )?;
    let wk = WeightMatrix::build(&lk, grid_k, col_k, mode == KernelMode::Corrected)?;
    let n = col_j.len() as f64;
    let unit: Vec<f64> = vec![1.0 / n; col_j.len()];
    let firsts: Vec<f64> = col_j.iter().map(|x| x / n).collect();
    let p0 = pair_product(&state_j.weights, &wk, &unit)?;
    let px = pair_product(&state_j.weights, &wk, &firsts)?;
    let pt = adjusted_pair(&p0, &px, &state_j.moments)?;
    transition(&pt, &state_j.center_weight)
}

/// Coupling surface for the local-constant baseline: the plain pair
/// estimate over the plain density, centered the same way. The second axis
/// is smoothed with the base shape corrected in its evaluation argument so
/// the marginalization identity still holds.
fn coupling_surface_nw(
    state_j: &AxisState,
    col_k: &[f64],
    grid_k: &Grid1D,
    h_k: f64,
    mode: KernelMode,
) -> Result<GridFn2> {
    let kk = BoundaryKernel::new(Biweight, h_k, grid_k.lo(), grid_k.hi(), Side::Eval, mode)?;
    let wk = WeightMatrix::build(&kk, grid_k, col_k, mode == KernelMode::Corrected)?;
    let n = col_k.len() as f64;
    let unit: Vec<f64> = vec![1.0 / n; col_k.len()];
    let p0 = pair_product(&state_j.weights, &wk, &unit)?;
    transition(&p0, &state_j.center_weight)
}

/// Run Gauss–Seidel sweeps on a prepared system.
///
/// Returns the components together with the sweep count, final residual,
/// and the full residual trace (one entry per sweep: the largest sup-norm
/// change over components in that sweep).
pub fn gauss_seidel(
    system: &BackfitSystem,
    tol_abs: f64,
    max_sweeps: usize,
) -> Result<(Vec<GridFn>, usize, f64, Vec<f64>)> {
    let d = system.dims();
    let grids: Vec<Grid1D> = system.seeds.iter().map(|s| s.grid().clone()).collect();
    let trap: Vec<Vec<f64>> = grids.iter().map(|g| g.trap_weights()).collect();
    let mut comp: Vec<Vec<f64>> = grids.iter().map(|g| vec![0.0; g.len()]).collect();
    let mut trace = Vec::new();
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut residual = 0.0f64;
        for j in 0..d {
            let seed = system.seeds[j].values();
            let mut fresh = seed.to_vec();
            for k in 0..d {
                if k == j {
                    continue;
                }
                let pi = system.couplings[j][k]
                    .as_ref()
                    .expect("off-diagonal coupling present");
                // fresh[ga] -= Σ_gk trap_k[gk] · comp_k[gk] · π[ga, gk]
                let mk = &comp[k];
                let tw = &trap[k];
                for (ga, f) in fresh.iter_mut().enumerate() {
                    let row = pi.row(ga);
                    let mut acc = 0.0;
                    for gk in 0..row.len() {
                        acc += tw[gk] * mk[gk] * row[gk];
                    }
                    *f -= acc;
                }
            }
            let change = fresh
                .iter()
                .zip(&comp[j])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            residual = residual.max(change);
            comp[j] = fresh;
        }
        if !residual.is_finite() {
            trace.push(residual);
            return Err(Error::NonConvergence {
                sweeps,
                last: residual,
                trace,
            });
        }
        trace.push(residual);
        if residual < tol_abs {
            let out = comp
                .into_iter()
                .zip(grids)
                .map(|(v, g)| GridFn::new(g, v))
                .collect::<Result<Vec<_>>>()?;
            return Ok((out, sweeps, residual, trace));
        }
    }
    let last = trace.last().copied().unwrap_or(f64::INFINITY);
    Err(Error::NonConvergence {
        sweeps,
        last,
        trace,
    })
}

/// Solve the discrete system directly: stack all component values into one
/// vector and solve `(I + C) m = seed` densely, where `C` holds the
/// coupling surfaces times the quadrature weights.
///
/// Intended as an oracle for [`gauss_seidel`]; cost is cubic in the total
/// number of grid points. Also returns the sup-norm residual of the solved
/// linear system as a self-check.
pub fn solve_direct(system: &BackfitSystem) -> Result<(Vec<GridFn>, f64)> {
    let d = system.dims();
    let sizes: Vec<usize> = system.seeds.iter().map(|s| s.grid().len()).collect();
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0usize, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let total: usize = sizes.iter().sum();
    if total > 4000 {
        return Err(Error::Config(format!(
            "direct solve limited to 4000 unknowns, got {total}"
        )));
    }
    let mut mat = nalgebra::DMatrix::<f64>::identity(total, total);
    let mut rhs = nalgebra::DVector::<f64>::zeros(total);
    for j in 0..d {
        for (g, &v) in system.seeds[j].values().iter().enumerate() {
            rhs[offsets[j] + g] = v;
        }
        for k in 0..d {
            if k == j {
                continue;
            }
            let pi = system.couplings[j][k]
                .as_ref()
                .expect("off-diagonal coupling present");
            let tw = system.seeds[k].grid().trap_weights();
            for ga in 0..sizes[j] {
                let row = pi.row(ga);
                for gk in 0..sizes[k] {
                    mat[(offsets[j] + ga, offsets[k] + gk)] += row[gk] * tw[gk];
                }
            }
        }
    }
    let lu = mat.clone().lu();
    let sol = lu.solve(&rhs).ok_or(Error::SingularSystem)?;
    let resid = (&mat * &sol - &rhs).amax();
    let mut out = Vec::with_capacity(d);
    for j in 0..d {
        let vals: Vec<f64> = (0..sizes[j]).map(|g| sol[offsets[j] + g]).collect();
        out.push(GridFn::new(system.seeds[j].grid().clone(), vals)?);
    }
    Ok((out, resid))
}

fn finish_fit(
    components: Vec<GridFn>,
    intercept: f64,
    sweeps: usize,
    final_residual: f64,
    states: Vec<AxisState>,
    columns: &[Vec<f64>],
    options: &FitOptions,
) -> Result<AdditiveFit> {
    let clipped = states.iter().any(|s| s.clipped);
    let fit = AdditiveFit {
        intercept,
        components,
        norming: Norming::AdjustedDensity,
        sweeps,
        final_residual,
        warnings: FitWarnings {
            clipped_density: clipped,
            slow_convergence: sweeps > options.max_sweeps / 2,
        },
        center_weights: states.iter().map(|s| s.center_weight.clone()).collect(),
        mass: states.into_iter().map(|s| s.moments.mass).collect(),
    };
    apply_norming(&fit, options.norming, columns)
}

/// Fit the additive model with local-linear marginal smoothers.
///
/// `columns` holds the `d` covariate columns (all length `n`), `grids` the
/// evaluation grid per axis (also declaring each axis's interval), and
/// `bandwidths` the kernel scale per axis.
pub fn fit(
    columns: &[Vec<f64>],
    responses: &[f64],
    grids: &[Grid1D],
    bandwidths: &[f64],
    options: &FitOptions,
) -> Result<AdditiveFit> {
    validate_inputs(columns, responses, grids, bandwidths)?;
    let d = columns.len();
    let n = responses.len();
    let intercept = responses.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = responses.iter().map(|y| y - intercept).collect();

    let states = build_axis_states(columns, grids, bandwidths, options.kernel_mode, true)?;
    let mut seeds = Vec::with_capacity(d);
    for (j, state) in states.iter().enumerate() {
        let ll = local_linear_marginal(&state.weights, &columns[j], &centered, &state.moments)?;
        seeds.push(normalize(&ll.estimate, &state.center_weight)?);
    }
    let mut couplings: Vec<Vec<Option<GridFn2>>> = (0..d).map(|_| vec![None; d]).collect();
    for j in 0..d {
        for k in 0..d {
            if j == k {
                continue;
            }
            couplings[j][k] = Some(coupling_surface(
                &states[j],
                &columns[j],
                &columns[k],
                &grids[k],
                bandwidths[k],
                options.kernel_mode,
            )?);
        }
    }
    let system = BackfitSystem { seeds, couplings };
    let yscale = responses.iter().fold(0.0f64, |a, y| a.max(y.abs()));
    let (components, sweeps, final_residual, _) =
        gauss_seidel(&system, options.tol * (1.0 + yscale), options.max_sweeps)?;
    finish_fit(
        components,
        intercept,
        sweeps,
        final_residual,
        states,
        columns,
        options,
    )
}

/// Fit the additive model with local-constant (kernel-average) marginal
/// smoothers — the baseline the local-linear version improves on.
pub fn fit_nw_baseline(
    columns: &[Vec<f64>],
    responses: &[f64],
    grids: &[Grid1D],
    bandwidths: &[f64],
    options: &FitOptions,
) -> Result<AdditiveFit> {
    validate_inputs(columns, responses, grids, bandwidths)?;
    let d = columns.len();
    let n = responses.len();
    let intercept = responses.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = responses.iter().map(|y| y - intercept).collect();

    let states = build_axis_states(columns, grids, bandwidths, options.kernel_mode, false)?;
    let mut seeds = Vec::with_capacity(d);
    for state in &states {
        let nw = nw_marginal(&state.weights, &centered, &state.moments.mass)?;
        seeds.push(normalize(&nw, &state.center_weight)?);
    }
    let mut couplings: Vec<Vec<Option<GridFn2>>> = (0..d).map(|_| vec![None; d]).collect();
    for j in 0..d {
        for k in 0..d {
            if j == k {
                continue;
            }
            couplings[j][k] = Some(coupling_surface_nw(
                &states[j],
                &columns[k],
                &grids[k],
                bandwidths[k],
                options.kernel_mode,
            )?);
        }
    }
    let system = BackfitSystem { seeds, couplings };
    let yscale = responses.iter().fold(0.0f64, |a, y| a.max(y.abs()));
    let (components, sweeps, final_residual, _) =
        gauss_seidel(&system, options.tol * (1.0 + yscale), options.max_sweeps)?;
    finish_fit(
        components,
        intercept,
        sweeps,
        final_residual,
        states,
        columns,
        options,
    )
}

/// Re-center a fit under a different norming, folding the subtracted
/// constants into the intercept so predictions are unchanged.
pub fn apply_norming(
    fit: &AdditiveFit,
    target: Norming,
    columns: &[Vec<f64>],
) -> Result<AdditiveFit> {
    if columns.len() != fit.components.len() {
        return Err(Error::Data(format!(
            "fit has {} components but {} covariate columns were supplied",
            fit.components.len(),
            columns.len()
        )));
    }
    let mut out = fit.clone();
    let mut total_shift = 0.0;
    for (j, comp) in fit.components.iter().enumerate() {
        let level = match target {
            Norming::AdjustedDensity | Norming::RawDensity => {
                let w = match target {
                    Norming::AdjustedDensity => &fit.center_weights[j],
                    _ => &fit.mass[j],
                };
                let mass = w.integrate();
                if !(mass > 0.0) {
                    return Err(Error::ZeroMass);
                }
                comp.integrate_weighted(w)? / mass
            }
            Norming::SampleMean => {
                let col = &columns[j];
                if col.is_empty() {
                    return Err(Error::Data("empty covariate column".into()));
                }
                let mut acc = 0.0;
                for &x in col {
                    acc += comp.eval_at(x)?;
                }
                acc / col.len() as f64
            }
        };
        out.components[j] = comp.shift(level);
        total_shift += level;
    }
    out.intercept += total_shift;
    out.norming = target;
    Ok(out)
}

/// Evaluate the fitted model at a point (linear interpolation between grid
/// nodes on each axis).
pub fn predict(fit: &AdditiveFit, x: &[f64]) -> Result<f64> {
    if x.len() != fit.components.len() {
        return Err(Error::Data(format!(
            "prediction point has {} coordinates, model has {}",
            x.len(),
            fit.components.len()
        )));
    }
    let mut acc = fit.intercept;
    for (comp, &xi) in fit.components.iter().zip(x) {
        acc += comp.eval_at(xi)?;
    }
    Ok(acc)
}

/// True curves and density of one axis, supplied by a simulation scenario
/// for comparing estimates against theory.
pub struct ComponentTruth<'a> {
    /// The component function (centered per the norming being diagnosed).
    pub m: &'a dyn Fn(f64) -> f64,
    /// Its second derivative.
    pub m_dd: &'a dyn Fn(f64) -> f64,
    /// The axis's marginal design density on the interval.
    pub p: &'a dyn Fn(f64) -> f64,
    /// First derivative of the density.
    pub p_d: &'a dyn Fn(f64) -> f64,
    /// Second derivative of the density.
    pub p_dd: &'a dyn Fn(f64) -> f64,
}

/// Leading-order theoretical bias ingredients per component.
///
/// The constant shift depends on the norming; the curvature curve
/// `(1/2)·h²·c₂(x)·m''(x)` is shared. At interior points `c₂(x)` equals the
/// kernel's second moment and the full interior bias curve is
/// `curvature + h²·shift`.
#[derive(Debug, Clone)]
pub struct BiasDiagnostics {
    /// Shift under the adjusted-density norming.
    pub shift_adjusted: Vec<f64>,
    /// Shift under the raw-density norming.
    pub shift_raw: Vec<f64>,
    /// Shift under the sample-mean norming.
    pub shift_sample: Vec<f64>,
    /// `(1/2)·h²·c₂(x)·m''(x)` per component on its grid.
    pub curvature_curves: Vec<GridFn>,
    pub bandwidths: Vec<f64>,
}

impl BiasDiagnostics {
    /// The interior theoretical bias curve of one component under one
    /// norming: curvature term plus the h²-scaled constant shift.
    pub fn interior_curve(&self, j: usize, norming: Norming) -> GridFn {
        let shift = match norming {
            Norming::AdjustedDensity => self.shift_adjusted[j],
            Norming::RawDensity => self.shift_raw[j],
            Norming::SampleMean => self.shift_sample[j],
        };
        self.curvature_curves[j].shift(-self.bandwidths[j].powi(2) * shift)
    }
}

/// Compute the leading-order bias constants and curvature curves from the
/// true curves by adaptive quadrature.
///
/// With `c = C_K/2` (half the kernel's second moment) the three shifts are
///
/// * sample-mean: `-c·∫ m'' p`
/// * raw-density: `-c·(∫ m'' p + ∫ m p'')`
/// * adjusted-density: `-c·(∫ m'' p + ∫ m p'' - 2·∫ m p'²/p)`.
pub fn bias_diagnostics(
    truths: &[ComponentTruth<'_>],
    grids: &[Grid1D],
    bandwidths: &[f64],
) -> Result<BiasDiagnostics> {
    if truths.len() != grids.len() || truths.len() != bandwidths.len() {
        return Err(Error::Config(
            "truths, grids and bandwidths must have equal length".into(),
        ));
    }
    let half_ck = 0.5 * Biweight::SECOND_MOMENT;
    let quad_tol = 1e-11;
    let mut shift_adjusted = Vec::new();
    let mut shift_raw = Vec::new();
    let mut shift_sample = Vec::new();
    let mut curvature_curves = Vec::new();
    for (j, truth) in truths.iter().enumerate() {
        let grid = &grids[j];
        let (lo, hi) = (grid.lo(), grid.hi());
        let i_mdd_p =
            crate::kernel::adaptive_simpson(&|x| (truth.m_dd)(x) * (truth.p)(x), lo, hi, quad_tol);
        let i_m_pdd =
            crate::kernel::adaptive_simpson(&|x| (truth.m)(x) * (truth.p_dd)(x), lo, hi, quad_tol);
        let i_m_pd2 = crate::kernel::adaptive_simpson(
            &|x| {
                let p = (truth.p)(x);
                (truth.m)(x) * (truth.p_d)(x).powi(2) / p
            },
            lo,
            hi,
            quad_tol,
        );
        shift_sample.push(-half_ck * i_mdd_p);
        shift_raw.push(-half_ck * (i_mdd_p + i_m_pdd));
        shift_adjusted.push(-half_ck * (i_mdd_p + i_m_pdd - 2.0 * i_m_pd2));

        let h = bandwidths[j];
        let bk = BoundaryKernel::new(Biweight, h, lo, hi, Side::Data, KernelMode::Corrected)?;
        let mut vals = Vec::with_capacity(grid.len());
        for &x in grid.points() {
            let c2 = bk.effective_moment(2, x)?;
            vals.push(0.5 * h * h * c2 * (truth.m_dd)(x));
        }
        curvature_curves.push(GridFn::new(grid.clone(), vals)?);
    }
    Ok(BiasDiagnostics {
        shift_adjusted,
        shift_raw,
        shift_sample,
        curvature_curves,
        bandwidths: bandwidths.to_vec(),
    })
}
