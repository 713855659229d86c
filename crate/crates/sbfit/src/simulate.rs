//! Monte Carlo study harness.
//!
//! Ships a built-in three-covariate benchmark (quadratic, cubic and quartic
//! components over a correlated design truncated to the unit cube), a
//! plug-in bandwidth rule, and a replication driver that aggregates
//! pointwise bias, variance and MSE curves across seeds.
//!
//! Reproducibility contract: every random quantity comes from a
//! [`stream_rng`] generator keyed by `(base_seed, stream, index)`, so a
//! study is a pure function of its [`SimConfig`] — independent of thread
//! count and repeatable across runs.

use crate::backfit::{fit, FitOptions, Norming};
use crate::density::{axis_moments, WeightMatrix};
use crate::error::{Error, ErrorCategory, Result};
use crate::grid::{Grid1D, GridFn};
use crate::kernel::{adaptive_simpson, Biweight, BoundaryKernel, KernelMode, Side};
use crate::marginal::local_linear_marginal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Number of covariates in the built-in benchmark model.
pub const BENCHMARK_DIM: usize = 3;

/// Default noise standard deviation for benchmark responses.
pub const BENCHMARK_NOISE_SD: f64 = 0.1;

/// Benchmark component function `j` (zero-based): `x²`, `x³`, `-x⁴`.
pub fn benchmark_component(j: usize, x: f64) -> f64 {
    match j {
        0 => x * x,
        1 => x * x * x,
        2 => -(x * x * x * x),
        _ => panic!("benchmark model has {BENCHMARK_DIM} components"),
    }
}

/// Second derivative of benchmark component `j`.
pub fn benchmark_second_derivative(j: usize, x: f64) -> f64 {
    match j {
        0 => 2.0,
        1 => 6.0 * x,
        2 => -12.0 * x * x,
        _ => panic!("benchmark model has {BENCHMARK_DIM} components"),
    }
}

/// The benchmark regression mean: the sum of the three components.
pub fn benchmark_mean(x: &[f64; 3]) -> f64 {
    benchmark_component(0, x[0]) + benchmark_component(1, x[1]) + benchmark_component(2, x[2])
}

/// Deterministic generator for `(base_seed, stream, index)`.
///
/// The 32-byte ChaCha seed is the little-endian concatenation of the three
/// numbers followed by eight zero bytes, so every `(stream, index)` pair
/// owns an independent, platform-stable generator. Streams in use:
/// 0 = design oracle, 1 = per-replication designs, 2 = per-replication
/// noise.
pub fn stream_rng(base_seed: u64, stream: u64, index: u64) -> ChaCha12Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&base_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&stream.to_le_bytes());
    seed[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha12Rng::from_seed(seed)
}

/// Coefficients `(sa, sb)` such that `x_j = 1/2 + sa·z_j + sb·(z_1+z_2+z_3)`
/// has the benchmark design's covariance `(1/2)·[(1-rho)I + rho·J]` before
/// truncation.
fn design_sqrt(rho: f64) -> Result<(f64, f64)> {
    if !rho.is_finite() || rho <= -0.5 || rho >= 1.0 {
        return Err(Error::Config(format!(
            "correlation {rho} outside the valid open interval (-0.5, 1)"
        )));
    }
    let a = (1.0 - rho).sqrt();
    let b = ((1.0 + 2.0 * rho).sqrt() - a) / 3.0;
    let s = 0.5f64.sqrt();
    Ok((s * a, s * b))
}

/// Draw `n` design points: an equicorrelated trivariate normal with
/// coordinate means 1/2 and variances 1/2, kept only when all three
/// coordinates land in `[0, 1]` (one candidate at a time).
///
/// Fails with a configuration error if the observed acceptance rate drops
/// below `1e-4`, which would make the rejection loop impractical.
pub fn sample_design(rho: f64, n: usize, rng: &mut ChaCha12Rng) -> Result<Vec<[f64; 3]>> {
    let (sa, sb) = design_sqrt(rho)?;
    let mut out = Vec::with_capacity(n);
    let mut attempts: u64 = 0;
    while out.len() < n {
        attempts += 1;
        if attempts % 100_000 == 0 && (out.len() as f64) < 1e-4 * attempts as f64 {
            return Err(Error::Config(format!(
                "design acceptance rate below 1e-4 after {attempts} candidates (rho = {rho})"
            )));
        }
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let t = z0 + z1 + z2;
        let x = [
            0.5 + sa * z0 + sb * t,
            0.5 + sa * z1 + sb * t,
            0.5 + sa * z2 + sb * t,
        ];
        if x.iter().all(|v| (0.0..=1.0).contains(v)) {
            out.push(x);
        }
    }
    Ok(out)
}

/// Benchmark responses for `design`: the additive mean plus independent
/// centered Gaussian noise with standard deviation `noise_sd`.
pub fn gen_responses(
    design: &[[f64; 3]],
    noise_sd: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    if !noise_sd.is_finite() || noise_sd < 0.0 {
        return Err(Error::Config(format!(
            "noise standard deviation must be finite and nonnegative, got {noise_sd}"
        )));
    }
    Ok(design
        .iter()
        .map(|x| benchmark_mean(x) + noise_sd * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Exact marginal density of one benchmark design coordinate when the
/// correlation is zero: a normal with mean 1/2 and variance 1/2 conditioned
/// on `[0, 1]`.
///
/// With nonzero correlation the coordinate marginals of the cube-truncated
/// vector are *not* of this form, which is why the constructor takes no
/// correlation argument.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedNormalMarginal {
    mean: f64,
    var: f64,
    lo: f64,
    hi: f64,
    /// Mass the untruncated density places on `[lo, hi]`.
    norm: f64,
}

impl TruncatedNormalMarginal {
    pub fn new(mean: f64, var: f64, lo: f64, hi: f64) -> Self {
        let raw = move |x: f64| {
            ((x - mean) * (x - mean) / (-2.0 * var)).exp()
                / (var * 2.0 * std::f64::consts::PI).sqrt()
        };
        let norm = adaptive_simpson(&raw, lo, hi, 1e-13);
        TruncatedNormalMarginal {
            mean,
            var,
            lo,
            hi,
            norm,
        }
    }

    /// The marginal for the benchmark design at zero correlation.
    pub fn benchmark() -> Self {
        TruncatedNormalMarginal::new(0.5, 0.5, 0.0, 1.0)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        ((x - self.mean) * (x - self.mean) / (-2.0 * self.var)).exp()
            / (self.var * 2.0 * std::f64::consts::PI).sqrt()
            / self.norm
    }

    /// First derivative of [`Self::pdf`] inside the interval.
    pub fn pdf_d(&self, x: f64) -> f64 {
        self.pdf(x) * (self.mean - x) / self.var
    }

    /// Second derivative of [`Self::pdf`] inside the interval.
    pub fn pdf_dd(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.var;
        self.pdf(x) * (z * z - 1.0 / self.var)
    }
}

/// Population quantities of the benchmark design, estimated once from a
/// large dedicated sample (stream 0 of the seeding scheme).
#[derive(Debug, Clone)]
pub struct DesignSummary {
    /// `E m_j(X_j)` per component — the level the centered study targets.
    pub component_means: [f64; 3],
    /// `E [m_j''(X_j)]²` per component — the curvature constant of the
    /// bandwidth rule.
    pub curvatures: [f64; 3],
    /// Number of accepted draws behind the estimates.
    pub draws: usize,
}

/// Estimate component means and curvature constants from `draws` design
/// points.
pub fn design_summary(rho: f64, base_seed: u64, draws: usize) -> Result<DesignSummary> {
    if draws < 1_000 {
        return Err(Error::Config(format!(
            "design oracle needs at least 1000 draws, got {draws}"
        )));
    }
    let mut rng = stream_rng(base_seed, 0, 0);
    let sample = sample_design(rho, draws, &mut rng)?;
    let mut component_means = [0.0; 3];
    let mut curvatures = [0.0; 3];
    for x in &sample {
        for j in 0..BENCHMARK_DIM {
            component_means[j] += benchmark_component(j, x[j]);
            let dd = benchmark_second_derivative(j, x[j]);
            curvatures[j] += dd * dd;
        }
    }
    for j in 0..BENCHMARK_DIM {
        component_means[j] /= draws as f64;
        curvatures[j] /= draws as f64;
    }
    Ok(DesignSummary {
        component_means,
        curvatures,
        draws,
    })
}

/// Plug-in bandwidth minimizing the leading asymptotic integrated MSE of
/// one component:
///
/// `h = n^{-1/5} · (σ² R_K)^{1/5} · (μ₂(K)² C_j)^{-1/5}`
///
/// with `R_K` the kernel roughness, `μ₂(K)` its second moment and `C_j`
/// the design mean of the squared component curvature. A component with
/// zero curvature (a linear component) has no finite minimizer.
pub fn oracle_bandwidth(n: usize, noise_sd: f64, curvature: f64, component: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Config(format!(
            "bandwidth rule needs at least 2 observations, got {n}"
        )));
    }
    if !noise_sd.is_finite() || noise_sd <= 0.0 {
        return Err(Error::Config(format!(
            "bandwidth rule needs a positive noise level, got {noise_sd}"
        )));
    }
    if !curvature.is_finite() || curvature <= 1e-12 {
        return Err(Error::BandwidthUndefined { component });
    }
    let sigma2 = noise_sd * noise_sd;
    let numerator = (sigma2 * Biweight::ROUGHNESS).powf(0.2);
    let denominator = (Biweight::SECOND_MOMENT * Biweight::SECOND_MOMENT * curvature).powf(0.2);
    Ok((n as f64).powf(-0.2) * numerator / denominator)
}

/// Bandwidth source for a study scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthSpec {
    /// Derive each bandwidth from the plug-in rule and the design oracle.
    Oracle,
    /// Use these values as given, one per component.
    Explicit(Vec<f64>),
}

/// Full description of one Monte Carlo scenario.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Observations per replication.
    pub n: usize,
    /// Number of replications.
    pub reps: usize,
    /// Latent equicorrelation of the design, in `(-0.5, 1)`.
    pub rho: f64,
    /// Response noise standard deviation.
    pub noise_sd: f64,
    pub kernel_mode: KernelMode,
    pub norming: Norming,
    /// Points per evaluation grid on `[0, 1]`.
    pub grid_size: usize,
    pub base_seed: u64,
    pub bandwidths: BandwidthSpec,
    /// Convergence tolerance handed to the fit.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Worker threads for the replication loop. Purely a throughput knob:
    /// every replication owns its generators and the reduction runs in
    /// replication order, so results are identical for any value.
    pub workers: usize,
    /// Sample size of the design oracle.
    pub oracle_draws: usize,
    /// Also fit, per replication, the univariate smoother of the first
    /// component that is handed the other two components exactly, and
    /// report how the full fit compares against it on the interior.
    /// Requires sample-mean norming so both estimates target the same
    /// centered curve.
    pub compare_oracle: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 400,
            reps: 500,
            rho: 0.0,
            noise_sd: BENCHMARK_NOISE_SD,
            kernel_mode: KernelMode::Conventional,
            norming: Norming::SampleMean,
            grid_size: 101,
            base_seed: 1,
            bandwidths: BandwidthSpec::Oracle,
            tol: 1e-8,
            max_sweeps: 200,
            workers: 1,
            oracle_draws: 1_000_000,
            compare_oracle: false,
        }
    }
}

/// Accuracy curves and integrated metrics for one component.
#[derive(Debug, Clone)]
pub struct ComponentReport {
    /// Pointwise `mean(estimate) - target` across replications.
    pub bias: GridFn,
    /// Pointwise across-replication sample variance (divisor `reps - 1`).
    pub variance: GridFn,
    /// Pointwise `bias² + variance`.
    pub mse: GridFn,
    pub integrated_sq_bias: f64,
    pub integrated_variance: f64,
    pub integrated_mse: f64,
}

/// Full-fit-versus-univariate comparison for the first component.
#[derive(Debug, Clone)]
pub struct OracleComparison {
    /// MSE curve of the univariate reference smoother.
    pub mse: GridFn,
    /// Full fit's MSE integrated over the interior.
    pub backfit_interior_imse: f64,
    /// Univariate reference's MSE integrated over the interior.
    pub univariate_interior_imse: f64,
    /// `backfit_interior_imse / univariate_interior_imse`.
    pub interior_ratio: f64,
    /// Interior bounds used: one bandwidth in from each end.
    pub interior: (f64, f64),
}

/// Everything a study run produces.
#[derive(Debug, Clone)]
pub struct McReport {
    /// Echo of the scenario that produced the report.
    pub config: SimConfig,
    /// Component means from the design oracle (the centering levels).
    pub component_means: [f64; 3],
    /// Bandwidths actually used.
    pub bandwidths: Vec<f64>,
    pub components: Vec<ComponentReport>,
    pub oracle: Option<OracleComparison>,
    /// Replications that produced curves.
    pub reps_completed: usize,
    /// Replications lost to numerical failures (within the 2% budget).
    pub failures: usize,
    /// Mean sweep count over completed replications.
    pub mean_sweeps: f64,
}

struct RepCurves {
    components: Vec<Vec<f64>>,
    univariate: Option<Vec<f64>>,
    sweeps: usize,
}

/// Univariate local-linear smoother of the first component fed the exact
/// values of the other two — the single-covariate reference the full fit
/// is measured against. Centered by its sample mean over the data, like
/// the sample-mean norming of the main fit.
fn univariate_reference(
    design: &[[f64; 3]],
    responses: &[f64],
    grid: &Grid1D,
    h: f64,
    mode: KernelMode,
) -> Result<Vec<f64>> {
    let col0: Vec<f64> = design.iter().map(|x| x[0]).collect();
    let partial: Vec<f64> = responses
        .iter()
        .zip(design)
        .map(|(y, x)| y - benchmark_component(1, x[1]) - benchmark_component(2, x[2]))
        .collect();
    let kernel = BoundaryKernel::new(Biweight, h, grid.lo(), grid.hi(), Side::Data, mode)?;
    let weights = WeightMatrix::build(&kernel, grid, &col0, false)?;
    let moments = axis_moments(&weights, &col0)?;
    let curve = local_linear_marginal(&weights, &col0, &partial, &moments)?.estimate;
    let mut level = 0.0;
    for &x in &col0 {
        level += curve.eval_at(x)?;
    }
    level /= col0.len() as f64;
    Ok(curve.shift(level).values().to_vec())
}

fn run_rep(cfg: &SimConfig, grids: &[Grid1D], bandwidths: &[f64], rep: u64) -> Result<RepCurves> {
    let mut design_rng = stream_rng(cfg.base_seed, 1, rep);
    let design = sample_design(cfg.rho, cfg.n, &mut design_rng)?;
    let mut noise_rng = stream_rng(cfg.base_seed, 2, rep);
    let responses = gen_responses(&design, cfg.noise_sd, &mut noise_rng)?;
    let columns: Vec<Vec<f64>> = (0..BENCHMARK_DIM)
        .map(|j| design.iter().map(|x| x[j]).collect())
        .collect();
    let options = FitOptions {
        kernel_mode: cfg.kernel_mode,
        norming: cfg.norming,
        tol: cfg.tol,
        max_sweeps: cfg.max_sweeps,
    };
    let fitted = fit(&columns, &responses, grids, bandwidths, &options)?;
    let univariate = if cfg.compare_oracle {
        Some(univariate_reference(
            &design,
            &responses,
            &grids[0],
            bandwidths[0],
            cfg.kernel_mode,
        )?)
    } else {
        None
    };
    Ok(RepCurves {
        components: fitted
            .components
            .into_iter()
            .map(|c| c.values().to_vec())
            .collect(),
        univariate,
        sweeps: fitted.sweeps,
    })
}

/// Unweighted trapezoid integrals of a bias/variance curve pair:
/// `(∫bias², ∫variance, ∫(bias² + variance))`.
pub fn integrated_metrics(bias: &GridFn, variance: &GridFn) -> Result<(f64, f64, f64)> {
    let sq_bias = bias.map(|b| b * b)?;
    let mse = sq_bias.zip_with(variance, |s, v| s + v)?;
    Ok((sq_bias.integrate(), variance.integrate(), mse.integrate()))
}

/// Stack replicated curves against a target: mean, bias, sample variance
/// and `bias² + variance`, plus their trapezoid integrals.
fn accuracy_report(grid: &Grid1D, rows: &[&[f64]], target: &[f64]) -> Result<ComponentReport> {
    let reps = rows.len();
    let m = grid.len();
    let mut mean = vec![0.0; m];
    for row in rows {
        for (acc, v) in mean.iter_mut().zip(*row) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= reps as f64;
    }
    let mut var = vec![0.0; m];
    if reps > 1 {
        for row in rows {
            for g in 0..m {
                let d = row[g] - mean[g];
                var[g] += d * d;
            }
        }
        for v in &mut var {
            *v /= (reps - 1) as f64;
        }
    }
    let bias: Vec<f64> = mean.iter().zip(target).map(|(a, t)| a - t).collect();
    let mse: Vec<f64> = bias.iter().zip(&var).map(|(b, v)| b * b + v).collect();
    let bias = GridFn::new(grid.clone(), bias)?;
    let variance = GridFn::new(grid.clone(), var)?;
    let mse = GridFn::new(grid.clone(), mse)?;
    let (integrated_sq_bias, integrated_variance, integrated_mse) =
        integrated_metrics(&bias, &variance)?;
    Ok(ComponentReport {
        bias,
        variance,
        mse,
        integrated_sq_bias,
        integrated_variance,
        integrated_mse,
    })
}

fn validate_config(cfg: &SimConfig) -> Result<()> {
    if cfg.n < 10 {
        return Err(Error::Config(format!(
            "need at least 10 observations per replication, got {}",
            cfg.n
        )));
    }
    if cfg.reps == 0 {
        return Err(Error::Config("need at least one replication".into()));
    }
    if !cfg.rho.is_finite() || cfg.rho < 0.0 || cfg.rho >= 1.0 {
        return Err(Error::Config(format!(
            "study correlation must lie in [0, 1), got {}",
            cfg.rho
        )));
    }
    if !cfg.noise_sd.is_finite() || cfg.noise_sd <= 0.0 {
        return Err(Error::Config(format!(
            "study noise level must be positive, got {}",
            cfg.noise_sd
        )));
    }
    if cfg.grid_size < 2 {
        return Err(Error::Config(format!(
            "grid needs at least 2 points, got {}",
            cfg.grid_size
        )));
    }
    if cfg.workers == 0 || cfg.workers > 1024 {
        return Err(Error::Config(format!(
            "worker count must be in 1..=1024, got {}",
            cfg.workers
        )));
    }
    if !cfg.tol.is_finite() || cfg.tol <= 0.0 {
        return Err(Error::Config(format!(
            "tolerance must be positive, got {}",
            cfg.tol
        )));
    }
    if cfg.max_sweeps == 0 {
        return Err(Error::Config("need at least one sweep".into()));
    }
    if cfg.compare_oracle && cfg.norming != Norming::SampleMean {
        return Err(Error::Config(
            "the univariate comparison assumes sample-mean norming".into(),
        ));
    }
    Ok(())
}

/// Run one Monte Carlo scenario.
///
/// Replications failing with a *numerical* error are dropped; losing more
/// than 2% of them aborts the scenario. Any configuration or data error
/// aborts immediately. The report is a deterministic function of the
/// config — worker count included only as a throughput knob.
pub fn run_mc(config: &SimConfig) -> Result<McReport> {
    validate_config(config)?;
    design_sqrt(config.rho)?;
    let summary = design_summary(config.rho, config.base_seed, config.oracle_draws)?;
    let bandwidths: Vec<f64> = match &config.bandwidths {
        BandwidthSpec::Oracle => (0..BENCHMARK_DIM)
            .map(|j| oracle_bandwidth(config.n, config.noise_sd, summary.curvatures[j], j))
            .collect::<Result<_>>()?,
        BandwidthSpec::Explicit(v) => {
            if v.len() != BENCHMARK_DIM {
                return Err(Error::Config(format!(
                    "need {BENCHMARK_DIM} bandwidths, got {}",
                    v.len()
                )));
            }
            if !v.iter().all(|h| h.is_finite() && *h > 0.0) {
                return Err(Error::Config("bandwidths must be positive".into()));
            }
            v.clone()
        }
    };
    let grids: Vec<Grid1D> = (0..BENCHMARK_DIM)
        .map(|_| Grid1D::new(0.0, 1.0, config.grid_size))
        .collect::<Result<_>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let outcomes: Vec<Result<RepCurves>> = pool.install(|| {
        (0..config.reps as u64)
            .into_par_iter()
            .map(|r| run_rep(config, &grids, &bandwidths, r))
            .collect()
    });

    let mut curves = Vec::with_capacity(config.reps);
    let mut failures = 0usize;
    let mut sweep_total = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(c) => {
                sweep_total += c.sweeps;
                curves.push(c);
            }
            Err(e) if e.category() == ErrorCategory::Numerical => failures += 1,
            Err(e) => return Err(e),
        }
    }
    if failures as f64 > 0.02 * config.reps as f64 {
        return Err(Error::TooManyFailures {
            failed: failures,
            reps: config.reps,
        });
    }
    let used = curves.len();

    let mut components = Vec::with_capacity(BENCHMARK_DIM);
    for j in 0..BENCHMARK_DIM {
        let target: Vec<f64> = grids[j]
            .points()
            .iter()
            .map(|&x| benchmark_component(j, x) - summary.component_means[j])
            .collect();
        let rows: Vec<&[f64]> = curves.iter().map(|c| c.components[j].as_slice()).collect();
        components.push(accuracy_report(&grids[j], &rows, &target)?);
    }

    let oracle = if config.compare_oracle {
        let target: Vec<f64> = grids[0]
            .points()
            .iter()
            .map(|&x| benchmark_component(0, x) - summary.component_means[0])
            .collect();
        let rows: Vec<&[f64]> = curves
            .iter()
            .map(|c| c.univariate.as_deref().expect("comparison curves present"))
            .collect();
        let reference = accuracy_report(&grids[0], &rows, &target)?;
        let interior = (grids[0].lo() + bandwidths[0], grids[0].hi() - bandwidths[0]);
        let backfit_interior_imse = components[0].mse.integrate_between(interior.0, interior.1);
        let univariate_interior_imse = reference.mse.integrate_between(interior.0, interior.1);
        if univariate_interior_imse <= 0.0 {
            return Err(Error::NonFinite {
                context: "forming the interior MSE ratio (reference MSE integrates to zero)",
            });
        }
        Some(OracleComparison {
            mse: reference.mse,
            backfit_interior_imse,
            univariate_interior_imse,
            interior_ratio: backfit_interior_imse / univariate_interior_imse,
            interior,
        })
    } else {
        None
    };

    Ok(McReport {
        config: config.clone(),
        component_means: summary.component_means,
        bandwidths,
        components,
        oracle,
        reps_completed: used,
        failures,
        mean_sweeps: sweep_total as f64 / used as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        adaptive_simpson(&f, a, b, 1e-12)
    }

    fn correlation(sample: &[[f64; 3]], a: usize, b: usize) -> f64 {
        let n = sample.len() as f64;
        let ma = sample.iter().map(|x| x[a]).sum::<f64>() / n;
        let mb = sample.iter().map(|x| x[b]).sum::<f64>() / n;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for x in sample {
            let (da, db) = (x[a] - ma, x[b] - mb);
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn design_sampler_matches_declared_moments() {
        let tn = TruncatedNormalMarginal::benchmark();
        let want_mean = quad(|x| x * tn.pdf(x), 0.0, 1.0);
        let want_var = quad(|x| x * x * tn.pdf(x), 0.0, 1.0) - want_mean * want_mean;

        let mut rng = stream_rng(77, 1, 0);
        let sample = sample_design(0.0, 40_000, &mut rng).unwrap();
        assert!(sample
            .iter()
            .all(|x| x.iter().all(|v| (0.0..=1.0).contains(v))));
        for j in 0..3 {
            let mean = sample.iter().map(|x| x[j]).sum::<f64>() / 40_000.0;
            let var =
                sample.iter().map(|x| (x[j] - mean) * (x[j] - mean)).sum::<f64>() / 39_999.0;
            assert!((mean - want_mean).abs() < 5e-3, "mean[{j}] = {mean}");
            assert!((var - want_var).abs() < 3e-3, "var[{j}] = {var}");
        }
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let r = correlation(&sample, a, b);
            assert!(r.abs() < 0.02, "corr[{a}{b}] = {r} at rho = 0");
        }

        let mut rng = stream_rng(77, 1, 1);
        let sample = sample_design(0.5, 40_000, &mut rng).unwrap();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let r = correlation(&sample, a, b);
            // truncation to the cube attenuates the latent correlation
            assert!(r > 0.05 && r < 0.5, "corr[{a}{b}] = {r} at rho = 0.5");
        }

        assert!(sample_design(1.0, 10, &mut rng).is_err());
        assert!(sample_design(-0.5, 10, &mut rng).is_err());
    }

    #[test]
    fn responses_follow_the_benchmark_formula() {
        let design = [[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [0.5, 0.5, 0.5]];
        let mut rng = stream_rng(3, 2, 0);
        let y = gen_responses(&design, 0.0, &mut rng).unwrap();
        assert_eq!(y, vec![1.0, 0.0, 0.25 + 0.125 - 0.0625]);

        // same stream, same bytes; different stream, different draws
        let a = gen_responses(&design, 0.5, &mut stream_rng(3, 2, 7)).unwrap();
        let b = gen_responses(&design, 0.5, &mut stream_rng(3, 2, 7)).unwrap();
        let c = gen_responses(&design, 0.5, &mut stream_rng(3, 2, 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(gen_responses(&design, -1.0, &mut rng).is_err());
        assert!(gen_responses(&design, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn bandwidth_rule_matches_closed_form() {
        let h = oracle_bandwidth(400, 0.1, 4.0, 0).unwrap();
        let expect = (400f64).powf(-0.2) * (0.01f64 * (5.0 / 7.0)).powf(0.2)
            / ((1.0f64 / 49.0) * 4.0).powf(0.2);
        assert!((h - expect).abs() < 1e-15);
        assert!((h - 0.18535).abs() < 5e-4);

        // quadrupling the noise variance scales h by 4^(1/5)
        let h2 = oracle_bandwidth(400, 0.2, 4.0, 0).unwrap();
        assert!((h2 / h - 4f64.powf(0.2)).abs() < 1e-12);
        // 32x the sample size halves h
        let h3 = oracle_bandwidth(400 * 32, 0.1, 4.0, 0).unwrap();
        assert!((h3 / h - 0.5).abs() < 1e-12);

        assert!(matches!(
            oracle_bandwidth(400, 0.1, 0.0, 1),
            Err(Error::BandwidthUndefined { component: 1 })
        ));
        assert!(oracle_bandwidth(1, 0.1, 4.0, 0).is_err());
        assert!(oracle_bandwidth(400, 0.0, 4.0, 0).is_err());
    }

    #[test]
    fn truncated_marginal_density_properties() {
        let tn = TruncatedNormalMarginal::benchmark();
        assert!((quad(|x| tn.pdf(x), 0.0, 1.0) - 1.0).abs() < 1e-10);
        // symmetric about the mean
        assert!((tn.pdf(0.3) - tn.pdf(0.7)).abs() < 1e-12);
        assert_eq!(tn.pdf(1.5), 0.0);
        assert_eq!(tn.pdf(-0.1), 0.0);
        // derivatives against central differences
        let e = 1e-5;
        for &x in &[0.2, 0.5, 0.8] {
            let fd = (tn.pdf(x + e) - tn.pdf(x - e)) / (2.0 * e);
            assert!((tn.pdf_d(x) - fd).abs() < 1e-6, "pdf' at {x}");
            let fdd = (tn.pdf(x + e) - 2.0 * tn.pdf(x) + tn.pdf(x - e)) / (e * e);
            assert!((tn.pdf_dd(x) - fdd).abs() < 1e-4, "pdf'' at {x}");
        }
    }

    #[test]
    fn design_summary_matches_quadrature() {
        let s = design_summary(0.0, 5, 300_000).unwrap();
        let tn = TruncatedNormalMarginal::benchmark();
        let ex2 = quad(|x| x * x * tn.pdf(x), 0.0, 1.0);
        let ex3 = quad(|x| x * x * x * tn.pdf(x), 0.0, 1.0);
        let ex4 = quad(|x| x * x * x * x * tn.pdf(x), 0.0, 1.0);
        assert!((s.component_means[0] - ex2).abs() < 3e-3);
        assert!((s.component_means[1] - ex3).abs() < 3e-3);
        assert!((s.component_means[2] + ex4).abs() < 3e-3);
        // the quadratic component's curvature constant is exact
        assert_eq!(s.curvatures[0], 4.0);
        assert!((s.curvatures[1] / (36.0 * ex2) - 1.0).abs() < 1e-2);
        assert!((s.curvatures[2] / (144.0 * ex4) - 1.0).abs() < 2e-2);
        assert!(design_summary(0.0, 5, 10).is_err());
    }

    fn tiny_config() -> SimConfig {
        SimConfig {
            n: 80,
            reps: 6,
            grid_size: 21,
            base_seed: 42,
            bandwidths: BandwidthSpec::Explicit(vec![0.25, 0.25, 0.25]),
            oracle_draws: 20_000,
            compare_oracle: true,
            ..SimConfig::default()
        }
    }

    #[test]
    fn study_is_deterministic_across_worker_counts() {
        let one = run_mc(&tiny_config()).unwrap();
        let mut cfg = tiny_config();
        cfg.workers = 4;
        let four = run_mc(&cfg).unwrap();

        assert_eq!(one.failures, 0);
        assert_eq!(one.reps_completed, 6);
        assert_eq!(one.bandwidths, four.bandwidths);
        assert_eq!(one.mean_sweeps.to_bits(), four.mean_sweeps.to_bits());
        for j in 0..3 {
            let (a, b) = (&one.components[j], &four.components[j]);
            for (x, y) in a.bias.values().iter().zip(b.bias.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.variance.values().iter().zip(b.variance.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.mse.values().iter().zip(b.mse.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(a.integrated_mse.to_bits(), b.integrated_mse.to_bits());
        }
        let (ra, rb) = (one.oracle.as_ref().unwrap(), four.oracle.as_ref().unwrap());
        assert_eq!(ra.interior_ratio.to_bits(), rb.interior_ratio.to_bits());
        assert!(ra.interior_ratio.is_finite() && ra.interior_ratio > 0.0);

        // pointwise and integrated identities
        for c in &one.components {
            for ((m, b), v) in c
                .mse
                .values()
                .iter()
                .zip(c.bias.values())
                .zip(c.variance.values())
            {
                assert_eq!(*m, b * b + v);
            }
            let sum = c.integrated_sq_bias + c.integrated_variance;
            assert!((c.integrated_mse - sum).abs() <= 1e-12 * (1.0 + sum.abs()));
        }
    }

    #[test]
    fn single_replication_has_zero_variance() {
        let cfg = SimConfig {
            n: 60,
            reps: 1,
            grid_size: 21,
            base_seed: 9,
            bandwidths: BandwidthSpec::Explicit(vec![0.3, 0.3, 0.3]),
            oracle_draws: 10_000,
            ..SimConfig::default()
        };
        let report = run_mc(&cfg).unwrap();
        assert_eq!(report.reps_completed, 1);
        for c in &report.components {
            assert!(c.variance.values().iter().all(|&v| v == 0.0));
            for (m, b) in c.mse.values().iter().zip(c.bias.values()) {
                assert_eq!(*m, b * b);
            }
        }
    }

    #[test]
    fn failure_budget_aborts_the_scenario() {
        let cfg = SimConfig {
            n: 60,
            reps: 5,
            grid_size: 21,
            base_seed: 11,
            bandwidths: BandwidthSpec::Explicit(vec![0.3, 0.3, 0.3]),
            oracle_draws: 10_000,
            // a one-sweep budget at an unreachable tolerance fails every rep
            tol: 1e-16,
            max_sweeps: 1,
            ..SimConfig::default()
        };
        match run_mc(&cfg) {
            Err(Error::TooManyFailures { failed, reps }) => {
                assert_eq!((failed, reps), (5, 5));
            }
            other => panic!("expected the failure budget to trip, got {other:?}"),
        }
    }

    #[test]
    fn low_noise_study_tracks_the_truth() {
        let cfg = SimConfig {
            n: 250,
            reps: 4,
            noise_sd: 0.02,
            grid_size: 41,
            base_seed: 9,
            bandwidths: BandwidthSpec::Explicit(vec![0.15, 0.15, 0.15]),
            oracle_draws: 50_000,
            ..SimConfig::default()
        };
        let report = run_mc(&cfg).unwrap();
        for (j, c) in report.components.iter().enumerate() {
            assert!(c.integrated_mse < 2e-3, "imse[{j}] = {}", c.integrated_mse);
            assert!(c.bias.sup_norm() < 0.12, "bias[{j}] = {}", c.bias.sup_norm());
        }
        assert!(report.mean_sweeps >= 1.0);
    }

    #[test]
    fn integrated_metrics_trivial_curves() {
        let grid = Grid1D::new(0.0, 1.0, 11).unwrap();
        let zero = GridFn::zeros(grid.clone());
        let (isb, ivar, imse) = integrated_metrics(&zero, &zero).unwrap();
        assert_eq!((isb, ivar, imse), (0.0, 0.0, 0.0));
        // a constant variance curve integrates to the constant
        let c = GridFn::sample(grid.clone(), |_| 0.7).unwrap();
        let (isb, ivar, imse) = integrated_metrics(&zero, &c).unwrap();
        assert!(isb == 0.0 && (ivar - 0.7).abs() < 1e-14);
        assert!((imse - isb - ivar).abs() < 1e-15);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = tiny_config();
        cfg.bandwidths = BandwidthSpec::Explicit(vec![0.25; 2]);
        assert!(matches!(run_mc(&cfg), Err(Error::Config(_))));
        let mut cfg = tiny_config();
        cfg.norming = Norming::AdjustedDensity;
        assert!(matches!(run_mc(&cfg), Err(Error::Config(_))));
        let mut cfg = tiny_config();
        cfg.reps = 0;
        assert!(matches!(run_mc(&cfg), Err(Error::Config(_))));
        let mut cfg = tiny_config();
        cfg.workers = 0;
        assert!(matches!(run_mc(&cfg), Err(Error::Config(_))));
    }
}
