//! Result serialization: curve CSVs, run summaries, kernel moment tables.
//!
//! Every float is printed with 17 significant digits so files round-trip
//! to the exact bits and "rerunning reproduces byte-identical outputs" is
//! a meaningful promise. All files are UTF-8 with LF line endings, and
//! nothing environment-dependent (timestamps, thread counts, host names)
//! is ever written.

use crate::backfit::{AdditiveFit, FitOptions};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::kernel::{make_compensating, Biweight, BoundaryKernel, KernelMode, Side};
use crate::simulate::{BandwidthSpec, McReport};
use std::fmt::Write as _;
use std::path::Path;

/// Render a float with 17 significant digits — enough to reproduce the
/// exact bit pattern on parse.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render the fitted component curves as CSV: one row per grid index,
/// columns `x1,m1,...,xd,md` (axis point and centered component value per
/// axis). All axes must share one grid size; the summary file maps the
/// positional names back to dataset column names.
pub fn render_components_csv(fit: &AdditiveFit) -> Result<String> {
    let d = fit.components.len();
    let rows = fit.components[0].grid().len();
    if fit.components.iter().any(|c| c.grid().len() != rows) {
        return Err(Error::Config(
            "components on different grid sizes cannot share one table".into(),
        ));
    }
    let mut out = String::new();
    for j in 1..=d {
        if j > 1 {
            out.push(',');
        }
        let _ = write!(out, "x{j},m{j}");
    }
    out.push('\n');
    for g in 0..rows {
        for (j, c) in fit.components.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(
                out,
                "{},{}",
                format_float(c.grid().points()[g]),
                format_float(c.values()[g])
            );
        }
        out.push('\n');
    }
    Ok(out)
}

/// Render the fit summary: a `key = value` audit record of what ran and
/// what came out (intercept, sweep count, warnings, interval policy).
pub fn render_fit_summary(
    fit: &AdditiveFit,
    dataset: &Dataset,
    data_path: &str,
    grid_size: usize,
    bandwidths: &[f64],
    options: &FitOptions,
) -> String {
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    line("command", "fit".into());
    line("data", data_path.into());
    line("n", dataset.n().to_string());
    line("response", dataset.response_name.clone());
    for (j, name) in dataset.names.iter().enumerate() {
        line(&format!("component-{}", j + 1), name.clone());
    }
    line(
        "interval-policy",
        if dataset.declared_intervals {
            "declared".into()
        } else {
            "inferred".into()
        },
    );
    line(
        "interval",
        dataset
            .intervals
            .iter()
            .map(|&(lo, hi)| format!("{}:{}", format_float(lo), format_float(hi)))
            .collect::<Vec<_>>()
            .join(", "),
    );
    line(
        "bandwidth",
        bandwidths
            .iter()
            .map(|&h| format_float(h))
            .collect::<Vec<_>>()
            .join(", "),
    );
    line("grid", grid_size.to_string());
    line("kernel-mode", options.kernel_mode.to_string());
    line("norming", options.norming.to_string());
    line("tol", format_float(options.tol));
    line("max-sweeps", options.max_sweeps.to_string());
    line("intercept", format_float(fit.intercept));
    line("sweeps", fit.sweeps.to_string());
    line("final-residual", format_float(fit.final_residual));
    line(
        "warning-clipped-density",
        fit.warnings.clipped_density.to_string(),
    );
    line(
        "warning-slow-convergence",
        fit.warnings.slow_convergence.to_string(),
    );
    s
}

/// Render one component's study curves as CSV: `x,bias,variance,mse`.
pub fn render_curves_csv(grid: &Grid1D, bias: &[f64], variance: &[f64], mse: &[f64]) -> String {
    let mut out = String::from("x,bias,variance,mse\n");
    for (g, &x) in grid.points().iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            format_float(x),
            format_float(bias[g]),
            format_float(variance[g]),
            format_float(mse[g])
        );
    }
    out
}

/// Render the study's integrated-metrics table as CSV, values ×10³.
pub fn render_mc_summary_csv(report: &McReport) -> String {
    let mut out =
        String::from("component,integrated_sq_bias_x1000,integrated_variance_x1000,integrated_mse_x1000\n");
    for (j, c) in report.components.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            j + 1,
            format_float(c.integrated_sq_bias * 1e3),
            format_float(c.integrated_variance * 1e3),
            format_float(c.integrated_mse * 1e3)
        );
    }
    out
}

/// Render the study scenario echo and headline numbers as `key = value`
/// text.
///
/// Deliberately omits the worker count: it is a throughput knob that does
/// not influence any number, and leaving it out keeps reruns of one
/// scenario byte-identical across machine configurations.
pub fn render_mc_study_text(report: &McReport) -> String {
    let cfg = &report.config;
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    line("command", "simulate".into());
    line(
        "design",
        "equicorrelated trivariate normal, coordinate mean 0.5, coordinate variance 0.5 \
         (variance reading), truncated to the unit cube"
            .into(),
    );
    line("components", "x^2, x^3, -x^4".into());
    line("n", cfg.n.to_string());
    line("reps", cfg.reps.to_string());
    line("rho", format_float(cfg.rho));
    line("noise-sd", format_float(cfg.noise_sd));
    line("kernel-mode", cfg.kernel_mode.to_string());
    line("norming", cfg.norming.to_string());
    line("grid", cfg.grid_size.to_string());
    line("seed", cfg.base_seed.to_string());
    line("oracle-draws", cfg.oracle_draws.to_string());
    line(
        "bandwidth-source",
        match cfg.bandwidths {
            BandwidthSpec::Oracle => "oracle".into(),
            BandwidthSpec::Explicit(_) => "explicit".into(),
        },
    );
    line(
        "bandwidth",
        report
            .bandwidths
            .iter()
            .map(|&h| format_float(h))
            .collect::<Vec<_>>()
            .join(", "),
    );
    line("tol", format_float(cfg.tol));
    line("max-sweeps", cfg.max_sweeps.to_string());
    for (j, &m) in report.component_means.iter().enumerate() {
        line(&format!("component-mean-{}", j + 1), format_float(m));
    }
    line("reps-completed", report.reps_completed.to_string());
    line("failures", report.failures.to_string());
    line("mean-sweeps", format_float(report.mean_sweeps));
    if let Some(oracle) = &report.oracle {
        line(
            "oracle-interior",
            format!(
                "{}:{}",
                format_float(oracle.interior.0),
                format_float(oracle.interior.1)
            ),
        );
        line(
            "oracle-imse-backfit",
            format_float(oracle.backfit_interior_imse),
        );
        line(
            "oracle-imse-univariate",
            format_float(oracle.univariate_interior_imse),
        );
        line("oracle-imse-ratio", format_float(oracle.interior_ratio));
    }
    s
}

/// Write all study outputs into `dir`: `component_{j}_curves.csv` per
/// component, `summary.csv` (integrated metrics ×10³), and `study.txt`
/// (scenario echo).
pub fn write_mc_outputs(dir: &Path, report: &McReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let grid = Grid1D::new(0.0, 1.0, report.config.grid_size)?;
    for (j, c) in report.components.iter().enumerate() {
        let text = render_curves_csv(&grid, c.bias.values(), c.variance.values(), c.mse.values());
        std::fs::write(dir.join(format!("component_{}_curves.csv", j + 1)), text)?;
    }
    std::fs::write(dir.join("summary.csv"), render_mc_summary_csv(report))?;
    std::fs::write(dir.join("study.txt"), render_mc_study_text(report))?;
    Ok(())
}

/// Render the kernel moment table as CSV.
///
/// Per grid point `x`: the base kernel's incomplete moments over the
/// data-side window (`k_mu0..2`), the compensating kernel's over the
/// evaluation-side window (`l_mu0..2`), and the base kernel's effective
/// moments after boundary correction (`k_eff0..2`). Interior rows show
/// exactly `(1, 0, second-moment)` in the effective columns.
pub fn render_kernel_table(interval: (f64, f64), h: f64, grid_size: usize) -> Result<String> {
    let (lo, hi) = interval;
    let grid = Grid1D::new(lo, hi, grid_size)?;
    let base = BoundaryKernel::new(Biweight, h, lo, hi, Side::Data, KernelMode::Corrected)?;
    let comp = BoundaryKernel::new(
        make_compensating(Biweight),
        h,
        lo,
        hi,
        Side::Eval,
        KernelMode::Corrected,
    )?;
    let mut out = String::from("x,k_mu0,k_mu1,k_mu2,l_mu0,l_mu1,l_mu2,k_eff0,k_eff1,k_eff2\n");
    for &x in grid.points() {
        let mut row = vec![format_float(x)];
        for ell in 0..3 {
            row.push(format_float(base.mu(ell, x)?));
        }
        for ell in 0..3 {
            row.push(format_float(comp.mu(ell, x)?));
        }
        for ell in 0..3 {
            row.push(format_float(base.effective_moment(ell, x)?));
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    Ok(out)
}
