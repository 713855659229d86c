//! Acceptance gate. Eight exit checks, one test each; every test prints a
//! single `criterion N: PASS` line (visible with `--nocapture`) or fails
//! with the offending numbers in the panic message.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use sbfit::backfit::{
    bias_diagnostics, gauss_seidel, solve_direct, BackfitSystem, ComponentTruth, Norming,
};
use sbfit::density::{
    adjusted_pair, axis_moments, clip_to_floor, pair_product, transition, WeightMatrix,
};
use sbfit::grid::{Axis, Grid1D};
use sbfit::kernel::{
    adaptive_simpson, make_compensating, Biweight, BoundaryKernel, KernelMode, KernelShape, Side,
};
use sbfit::marginal::{local_linear_marginal, normalize};
use sbfit::simulate::{
    benchmark_component, benchmark_second_derivative, run_mc, sample_design, stream_rng,
    BandwidthSpec, McReport, SimConfig, TruncatedNormalMarginal,
};
use std::sync::OnceLock;

const TABLE_SEED: u64 = 2026;

/// The benchmark-study configuration shared by criteria 5, 6, 7 and 8.
fn study_config(rho: f64, n: usize, reps: usize, workers: usize, seed: u64) -> SimConfig {
    SimConfig {
        n,
        reps,
        rho,
        noise_sd: 0.1,
        kernel_mode: KernelMode::Conventional,
        norming: Norming::SampleMean,
        grid_size: 101,
        base_seed: seed,
        bandwidths: BandwidthSpec::Oracle,
        tol: 1e-8,
        max_sweeps: 200,
        workers,
        oracle_draws: 1_000_000,
        compare_oracle: false,
    }
}

/// The zero-correlation benchmark run, shared between criterion 5 (cell
/// values) and criterion 8 (worker-count determinism).
fn rho0_study() -> &'static McReport {
    static REPORT: OnceLock<McReport> = OnceLock::new();
    REPORT.get_or_init(|| run_mc(&study_config(0.0, 400, 500, 1, TABLE_SEED)).unwrap())
}

#[test]
fn criterion_1_kernel_moment_suite() {
    // Base compensating shape: unit mass, zero mean, second moment -1/7.
    let ell = make_compensating(Biweight);
    let reach = ell.support_halfwidth();
    let moment = |p: u32| {
        adaptive_simpson(
            &|t: f64| t.powi(p as i32) * ell.eval(t),
            -reach,
            reach,
            1e-12,
        )
    };
    let checks = [
        (moment(0), 1.0, "zeroth"),
        (moment(1), 0.0, "first"),
        (moment(2), -1.0 / 7.0, "second"),
    ];
    for (got, want, name) in checks {
        assert!(
            (got - want).abs() < 1e-10,
            "compensating shape {name} moment: {got} (want {want})"
        );
    }

    // Interval conditions for both corrected kernel types, at 50 evenly
    // spaced points per interval including both edges, each to 1e-8.
    let intervals = [(0.0, 1.0, 0.2), (-1.0, 2.5, 0.55)];
    for &(lo, hi, h) in &intervals {
        let data_side =
            BoundaryKernel::new(Biweight, h, lo, hi, Side::Data, KernelMode::Corrected).unwrap();
        let eval_side = BoundaryKernel::new(
            make_compensating(Biweight),
            h,
            lo,
            hi,
            Side::Eval,
            KernelMode::Corrected,
        )
        .unwrap();
        for i in 0..50 {
            let x = lo + (hi - lo) * i as f64 / 49.0;

            // data-side kernel: for each evaluation point x, integrating
            // over the data argument v gives mass 1 and centered mean 0
            let a = (x - data_side.reach()).max(lo);
            let b = (x + data_side.reach()).min(hi);
            let mass = adaptive_simpson(&|v| data_side.eval(x, v).unwrap(), a, b, 1e-12);
            let tilt = adaptive_simpson(&|v| (v - x) * data_side.eval(x, v).unwrap(), a, b, 1e-12);
            assert!((mass - 1.0).abs() < 1e-8, "data-side mass at {x}: {mass}");
            assert!(tilt.abs() < 1e-8, "data-side first moment at {x}: {tilt}");

            // evaluation-side kernel: for each data value x, integrating
            // over the evaluation argument u gives mass 1 and mean 0
            let a = (x - eval_side.reach()).max(lo);
            let b = (x + eval_side.reach()).min(hi);
            let mass = adaptive_simpson(&|u| eval_side.eval(u, x).unwrap(), a, b, 1e-12);
            let tilt = adaptive_simpson(&|u| (x - u) * eval_side.eval(u, x).unwrap(), a, b, 1e-12);
            assert!((mass - 1.0).abs() < 1e-8, "eval-side mass at {x}: {mass}");
            assert!(tilt.abs() < 1e-8, "eval-side first moment at {x}: {tilt}");
        }
    }
    println!("criterion 1: PASS — compensating-shape moments to 1e-10, boundary conditions to 1e-8 at 50 points per interval");
}

#[test]
fn criterion_2_exact_identity_suite() {
    // n = 500 correlated synthetic design, 201-point grids, corrected mode.
    let design = sample_design(0.5, 500, &mut stream_rng(9, 0, 0)).unwrap();
    let columns: Vec<Vec<f64>> = (0..3)
        .map(|j| design.iter().map(|x| x[j]).collect())
        .collect();
    let grid = Grid1D::new(0.0, 1.0, 201).unwrap();
    let bandwidths = [0.18, 0.15, 0.13];
    let n = 500.0;
    let unit = vec![1.0 / n; 500];

    let mut worst = 0.0f64;
    for j in 0..3 {
        for k in 0..3 {
            if j == k {
                continue;
            }
            let kj = BoundaryKernel::new(
                Biweight,
                bandwidths[j],
                0.0,
                1.0,
                Side::Data,
                KernelMode::Corrected,
            )
            .unwrap();
            let wj = WeightMatrix::build(&kj, &grid, &columns[j], false).unwrap();
            let moments = axis_moments(&wj, &columns[j]).unwrap();
            let ptilde = moments.adjusted().unwrap();
            let clip = clip_to_floor(&ptilde).unwrap();
            assert!(
                !clip.was_clipped,
                "axis {j}: density floor engaged; identities would be vacuous"
            );

            let lk = BoundaryKernel::new(
                make_compensating(Biweight),
                bandwidths[k],
                0.0,
                1.0,
                Side::Eval,
                KernelMode::Corrected,
            )
            .unwrap();
            let wk = WeightMatrix::build(&lk, &grid, &columns[k], true).unwrap();
            let firsts: Vec<f64> = columns[j].iter().map(|x| x / n).collect();
            let p0 = pair_product(&wj, &wk, &unit).unwrap();
            let px = pair_product(&wj, &wk, &firsts).unwrap();
            let pair = adjusted_pair(&p0, &px, &moments).unwrap();

            // marginalizing the adjusted pair over the second axis
            // recovers the first axis's adjusted density
            let rows = pair.integrate_out(Axis::B, None).unwrap();
            let sup = rows
                .values()
                .iter()
                .zip(ptilde.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(sup <= 2e-6, "pair ({j},{k}): marginalization sup {sup}");
            worst = worst.max(sup);

            let pi = transition(&pair, &clip.values).unwrap();

            // each transition row integrates to zero over the second axis
            let zero_rows = pi.integrate_out(Axis::B, None).unwrap();
            let sup = zero_rows.sup_norm();
            assert!(sup <= 2e-6, "pair ({j},{k}): row-centering sup {sup}");
            worst = worst.max(sup);

            // the transition is orthogonal to the first axis's density
            let ortho = pi.integrate_out(Axis::A, Some(&clip.values)).unwrap();
            let sup = ortho.sup_norm();
            assert!(sup <= 2e-6, "pair ({j},{k}): orthogonality sup {sup}");
            worst = worst.max(sup);
        }
    }
    println!("criterion 2: PASS — all pair/transition identities hold, worst sup {worst:.2e} (budget 2e-6)");
}

#[test]
fn criterion_3_linear_reproduction() {
    let grid = Grid1D::new(0.0, 1.0, 101).unwrap();
    let cases = [(0.7, -1.3, 60u64), (-0.4, 2.0, 61), (5.0, 0.25, 62)];
    for mode in [KernelMode::Corrected, KernelMode::Conventional] {
        for &(a, b, seed) in &cases {
            let mut rng: ChaCha12Rng = stream_rng(seed, 4, 0);
            let data: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
            let responses: Vec<f64> = data.iter().map(|&x| a + b * x).collect();
            let kernel = BoundaryKernel::new(Biweight, 0.2, 0.0, 1.0, Side::Data, mode).unwrap();
            let weights = WeightMatrix::build(&kernel, &grid, &data, false).unwrap();
            let moments = axis_moments(&weights, &data).unwrap();
            let fitted = local_linear_marginal(&weights, &data, &responses, &moments)
                .unwrap()
                .estimate;
            let sup = grid
                .points()
                .iter()
                .zip(fitted.values())
                .map(|(&x, &v)| (v - (a + b * x)).abs())
                .fold(0.0f64, f64::max);
            assert!(
                sup <= 1e-8,
                "mode {mode}, line {a} + {b}x: sup deviation {sup}"
            );
        }
    }
    println!("criterion 3: PASS — local-linear marginal reproduces lines to 1e-8 in both kernel modes");
}

/// Assemble the discrete fixed-point system from the public building
/// blocks, mirroring the fitting pipeline's construction.
fn build_system(
    columns: &[Vec<f64>],
    responses: &[f64],
    grids: &[Grid1D],
    bandwidths: &[f64],
    mode: KernelMode,
) -> BackfitSystem {
    let d = columns.len();
    let n = responses.len() as f64;
    let ybar = responses.iter().sum::<f64>() / n;
    let centered: Vec<f64> = responses.iter().map(|y| y - ybar).collect();
    let unit = vec![1.0 / n; responses.len()];

    let mut weights = Vec::new();
    let mut moments = Vec::new();
    let mut clipped = Vec::new();
    let mut seeds = Vec::new();
    for j in 0..d {
        let kj = BoundaryKernel::new(
            Biweight,
            bandwidths[j],
            grids[j].lo(),
            grids[j].hi(),
            Side::Data,
            mode,
        )
        .unwrap();
        let wj = WeightMatrix::build(&kj, &grids[j], &columns[j], false).unwrap();
        let mo = axis_moments(&wj, &columns[j]).unwrap();
        let clip = clip_to_floor(&mo.adjusted().unwrap()).unwrap();
        let ll = local_linear_marginal(&wj, &columns[j], &centered, &mo).unwrap();
        seeds.push(normalize(&ll.estimate, &clip.values).unwrap());
        weights.push(wj);
        moments.push(mo);
        clipped.push(clip.values);
    }
    let mut couplings: Vec<Vec<Option<_>>> = (0..d).map(|_| vec![None; d]).collect();
    for j in 0..d {
        for k in 0..d {
            if j == k {
                continue;
            }
            let lk = BoundaryKernel::new(
                make_compensating(Biweight),
                bandwidths[k],
                grids[k].lo(),
                grids[k].hi(),
                Side::Eval,
                mode,
            )
            .unwrap();
            let wk = WeightMatrix::build(
                &lk,
                &grids[k],
                &columns[k],
                mode == KernelMode::Corrected,
            )
            .unwrap();
            let firsts: Vec<f64> = columns[j].iter().map(|x| x / n).collect();
            let p0 = pair_product(&weights[j], &wk, &unit).unwrap();
            let px = pair_product(&weights[j], &wk, &firsts).unwrap();
            let pair = adjusted_pair(&p0, &px, &moments[j]).unwrap();
            couplings[j][k] = Some(transition(&pair, &clipped[j]).unwrap());
        }
    }
    BackfitSystem { seeds, couplings }
}

#[test]
fn criterion_4_solver_matches_dense_oracle() {
    let grids = vec![
        Grid1D::new(0.0, 1.0, 41).unwrap(),
        Grid1D::new(0.0, 1.0, 41).unwrap(),
    ];
    let mut worst_gap = 0.0f64;
    for instance in 0..20u64 {
        let mut rng = stream_rng(1_000 + instance, 6, 0);
        let n = 50;
        let x1: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let responses: Vec<f64> = x1
            .iter()
            .zip(&x2)
            .map(|(&a, &b)| a * a + (3.0 * b).sin() + 0.1 * (rng.gen::<f64>() - 0.5))
            .collect();
        let h = 0.2 + 0.1 * rng.gen::<f64>();
        let system = build_system(
            &[x1, x2],
            &responses,
            &grids,
            &[h, h],
            KernelMode::Conventional,
        );

        let (iterated, _, _, trace) = gauss_seidel(&system, 1e-10, 400).unwrap();
        let (direct, _) = solve_direct(&system).unwrap();
        for (j, (a, b)) in iterated.iter().zip(&direct).enumerate() {
            let gap = a
                .values()
                .iter()
                .zip(b.values())
                .map(|(u, v)| (u - v).abs())
                .fold(0.0f64, f64::max);
            assert!(
                gap <= 1e-6,
                "instance {instance}, component {j}: sweep/direct gap {gap}"
            );
            worst_gap = worst_gap.max(gap);
        }
        for w in trace.windows(2) {
            assert!(
                w[1] <= w[0],
                "instance {instance}: residual trace rose from {} to {}",
                w[0],
                w[1]
            );
        }
    }
    println!("criterion 4: PASS — 20 instances match the dense solve (worst gap {worst_gap:.2e}) with monotone residuals");
}

#[test]
fn criterion_5_benchmark_table_cells() {
    let targets = [
        (0.0, [0.3305, 0.3849, 0.3798]),
        (0.5, [0.3771, 0.3808, 0.3927]),
    ];
    let rho_half = run_mc(&study_config(0.5, 400, 500, 1, TABLE_SEED)).unwrap();
    let mut cells = String::new();
    for (rho, wants) in targets {
        let report = if rho == 0.0 {
            rho0_study()
        } else {
            &rho_half
        };
        assert_eq!(report.failures, 0, "rho {rho}: replications failed");
        for (j, want) in wants.into_iter().enumerate() {
            let comp = &report.components[j];
            let got = comp.integrated_mse * 1e3;
            let rel = (got - want) / want;
            assert!(
                rel.abs() <= 0.30,
                "rho {rho}, component {}: integrated MSE x1000 = {got:.4}, target {want} (relative {rel:+.2})",
                j + 1
            );
            assert!(
                comp.integrated_sq_bias < comp.integrated_variance,
                "rho {rho}, component {}: squared bias {:.3e} not below variance {:.3e}",
                j + 1,
                comp.integrated_sq_bias,
                comp.integrated_variance
            );
            cells.push_str(&format!(" {got:.4}/{want}"));
        }
    }
    println!("criterion 5: PASS — integrated MSE x1000 vs targets:{cells} (all within ±30%, bias² < variance)");
}

#[test]
fn criterion_6_interior_accuracy_matches_univariate_reference() {
    let mut config = study_config(0.0, 400, 200, 1, 7);
    config.compare_oracle = true;
    let report = run_mc(&config).unwrap();
    let oracle = report.oracle.as_ref().unwrap();
    let ratio = oracle.interior_ratio;
    assert!(
        (0.85..=1.3).contains(&ratio),
        "interior integrated-MSE ratio {ratio} outside [0.85, 1.3] (backfit {:.3e}, reference {:.3e})",
        oracle.backfit_interior_imse,
        oracle.univariate_interior_imse
    );
    println!("criterion 6: PASS — interior integrated-MSE ratio {ratio:.4} within [0.85, 1.3]");
}

#[test]
fn criterion_7_bias_expansion_consistency() {
    let report = run_mc(&study_config(0.0, 1600, 500, 1, TABLE_SEED)).unwrap();
    let h = report.bandwidths[0];
    let grid = Grid1D::new(0.0, 1.0, report.config.grid_size).unwrap();

    // the theoretical interior bias curve of the first component under the
    // sample-mean norming, from the true curves by quadrature
    let marginal = TruncatedNormalMarginal::benchmark();
    let center = report.component_means[0];
    let m = move |x: f64| benchmark_component(0, x) - center;
    let m_dd = |x: f64| benchmark_second_derivative(0, x);
    let p = move |x: f64| marginal.pdf(x);
    let p_d = move |x: f64| marginal.pdf_d(x);
    let p_dd = move |x: f64| marginal.pdf_dd(x);
    let truth = ComponentTruth {
        m: &m,
        m_dd: &m_dd,
        p: &p,
        p_d: &p_d,
        p_dd: &p_dd,
    };
    let diagnostics = bias_diagnostics(&[truth], &[grid.clone()], &[h]).unwrap();
    let theory = diagnostics.interior_curve(0, Norming::SampleMean);

    let comp = &report.components[0];
    let reps = report.reps_completed as f64;
    let (mut interior, mut covered) = (0usize, 0usize);
    for (g, &x) in grid.points().iter().enumerate() {
        if x < h || x > 1.0 - h {
            continue;
        }
        interior += 1;
        let se = (comp.variance.values()[g] / reps).sqrt();
        if (comp.bias.values()[g] - theory.values()[g]).abs() <= 2.0 * se {
            covered += 1;
        }
    }
    let coverage = covered as f64 / interior as f64;
    assert!(
        coverage >= 0.90,
        "bias within 2 standard errors of theory at only {covered}/{interior} interior points"
    );
    println!("criterion 7: PASS — empirical bias within 2 MC standard errors of theory at {covered}/{interior} interior points ({:.0}%)", coverage * 100.0);
}

#[test]
fn criterion_8_outputs_identical_across_worker_counts() {
    let single = rho0_study();
    let eight = run_mc(&study_config(0.0, 400, 500, 8, TABLE_SEED)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let dir_one = dir.path().join("one");
    let dir_eight = dir.path().join("eight");
    sbfit::output::write_mc_outputs(&dir_one, single).unwrap();
    sbfit::output::write_mc_outputs(&dir_eight, &eight).unwrap();
    for name in [
        "component_1_curves.csv",
        "component_2_curves.csv",
        "component_3_curves.csv",
        "summary.csv",
        "study.txt",
    ] {
        let a = std::fs::read(dir_one.join(name)).unwrap();
        let b = std::fs::read(dir_eight.join(name)).unwrap();
        assert_eq!(
            a, b,
            "{name} differs between 1-worker and 8-worker runs of the same seed"
        );
    }
    println!("criterion 8: PASS — benchmark outputs byte-identical under 1 and 8 workers");
}
