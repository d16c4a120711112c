//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `cargo test --test acceptance -- --nocapture`
//! to see the measured numbers).
//!
//! Criterion 7 needs the real laser benchmark series; point
//! `QRC_SANTA_FE_FILE` at it (or drop it at `data/santa_fe.txt` in the
//! workspace root). Without the file the criterion reports SKIPPED; it is
//! never evaluated against the bundled synthetic stand-in.

use nalgebra::Matrix2;
use num_complex::Complex;
use rayon::prelude::*;

use qrc_core::measurement::{
    backaction_map, equivalent_measurements, kraus_axis, pair_uncertainty_bound,
    sample_outcomes_and_collapse, single_uncertainty_bound, EnsembleSize, MeasurementSpec,
    ObservableOrder,
};
use qrc_core::protocols::{
    experimental_time, g_threshold, run_protocol, NoiseMode, ObservableSet, OrderSelect,
    Protocol, ProtocolRun, ResourceParams,
};
use qrc_core::quantum::{pauli_string, random_density_matrix, Axis, DensityMatrix};
use qrc_core::reservoir::{InputSample, ReservoirSpec};
use qrc_core::rng::stream;
use qrc_core::tasks::{evaluate_task, generate_stm_inputs, load_series_file, TaskTarget};

/// Criterion 1: for 50 random 6-qubit states and g in {0.3, 0.5, 10}, per
/// axis, the mean of 1e4 sampled collapses matches the analytic ensemble map
/// within trace distance 0.1.
#[test]
fn criterion_1_backaction_map_matches_sampled_collapses() {
    const REPS: usize = 10_000;
    const TOLERANCE: f64 = 0.1; // ~= 10 / sqrt(REPS)
    let strengths = [0.3, 0.5, 10.0];

    let mut state_rng = stream(20_260_801, "acceptance-1-states", &[]);
    let states: Vec<DensityMatrix<f64>> = (0..50)
        .map(|_| random_density_matrix(6, &mut state_rng).unwrap())
        .collect();

    let mut cells = Vec::new();
    for (state_ix, state) in states.iter().enumerate() {
        for (g_ix, &g) in strengths.iter().enumerate() {
            for axis in Axis::ALL {
                cells.push((state_ix, state, g_ix, g, axis));
            }
        }
    }

    let worst = cells
        .par_iter()
        .map(|&(state_ix, state, g_ix, g, axis)| {
            let analytic = backaction_map(state, g, axis).unwrap();
            let spec = MeasurementSpec::new(g, axis).unwrap();
            let mut rng = stream(
                20_260_802,
                "acceptance-1",
                &[state_ix as u64, g_ix as u64, axis as u64],
            );
            let mut acc = nalgebra::DMatrix::<Complex<f64>>::zeros(64, 64);
            for _ in 0..REPS {
                let (post, _) = sample_outcomes_and_collapse(state, &spec, &mut rng).unwrap();
                acc += post.matrix();
            }
            let mean = DensityMatrix::new(acc / Complex::new(REPS as f64, 0.0)).unwrap();
            mean.trace_distance(&analytic).unwrap()
        })
        .reduce(|| 0.0, f64::max);

    println!(
        "criterion 1: max trace distance {worst:.4} over {} cells (tolerance {TOLERANCE})",
        cells.len()
    );
    assert!(worst < TOLERANCE, "criterion 1 FAIL: {worst} >= {TOLERANCE}");
    println!("criterion 1: PASS");
}

/// Criterion 2: Kraus completeness by quadrature below 1e-6 on the strength
/// grid, and Monte Carlo outcome mean/variance matching the closed forms
/// within three standard errors at 1e5 draws.
#[test]
fn criterion_2_kraus_completeness_and_estimator_calibration() {
    // quadrature identity
    let mut worst_quad = 0.0f64;
    for axis in Axis::ALL {
        for g in [0.0, 0.3, 0.5, 1.0, 10.0] {
            let (lo, hi, points) = (-g - 8.0, g + 8.0, 2001usize);
            let h = (hi - lo) / (points - 1) as f64;
            let mut acc = Matrix2::<Complex<f64>>::zeros();
            for p in 0..points {
                let v = lo + h * p as f64;
                let k = kraus_axis::<f64>(v, g, axis);
                let w = if p == 0 || p == points - 1 { 0.5 } else { 1.0 };
                acc += k.adjoint() * k * Complex::new(w * h, 0.0);
            }
            let dev = (acc - Matrix2::identity())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            worst_quad = worst_quad.max(dev);
        }
    }
    println!("criterion 2: quadrature deviation {worst_quad:.3e} (tolerance 1e-6)");
    assert!(worst_quad < 1e-6, "criterion 2 FAIL: quadrature {worst_quad}");

    // Monte Carlo moments
    const DRAWS: usize = 100_000;
    let mut state_rng = stream(20_260_803, "acceptance-2-state", &[]);
    let omega = random_density_matrix::<f64, _>(1, &mut state_rng).unwrap();
    for g in [0.5_f64, 10.0] {
        for axis in Axis::ALL {
            let op = pauli_string::<f64>(1, &[(0, axis)]).unwrap();
            let sigma = omega.expectation(&op).unwrap();
            let spec = MeasurementSpec::new(g, axis).unwrap();
            let mut rng = stream(20_260_804, "acceptance-2", &[g.to_bits(), axis as u64]);
            let (mut sum, mut sum2, mut sum4) = (0.0, 0.0, 0.0);
            for _ in 0..DRAWS {
                let (_, out) = sample_outcomes_and_collapse(&omega, &spec, &mut rng).unwrap();
                let v = out.values()[0];
                sum += v;
                sum2 += v * v;
                sum4 += v.powi(4);
            }
            let n = DRAWS as f64;
            let mean = sum / n;
            let var = sum2 / n - mean * mean;
            let expect_mean = g * sigma;
            let expect_var = 1.0 + g * g * (1.0 - sigma * sigma);
            let se_mean = (var / n).sqrt();
            let m4 = sum4 / n - 4.0 * mean * (sum2 * mean / n)
                + 6.0 * mean * mean * (sum2 / n)
                - 3.0 * mean.powi(4);
            let se_var = ((m4 - var * var).max(0.0) / n).sqrt();
            assert!(
                (mean - expect_mean).abs() < 3.0 * se_mean,
                "criterion 2 FAIL: mean(V) at g={g} axis {axis}: {mean} vs {expect_mean}"
            );
            assert!(
                (var - expect_var).abs() < 3.0 * se_var,
                "criterion 2 FAIL: var(V) at g={g} axis {axis}: {var} vs {expect_var}"
            );
        }
    }
    println!("criterion 2: PASS");
}

/// Criterion 3: the single-qubit uncertainty at (g=10, N=1.5e6) evaluates to
/// 8.2e-4; the pair bound and the equal-uncertainty ensemble relation match
/// their closed forms exactly.
#[test]
fn criterion_3_uncertainty_formulas() {
    let u = single_uncertainty_bound(10.0_f64, 1_500_000);
    println!("criterion 3: single-qubit bound at (10, 1.5e6) = {u:.6e}");
    assert!(
        (u - 8.2e-4).abs() < 5e-6,
        "criterion 3 FAIL: {u} does not round to 8.2e-4"
    );

    // closed forms recomputed independently over a grid
    for g in [0.1_f64, 0.3, 0.5, 1.0, 2.0, 10.0] {
        for n in [100u64, 10_000, 1_500_000] {
            let nf = n as f64;
            let s1 = ((g * g + 1.0) / (g * g * nf)).sqrt();
            let s2 = ((g.powi(4) + 2.0 * g * g + 1.0) / (g.powi(4) * nf)).sqrt();
            assert!((single_uncertainty_bound(g, n) - s1).abs() <= 1e-15 * s1.abs());
            assert!((pair_uncertainty_bound(g, n) - s2).abs() <= 1e-15 * s2.abs());
        }
    }
    for g in [0.23_f64, 0.5, 1.0] {
        for gp in [1.0_f64, 10.0, 1e4] {
            for n in [1_000u64, 1_500_000] {
                let nf = n as f64;
                let r1 = ((1.0 + g * g) * gp * gp) / ((1.0 + gp * gp) * g * g);
                let expect1 = (r1 * nf).ceil() as u64;
                assert_eq!(
                    equivalent_measurements(g, gp, n, ObservableOrder::Single).unwrap(),
                    expect1
                );
                let r2 = ((1.0 + 2.0 * g * g + g.powi(4)) * gp.powi(4))
                    / ((1.0 + 2.0 * gp * gp + gp.powi(4)) * g.powi(4));
                let expect2 = (r2 * nf).ceil() as u64;
                assert_eq!(
                    equivalent_measurements(g, gp, n, ObservableOrder::Pair).unwrap(),
                    expect2
                );
            }
        }
    }
    println!("criterion 3: PASS");
}

/// Criterion 4: strength thresholds at the standard washout length.
#[test]
fn criterion_4_strength_thresholds() {
    let g1: f64 = g_threshold(20, ObservableOrder::Single).unwrap();
    let g2: f64 = g_threshold(20, ObservableOrder::Pair).unwrap();
    println!("criterion 4: thresholds {g1:.4} (order 1), {g2:.4} (order 2)");
    assert!((g1 - 0.229).abs() < 1e-3, "criterion 4 FAIL: order 1 {g1}");
    assert!((g2 - 0.537).abs() < 1e-3, "criterion 4 FAIL: order 2 {g2}");
    println!("criterion 4: PASS");
}

/// Criterion 5: the desk example of the experiment-time formulas is exact,
/// and restart time grows quadratically in the output length while the other
/// protocols grow linearly.
#[test]
fn criterion_5_resource_formulas() {
    let params = |n_t: usize| ResourceParams::<f64> {
        tau_m: 0.0,
        tau_r: 0.0,
        dt: 1.0,
        n_t,
        n_wo: 20,
        n_meas: EnsembleSize::Finite(1),
    };
    let olp = experimental_time(Protocol::Olp, &params(100)).unwrap();
    let rwp = experimental_time(Protocol::Rwp, &params(100)).unwrap();
    let rsp = experimental_time(Protocol::Rsp, &params(100)).unwrap();
    println!("criterion 5: OLP {olp}, RWP {rwp}, RSP {rsp}");
    assert_eq!(olp, 300.0, "criterion 5 FAIL: OLP {olp}");
    assert_eq!(rwp, 4860.0, "criterion 5 FAIL: RWP {rwp}");
    assert_eq!(rsp, 14580.0, "criterion 5 FAIL: RSP {rsp}");

    // growth orders via second differences on an evenly spaced N_f grid
    let grid = [120usize, 220, 320];
    let second_difference = |protocol: Protocol| {
        let t: Vec<f64> = grid
            .iter()
            .map(|&n_t| experimental_time(protocol, &params(n_t)).unwrap())
            .collect();
        t[2] - 2.0 * t[1] + t[0]
    };
    let h = 100.0;
    let expect_rsp = 3.0 * 1.0 * h * h; // 3 N_meas dt h^2 second difference of the quadratic term
    assert_eq!(second_difference(Protocol::Rsp), expect_rsp);
    assert_eq!(second_difference(Protocol::Rwp), 0.0);
    assert_eq!(second_difference(Protocol::Olp), 0.0);
    println!("criterion 5: PASS");
}

/// Criterion 6: memory-task shape at desk scale, averaged over 10 network
/// realizations: the unperturbed reservoir recalls one step back almost
/// perfectly and eight steps back barely; weakly monitored online processing
/// with surrogate noise at N = 1.5e6 tracks the unperturbed capacities for
/// short delays; strong monitoring loses total memory.
#[test]
fn criterion_6_memory_task_reproduction() {
    let seeds: Vec<u64> = (1..=10).collect();
    type SeedCapacities = (Vec<f64>, Vec<f64>, Vec<f64>);
    let per_seed: Vec<SeedCapacities> = seeds
        .par_iter()
        .map(|&seed| {
            let res = ReservoirSpec::<f64>::build(6, 10.0, 1.0, 10.0, seed).unwrap();
            let data = generate_stm_inputs::<f64>(1000, 1000 + seed).unwrap();
            let inputs = data.input_samples().unwrap();
            let mk = |protocol, noise, g, n_meas| ProtocolRun::<f64> {
                protocol,
                n_meas,
                n_wo: 20,
                noise_mode: noise,
                g,
                observables: ObservableSet::all_axes(OrderSelect::Order1),
                seed,
            };
            let unperturbed = run_protocol(
                &res,
                &inputs,
                &mk(Protocol::Rsp, NoiseMode::IdealUnperturbed, 0.0, EnsembleSize::Infinite),
            )
            .unwrap();
            let olp_weak = run_protocol(
                &res,
                &inputs,
                &mk(
                    Protocol::Olp,
                    NoiseMode::GaussianSurrogate,
                    0.3,
                    EnsembleSize::Finite(1_500_000),
                ),
            )
            .unwrap();
            let olp_strong = run_protocol(
                &res,
                &inputs,
                &mk(
                    Protocol::Olp,
                    NoiseMode::GaussianSurrogate,
                    10.0,
                    EnsembleSize::Finite(1_500_000),
                ),
            )
            .unwrap();
            let capacities = |series| -> Vec<f64> {
                (1..=10)
                    .map(|tau| {
                        evaluate_task(series, &data, TaskTarget::Stm { tau }, 0.0)
                            .unwrap()
                            .capacity
                    })
                    .collect()
            };
            (capacities(&unperturbed), capacities(&olp_weak), capacities(&olp_strong))
        })
        .collect();

    let avg = |pick: fn(&SeedCapacities) -> &Vec<f64>, tau: usize| -> f64 {
        per_seed.iter().map(|r| pick(r)[tau - 1]).sum::<f64>() / per_seed.len() as f64
    };
    let avg_sum = |pick: fn(&SeedCapacities) -> &Vec<f64>| -> f64 {
        per_seed.iter().map(|r| pick(r).iter().sum::<f64>()).sum::<f64>() / per_seed.len() as f64
    };

    let c1 = avg(|r| &r.0, 1);
    let c8 = avg(|r| &r.0, 8);
    println!("criterion 6: unperturbed C(1) = {c1:.4}, C(8) = {c8:.4} (10-seed average)");
    assert!(c1 > 0.9, "criterion 6 FAIL: C(1) = {c1} <= 0.9");
    assert!(c8 < 0.2, "criterion 6 FAIL: C(8) = {c8} >= 0.2");

    for tau in 1..=4 {
        let gap = (avg(|r| &r.1, tau) - avg(|r| &r.0, tau)).abs();
        println!("criterion 6: |C_olp(0.3) - C_unp| at tau {tau} = {gap:.4}");
        assert!(
            gap < 0.1,
            "criterion 6 FAIL: weak online capacity deviates by {gap} at tau {tau}"
        );
    }

    let weak_sum = avg_sum(|r| &r.1);
    let strong_sum = avg_sum(|r| &r.2);
    println!("criterion 6: sum capacity weak {weak_sum:.3} vs strong {strong_sum:.3}");
    assert!(
        strong_sum < weak_sum,
        "criterion 6 FAIL: strong monitoring should lose total memory"
    );
    println!("criterion 6: PASS");
}

fn santa_fe_path() -> Option<std::path::PathBuf> {
    if let Ok(path) = std::env::var("QRC_SANTA_FE_FILE") {
        let p = std::path::PathBuf::from(path);
        if p.exists() {
            return Some(p);
        }
    }
    let bundled = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/santa_fe.txt");
    bundled.exists().then_some(bundled)
}

/// Criterion 7: one-step forecasting on the genuine laser benchmark series
/// reaches C >= 0.95 with order-1 + order-2 observables, and the capacity
/// decays with the horizon apart from the quasi-period revivals near 7 and
/// 14. Reported as SKIPPED when the series file is not supplied; never
/// evaluated against the synthetic stand-in.
#[test]
fn criterion_7_forecasting_benchmark() {
    let Some(path) = santa_fe_path() else {
        println!(
            "criterion 7: SKIPPED (laser series file not supplied; set QRC_SANTA_FE_FILE \
             or place data/santa_fe.txt in the workspace root)"
        );
        return;
    };
    let data = load_series_file::<f64>(&path, 2000).unwrap();
    let inputs = data.input_samples().unwrap();
    let res = ReservoirSpec::<f64>::build(6, 10.0, 1.0, 10.0, 1).unwrap();
    let run = ProtocolRun::<f64> {
        protocol: Protocol::Rsp,
        n_meas: EnsembleSize::Infinite,
        n_wo: 20,
        noise_mode: NoiseMode::IdealUnperturbed,
        g: 0.0,
        observables: ObservableSet::all_axes(OrderSelect::Both),
        seed: 1,
    };
    let series = run_protocol(&res, &inputs, &run).unwrap();
    let capacity = |eta: usize| {
        evaluate_task(&series, &data, TaskTarget::Forecast { eta }, 0.0)
            .unwrap()
            .capacity
    };
    let c: Vec<f64> = (1..=16).map(capacity).collect();
    println!("criterion 7: C(eta) = {:?}", c.iter().map(|x| (x * 1e3).round() / 1e3).collect::<Vec<_>>());
    assert!(c[0] >= 0.95, "criterion 7 FAIL: one-step capacity {}", c[0]);
    let head = (c[0] + c[1] + c[2]) / 3.0;
    let tail = (c[8] + c[9] + c[10] + c[11]) / 4.0;
    assert!(head > tail, "criterion 7 FAIL: capacity should decay with the horizon");
    let local_max = |window: std::ops::RangeInclusive<usize>| {
        window.into_iter().any(|eta| {
            let ix = eta - 1;
            c[ix] > c[ix - 1] && c[ix] > c[ix + 1]
        })
    };
    assert!(
        local_max(6..=8),
        "criterion 7 FAIL: no revival near eta = 7"
    );
    assert!(
        local_max(13..=15),
        "criterion 7 FAIL: no revival near eta = 14"
    );
    println!("criterion 7: PASS");
}

/// Criterion 8: after one step from a fixed prior state, every observable is
/// affine in `(s, r)` within a 1e-8 plane-fit residual, with and without
/// measurement back-action.
#[test]
fn criterion_8_affine_input_structure() {
    let mut worst = 0.0f64;
    for n in [4usize, 6] {
        let res = ReservoirSpec::<f64>::build(n, 10.0, 1.0, 10.0, 31).unwrap();
        let mut rng = stream(20_260_805, "acceptance-8", &[n as u64]);
        let prior = random_density_matrix::<f64, _>(n, &mut rng).unwrap();
        let observables = [
            pauli_string::<f64>(n, &[(1, Axis::Z)]).unwrap(),
            pauli_string::<f64>(n, &[(0, Axis::X)]).unwrap(),
            pauli_string::<f64>(n, &[(2, Axis::Y)]).unwrap(),
            pauli_string::<f64>(n, &[(1, Axis::X), (3, Axis::X)]).unwrap(),
        ];
        for (g, axis) in [(0.0, Axis::Z), (0.5, Axis::Z), (0.5, Axis::X), (10.0, Axis::Y)] {
            let value = |op: &qrc_core::QubitOperator64, s: f64| {
                let x = InputSample::new(s).unwrap();
                let stepped = res.step_unperturbed(&prior, x).unwrap();
                let state = if g > 0.0 {
                    backaction_map(&stepped, g, axis).unwrap()
                } else {
                    stepped
                };
                state.expectation(op).unwrap()
            };
            for op in &observables {
                let fit = [0.1, 0.5, 0.9];
                let mut m = nalgebra::Matrix3::<f64>::zeros();
                let mut rhs = nalgebra::Vector3::<f64>::zeros();
                for (row, &s) in fit.iter().enumerate() {
                    let x = InputSample::new(s).unwrap();
                    m[(row, 0)] = 1.0;
                    m[(row, 1)] = x.s();
                    m[(row, 2)] = x.r();
                    rhs[row] = value(op, s);
                }
                let coeff = m.lu().solve(&rhs).unwrap();
                for probe in [0.23, 0.61] {
                    let x = InputSample::new(probe).unwrap();
                    let predicted = coeff[0] + coeff[1] * x.s() + coeff[2] * x.r();
                    worst = worst.max((predicted - value(op, probe)).abs());
                }
            }
        }
    }
    println!("criterion 8: max plane-fit residual {worst:.3e} (tolerance 1e-8)");
    assert!(worst < 1e-8, "criterion 8 FAIL: residual {worst}");
    println!("criterion 8: PASS");
}

/// Criterion 9: identical config and seed give bitwise-identical tables for
/// any worker count, including reruns from the manifest.
#[test]
fn criterion_9_bitwise_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.toml");
    std::fs::write(
        &config_path,
        format!(
            r#"
output = "{}"

[reservoir]
n = 4
h = 10.0
dt = 10.0
seeds = [3]

[task]
kind = "stm"
n_t = 90
n_wo = 12
input_seed = 5
taus = [1, 2, 3]

[observables]
orders = "both"

[[protocols]]
protocol = "olp"
noise = "trajectory"
g = [0.3]
n_meas = [400]

[[protocols]]
protocol = "rwp"
noise = "gaussian-surrogate"
g = [10.0]
n_meas = ["1.5e6"]
"#,
            dir.path().join("a.csv").display()
        ),
    )
    .unwrap();
    let config =
        qrc_cli::ExperimentConfig::load(config_path.to_str().unwrap(), &[]).unwrap();

    let run_with_pool = |workers: usize, name: &str| {
        let out = dir.path().join(name);
        let out_str = out.to_str().unwrap().to_string();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .unwrap();
        pool.install(|| qrc_cli::cmd_run(&config, Some(&out_str)).unwrap());
        std::fs::read(&out).unwrap()
    };

    let one = run_with_pool(1, "workers1.csv");
    let three = run_with_pool(3, "workers3.csv");
    assert_eq!(one, three, "criterion 9 FAIL: table depends on worker count");

    let manifest = qrc_cli::manifest_path(&dir.path().join("workers1.csv"));
    let rerun = dir.path().join("rerun.csv");
    qrc_cli::cmd_run_from_manifest(&manifest, Some(rerun.to_str().unwrap())).unwrap();
    assert_eq!(
        std::fs::read(&rerun).unwrap(),
        one,
        "criterion 9 FAIL: manifest rerun differs"
    );
    println!("criterion 9: PASS");
}
