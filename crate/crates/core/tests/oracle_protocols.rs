//! Protocol-level consistency checks: RSP/RWP equivalence past the washout
//! horizon, reset insensitivity, trajectory ensembles against the analytic
//! back-action evolution, and strong- vs weak-measurement disturbance.

use qrc_core::measurement::{single_uncertainty_bound, EnsembleSize};
use qrc_core::protocols::{
    run_olp, run_protocol, run_rsp, run_rwp, run_rwp_with_reset, NoiseMode, ObservableSet,
    OrderSelect, Protocol, ProtocolRun,
};
use qrc_core::quantum::{Axis, DensityMatrix};
use qrc_core::reservoir::{InputSample, ReservoirSpec};
use qrc_core::rng::stream;

fn uniform_inputs(n: usize, seed: u64) -> Vec<InputSample<f64>> {
    let mut rng = stream(seed, "oracle-inputs", &[]);
    (0..n)
        .map(|_| InputSample::new(rand::Rng::random::<f64>(&mut rng)).unwrap())
        .collect()
}

fn run_config(protocol: Protocol, noise: NoiseMode, n_wo: usize, g: f64) -> ProtocolRun<f64> {
    ProtocolRun {
        protocol,
        n_meas: EnsembleSize::Infinite,
        n_wo,
        noise_mode: noise,
        g,
        observables: ObservableSet::all_axes(OrderSelect::Order1),
        seed: 77,
    }
}

/// Rewinding reproduces full restarts at the level that matters for the
/// readout: task capacities coincide closely, and the residual observable
/// offset (the model's slow magnetization mode, which integrates inputs over
/// far more than the window) shrinks as the window grows.
#[test]
fn rsp_and_rwp_agree_beyond_washout_horizon() {
    let res = ReservoirSpec::<f64>::build(6, 10.0, 1.0, 10.0, 13).unwrap();
    let data = qrc_core::tasks::generate_stm_inputs::<f64>(1000, 21).unwrap();
    let inputs = data.input_samples().unwrap();
    let rsp = run_rsp(
        &res,
        &inputs,
        &run_config(Protocol::Rsp, NoiseMode::IdealUnperturbed, 20, 10.0),
    )
    .unwrap();
    let rwp = run_rwp(
        &res,
        &inputs,
        &run_config(Protocol::Rwp, NoiseMode::IdealUnperturbed, 20, 10.0),
    )
    .unwrap();

    let max_diff = (rsp.estimates() - rwp.estimates())
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    assert!(
        max_diff < 0.1,
        "residual series offset should be small, max diff {max_diff}"
    );

    for tau in [1usize, 2, 3, 5, 8] {
        let c_rsp = qrc_core::tasks::evaluate_task(
            &rsp,
            &data,
            qrc_core::tasks::TaskTarget::Stm { tau },
            0.0,
        )
        .unwrap()
        .capacity;
        let c_rwp = qrc_core::tasks::evaluate_task(
            &rwp,
            &data,
            qrc_core::tasks::TaskTarget::Stm { tau },
            0.0,
        )
        .unwrap()
        .capacity;
        assert!(
            (c_rsp - c_rwp).abs() < 0.03,
            "tau {tau}: capacities diverge, {c_rsp} vs {c_rwp}"
        );
    }
}

/// The window-replay error is governed by a slow relaxation mode: doubling
/// the window visibly tightens the agreement with the full evolution.
#[test]
fn rwp_window_error_shrinks_with_window_length() {
    let res = ReservoirSpec::<f64>::build(6, 10.0, 1.0, 10.0, 13).unwrap();
    let inputs = uniform_inputs(140, 21);
    let reset = qrc_core::protocols::initial_state::<f64>(6).unwrap();
    let mut full = reset.clone();
    let mut trajectory = Vec::new();
    for x in &inputs {
        full = res.step_unperturbed(&full, *x).unwrap();
        trajectory.push(full.clone());
    }
    let gap = |window: usize| {
        let mut worst = 0.0f64;
        for k in [90usize, 115, 140] {
            let state =
                qrc_core::protocols::rwp_state(&res, &inputs, k, window, &reset).unwrap();
            worst = worst.max(state.trace_distance(&trajectory[k - 1]).unwrap());
        }
        worst
    };
    let short = gap(20);
    let long = gap(60);
    assert!(
        long < short * 0.5,
        "tripling the window should at least halve the gap: {short} -> {long}"
    );
}

/// The reset state feeding the rewind window is irrelevant at the operating
/// washout length, for generic (mixed) resets.
#[test]
fn rwp_is_insensitive_to_reset_state_choice() {
    let res = ReservoirSpec::<f64>::build(6, 10.0, 1.0, 10.0, 14).unwrap();
    let inputs = uniform_inputs(120, 22);
    let run = run_config(Protocol::Rwp, NoiseMode::IdealUnperturbed, 20, 10.0);
    let canonical = run_rwp(&res, &inputs, &run).unwrap();
    let mut rng = stream(55, "oracle-reset", &[]);
    let other_reset = qrc_core::quantum::random_density_matrix::<f64, _>(6, &mut rng).unwrap();
    let other = run_rwp_with_reset(&res, &inputs, &run, &other_reset).unwrap();
    let max_diff = (canonical.estimates() - other.estimates())
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    assert!(max_diff < 1e-3, "reset choice leaked through: {max_diff}");
}

/// A strongly polarized pure reset is a metastable corner of this model: the
/// field nearly conserves magnetization, so it converges far more slowly than
/// generic resets and is visibly distinguishable at the standard window.
#[test]
fn polarized_pure_reset_converges_slowly() {
    let res = ReservoirSpec::<f64>::build(6, 10.0, 1.0, 10.0, 14).unwrap();
    let inputs = uniform_inputs(120, 22);
    let run = run_config(Protocol::Rwp, NoiseMode::IdealUnperturbed, 20, 10.0);
    let canonical = run_rwp(&res, &inputs, &run).unwrap();
    let polarized = DensityMatrix::<f64>::ground(6).unwrap();
    let slow = run_rwp_with_reset(&res, &inputs, &run, &polarized).unwrap();
    let max_diff = (canonical.estimates() - slow.estimates())
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    assert!(
        max_diff > 1e-2,
        "expected the polarized reset to still be visible at window 20, got {max_diff}"
    );
}

/// Online trajectory estimates concentrate on the analytic back-action
/// evolution: at least 99% of (step, observable) cells within four nominal
/// standard errors.
#[test]
fn olp_trajectories_track_analytic_backaction() {
    let res = ReservoirSpec::<f64>::build(3, 10.0, 1.0, 10.0, 15).unwrap();
    let inputs = uniform_inputs(36, 23);
    let g = 0.3;
    let n_meas = 10_000u64;
    let observables = ObservableSet::all_axes(OrderSelect::Both);

    let mut traj_run = run_config(Protocol::Olp, NoiseMode::Trajectory, 6, g);
    traj_run.n_meas = EnsembleSize::Finite(n_meas);
    traj_run.observables = observables.clone();
    let sampled = run_olp(&res, &inputs, &traj_run).unwrap();

    let mut ideal_run = run_config(Protocol::Olp, NoiseMode::IdealWithBackaction, 6, g);
    ideal_run.observables = observables;
    let ideal = run_olp(&res, &inputs, &ideal_run).unwrap();

    let mut total = 0usize;
    let mut within = 0usize;
    for row in 0..sampled.num_steps() {
        for col in 0..sampled.num_observables() {
            let bound = sampled.uncertainties()[(row, col)];
            assert!(bound > 0.0);
            total += 1;
            if (sampled.estimates()[(row, col)] - ideal.estimates()[(row, col)]).abs()
                < 4.0 * bound
            {
                within += 1;
            }
        }
    }
    let fraction = within as f64 / total as f64;
    assert!(
        fraction >= 0.99,
        "only {within}/{total} cells within 4 nominal uncertainties"
    );
}

/// Trajectory estimates are unbiased: over disjoint batches, the batch-mean
/// drift from the analytic value stays within three combined standard errors.
#[test]
fn olp_trajectory_estimates_are_unbiased_over_batches() {
    let res = ReservoirSpec::<f64>::build(3, 10.0, 1.0, 10.0, 16).unwrap();
    let inputs = uniform_inputs(16, 24);
    let g = 0.3;
    let batches = 20u64;
    let per_batch = 2_000u64;
    let observables = ObservableSet::new(OrderSelect::Order1, &[Axis::Z]).unwrap();

    let mut ideal_run = run_config(Protocol::Olp, NoiseMode::IdealWithBackaction, 4, g);
    ideal_run.observables = observables.clone();
    let ideal = run_olp(&res, &inputs, &ideal_run).unwrap();

    let mut batch_means = vec![0.0; ideal.num_steps() * ideal.num_observables()];
    for b in 0..batches {
        let mut traj_run = run_config(Protocol::Olp, NoiseMode::Trajectory, 4, g);
        traj_run.n_meas = EnsembleSize::Finite(per_batch);
        traj_run.observables = observables.clone();
        traj_run.seed = 9000 + b; // disjoint realization streams per batch
        let sampled = run_olp(&res, &inputs, &traj_run).unwrap();
        for row in 0..sampled.num_steps() {
            for col in 0..sampled.num_observables() {
                batch_means[row * sampled.num_observables() + col] +=
                    sampled.estimates()[(row, col)] / batches as f64;
            }
        }
    }
    let combined_se = single_uncertainty_bound(g, per_batch) / (batches as f64).sqrt();
    let mut worst = 0.0f64;
    for row in 0..ideal.num_steps() {
        for col in 0..ideal.num_observables() {
            let drift = (batch_means[row * ideal.num_observables() + col]
                - ideal.estimates()[(row, col)])
                .abs();
            worst = worst.max(drift);
        }
    }
    assert!(
        worst < 3.0 * combined_se,
        "batch-mean drift {worst} vs 3 x {combined_se}"
    );
}

/// The literal low-ensemble restart mode (validation-only) agrees with the
/// unperturbed expectations at the nominal statistical scale, supporting the
/// Gaussian-surrogate shortcut used for realistic ensembles.
#[test]
fn literal_restart_statistics_match_nominal_scale() {
    let res = ReservoirSpec::<f64>::build(3, 10.0, 1.0, 10.0, 17).unwrap();
    let inputs = uniform_inputs(26, 25);
    let n_meas = 500u64;
    let g = 10.0;

    let mut literal = run_config(Protocol::Rsp, NoiseMode::Trajectory, 6, g);
    literal.n_meas = EnsembleSize::Finite(n_meas);
    let sampled = run_protocol(&res, &inputs, &literal).unwrap();

    let ideal = run_rsp(
        &res,
        &inputs,
        &run_config(Protocol::Rsp, NoiseMode::IdealUnperturbed, 6, g),
    )
    .unwrap();

    let bound = single_uncertainty_bound(g, n_meas);
    let mut total = 0usize;
    let mut within = 0usize;
    for row in 0..sampled.num_steps() {
        for col in 0..sampled.num_observables() {
            total += 1;
            if (sampled.estimates()[(row, col)] - ideal.estimates()[(row, col)]).abs()
                < 4.0 * bound
            {
                within += 1;
            }
        }
    }
    assert!(
        within as f64 / total as f64 >= 0.99,
        "{within}/{total} literal-restart cells within 4 nominal uncertainties"
    );
}

/// Direction-resolved memory: under weak monitoring every measurement
/// direction contributes to recalling the input two steps back, while strong
/// monitoring erases most of the x and y contributions and leaves z intact.
#[test]
fn direction_resolved_memory_under_strong_measurement() {
    let res = ReservoirSpec::<f64>::build(6, 10.0, 1.0, 10.0, 1).unwrap();
    let data = qrc_core::tasks::generate_stm_inputs::<f64>(1000, 1001).unwrap();
    let inputs = data.input_samples().unwrap();
    let capacity_2 = |g: f64, axis: Axis| {
        let run = ProtocolRun {
            protocol: Protocol::Olp,
            n_meas: EnsembleSize::Infinite,
            n_wo: 20,
            noise_mode: NoiseMode::IdealWithBackaction,
            g,
            observables: ObservableSet::new(OrderSelect::Order1, &[axis]).unwrap(),
            seed: 1,
        };
        let series = run_olp(&res, &inputs, &run).unwrap();
        qrc_core::tasks::evaluate_task(
            &series,
            &data,
            qrc_core::tasks::TaskTarget::Stm { tau: 2 },
            0.0,
        )
        .unwrap()
        .capacity
    };
    for axis in Axis::ALL {
        let weak = capacity_2(0.3, axis);
        assert!(weak > 0.3, "weak monitoring, axis {axis}: C(2) = {weak}");
        if axis != Axis::Z {
            let strong = capacity_2(10.0, axis);
            assert!(
                strong < weak - 0.2,
                "axis {axis}: strong monitoring should erase coherence memory, \
                 C(2) went {weak} -> {strong}"
            );
        }
    }
    let strong_z = capacity_2(10.0, Axis::Z);
    assert!(strong_z > 0.5, "z memory should survive projection: {strong_z}");
}

/// Strong monitoring along x disturbs the x observables far more than weak
/// monitoring: the mean absolute deviation from the unperturbed series grows
/// by more than a factor of two from g = 0.3 to g = 10.
#[test]
fn strong_measurement_disturbs_x_observables_more_than_weak() {
    let res = ReservoirSpec::<f64>::build(6, 10.0, 1.0, 10.0, 18).unwrap();
    let inputs = uniform_inputs(60, 26);
    let x_only = ObservableSet::new(OrderSelect::Order1, &[Axis::X]).unwrap();

    let mut unperturbed_run = run_config(Protocol::Rsp, NoiseMode::IdealUnperturbed, 20, 0.0);
    unperturbed_run.observables = x_only.clone();
    let unperturbed = run_rsp(&res, &inputs, &unperturbed_run).unwrap();

    let mad = |g: f64| {
        let mut run = run_config(Protocol::Olp, NoiseMode::IdealWithBackaction, 20, g);
        run.observables = x_only.clone();
        let series = run_olp(&res, &inputs, &run).unwrap();
        let mut total = 0.0;
        for (a, b) in series.estimates().iter().zip(unperturbed.estimates().iter()) {
            total += (a - b).abs();
        }
        total / series.estimates().len() as f64
    };

    let weak = mad(0.3);
    let strong = mad(10.0);
    assert!(
        strong > 2.0 * weak,
        "strong/weak deviation ratio {} should exceed 2",
        strong / weak
    );
}
