//! End-to-end task pipeline checks on a small reservoir: alignment, memory
//! shape, and the train/test leakage tripwire.

use qrc_core::measurement::EnsembleSize;
use qrc_core::protocols::{run_protocol, NoiseMode, ObservableSet, OrderSelect, Protocol, ProtocolRun};
use qrc_core::reservoir::ReservoirSpec;
use qrc_core::rng::stream;
use qrc_core::tasks::{capacity, evaluate_task, generate_stm_inputs, TaskTarget};

fn unperturbed_series(
    seed: u64,
    n_t: usize,
) -> (
    qrc_core::ObservableSeries64,
    qrc_core::Dataset64,
) {
    let res = ReservoirSpec::<f64>::build(6, 10.0, 1.0, 10.0, seed).unwrap();
    let data = generate_stm_inputs::<f64>(n_t, 500 + seed).unwrap();
    let inputs = data.input_samples().unwrap();
    let run = ProtocolRun {
        protocol: Protocol::Rsp,
        n_meas: EnsembleSize::Infinite,
        n_wo: data.n_wo(),
        noise_mode: NoiseMode::IdealUnperturbed,
        g: 0.0,
        observables: ObservableSet::all_axes(OrderSelect::Order1),
        seed,
    };
    let series = run_protocol(&res, &inputs, &run).unwrap();
    (series, data)
}

#[test]
fn memory_capacity_decays_with_delay_on_average() {
    let (series, data) = unperturbed_series(2, 1000);
    let c = |tau| {
        evaluate_task(&series, &data, TaskTarget::Stm { tau }, 0.0)
            .unwrap()
            .capacity
    };
    let short = (c(1) + c(2)) / 2.0;
    let long = (c(5) + c(6)) / 2.0;
    assert!(
        short > long,
        "recall of recent inputs ({short}) should beat distant ones ({long})"
    );
}

/// Total memory of the unperturbed reservoir with single-qubit readout sits
/// in the few-bits range; the exact value is realization dependent (measured
/// 3.3 - 4.4 across the first ten coupling seeds).
#[test]
fn unperturbed_sum_capacity_is_in_expected_band() {
    for seed in [1u64, 9] {
        let (series, data) = unperturbed_series(seed, 1000);
        let total: f64 = (1..=10)
            .map(|tau| {
                evaluate_task(&series, &data, TaskTarget::Stm { tau }, 0.0)
                    .unwrap()
                    .capacity
            })
            .sum();
        assert!(
            (3.0..6.0).contains(&total),
            "seed {seed}: sum capacity {total} outside the expected band"
        );
    }
}

/// Shuffling the test targets must destroy the measured capacity; if it does
/// not, predictions are leaking target information.
#[test]
fn shuffled_test_targets_destroy_capacity() {
    let (series, data) = unperturbed_series(3, 1000);
    let result = evaluate_task(&series, &data, TaskTarget::Stm { tau: 1 }, 0.0).unwrap();
    assert!(result.capacity > 0.8, "baseline capacity too weak for the tripwire");

    let mut shuffled = result.targets.clone();
    let mut rng = stream(99, "shuffle", &[]);
    // Fisher-Yates
    for i in (1..shuffled.len()).rev() {
        let j = (rand::Rng::random::<u64>(&mut rng) % (i as u64 + 1)) as usize;
        shuffled.swap(i, j);
    }
    let destroyed = capacity(&result.predictions, &shuffled).unwrap();
    assert!(
        destroyed < 0.1,
        "shuffled targets should give near-zero capacity, got {destroyed}"
    );
}

/// The memory task drops rows whose recalled input lies inside the washout
/// region; the forecast task drops the trailing rows without targets.
#[test]
fn row_alignment_drops_are_accounted() {
    let (series, data) = unperturbed_series(4, 200);
    let tau = 5;
    let stm = evaluate_task(&series, &data, TaskTarget::Stm { tau }, 0.0).unwrap();
    assert_eq!(stm.train_rows, data.train_count() - tau);
    assert_eq!(stm.test_rows, data.test_count());

    let eta = 3;
    let forecast = evaluate_task(&series, &data, TaskTarget::Forecast { eta }, 0.0).unwrap();
    assert_eq!(forecast.train_rows, data.train_count());
    assert_eq!(forecast.test_rows, data.test_count() - eta);
}

#[test]
fn mismatched_series_and_dataset_are_rejected() {
    let (series, _) = unperturbed_series(5, 120);
    let other = generate_stm_inputs::<f64>(150, 1).unwrap();
    assert!(evaluate_task(&series, &other, TaskTarget::Stm { tau: 1 }, 0.0).is_err());
}
