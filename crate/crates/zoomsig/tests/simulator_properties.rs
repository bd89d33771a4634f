//! End-to-end properties of the simulated pipeline: the consistency value
//! recovers the step-1 error exactly under ideal conditions, degrades
//! gracefully with step-2 noise, and saturates when the target misses the
//! crop.

use zoomsig::geometry::EXTENT;
use zoomsig::metrics::spearman;
use zoomsig::simulator::{
    simulate_dataset, ErrorDist, LabelPools, OutOfCropBehavior, SimulationConfig,
    SyntheticModelConfig, TraceSample,
};

fn norm(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

fn inf_norm(v: [f64; 2]) -> f64 {
    v[0].abs().max(v[1].abs())
}

// Step-1 error bounded by 100 and targets well inside the image keep every
// crop unclipped and every target inside its crop (half side 250).
fn ideal_config(step2: ErrorDist) -> SimulationConfig {
    SimulationConfig {
        models: vec![SyntheticModelConfig {
            name: "m".into(),
            r: 0.5,
            step1_error: ErrorDist::UniformDisc { radius: 100.0 },
            step2_error: step2,
            step2_coupling: 0.0,
            out_of_crop: OutOfCropBehavior::ClampTowardTarget,
        }],
        gt_half_size: 20.0,
        target_margin: 360.0,
        emit_stage_split: false,
        labels: LabelPools::default(),
    }
}

fn traces(config: &SimulationConfig, n: u64, seed: u64) -> Vec<TraceSample> {
    simulate_dataset(config, n, seed)
        .unwrap()
        .into_iter()
        .map(|mut s| s.ground_truth.remove("m").unwrap())
        .collect()
}

#[test]
fn consistency_recovers_step1_error_exactly_without_step2_noise() {
    let config = ideal_config(ErrorDist::Fixed { dx: 0.0, dy: 0.0 });
    let samples = traces(&config, 10_000, 1040);
    for ts in &samples {
        assert!(!ts.out_of_crop && !ts.step2_clamped);
        assert!(!ts.trace.crop.unwrap().clipped);
        let c = ts.trace.consistency.unwrap();
        let err = (c * 0.5 - norm(ts.true_eps1)).abs();
        assert!(err < 1e-9, "c * r = {}, |eps1| = {}", c * 0.5, norm(ts.true_eps1));
    }
}

#[test]
fn step2_noise_perturbs_consistency_within_its_own_magnitude() {
    let config = ideal_config(ErrorDist::UniformDisc { radius: 40.0 });
    let samples = traces(&config, 10_000, 2081);
    for ts in &samples {
        assert!(!ts.out_of_crop && !ts.step2_clamped);
        let c = ts.trace.consistency.unwrap();
        let ideal = norm(ts.true_eps1) / 0.5;
        assert!(
            (c - ideal).abs() <= norm(ts.true_eps2) + 1e-9,
            "|c - |eps1|/r| = {} > |eps2| = {}",
            (c - ideal).abs(),
            norm(ts.true_eps2)
        );
    }
}

#[test]
fn out_of_crop_flag_matches_the_inf_norm_criterion() {
    // Gaussian tails push some step-1 errors past the half side r*500.
    let config = SimulationConfig {
        models: vec![SyntheticModelConfig {
            name: "m".into(),
            r: 0.5,
            step1_error: ErrorDist::IsotropicGaussian { sigma: 150.0 },
            step2_error: ErrorDist::Fixed { dx: 0.0, dy: 0.0 },
            step2_coupling: 0.0,
            out_of_crop: OutOfCropBehavior::ClampTowardTarget,
        }],
        gt_half_size: 20.0,
        target_margin: 0.0,
        emit_stage_split: false,
        labels: LabelPools::default(),
    };
    let samples = traces(&config, 10_000, 907);
    let mut misses = 0u32;
    for ts in &samples {
        if ts.trace.crop.unwrap().clipped {
            continue;
        }
        let outside = inf_norm(ts.true_eps1) > 0.5 * EXTENT / 2.0;
        assert_eq!(ts.out_of_crop, outside);
        misses += ts.out_of_crop as u32;
    }
    assert!(misses > 100, "expected plenty of misses, got {misses}");
}

#[test]
fn missed_crops_saturate_the_signal() {
    // With perfect step 2, aiming at the nearest in-view point pins at
    // least one coordinate to the view edge, 500 away from center.
    let config = SimulationConfig {
        models: vec![SyntheticModelConfig {
            name: "m".into(),
            r: 0.5,
            step1_error: ErrorDist::IsotropicGaussian { sigma: 200.0 },
            step2_error: ErrorDist::Fixed { dx: 0.0, dy: 0.0 },
            step2_coupling: 0.0,
            out_of_crop: OutOfCropBehavior::ClampTowardTarget,
        }],
        gt_half_size: 20.0,
        target_margin: 0.0,
        emit_stage_split: false,
        labels: LabelPools::default(),
    };
    let samples = traces(&config, 5_000, 33);
    let mut saturated = 0u32;
    for ts in &samples {
        if ts.out_of_crop {
            assert!(ts.trace.consistency.unwrap() >= 500.0 - 1e-9);
            saturated += 1;
        }
    }
    assert!(saturated > 50, "expected saturated samples, got {saturated}");
}

#[test]
fn consistency_tracks_step1_error_monotonically() {
    let config = ideal_config(ErrorDist::IsotropicGaussian { sigma: 8.0 });
    let samples = traces(&config, 10_000, 55);
    let usable: Vec<&TraceSample> = samples
        .iter()
        .filter(|t| !t.out_of_crop && !t.step2_clamped)
        .collect();
    assert!(usable.len() > 9_000);
    let cs: Vec<f64> = usable
        .iter()
        .map(|t| t.trace.consistency.unwrap())
        .collect();
    let errs: Vec<f64> = usable.iter().map(|t| norm(t.true_eps1)).collect();
    let sp = spearman(&cs, &errs).unwrap();
    assert!(sp.rho > 0.9, "rho = {}", sp.rho);
    assert!(sp.p_value < 1e-10);
}
