//! Release gate. One test per shipping criterion; each prints a single
//! `[PASS]`/`[FAIL]` line with the measured values before asserting.
//!
//! Tolerances are part of the contract and are pinned as constants next to
//! the test that enforces them.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use robustfl::baselines::{cfl_split, dnc_detect, mkrum_select};
use robustfl::fedsim::GlobalModel;
use robustfl::geometry::{normalize, pairwise_distances, UpdateVector};
use robustfl::harness::{
    calibrate_ana_sigma, calibrate_corruption_fraction, run_sweep, write_outputs, AttackParameters,
    ExperimentConfig, RawConfig, SweepOutcome,
};
use robustfl::{detect, ClientId, Error};

fn report(name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {name}: {detail}");
    assert!(pass, "{name}: {detail}");
}

fn random_updates(rng: &mut ChaCha8Rng, n: usize, d: usize, round: u64) -> Vec<UpdateVector> {
    (0..n)
        .map(|i| {
            let values: Vec<f64> = (0..d)
                .map(|_| -> f64 { StandardNormal.sample(rng) })
                .collect();
            UpdateVector::new(ClientId(i), round, values).expect("finite nonzero values")
        })
        .collect()
}

/// Config with regime-appropriate defaults for the named defense and attack.
fn resolved(defense: &str, attack: &str, regime: &str) -> ExperimentConfig {
    let raw = RawConfig {
        defense: Some(defense.into()),
        attack: Some(attack.into()),
        regime: Some(regime.into()),
        ..RawConfig::default()
    };
    ExperimentConfig::resolve(raw).expect("valid preset")
}

fn sweep(config: &ExperimentConfig) -> SweepOutcome {
    run_sweep(config).expect("sweep completes")
}

/// Densities and outlier factors recomputed with plain loops over the raw
/// (unnormalized) values, sharing no code with the library path.
fn brute_force_scores(updates: &[UpdateVector]) -> (Vec<f64>, Vec<f64>) {
    let n = updates.len();
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let a = updates[i].values();
            let b = updates[j].values();
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dist[i][j] = 1.0 - dot / (na * nb);
        }
    }
    let rd: Vec<f64> = (0..n)
        .map(|p| {
            let mean: f64 =
                (0..n).filter(|&o| o != p).map(|o| dist[p][o]).sum::<f64>() / (n - 1) as f64;
            1.0 / mean.max(1e-12)
        })
        .collect();
    let of: Vec<f64> = (0..n)
        .map(|p| {
            (0..n)
                .filter(|&o| o != p)
                .map(|o| rd[o] / rd[p])
                .sum::<f64>()
                / (n - 1) as f64
        })
        .collect();
    (rd, of)
}

const ORACLE_INSTANCES: usize = 1000;
const ORACLE_TOLERANCE: f64 = 1e-9;
const ORACLE_TIME_BUDGET: Duration = Duration::from_secs(10);

#[test]
fn outlier_scores_match_brute_force_recomputation() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..ORACLE_INSTANCES {
        let n = rng.random_range(3..=20);
        let d = rng.random_range(2..=100);
        let updates = random_updates(&mut rng, n, d, 1);
        let normalized: Vec<UpdateVector> = updates.iter().map(|u| normalize(u).unwrap()).collect();
        let scores = pairwise_distances(&normalized)
            .and_then(|m| robustfl::asmr::outlier_scores(&m))
            .expect("scores computable");
        let (rd, of) = brute_force_scores(&updates);
        for p in 0..n {
            worst = worst.max((scores.reachability_densities()[p] - rd[p]).abs());
            worst = worst.max((scores.outlier_factors()[p] - of[p]).abs());
        }
    }
    let elapsed = start.elapsed();
    report(
        "density and outlier scores match brute force",
        worst <= ORACLE_TOLERANCE && elapsed < ORACLE_TIME_BUDGET,
        &format!(
            "worst deviation {worst:.3e} (tolerance {ORACLE_TOLERANCE:.0e}) over {ORACLE_INSTANCES} instances in {elapsed:.2?}"
        ),
    );
}

const SFA_ACCURACY_TOLERANCE: f64 = 0.01;
const SFA_TIME_BUDGET: Duration = Duration::from_secs(120);

#[test]
fn fixed_regime_sign_flips_are_excluded_every_round() {
    let start = Instant::now();
    let mut config = resolved("asmr", "sfa", "fixed");
    config.sfa_constant = 10.0;
    let attacked = sweep(&config);

    let mut perfect = true;
    for run in &attacked.runs {
        for round in &run.rounds {
            perfect &= round.tpr == Some(1.0) && round.fpr == Some(0.0);
        }
    }

    let baseline = sweep(&resolved("none", "none", "fixed"));
    let gap = (attacked.summary.mean_final_accuracy - baseline.summary.mean_final_accuracy).abs();
    let elapsed = start.elapsed();
    report(
        "fixed-regime sign flips excluded every round",
        perfect && gap <= SFA_ACCURACY_TOLERANCE && elapsed < SFA_TIME_BUDGET,
        &format!(
            "per-round tpr/fpr perfect: {perfect}, accuracy {:.4} vs attack-free {:.4} (gap {gap:.4}, tolerance {SFA_ACCURACY_TOLERANCE}), {elapsed:.2?}",
            attacked.summary.mean_final_accuracy, baseline.summary.mean_final_accuracy
        ),
    );
}

const NOISE_DROP_BAND: (f64, f64) = (0.20, 0.30);
const NOISE_MIN_TPR: f64 = 0.95;
const NOISE_MAX_FPR: f64 = 0.05;

#[test]
fn calibrated_noise_attack_is_detected() {
    let mut config = resolved("asmr", "ana", "fixed");
    let fit = calibrate_ana_sigma(&config).expect("calibration converges");
    config.ana_sigma = fit.sigma;
    let outcome = sweep(&config);
    let tpr = outcome.summary.mean_tpr.expect("attacks occur every round");
    let fpr = outcome.summary.mean_fpr.expect("benign clients present");
    let in_band = fit.relative_drop >= NOISE_DROP_BAND.0 && fit.relative_drop <= NOISE_DROP_BAND.1;
    report(
        "calibrated additive noise detected",
        in_band && tpr >= NOISE_MIN_TPR && fpr <= NOISE_MAX_FPR,
        &format!(
            "sigma {} undefended drop {:.3} (band {:.2}..{:.2}), tpr {tpr:.4} (floor {NOISE_MIN_TPR}), fpr {fpr:.4} (ceiling {NOISE_MAX_FPR})",
            fit.sigma, fit.relative_drop, NOISE_DROP_BAND.0, NOISE_DROP_BAND.1
        ),
    );
}

const DYNAMIC_BASELINE_TOLERANCE: f64 = 0.02;
const DYNAMIC_COLLAPSE_MARGIN: f64 = 0.10;

#[test]
fn dynamic_sign_flips_collapse_distance_baselines_but_not_density_detection() {
    let attack_free = sweep(&resolved("none", "none", "dynamic"));

    let mut asmr_config = resolved("asmr", "sfa", "dynamic");
    asmr_config.sfa_constant = 10.0;
    let asmr = sweep(&asmr_config);

    let mut mkrum_config = resolved("mkrum", "sfa", "dynamic");
    mkrum_config.sfa_constant = 10.0;
    mkrum_config.assumed_malicious = 3;
    let mkrum = sweep(&mkrum_config);

    let mut dnc_config = resolved("dnc", "sfa", "dynamic");
    dnc_config.sfa_constant = 10.0;
    dnc_config.assumed_malicious = 3;
    let dnc = sweep(&dnc_config);

    let base = attack_free.summary.mean_final_accuracy;
    let asmr_acc = asmr.summary.mean_final_accuracy;
    let mkrum_acc = mkrum.summary.mean_final_accuracy;
    let dnc_acc = dnc.summary.mean_final_accuracy;

    let asmr_holds = (base - asmr_acc).abs() <= DYNAMIC_BASELINE_TOLERANCE;
    let mkrum_collapses = mkrum_acc <= asmr_acc - DYNAMIC_COLLAPSE_MARGIN;
    let dnc_collapses = dnc_acc <= asmr_acc - DYNAMIC_COLLAPSE_MARGIN;
    report(
        "dynamic sign flips collapse distance baselines",
        asmr_holds && mkrum_collapses && dnc_collapses,
        &format!(
            "attack-free {base:.4}, asmr {asmr_acc:.4} (tolerance {DYNAMIC_BASELINE_TOLERANCE}), mkrum {mkrum_acc:.4} and dnc {dnc_acc:.4} (must trail asmr by {DYNAMIC_COLLAPSE_MARGIN})"
        ),
    );
}

const CORRUPTION_MIN_DROP: f64 = 0.30;
const CORRUPTION_MIN_TPR: f64 = 0.90;
const CORRUPTION_MAX_FPR: f64 = 0.05;

#[test]
fn calibrated_label_corruption_is_detected() {
    let mut config = resolved("asmr", "unreliable", "fixed");
    let fit = calibrate_corruption_fraction(&config).expect("calibration converges");
    config.corruption_fraction = fit.fraction;
    let outcome = sweep(&config);
    let tpr = outcome
        .summary
        .mean_tpr
        .expect("corruption occurs every round");
    let fpr = outcome.summary.mean_fpr.expect("benign clients present");
    report(
        "calibrated label corruption detected",
        fit.absolute_drop >= CORRUPTION_MIN_DROP
            && tpr >= CORRUPTION_MIN_TPR
            && fpr <= CORRUPTION_MAX_FPR,
        &format!(
            "fraction {:.2} solo drop {:.3} (floor {CORRUPTION_MIN_DROP}), tpr {tpr:.4} (floor {CORRUPTION_MIN_TPR}), fpr {fpr:.4} (ceiling {CORRUPTION_MAX_FPR})",
            fit.fraction, fit.absolute_drop
        ),
    );
}

const SCALE_INSTANCES: usize = 200;

#[test]
fn verdicts_are_invariant_to_positive_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut checked = 0;
    for _ in 0..SCALE_INSTANCES {
        let n = rng.random_range(3..=12);
        let d = rng.random_range(2..=32);
        let updates = random_updates(&mut rng, n, d, 1);
        let reference: BTreeSet<ClientId> = detect(&updates).unwrap().excluded().clone();

        let k = rng.random_range(0..n);
        let alpha = (rng.random::<f64>() * 6.0 - 3.0).exp();
        let mut one_scaled = updates.clone();
        one_scaled[k] = one_scaled[k]
            .with_values(one_scaled[k].values().iter().map(|v| v * alpha).collect())
            .unwrap();
        assert_eq!(
            detect(&one_scaled).unwrap().excluded(),
            &reference,
            "scaling update {k} by {alpha} changed the verdict"
        );

        let beta = (rng.random::<f64>() * 6.0 - 3.0).exp();
        let all_scaled: Vec<UpdateVector> = updates
            .iter()
            .map(|u| {
                u.with_values(u.values().iter().map(|v| v * beta).collect())
                    .unwrap()
            })
            .collect();
        assert_eq!(
            detect(&all_scaled).unwrap().excluded(),
            &reference,
            "scaling every update by {beta} changed the verdict"
        );
        checked += 1;
    }
    report(
        "verdicts invariant to positive rescaling",
        checked == SCALE_INSTANCES,
        &format!("{checked} instances, single-update and uniform scaling"),
    );
}

#[test]
fn identical_seeds_reproduce_rounds_csv_byte_for_byte() {
    let config = resolved("asmr", "combined", "dynamic");
    let params = AttackParameters::from_config(&config, false);
    let dir = tempfile::tempdir().unwrap();

    let mut files = Vec::new();
    for name in ["first", "second"] {
        let outcome = sweep(&config);
        let (csv_path, _) =
            write_outputs(&dir.path().join(name), &config, &outcome, params.clone()).unwrap();
        files.push(std::fs::read(csv_path).unwrap());
    }
    report(
        "identical seeds reproduce rounds.csv byte for byte",
        files[0] == files[1],
        &format!("{} bytes per file", files[0].len()),
    );
}

const GRADIENT_INSTANCES: usize = 50;
const GRADIENT_TOLERANCE: f64 = 1e-5;
const GRADIENT_STEP: f64 = 1e-6;

#[test]
fn softmax_gradients_match_central_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst_rel = 0.0f64;
    for _ in 0..GRADIENT_INSTANCES {
        let classes = rng.random_range(2..=4);
        let dim = rng.random_range(2..=6);
        let batch = rng.random_range(1..=8);
        let params: Vec<f64> = (0..classes * dim + classes)
            .map(|_| rng.random::<f64>() * 2.0 - 1.0)
            .collect();
        let features =
            ndarray::Array2::from_shape_fn((batch, dim), |_| rng.random::<f64>() * 4.0 - 2.0);
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();

        let model = GlobalModel::from_values(classes, dim, &params).unwrap();
        let (_, grad_weights, grad_bias) = model.loss_and_gradients(features.view(), &labels);
        let analytic: Vec<f64> = grad_weights
            .iter()
            .chain(grad_bias.iter())
            .copied()
            .collect();

        let loss_at = |theta: &[f64]| -> f64 {
            GlobalModel::from_values(classes, dim, theta)
                .unwrap()
                .loss_and_gradients(features.view(), &labels)
                .0
        };
        let numeric: Vec<f64> = (0..params.len())
            .map(|i| {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus[i] += GRADIENT_STEP;
                minus[i] -= GRADIENT_STEP;
                (loss_at(&plus) - loss_at(&minus)) / (2.0 * GRADIENT_STEP)
            })
            .collect();

        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n) * (a - n))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        worst_rel = worst_rel.max(diff / scale);
    }
    report(
        "softmax gradients match central finite differences",
        worst_rel <= GRADIENT_TOLERANCE,
        &format!(
            "worst relative error {worst_rel:.3e} (tolerance {GRADIENT_TOLERANCE:.0e}) over {GRADIENT_INSTANCES} instances"
        ),
    );
}

const BOUND_INSTANCES: usize = 100;

#[test]
fn baselines_exclude_exactly_f_and_every_defense_flags_a_flipped_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut exact = true;
    let mut diverged = 0;
    for _ in 0..BOUND_INSTANCES {
        let f = rng.random_range(1..=3);
        let n = rng.random_range(f + 3..=15);
        let d = rng.random_range(2..=16);
        let updates = random_updates(&mut rng, n, d, 1);
        exact &= mkrum_select(&updates, f).unwrap().excluded().len() == f;
        match dnc_detect(&updates, f) {
            Ok(verdict) => exact &= verdict.excluded().len() == f,
            Err(Error::PowerIterationDiverged { .. }) => diverged += 1,
            Err(other) => panic!("unexpected dnc error: {other}"),
        }
    }

    let shared = vec![0.5, -1.0, 2.0, 0.25];
    let mut updates: Vec<UpdateVector> = (0..9)
        .map(|i| UpdateVector::new(ClientId(i), 1, shared.clone()).unwrap())
        .collect();
    updates.push(UpdateVector::new(ClientId(9), 1, shared.iter().map(|v| -v).collect()).unwrap());
    let flipped: BTreeSet<ClientId> = [ClientId(9)].into();
    let all_flag = detect(&updates).unwrap().excluded() == &flipped
        && mkrum_select(&updates, 1).unwrap().excluded() == &flipped
        && dnc_detect(&updates, 1).unwrap().excluded() == &flipped
        && cfl_split(&updates).unwrap().excluded() == &flipped;

    report(
        "baselines exclude exactly f and all defenses flag a flipped update",
        exact && all_flag,
        &format!(
            "{BOUND_INSTANCES} random instances (spectral divergences skipped: {diverged}), flipped update flagged by all four defenses: {all_flag}"
        ),
    );
}
