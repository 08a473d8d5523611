//! Detection and accuracy metrics, per round and pooled across seeds.
//!
//! True-positive rate is the share of actually-misbehaving clients the
//! defense excluded; false-positive rate is the share of benign clients it
//! excluded. Rounds without misbehaving clients have no defined TPR, and
//! rounds without benign clients have no defined FPR; undefined values are
//! skipped when averaging rather than counted as zero.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::fedsim::RoundRecord;
use crate::geometry::ClientId;

/// Detection quality and accuracy for one round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundMetrics {
    pub round: u64,
    /// `None` when no client misbehaved this round.
    pub tpr: Option<f64>,
    /// `None` when every client misbehaved this round.
    pub fpr: Option<f64>,
    pub test_accuracy: f64,
    pub excluded: Vec<ClientId>,
    pub ground_truth: Vec<ClientId>,
}

/// Derives round metrics from a completed round's record.
pub fn round_metrics(record: &RoundRecord) -> RoundMetrics {
    let population: BTreeSet<ClientId> = record
        .verdict
        .kept()
        .union(record.verdict.excluded())
        .copied()
        .collect();
    let truth = &record.ground_truth;
    let benign: BTreeSet<ClientId> = population.difference(truth).copied().collect();
    let excluded = record.verdict.excluded();

    let tpr = if truth.is_empty() {
        None
    } else {
        Some(excluded.intersection(truth).count() as f64 / truth.len() as f64)
    };
    let fpr = if benign.is_empty() {
        None
    } else {
        Some(excluded.intersection(&benign).count() as f64 / benign.len() as f64)
    };
    RoundMetrics {
        round: record.round,
        tpr,
        fpr,
        test_accuracy: record.test_accuracy,
        excluded: excluded.iter().copied().collect(),
        ground_truth: truth.iter().copied().collect(),
    }
}

/// All round metrics for one master seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub rounds: Vec<RoundMetrics>,
}

impl SeedRun {
    /// Accuracy after the last round.
    pub fn final_accuracy(&self) -> f64 {
        self.rounds
            .last()
            .expect("at least one round")
            .test_accuracy
    }
}

/// Pooled means for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub mean_tpr: Option<f64>,
    pub mean_fpr: Option<f64>,
    pub final_accuracy: f64,
}

/// Metrics pooled across every seed of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// Mean TPR over every (seed, round) where it is defined.
    pub mean_tpr: Option<f64>,
    /// Mean FPR over every (seed, round) where it is defined.
    pub mean_fpr: Option<f64>,
    /// Mean final-round accuracy across seeds.
    pub mean_final_accuracy: f64,
    pub per_seed: Vec<SeedSummary>,
}

fn mean_of_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Pools round metrics across seeds.
pub fn summarize(runs: &[SeedRun]) -> MetricsSummary {
    assert!(!runs.is_empty(), "need at least one seed run");
    let per_seed: Vec<SeedSummary> = runs
        .iter()
        .map(|run| SeedSummary {
            seed: run.seed,
            mean_tpr: mean_of_defined(run.rounds.iter().map(|r| r.tpr)),
            mean_fpr: mean_of_defined(run.rounds.iter().map(|r| r.fpr)),
            final_accuracy: run.final_accuracy(),
        })
        .collect();
    MetricsSummary {
        mean_tpr: mean_of_defined(runs.iter().flat_map(|run| run.rounds.iter().map(|r| r.tpr))),
        mean_fpr: mean_of_defined(runs.iter().flat_map(|run| run.rounds.iter().map(|r| r.fpr))),
        mean_final_accuracy: runs.iter().map(SeedRun::final_accuracy).sum::<f64>()
            / runs.len() as f64,
        per_seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asmr::{ClientScore, DetectionVerdict};

    fn verdict(kept: &[usize], excluded: &[usize]) -> DetectionVerdict {
        let scores: Vec<ClientScore> = kept
            .iter()
            .map(|&c| ClientScore {
                client_id: ClientId(c),
                score: 0.0,
            })
            .chain(excluded.iter().map(|&c| ClientScore {
                client_id: ClientId(c),
                score: 1.0,
            }))
            .collect();
        DetectionVerdict::from_ranked(scores, kept.len(), 1.0)
    }

    fn record(
        round: u64,
        kept: &[usize],
        excluded: &[usize],
        truth: &[usize],
        accuracy: f64,
    ) -> RoundRecord {
        RoundRecord {
            round,
            ground_truth: truth.iter().map(|&c| ClientId(c)).collect(),
            verdict: verdict(kept, excluded),
            test_accuracy: accuracy,
            updates: Vec::new(),
        }
    }

    #[test]
    fn rates_follow_set_arithmetic() {
        // 6 clients, truth {4, 5}, excluded {3, 5}: one of two truths caught,
        // one of four benign flagged.
        let r = record(1, &[0, 1, 2, 4], &[3, 5], &[4, 5], 0.8);
        let m = round_metrics(&r);
        assert_eq!(m.tpr, Some(0.5));
        assert_eq!(m.fpr, Some(0.25));
        assert_eq!(m.excluded, vec![ClientId(3), ClientId(5)]);
    }

    #[test]
    fn perfect_detection_scores_one_and_zero() {
        let r = record(1, &[0, 1, 2], &[3, 4], &[3, 4], 0.9);
        let m = round_metrics(&r);
        assert_eq!(m.tpr, Some(1.0));
        assert_eq!(m.fpr, Some(0.0));
    }

    #[test]
    fn tpr_is_undefined_without_misbehavior() {
        let r = record(1, &[0, 1, 2], &[3], &[], 0.9);
        let m = round_metrics(&r);
        assert_eq!(m.tpr, None);
        assert_eq!(m.fpr, Some(0.25));
    }

    #[test]
    fn fpr_is_undefined_without_benign_clients() {
        let r = record(1, &[0], &[1, 2], &[0, 1, 2], 0.2);
        let m = round_metrics(&r);
        assert_eq!(m.tpr, Some(2.0 / 3.0));
        assert_eq!(m.fpr, None);
    }

    #[test]
    fn summaries_skip_undefined_rounds() {
        let runs = vec![
            SeedRun {
                seed: 0,
                rounds: vec![
                    round_metrics(&record(1, &[0, 1], &[2], &[2], 0.5)),
                    round_metrics(&record(2, &[0, 1, 2], &[], &[], 0.7)),
                ],
            },
            SeedRun {
                seed: 1,
                rounds: vec![
                    round_metrics(&record(1, &[0, 2], &[1], &[2], 0.4)),
                    round_metrics(&record(2, &[0, 1], &[2], &[2], 0.6)),
                ],
            },
        ];
        let summary = summarize(&runs);
        // Defined TPRs: 1.0 (seed 0 round 1), 0.0 and 1.0 (seed 1).
        assert_eq!(summary.mean_tpr, Some(2.0 / 3.0));
        // Defined FPRs: 0.0, 0.0 (seed 0), 0.5, 0.0 (seed 1).
        assert_eq!(summary.mean_fpr, Some(0.125));
        assert!((summary.mean_final_accuracy - 0.65).abs() < 1e-12);
        assert_eq!(summary.per_seed[0].mean_tpr, Some(1.0));
        assert_eq!(summary.per_seed[0].final_accuracy, 0.7);
    }

    #[test]
    fn all_undefined_pools_to_none() {
        let runs = vec![SeedRun {
            seed: 0,
            rounds: vec![round_metrics(&record(1, &[0, 1, 2], &[], &[], 0.9))],
        }];
        let summary = summarize(&runs);
        assert_eq!(summary.mean_tpr, None);
        assert_eq!(summary.mean_fpr, Some(0.0));
    }
}
