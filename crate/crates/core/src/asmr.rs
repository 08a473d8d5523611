//! Density-based malfunction detection over cosine distances.
//!
//! Updates are magnitude-normalized, pairwise cosine distances are computed,
//! and each client gets a reachability density (inverse mean distance to all
//! others) and an outlier factor (mean ratio of the others' densities to its
//! own). Clients above the largest consecutive gap in the sorted outlier
//! factors are excluded. No fixed threshold and no assumed attacker count.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::geometry::{self, ClientId, DistanceMatrix, UpdateVector};

/// Floor applied to the mean distance before inversion, so identical updates
/// produce a large finite density instead of dividing by zero.
pub const MEAN_DISTANCE_EPSILON: f64 = 1e-12;

/// Smallest population the detector accepts.
pub const MIN_POPULATION: usize = 3;

/// A client's score as ranked by a defense, lower meaning more trusted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClientScore {
    pub client_id: ClientId,
    pub score: f64,
}

/// Outcome of one detection pass over a round's updates.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionVerdict {
    kept: BTreeSet<ClientId>,
    excluded: BTreeSet<ClientId>,
    scores: Vec<ClientScore>,
    boundary_gap: f64,
}

impl DetectionVerdict {
    /// Builds a verdict from scores sorted ascending; entries at `cut` and
    /// beyond are excluded.
    pub(crate) fn from_ranked(scores: Vec<ClientScore>, cut: usize, boundary_gap: f64) -> Self {
        let kept = scores[..cut].iter().map(|s| s.client_id).collect();
        let excluded = scores[cut..].iter().map(|s| s.client_id).collect();
        Self {
            kept,
            excluded,
            scores,
            boundary_gap,
        }
    }

    /// Verdict that trusts the whole roster.
    pub fn keep_all(roster: impl IntoIterator<Item = ClientId>) -> Self {
        let kept: BTreeSet<ClientId> = roster.into_iter().collect();
        let scores = kept
            .iter()
            .map(|&client_id| ClientScore {
                client_id,
                score: 0.0,
            })
            .collect();
        Self {
            kept,
            excluded: BTreeSet::new(),
            scores,
            boundary_gap: 0.0,
        }
    }

    pub fn kept(&self) -> &BTreeSet<ClientId> {
        &self.kept
    }

    pub fn excluded(&self) -> &BTreeSet<ClientId> {
        &self.excluded
    }

    /// Per-client scores in ascending order.
    pub fn scores(&self) -> &[ClientScore] {
        &self.scores
    }

    /// Score gap across the exclusion boundary; zero when nothing was excluded.
    pub fn boundary_gap(&self) -> f64 {
        self.boundary_gap
    }

    pub fn is_excluded(&self, client: ClientId) -> bool {
        self.excluded.contains(&client)
    }
}

/// Reachability densities and outlier factors for one distance matrix, plus
/// the ranking by ascending outlier factor.
#[derive(Clone, Debug, PartialEq)]
pub struct OutlierScores {
    reachability: Vec<f64>,
    factors: Vec<f64>,
    ordering: Vec<usize>,
}

impl OutlierScores {
    pub fn reachability_densities(&self) -> &[f64] {
        &self.reachability
    }

    pub fn outlier_factors(&self) -> &[f64] {
        &self.factors
    }

    /// Indices sorted by ascending outlier factor, ties by position.
    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }
}

/// Inverse mean distance from client `p` to every other client.
pub fn reachability_density(p: usize, distances: &DistanceMatrix) -> Result<f64> {
    let n = distances.n();
    if n < MIN_POPULATION {
        return Err(Error::PopulationTooSmall {
            needed: MIN_POPULATION,
            got: n,
        });
    }
    assert!(p < n, "client index out of bounds");
    let sum: f64 = (0..n)
        .filter(|&o| o != p)
        .map(|o| distances.get(p, o))
        .sum();
    let mean = sum / (n - 1) as f64;
    Ok(1.0 / mean.max(MEAN_DISTANCE_EPSILON))
}

/// Mean ratio of the other clients' densities to client `p`'s density.
///
/// Values near 1 mean `p` sits as densely as its peers; values well above 1
/// mean `p` is isolated.
pub fn outlier_factor(p: usize, densities: &[f64]) -> f64 {
    let n = densities.len();
    assert!(n >= MIN_POPULATION, "population too small");
    assert!(p < n, "client index out of bounds");
    let ratio_sum: f64 = (0..n)
        .filter(|&o| o != p)
        .map(|o| densities[o] / densities[p])
        .sum();
    ratio_sum / (n - 1) as f64
}

/// Densities and outlier factors for every client in the matrix.
pub fn outlier_scores(distances: &DistanceMatrix) -> Result<OutlierScores> {
    let n = distances.n();
    let reachability: Vec<f64> = (0..n)
        .map(|p| reachability_density(p, distances))
        .collect::<Result<_>>()?;
    let factors: Vec<f64> = (0..n).map(|p| outlier_factor(p, &reachability)).collect();
    let mut ordering: Vec<usize> = (0..n).collect();
    ordering.sort_by(|&a, &b| factors[a].total_cmp(&factors[b]).then(a.cmp(&b)));
    Ok(OutlierScores {
        reachability,
        factors,
        ordering,
    })
}

/// Splits the ranking at the largest consecutive gap in outlier factors and
/// excludes the high side.
///
/// Equal-size gaps resolve to the boundary nearest the top of the ranking,
/// so the fewest clients are excluded. If every factor is identical there is
/// no gap and nobody is excluded.
pub fn gap_boundary(scores: &OutlierScores, roster: &[ClientId]) -> DetectionVerdict {
    let n = scores.len();
    assert_eq!(
        roster.len(),
        n,
        "roster and scores must cover the same clients"
    );
    let factors = scores.outlier_factors();
    let ordering = scores.ordering();

    let mut best_gap = 0.0;
    let mut cut = n;
    for i in 0..n - 1 {
        let gap = factors[ordering[i + 1]] - factors[ordering[i]];
        if gap >= best_gap && gap > 0.0 {
            best_gap = gap;
            cut = i + 1;
        }
    }

    let ranked: Vec<ClientScore> = ordering
        .iter()
        .map(|&i| ClientScore {
            client_id: roster[i],
            score: factors[i],
        })
        .collect();
    let verdict = DetectionVerdict::from_ranked(ranked, cut, best_gap);
    if verdict.excluded().len() > n / 2 {
        log::warn!(
            "detector excluded {} of {} clients; population may be majority-malfunctioning",
            verdict.excluded().len(),
            n
        );
    }
    verdict
}

/// Full detection pass: normalize, compute distances, score, cut at the gap.
///
/// The roster is processed in ascending client-id order, so the verdict does
/// not depend on presentation order. Input updates are left untouched;
/// normalization happens on copies.
pub fn detect(updates: &[UpdateVector]) -> Result<DetectionVerdict> {
    if updates.len() < MIN_POPULATION {
        return Err(Error::PopulationTooSmall {
            needed: MIN_POPULATION,
            got: updates.len(),
        });
    }
    let order = geometry::canonical_order(updates)?;
    let normalized: Vec<UpdateVector> = order
        .iter()
        .map(|&i| geometry::normalize(&updates[i]))
        .collect::<Result<_>>()?;
    let distances = geometry::pairwise_distances(&normalized)?;
    let scores = outlier_scores(&distances)?;
    let roster: Vec<ClientId> = order.iter().map(|&i| updates[i].client_id()).collect();
    Ok(gap_boundary(&scores, &roster))
}
