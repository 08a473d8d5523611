//! Comparison defenses: Multi-Krum, divide-and-conquer spectral filtering,
//! and a clustered-aggregation cosine bipartition.
//!
//! All three process the roster in ascending client-id order and break score
//! ties toward keeping lower ids, so their verdicts do not depend on
//! presentation order.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::asmr::{ClientScore, DetectionVerdict};
use crate::error::{Error, Result};
use crate::geometry::{self, UpdateVector};

/// Convergence threshold for the principal-direction power iteration.
pub const POWER_ITERATION_TOLERANCE: f64 = 1e-9;

/// Iteration cap before power iteration reports failure.
pub const POWER_ITERATION_MAX_ITERS: usize = 1000;

/// Fixed seed for the power-iteration start vector, so spectral scores are
/// reproducible run to run.
const POWER_ITERATION_SEED: u64 = 7;

/// Exact bipartition search is exponential; above this size the single-linkage
/// merge takes over.
const CFL_EXACT_LIMIT: usize = 16;

/// Multi-Krum selection assuming at most `f` malfunctioning clients.
///
/// Each client is scored by the sum of squared Euclidean distances to its
/// `n - f - 2` nearest peers; the `f` highest scores are excluded. Requires
/// `n >= f + 3`.
pub fn mkrum_select(updates: &[UpdateVector], f: usize) -> Result<DetectionVerdict> {
    let n = updates.len();
    if n < f + 3 {
        return Err(Error::PopulationTooSmall {
            needed: f + 3,
            got: n,
        });
    }
    let order = geometry::canonical_order(updates)?;
    geometry::check_uniform_dimension(updates)?;

    let neighbors = n - f - 2;
    let mut ranked: Vec<ClientScore> = order
        .iter()
        .map(|&i| {
            let mut dists: Vec<f64> = order
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| geometry::squared_euclidean(updates[i].values(), updates[j].values()))
                .collect();
            dists.sort_by(f64::total_cmp);
            ClientScore {
                client_id: updates[i].client_id(),
                score: dists[..neighbors].iter().sum(),
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.client_id.cmp(&b.client_id))
    });

    let cut = n - f;
    let gap = if f > 0 {
        ranked[cut].score - ranked[cut - 1].score
    } else {
        0.0
    };
    Ok(DetectionVerdict::from_ranked(ranked, cut, gap))
}

/// Spectral filtering: centers the updates, finds the principal direction of
/// variation, and excludes the `f` clients with the largest squared
/// projections onto it. Requires `n >= f + 1`.
///
/// If the centered updates are all zero there is no direction of variation;
/// every score is zero and the tie rule excludes the `f` highest ids.
pub fn dnc_detect(updates: &[UpdateVector], f: usize) -> Result<DetectionVerdict> {
    let n = updates.len();
    if n < f + 1 {
        return Err(Error::PopulationTooSmall {
            needed: f + 1,
            got: n,
        });
    }
    let order = geometry::canonical_order(updates)?;
    let dim = geometry::check_uniform_dimension(updates)?;

    let mut rows = Array2::<f64>::zeros((n, dim));
    for (r, &i) in order.iter().enumerate() {
        rows.row_mut(r)
            .iter_mut()
            .zip(updates[i].values())
            .for_each(|(dst, &src)| *dst = src);
    }
    let mean = rows.mean_axis(ndarray::Axis(0)).expect("n >= 1");
    let centered = rows - &mean;

    let direction = principal_direction(&centered)?;
    let mut ranked: Vec<ClientScore> = order
        .iter()
        .enumerate()
        .map(|(r, &i)| {
            let score = match &direction {
                Some(v) => centered.row(r).dot(v).powi(2),
                None => 0.0,
            };
            ClientScore {
                client_id: updates[i].client_id(),
                score,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.client_id.cmp(&b.client_id))
    });

    let cut = n - f;
    let gap = if f > 0 {
        ranked[cut].score - ranked[cut - 1].score
    } else {
        0.0
    };
    Ok(DetectionVerdict::from_ranked(ranked, cut, gap))
}

/// Principal right-singular direction of `rows` by power iteration on the
/// implicit Gram matrix, from a fixed-seed random start.
///
/// Returns `None` when the matrix has no direction of variation (all zero).
fn principal_direction(rows: &Array2<f64>) -> Result<Option<Array1<f64>>> {
    let dim = rows.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut v: Array1<f64> =
        Array1::from_iter((0..dim).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
    let norm = v.dot(&v).sqrt();
    v /= norm;

    for _ in 0..POWER_ITERATION_MAX_ITERS {
        let projected = rows.dot(&v);
        let y = rows.t().dot(&projected);
        let ny = y.dot(&y).sqrt();
        if ny == 0.0 {
            return Ok(None);
        }
        let next = y / ny;
        let drift = (&next - &v).mapv(|x| x * x).sum().sqrt();
        v = next;
        if drift <= POWER_ITERATION_TOLERANCE {
            return Ok(Some(v));
        }
    }
    Err(Error::PowerIterationDiverged {
        max_iterations: POWER_ITERATION_MAX_ITERS,
    })
}

/// Clustered-aggregation defense: bipartitions the roster to minimize the
/// maximum cross-cluster cosine similarity and keeps the larger cluster.
///
/// Equal-size splits keep the cluster with the higher mean intra-cluster
/// similarity; a residual tie keeps the cluster containing the smallest
/// client id. Verdict scores are membership indicators (kept 0, excluded 1).
pub fn cfl_split(updates: &[UpdateVector]) -> Result<DetectionVerdict> {
    let n = updates.len();
    if n < 3 {
        return Err(Error::PopulationTooSmall { needed: 3, got: n });
    }
    let order = geometry::canonical_order(updates)?;
    geometry::check_uniform_dimension(updates)?;
    for &i in &order {
        if updates[i].norm() <= 0.0 {
            return Err(Error::ZeroNormUpdate {
                client: updates[i].client_id(),
            });
        }
    }

    let mut sim = vec![0.0; n * n];
    for a in 0..n {
        sim[a * n + a] = 1.0;
        for b in (a + 1)..n {
            let ua = updates[order[a]].values();
            let ub = updates[order[b]].values();
            let s = 1.0 - geometry::cosine_distance(ua, ub)?;
            sim[a * n + b] = s;
            sim[b * n + a] = s;
        }
    }

    let (cluster_a, cluster_b) = if n <= CFL_EXACT_LIMIT {
        exact_bipartition(n, &sim)
    } else {
        linkage_bipartition(n, &sim)
    };

    let keep_a = match cluster_a.len().cmp(&cluster_b.len()) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => {
            let intra_a = mean_intra_similarity(&cluster_a, n, &sim);
            let intra_b = mean_intra_similarity(&cluster_b, n, &sim);
            match intra_a.total_cmp(&intra_b) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => cluster_a.iter().min() < cluster_b.iter().min(),
            }
        }
    };
    let kept_positions = if keep_a { &cluster_a } else { &cluster_b };

    let mut ranked: Vec<ClientScore> = (0..n)
        .map(|p| ClientScore {
            client_id: updates[order[p]].client_id(),
            score: if kept_positions.contains(&p) {
                0.0
            } else {
                1.0
            },
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.client_id.cmp(&b.client_id))
    });
    let cut = kept_positions.len();
    let gap = if cut < n { 1.0 } else { 0.0 };
    Ok(DetectionVerdict::from_ranked(ranked, cut, gap))
}

/// Max cross-cluster similarity for a split given as a membership set.
fn cross_max(members_a: &[usize], members_b: &[usize], n: usize, sim: &[f64]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for &a in members_a {
        for &b in members_b {
            worst = worst.max(sim[a * n + b]);
        }
    }
    worst
}

fn mean_intra_similarity(members: &[usize], n: usize, sim: &[f64]) -> f64 {
    if members.len() < 2 {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (idx, &a) in members.iter().enumerate() {
        for &b in &members[idx + 1..] {
            sum += sim[a * n + b];
            count += 1;
        }
    }
    sum / count as f64
}

/// Enumerates every bipartition with position 0 fixed in the first cluster
/// and returns the split minimizing max cross-cluster similarity. Ties keep
/// the first split in enumeration order.
fn exact_bipartition(n: usize, sim: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    for mask in 1u32..(1 << (n - 1)) {
        let mut a = vec![0usize];
        let mut b = Vec::new();
        for p in 1..n {
            if mask & (1 << (p - 1)) != 0 {
                b.push(p);
            } else {
                a.push(p);
            }
        }
        let objective = cross_max(&a, &b, n, sim);
        if best
            .as_ref()
            .is_none_or(|(current, _, _)| objective < *current)
        {
            best = Some((objective, a, b));
        }
    }
    let (_, a, b) = best.expect("n >= 3 yields at least one split");
    (a, b)
}

/// Single-linkage agglomeration on similarity down to two clusters.
///
/// Merging the most-similar pair first means the final two clusters are
/// separated at the smallest similarity bottleneck, which minimizes the max
/// cross-cluster similarity, matching the exact search.
fn linkage_bipartition(n: usize, sim: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|p| vec![p]).collect();
    while clusters.len() > 2 {
        let mut best_pair = (0usize, 1usize);
        let mut best_sim = f64::NEG_INFINITY;
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let s = cross_max(&clusters[i], &clusters[j], n, sim);
                if s > best_sim {
                    best_sim = s;
                    best_pair = (i, j);
                }
            }
        }
        let merged = clusters.remove(best_pair.1);
        clusters[best_pair.0].extend(merged);
        clusters[best_pair.0].sort_unstable();
    }
    let b = clusters.pop().expect("two clusters remain");
    let a = clusters.pop().expect("two clusters remain");
    (a, b)
}
