//! Downstream evaluation: salient-feature extraction, 1-NN classification,
//! cosine K-means with restarts, matching-based clustering metrics and a
//! block-structure diagnostic for weight matrices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::{Mat, Vec64};

/// Projects the data onto the learned salient directions: `P * X`.
pub fn salient_features(p: &Mat, x: &Mat) -> Result<Mat> {
    if p.nrows() != p.ncols() || p.ncols() != x.nrows() {
        return Err(Error::invalid(format!(
            "projection {}x{} does not act on {}-row data",
            p.nrows(),
            p.ncols(),
            x.nrows()
        )));
    }
    Ok(p * x)
}

/// Labels every test column with the label of the Euclidean-nearest
/// training column; distance ties go to the lowest training index.
pub fn knn1_classify(
    train_feats: &Mat,
    train_labels: &[usize],
    test_feats: &Mat,
) -> Result<Vec<usize>> {
    if train_feats.ncols() == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    if train_labels.len() != train_feats.ncols() {
        return Err(Error::invalid(format!(
            "expected {} training labels, got {}",
            train_feats.ncols(),
            train_labels.len()
        )));
    }
    if test_feats.nrows() != train_feats.nrows() {
        return Err(Error::invalid(format!(
            "feature dimensions differ: train {} vs test {}",
            train_feats.nrows(),
            test_feats.nrows()
        )));
    }
    Ok(test_feats
        .column_iter()
        .map(|t| {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (j, c) in train_feats.column_iter().enumerate() {
                let d = (t - c).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            train_labels[best]
        })
        .collect())
}

pub(crate) struct RestartOutcome {
    cost: f64,
    assignments: Vec<usize>,
    #[allow(dead_code)] // observed by the monotonicity tests
    cost_history: Vec<f64>,
}

// One Lloyd run on pre-normalized columns. `zero` marks all-zero input
// columns, which are never reassigned (they stay at cluster 0).
fn run_restart(units: &Mat, zero: &[bool], k: usize, rng: &mut ChaCha8Rng) -> RestartOutcome {
    let (d, n) = units.shape();
    let chosen = rand::seq::index::sample(rng, n, k);
    let mut centroids = Mat::zeros(d, k);
    for (c, idx) in chosen.iter().enumerate() {
        centroids.column_mut(c).copy_from(&units.column(idx));
    }

    let mut assignments = vec![0usize; n];
    let mut cost_history = Vec::new();
    let mut cost = f64::INFINITY;
    for _ in 0..100 {
        let mut changed = false;
        for j in 0..n {
            if zero[j] {
                continue;
            }
            let mut best = 0usize;
            let mut best_dot = f64::NEG_INFINITY;
            for c in 0..k {
                let dot = units.column(j).dot(&centroids.column(c));
                if dot > best_dot {
                    best_dot = dot;
                    best = c;
                }
            }
            if assignments[j] != best {
                assignments[j] = best;
                changed = true;
            }
        }

        // re-seed empty clusters with the sample farthest from its centroid
        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        let mut stolen = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far: Option<(usize, f64)> = None;
            for j in 0..n {
                if zero[j] || stolen[j] || counts[assignments[j]] <= 1 {
                    continue;
                }
                let dot = units.column(j).dot(&centroids.column(assignments[j]));
                if far.map_or(true, |(_, fd)| dot < fd) {
                    far = Some((j, dot));
                }
            }
            if let Some((j, _)) = far {
                counts[assignments[j]] -= 1;
                assignments[j] = c;
                counts[c] = 1;
                stolen[j] = true;
                changed = true;
            }
        }

        for c in 0..k {
            let mut sum = Vec64::zeros(d);
            for j in 0..n {
                if assignments[j] == c && !zero[j] {
                    sum += units.column(j);
                }
            }
            let norm = sum.norm();
            if norm > 0.0 {
                centroids.column_mut(c).copy_from(&(sum / norm));
            }
        }

        cost = (0..n)
            .map(|j| 1.0 - units.column(j).dot(&centroids.column(assignments[j])))
            .sum();
        cost_history.push(cost);
        if !changed {
            break;
        }
    }
    RestartOutcome {
        cost,
        assignments,
        cost_history,
    }
}

pub(crate) fn kmeans_restart_outcomes(
    feats: &Mat,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<RestartOutcome>> {
    let n = feats.ncols();
    if n == 0 {
        return Err(Error::invalid("no samples to cluster"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "cluster count k = {k} must lie in 1..={n}"
        )));
    }
    if restarts == 0 {
        return Err(Error::invalid("restarts must be positive"));
    }
    let mut units = feats.clone();
    let mut zero = vec![false; n];
    for (j, mut c) in units.column_iter_mut().enumerate() {
        let norm = c.norm();
        if norm == 0.0 {
            zero[j] = true;
        } else {
            c /= norm;
        }
    }
    // restarts run in parallel; each derives its own generator from the
    // master seed, and the ordered collect keeps the outcome independent
    // of the thread count
    Ok((0..restarts)
        .into_par_iter()
        .map(|r| {
            let derived = seed.wrapping_add((r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut rng = ChaCha8Rng::seed_from_u64(derived);
            run_restart(&units, &zero, k, &mut rng)
        })
        .collect())
}

/// Lloyd K-means under cosine distance `1 - cos(x, c)`, restarted
/// `restarts` times; returns the assignment of the cheapest restart
/// (earliest on exact cost ties). Deterministic per seed at any thread
/// count.
pub fn kmeans_cosine(feats: &Mat, k: usize, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    let outcomes = kmeans_restart_outcomes(feats, k, restarts, seed)?;
    let mut best = 0usize;
    for (r, o) in outcomes.iter().enumerate() {
        if o.cost < outcomes[best].cost {
            best = r;
        }
    }
    Ok(outcomes.into_iter().nth(best).unwrap().assignments)
}

// Compacts an arbitrary label alphabet to 0..k, returning k.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mapped = labels
        .iter()
        .map(|l| distinct.binary_search(l).unwrap())
        .collect();
    (mapped, distinct.len())
}

// Minimum-cost perfect matching on a square cost matrix by the
// potentials/augmenting-path method; returns the column matched to each
// row.
fn hungarian_min(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched = vec![0usize; n + 1]; // matched[j] = row occupying column j, 1-based
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if matched[j] > 0 {
            row_to_col[matched[j] - 1] = j - 1;
        }
    }
    row_to_col
}

fn contingency(pred: &[usize], truth: &[usize]) -> Result<(Vec<Vec<i64>>, usize, usize)> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "label vectors differ in length: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("label vectors are empty"));
    }
    let (pi, kp) = compact(pred);
    let (ti, kt) = compact(truth);
    let mut counts = vec![vec![0i64; kt]; kp];
    for (a, b) in pi.iter().zip(ti.iter()) {
        counts[*a][*b] += 1;
    }
    Ok((counts, kp, kt))
}

/// Best label-agreement rate over one-to-one matchings of predicted
/// clusters to true classes, via optimal assignment on the contingency
/// table.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let (counts, kp, kt) = contingency(pred, truth)?;
    let r = kp.max(kt);
    let cmax = counts
        .iter()
        .flat_map(|row| row.iter())
        .copied()
        .max()
        .unwrap_or(0);
    // pad to square and flip to a minimization problem
    let cost: Vec<Vec<i64>> = (0..r)
        .map(|a| {
            (0..r)
                .map(|b| {
                    let c = if a < kp && b < kt { counts[a][b] } else { 0 };
                    cmax - c
                })
                .collect()
        })
        .collect();
    let assign = hungarian_min(&cost);
    let agreed: i64 = (0..kp)
        .filter(|&a| assign[a] < kt)
        .map(|a| counts[a][assign[a]])
        .sum();
    Ok(agreed as f64 / pred.len() as f64)
}

/// Pairwise F1: precision and recall of "same cluster" against "same
/// class" over all unordered sample pairs, zero when both are undefined.
pub fn pairwise_f_score(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() < 2 {
        return Err(Error::invalid("need at least two samples for pair counting"));
    }
    let (counts, kp, kt) = contingency(pred, truth)?;
    let pairs = |c: i64| c * (c - 1) / 2;
    let both: i64 = counts.iter().flatten().map(|&c| pairs(c)).sum();
    let same_cluster: i64 = (0..kp).map(|a| pairs(counts[a].iter().sum())).sum();
    let same_class: i64 = (0..kt)
        .map(|b| pairs((0..kp).map(|a| counts[a][b]).sum()))
        .sum();
    let p = if same_cluster == 0 {
        0.0
    } else {
        both as f64 / same_cluster as f64
    };
    let r = if same_class == 0 {
        0.0
    } else {
        both as f64 / same_class as f64
    };
    if p + r == 0.0 {
        Ok(0.0)
    } else {
        Ok(2.0 * p * r / (p + r))
    }
}

/// Fraction of the weight mass lying on same-label pairs:
/// `sum |W_ij| over label_i == label_j` divided by the total mass.
pub fn block_energy_ratio(w: &Mat, labels: &[usize]) -> Result<f64> {
    if w.nrows() != w.ncols() {
        return Err(Error::invalid("weight matrix must be square"));
    }
    if labels.len() != w.nrows() {
        return Err(Error::invalid(format!(
            "expected {} labels, got {}",
            w.nrows(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    let mut same = 0.0;
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            let v = w[(i, j)].abs();
            total += v;
            if labels[i] == labels[j] {
                same += v;
            }
        }
    }
    if total == 0.0 {
        return Err(Error::ZeroWeightMass);
    }
    Ok(same / total)
}
