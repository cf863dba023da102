//! Partitioning Around Medoids: exact BUILD + steepest-descent SWAP, plus
//! silhouette-based selection of the cluster count.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct PamResult {
    /// Cluster label per point, indexing into `medoids`.
    pub labels: Vec<usize>,
    /// Medoid point indices, ascending.
    pub medoids: Vec<usize>,
    /// Total dissimilarity of points to their medoids.
    pub objective: f64,
}

fn validate_dissimilarity(d: &DMatrix<f64>) -> Result<()> {
    let n = d.nrows();
    if d.ncols() != n || n == 0 {
        return Err(Error::Parameter("dissimilarity matrix must be square".into()));
    }
    for i in 0..n {
        if d[(i, i)] != 0.0 {
            return Err(Error::Parameter(format!(
                "dissimilarity diagonal entry {i} is {}, expected 0",
                d[(i, i)]
            )));
        }
        for j in (i + 1)..n {
            let (a, b) = (d[(i, j)], d[(j, i)]);
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::Parameter(format!(
                    "dissimilarity ({i},{j}) = {a} must be finite and nonnegative"
                )));
            }
            if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                return Err(Error::Parameter(format!(
                    "dissimilarity matrix is asymmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

/// Nearest and second-nearest medoid distances (ties to the lowest medoid
/// index).
fn nearest_pair(d: &DMatrix<f64>, medoids: &[usize], i: usize) -> (usize, f64, f64) {
    let mut best = usize::MAX;
    let mut dn = f64::INFINITY;
    let mut ds = f64::INFINITY;
    for (mi, &m) in medoids.iter().enumerate() {
        let dist = d[(i, m)];
        if dist < dn {
            ds = dn;
            dn = dist;
            best = mi;
        } else if dist < ds {
            ds = dist;
        }
    }
    (best, dn, ds)
}

/// Exact PAM: greedy BUILD, then repeatedly apply the single best improving
/// (medoid, candidate) swap until none improves the objective.
pub fn pam(d: &DMatrix<f64>, k: usize) -> Result<PamResult> {
    validate_dissimilarity(d)?;
    let n = d.nrows();
    if k < 2 || k >= n {
        return Err(Error::Parameter(format!(
            "cluster count k = {k} must satisfy 2 <= k < n = {n}"
        )));
    }

    // BUILD: start from the 1-medoid minimizer, then greedily add the point
    // with the largest decrease of the objective. Ties pick the lowest index.
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut first = 0;
    let mut first_cost = f64::INFINITY;
    for cand in 0..n {
        let cost: f64 = (0..n).map(|i| d[(i, cand)]).sum();
        if cost < first_cost {
            first_cost = cost;
            first = cand;
        }
    }
    medoids.push(first);
    let mut dn: Vec<f64> = (0..n).map(|i| d[(i, first)]).collect();
    while medoids.len() < k {
        let mut best_cand = usize::MAX;
        let mut best_gain = f64::NEG_INFINITY;
        for cand in 0..n {
            if medoids.contains(&cand) {
                continue;
            }
            let gain: f64 = (0..n)
                .map(|i| (dn[i] - d[(i, cand)]).max(0.0))
                .sum();
            if gain > best_gain {
                best_gain = gain;
                best_cand = cand;
            }
        }
        medoids.push(best_cand);
        for i in 0..n {
            dn[i] = dn[i].min(d[(i, best_cand)]);
        }
    }
    medoids.sort_unstable();

    // SWAP: steepest descent over all (medoid, candidate) pairs, computing
    // each candidate's deltas against every medoid in one pass.
    let mut is_medoid = vec![false; n];
    for &m in &medoids {
        is_medoid[m] = true;
    }
    let mut nearest = vec![0usize; n];
    let mut dist1 = vec![0.0f64; n];
    let mut dist2 = vec![0.0f64; n];
    let refresh = |medoids: &[usize],
                   nearest: &mut Vec<usize>,
                   dist1: &mut Vec<f64>,
                   dist2: &mut Vec<f64>| {
        for i in 0..n {
            let (b, d1, d2) = nearest_pair(d, medoids, i);
            nearest[i] = b;
            dist1[i] = d1;
            dist2[i] = d2;
        }
    };
    refresh(&medoids, &mut nearest, &mut dist1, &mut dist2);
    let mut objective: f64 = dist1.iter().sum();

    loop {
        let mut best_delta = -1e-12;
        let mut best_swap: Option<(usize, usize)> = None;
        let mut removal_delta = vec![0.0f64; k];
        for cand in 0..n {
            if is_medoid[cand] {
                continue;
            }
            // common: every point may switch to the candidate.
            // removal_delta[x]: extra effect on points whose nearest medoid
            // is removed.
            let mut common = 0.0;
            removal_delta.fill(0.0);
            for i in 0..n {
                let doi = d[(i, cand)];
                let gain = (doi - dist1[i]).min(0.0);
                common += gain;
                removal_delta[nearest[i]] += doi.min(dist2[i]) - dist1[i] - gain;
            }
            for x in 0..k {
                let delta = common + removal_delta[x];
                if delta < best_delta {
                    best_delta = delta;
                    best_swap = Some((x, cand));
                }
            }
        }
        let Some((x, cand)) = best_swap else { break };
        is_medoid[medoids[x]] = false;
        is_medoid[cand] = true;
        medoids[x] = cand;
        medoids.sort_unstable();
        refresh(&medoids, &mut nearest, &mut dist1, &mut dist2);
        let new_objective: f64 = dist1.iter().sum();
        debug_assert!(
            new_objective <= objective + 1e-9,
            "swap increased the objective: {objective} -> {new_objective}"
        );
        objective = new_objective;
    }

    Ok(PamResult {
        labels: nearest,
        medoids,
        objective,
    })
}

/// Average silhouette width of a labeled partition under dissimilarity `d`.
/// Singleton clusters contribute 0.
pub fn silhouette_width(d: &DMatrix<f64>, labels: &[usize], k: usize) -> f64 {
    let n = labels.len();
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0f64; k];
    for i in 0..n {
        sums.fill(0.0);
        for j in 0..n {
            if j != i {
                sums[labels[j]] += d[(i, j)];
            }
        }
        let own = labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..k {
            if c != own && sizes[c] > 0 {
                b = b.min(sums[c] / sizes[c] as f64);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 && b.is_finite() {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Choose the cluster count maximizing the average silhouette width over
/// k in [2, k_max]; ties take the smallest k.
pub fn select_k(d: &DMatrix<f64>, k_max: usize) -> Result<usize> {
    validate_dissimilarity(d)?;
    let n = d.nrows();
    if k_max < 2 {
        return Err(Error::Parameter(format!("k_max = {k_max} must be >= 2")));
    }
    if n < 3 {
        return Err(Error::Parameter(
            "cluster-count selection needs at least 3 points".into(),
        ));
    }
    let hi = k_max.min(n - 1);
    let mut best_k = 2;
    let mut best_score = f64::NEG_INFINITY;
    for k in 2..=hi {
        let result = pam(d, k)?;
        let score = silhouette_width(d, &result.labels, k);
        if score > best_score {
            best_score = score;
            best_k = k;
        }
    }
    Ok(best_k)
}
