//! Subject clustering used for initialization and by the two-step baselines:
//! Ward agglomeration over a distance matrix and k-means over vectorized
//! precision matrices.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{RccmError, Result};
use crate::linalg::PrecisionMatrix;
use crate::rng::{streams, substream};

/// D_ij = ||Omega_i - Omega_j||_F.
pub fn frobenius_distance_matrix(precisions: &[PrecisionMatrix]) -> Result<DMatrix<f64>> {
    let k = precisions.len();
    if let Some(first) = precisions.first() {
        if precisions.iter().any(|m| m.dim() != first.dim()) {
            return Err(RccmError::invalid("precision matrices differ in dimension"));
        }
    }
    let mut d = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            let v = (precisions[i].as_matrix() - precisions[j].as_matrix()).norm();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Relabel so clusters are numbered in order of their first member.
pub(crate) fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = Vec::new();
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            if l >= map.len() {
                map.resize(l + 1, None);
            }
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

/// Agglomerative Ward clustering cut at `groups` clusters.
///
/// Works on squared distances with the Lance-Williams update for Ward's
/// minimum-variance criterion (the `ward.D2` convention). Among equal merge
/// costs the pair with the smallest (first member, first member) indices is
/// merged first. Labels are numbered by each cluster's smallest member.
pub fn ward_cluster(distances: &DMatrix<f64>, groups: usize) -> Result<Vec<usize>> {
    let k = distances.nrows();
    if !distances.is_square() {
        return Err(RccmError::invalid("distance matrix must be square"));
    }
    if groups == 0 || groups > k {
        return Err(RccmError::invalid(format!("cannot cut {k} items into {groups} clusters")));
    }
    for i in 0..k {
        if distances[(i, i)] != 0.0 {
            return Err(RccmError::invalid("distance matrix must have a zero diagonal"));
        }
        for j in 0..k {
            let v = distances[(i, j)];
            if !(v >= 0.0) || v != distances[(j, i)] {
                return Err(RccmError::invalid("distances must be symmetric and nonnegative"));
            }
        }
    }

    let mut d2 = distances.map(|v| v * v);
    let mut size = vec![1usize; k];
    // Slot i holds the cluster whose smallest member is i.
    let mut active = vec![true; k];
    let mut owner: Vec<usize> = (0..k).collect();
    let mut remaining = k;

    while remaining > groups {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in (0..k).filter(|&a| active[a]) {
            for b in ((a + 1)..k).filter(|&b| active[b]) {
                if best.is_none_or(|(_, _, c)| d2[(a, b)] < c) {
                    best = Some((a, b, d2[(a, b)]));
                }
            }
        }
        let (a, b, dab) = best.expect("at least two active clusters");
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for c in (0..k).filter(|&c| active[c] && c != a && c != b) {
            let nc = size[c] as f64;
            let v = ((na + nc) * d2[(a, c)] + (nb + nc) * d2[(b, c)] - nc * dab) / (na + nb + nc);
            d2[(a, c)] = v;
            d2[(c, a)] = v;
        }
        size[a] += size[b];
        active[b] = false;
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }
        remaining -= 1;
    }
    Ok(canonical_labels(&owner))
}

/// Upper triangle (diagonal included), row by row.
pub fn vectorize_upper(m: &PrecisionMatrix) -> Vec<f64> {
    let a = m.as_matrix();
    let p = m.dim();
    let mut v = Vec::with_capacity(p * (p + 1) / 2);
    for i in 0..p {
        for j in i..p {
            v.push(a[(i, j)]);
        }
    }
    v
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_seeds<R: Rng>(points: &[Vec<f64>], groups: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < groups {
        let total: f64 = nearest.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[idx].clone();
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iter: usize) -> (Vec<usize>, f64) {
    let dim = points[0].len();
    let groups = centers.len();
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (g, c) in centers.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best_d {
                    best = g;
                    best_d = d;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; groups];
        let mut counts = vec![0usize; groups];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for g in 0..groups {
            if counts[g] == 0 {
                // Re-seed an empty cluster at the point farthest from its center.
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centers[labels[a]]).total_cmp(&sq_dist(&points[b], &centers[labels[b]]))
                    })
                    .expect("nonempty");
                centers[g] = points[far].clone();
                labels[far] = g;
                changed = true;
            } else {
                centers[g] = sums[g].iter().map(|s| s / counts[g] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let wcss = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
    (labels, wcss)
}

/// k-means on upper-triangle-vectorized precision matrices: k-means++
/// seeding, Lloyd iterations, best of `restarts` runs by within-cluster sum of
/// squares. Labels are numbered by first appearance.
pub fn kmeans_vectorized(precisions: &[PrecisionMatrix], groups: usize, seed: u64, restarts: usize) -> Result<Vec<usize>> {
    let k = precisions.len();
    if groups == 0 || groups > k {
        return Err(RccmError::invalid(format!("cannot cut {k} items into {groups} clusters")));
    }
    if groups == 1 {
        return Ok(vec![0; k]);
    }
    let points: Vec<Vec<f64>> = precisions.iter().map(vectorize_upper).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for r in 0..restarts.max(1) {
        let mut rng = substream(seed, streams::KMEANS, r as u64);
        let centers = plus_plus_seeds(&points, groups, &mut rng);
        let (labels, wcss) = lloyd(&points, centers, 300);
        if best.as_ref().is_none_or(|(_, w)| wcss < *w) {
            best = Some((labels, wcss));
        }
    }
    Ok(canonical_labels(&best.expect("at least one restart").0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ward_splits_blocks() {
        // Two tight clouds {0, 2, 4} and {1, 3} far apart.
        let pos: [f64; 5] = [0.0, 10.0, 0.1, 10.2, 0.3];
        let d = DMatrix::from_fn(5, 5, |i, j| (pos[i] - pos[j]).abs());
        assert_eq!(ward_cluster(&d, 2).unwrap(), vec![0, 1, 0, 1, 0]);
    }

    #[test]
    fn ward_singletons_when_groups_equal_k() {
        let d = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        assert_eq!(ward_cluster(&d, 4).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn ward_equal_distances_merge_by_index() {
        let d = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        // (0,1) first; the Ward update keeps every remaining cost at 1, so
        // the index tie-break then merges 2 into {0, 1}.
        assert_eq!(ward_cluster(&d, 2).unwrap(), vec![0, 0, 0, 1]);
        let zero = DMatrix::zeros(4, 4);
        assert_eq!(ward_cluster(&zero, 2).unwrap(), vec![0, 0, 0, 1]);
    }

    #[test]
    fn ward_rejects_too_many_groups() {
        assert!(ward_cluster(&DMatrix::zeros(2, 2), 3).is_err());
    }

    #[test]
    fn frobenius_scalar_case() {
        let a = PrecisionMatrix::from_row_slice(1, &[1.0]).unwrap();
        let b = PrecisionMatrix::from_row_slice(1, &[3.0]).unwrap();
        let d = frobenius_distance_matrix(&[a.clone(), b, a]).unwrap();
        assert_eq!(d[(0, 1)], 2.0);
        assert_eq!(d[(0, 2)], 0.0);
    }

    #[test]
    fn kmeans_single_group_and_duplicates() {
        let a = PrecisionMatrix::from_row_slice(1, &[1.0]).unwrap();
        let b = PrecisionMatrix::from_row_slice(1, &[5.0]).unwrap();
        assert_eq!(kmeans_vectorized(&[a.clone(), b.clone()], 1, 0, 3).unwrap(), vec![0, 0]);
        let labels = kmeans_vectorized(&[a.clone(), b.clone(), a, b], 2, 3, 5).unwrap();
        assert_eq!(labels, vec![0, 1, 0, 1]);
    }
}
