use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{floor_fraction, hub_count, Magnitude, SimulationConfig};
use crate::error::{RccmError, Result};
use crate::linalg::{self, PrecisionMatrix, SymMatrix};
use crate::network::{ordered_pair, EdgeSet};
use crate::panel::{build_panel, TimeSeriesPanel};
use crate::rng::{streams, substream, StreamRng};
use crate::selection::make_positive_definite;

const REPAIR_ROUNDS: usize = 3;
const PERMUTATION_TRIES: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupNetworks {
    pub networks: Vec<EdgeSet>,
    /// Edges every group network contains.
    pub shared: EdgeSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTruth {
    pub group_networks: Vec<EdgeSet>,
    pub shared_edges: EdgeSet,
    pub subject_networks: Vec<EdgeSet>,
    pub group_precisions: Vec<PrecisionMatrix>,
    pub subject_precisions: Vec<PrecisionMatrix>,
    pub labels: Vec<usize>,
}

/// Hub template: nodes split into floor(sqrt(p)) contiguous blocks, the first
/// node of each block is its hub with spokes to the rest of the block.
fn hub_template(p: usize) -> Vec<(usize, usize)> {
    let hubs = hub_count(p);
    let mut spokes = Vec::with_capacity(p - hubs);
    for h in 0..hubs {
        let start = h * p / hubs;
        let end = (h + 1) * p / hubs;
        for leaf in (start + 1)..end {
            spokes.push((start, leaf));
        }
    }
    spokes
}

fn map_edges(spokes: &[(usize, usize)], perm: &[usize]) -> EdgeSet {
    spokes.iter().map(|&(a, b)| ordered_pair(perm[a], perm[b])).collect()
}

/// G hub networks on p nodes with floor(overlap * E) designated common edges.
///
/// Each network is the hub template under a node relabeling. The first
/// relabeling is uniform; later ones agree with it on the endpoints of the
/// designated spokes and permute the remaining nodes, retrying until the
/// network shares no edges beyond the designated ones with earlier groups
/// (or keeping the least-overlapping attempt).
pub fn generate_group_networks(p: usize, groups: usize, overlap: f64, rng: &mut StreamRng) -> Result<GroupNetworks> {
    if p < 4 {
        return Err(RccmError::invalid("hub networks need p >= 4"));
    }
    let spokes = hub_template(p);
    let shared_count = floor_fraction(overlap, spokes.len());

    let mut base: Vec<usize> = (0..p).collect();
    base.shuffle(rng);
    let designated: Vec<(usize, usize)> = index::sample(rng, spokes.len(), shared_count)
        .into_iter()
        .map(|i| spokes[i])
        .collect();
    let shared = map_edges(&designated, &base);

    let mut pinned = vec![false; p];
    for &(a, b) in &designated {
        pinned[a] = true;
        pinned[b] = true;
    }
    let free: Vec<usize> = (0..p).filter(|&v| !pinned[v]).collect();

    let mut networks = vec![map_edges(&spokes, &base)];
    for _ in 1..groups {
        let mut best: Option<(EdgeSet, usize)> = None;
        for _ in 0..PERMUTATION_TRIES {
            let mut images: Vec<usize> = free.iter().map(|&v| base[v]).collect();
            images.shuffle(rng);
            let mut perm = base.clone();
            for (&v, &img) in free.iter().zip(&images) {
                perm[v] = img;
            }
            let net = map_edges(&spokes, &perm);
            let excess = networks
                .iter()
                .map(|other| net.intersection(other).count() - shared_count)
                .max()
                .unwrap_or(0);
            if best.as_ref().is_none_or(|(_, e)| excess < *e) {
                best = Some((net, excess));
            }
            if excess == 0 {
                break;
            }
        }
        networks.push(best.expect("at least one attempt").0);
    }
    Ok(GroupNetworks { networks, shared })
}

fn draw_magnitude(magnitude: Magnitude, rng: &mut StreamRng) -> f64 {
    let (lo, hi) = magnitude.interval();
    let v = rng.random_range(lo..=hi);
    if rng.random_bool(0.5) {
        v
    } else {
        -v
    }
}

/// Unit-diagonal group matrices before positive-definiteness repair. Shared
/// edges get one draw used by every group.
pub fn draw_group_precisions(networks: &GroupNetworks, p: usize, magnitude: Magnitude, rng: &mut StreamRng) -> Vec<DMatrix<f64>> {
    let shared_values: Vec<((usize, usize), f64)> =
        networks.shared.iter().map(|&e| (e, draw_magnitude(magnitude, rng))).collect();
    networks
        .networks
        .iter()
        .map(|net| {
            let mut m = DMatrix::identity(p, p);
            for &(s, t) in net {
                let v = match shared_values.iter().find(|(e, _)| *e == (s, t)) {
                    Some((_, v)) => *v,
                    None => draw_magnitude(magnitude, rng),
                };
                m[(s, t)] = v;
                m[(t, s)] = v;
            }
            m
        })
        .collect()
}

/// Make a generated precision matrix positive definite.
///
/// While it is not, each row's off-diagonal entries are divided by the row's
/// number of nonzero entries and the result is averaged with its transpose;
/// after three rounds an eigenvalue shift takes over. Zero patterns are
/// preserved throughout.
pub fn repair_precision(m: DMatrix<f64>) -> PrecisionMatrix {
    repair_with_min_rounds(m, 0).0
}

fn divide_rows(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        let nnz = m.row(i).iter().filter(|v| **v != 0.0).count() as f64;
        for j in 0..p {
            if i != j {
                m[(i, j)] /= nnz;
            }
        }
    }
    linalg::symmetrize(m);
}

/// The repair above, forced to perform at least `min_rounds` divisions.
/// Returns the matrix and the number of division rounds used.
fn repair_with_min_rounds(mut m: DMatrix<f64>, min_rounds: usize) -> (PrecisionMatrix, usize) {
    let mut rounds = 0;
    while rounds < REPAIR_ROUNDS && (rounds < min_rounds || linalg::cholesky(&m).is_none()) {
        divide_rows(&mut m);
        rounds += 1;
    }
    let out = if linalg::cholesky(&m).is_some() {
        PrecisionMatrix::new(m).expect("checked positive definite")
    } else {
        make_positive_definite(&SymMatrix::new(m).expect("repair keeps the matrix symmetric"))
    };
    (out, rounds)
}

/// c * M + (1 - c) * I: off-diagonals scaled by c, unit diagonal kept. For
/// c in (0, 1] this is a convex combination of positive definite matrices.
fn shrink_off_diagonal(m: PrecisionMatrix, c: f64) -> PrecisionMatrix {
    if c == 1.0 {
        return m;
    }
    let mut a = m.into_inner();
    let p = a.nrows();
    for i in 0..p {
        for j in 0..p {
            if i != j {
                a[(i, j)] *= c;
            }
        }
    }
    PrecisionMatrix::new(a).expect("shrinking off-diagonals keeps positive definiteness")
}

/// Ground truth with freshly generated group networks.
pub fn generate_truth(cfg: &SimulationConfig) -> Result<NetworkTruth> {
    cfg.validate()?;
    let networks = generate_group_networks(
        cfg.p,
        cfg.groups,
        cfg.overlap,
        &mut substream(cfg.seed, streams::NETWORKS, 0),
    )?;
    generate_truth_with_networks(cfg, &networks, &mut substream(cfg.seed, streams::SIMULATE, 0))
}

/// Ground truth on fixed group networks: group precisions, subject labels,
/// perturbed subject networks and subject precisions.
///
/// Subject matrices start from their group's unrepaired draw (so kept entries
/// and freshly drawn edges are on the same scale), receive noise on kept
/// edges, and are repaired with at least as many division rounds as their
/// group needed.
///
/// Values are drawn and repaired on the high-magnitude scale; the low
/// setting then scales every off-diagonal entry by 1/3, so its final entries
/// are a third of the corresponding high-magnitude ones.
pub fn generate_truth_with_networks(
    cfg: &SimulationConfig,
    networks: &GroupNetworks,
    rng: &mut StreamRng,
) -> Result<NetworkTruth> {
    cfg.validate()?;
    if networks.networks.len() != cfg.groups {
        return Err(RccmError::invalid("number of group networks does not match the configuration"));
    }
    let p = cfg.p;
    let scale = cfg.magnitude.scale();
    let raw_groups = draw_group_precisions(networks, p, Magnitude::High, rng);
    let (group_precisions, group_rounds): (Vec<PrecisionMatrix>, Vec<usize>) = raw_groups
        .iter()
        .map(|m| {
            let (repaired, rounds) = repair_with_min_rounds(m.clone(), 0);
            (shrink_off_diagonal(repaired, scale), rounds)
        })
        .unzip();

    let mut labels: Vec<usize> = cfg
        .cluster_sizes
        .iter()
        .enumerate()
        .flat_map(|(g, &size)| std::iter::repeat_n(g, size))
        .collect();
    labels.shuffle(rng);

    let all_pairs: Vec<(usize, usize)> = (0..p).flat_map(|s| ((s + 1)..p).map(move |t| (s, t))).collect();
    let toggles = cfg.toggles_per_subject();
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| RccmError::invalid(e.to_string()))?;

    let mut subject_networks = Vec::with_capacity(cfg.subjects);
    let mut subject_precisions = Vec::with_capacity(cfg.subjects);
    for &g in &labels {
        let group_net = &networks.networks[g];
        let flipped: EdgeSet = index::sample(rng, all_pairs.len(), toggles)
            .into_iter()
            .map(|i| all_pairs[i])
            .collect();
        let net: EdgeSet = group_net.symmetric_difference(&flipped).copied().collect();

        let mut m = raw_groups[g].clone();
        for &(s, t) in &all_pairs {
            let v = match (group_net.contains(&(s, t)), net.contains(&(s, t))) {
                (true, true) => m[(s, t)] + noise.sample(rng),
                (false, true) => draw_magnitude(Magnitude::High, rng),
                _ => 0.0,
            };
            m[(s, t)] = v;
            m[(t, s)] = v;
        }
        subject_networks.push(net);
        subject_precisions.push(shrink_off_diagonal(repair_with_min_rounds(m, group_rounds[g]).0, scale));
    }

    Ok(NetworkTruth {
        group_networks: networks.networks.clone(),
        shared_edges: networks.shared.clone(),
        subject_networks,
        group_precisions,
        subject_precisions,
        labels,
    })
}

/// n draws from N(0, Omega^{-1}) as rows: with Omega = L L', x = L^{-T} z.
pub fn sample_gaussian(precision: &PrecisionMatrix, n: usize, rng: &mut StreamRng) -> DMatrix<f64> {
    let p = precision.dim();
    let chol = linalg::cholesky(precision.as_matrix()).expect("precision matrix is positive definite");
    let lt = chol.l().transpose();
    let z = DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(rng));
    let x = lt
        .solve_upper_triangular(&z)
        .expect("Cholesky factor has a positive diagonal");
    x.transpose()
}

/// n observations per subject from the true subject precisions, centered
/// and scaled.
pub fn sample_panel(truth: &NetworkTruth, n: usize, seed: u64) -> Result<TimeSeriesPanel> {
    let raw = truth
        .subject_precisions
        .iter()
        .enumerate()
        .map(|(k, om)| sample_gaussian(om, n, &mut substream(seed, streams::SAMPLE, k as u64)))
        .collect();
    build_panel(raw, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(overlap: f64, seed: u64) -> SimulationConfig {
        SimulationConfig {
            groups: 2,
            subjects: 6,
            p: 10,
            n: 50,
            overlap,
            magnitude: Magnitude::High,
            cluster_sizes: vec![4, 2],
            subject_perturbation_rate: 0.2,
            noise_sd: 0.05,
            seed,
        }
    }

    #[test]
    fn template_has_p_minus_hubs_edges() {
        for p in 4..30 {
            let spokes = hub_template(p);
            assert_eq!(spokes.len(), p - hub_count(p));
            let distinct: EdgeSet = spokes.iter().copied().collect();
            assert_eq!(distinct.len(), spokes.len());
        }
    }

    #[test]
    fn full_overlap_gives_identical_groups() {
        let truth = generate_truth(&cfg(1.0, 3)).unwrap();
        assert_eq!(truth.group_networks[0], truth.group_networks[1]);
        assert_eq!(truth.group_precisions[0], truth.group_precisions[1]);
    }

    #[test]
    fn shared_edges_present_in_every_group() {
        let truth = generate_truth(&cfg(0.5, 11)).unwrap();
        assert_eq!(truth.shared_edges.len(), 3);
        for net in &truth.group_networks {
            assert!(truth.shared_edges.is_subset(net));
        }
    }

    #[test]
    fn repair_keeps_pd_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        assert_eq!(repair_precision(m.clone()).as_matrix(), &m);
    }

    #[test]
    fn repair_fixes_dense_star() {
        let mut m = DMatrix::identity(4, 4);
        for leaf in 1..4 {
            m[(0, leaf)] = 0.9;
            m[(leaf, 0)] = 0.9;
        }
        let r = repair_precision(m);
        assert!(linalg::min_eigenvalue(r.as_matrix()) > 0.0);
        assert_eq!(r.as_matrix()[(1, 2)], 0.0);
        assert!(r.as_matrix()[(0, 1)] != 0.0);
    }

    #[test]
    fn same_seed_same_panel() {
        let truth = generate_truth(&cfg(0.2, 5)).unwrap();
        let a = sample_panel(&truth, 30, 9).unwrap();
        let b = sample_panel(&truth, 30, 9).unwrap();
        assert_eq!(a, b);
    }
}
