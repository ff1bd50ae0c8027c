mod common;

use rand::Rng;
use rccm::linalg::min_eigenvalue;
use rccm::model::FitOptions;
use rccm::network::{edge_set, num_pairs, DEFAULT_EDGE_THRESHOLD};
use rccm::rng::{streams, substream};
use rccm::synthetic::*;

/// RI and ARI from the four pair counts, enumerating every subject pair.
fn pair_counting_oracle(a: &[usize], b: &[usize]) -> (f64, f64) {
    let (mut both, mut only_a, mut only_b, mut neither) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => both += 1.0,
                (true, false) => only_a += 1.0,
                (false, true) => only_b += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let total = both + only_a + only_b + neither;
    let ri = (both + neither) / total;
    let denom = (both + only_a) * (only_a + neither) + (both + only_b) * (only_b + neither);
    let ari = if denom == 0.0 { 1.0 } else { 2.0 * (both * neither - only_a * only_b) / denom };
    (ri, ari)
}

#[test]
fn rand_indices_match_pair_counting() {
    let mut rng = common::rng(2024);
    for _ in 0..1000 {
        let k = rng.random_range(2..=12);
        let ga = rng.random_range(1..=4);
        let gb = rng.random_range(1..=4);
        let a: Vec<usize> = (0..k).map(|_| rng.random_range(0..ga)).collect();
        let b: Vec<usize> = (0..k).map(|_| rng.random_range(0..gb)).collect();
        let (ri, ari) = pair_counting_oracle(&a, &b);
        assert!((rand_index(&a, &b).unwrap() - ri).abs() < 1e-12);
        assert!((adjusted_rand_index(&a, &b).unwrap() - ari).abs() < 1e-12, "{a:?} {b:?}");
    }
}

#[test]
fn rand_index_examples() {
    assert_eq!(rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
    assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
    assert!(rand_index(&[0, 1], &[0]).is_err());
}

#[test]
fn edge_metrics_worked_example() {
    let truth = [(0, 1), (0, 2)].into_iter().collect();
    let estimate = [(0, 1), (1, 3)].into_iter().collect();
    let m = edge_metrics(&truth, &estimate, 4);
    assert_eq!(m.tpr, 0.5);
    assert_eq!(m.fpr, 0.25);
    assert_eq!(m.ppv, 0.5);
}

#[test]
fn edge_metric_identities() {
    let mut rng = common::rng(8);
    let p = 7;
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| ((i + 1)..p).map(move |j| (i, j))).collect();
    for _ in 0..200 {
        let truth: rccm::network::EdgeSet = pairs.iter().copied().filter(|_| rng.random_bool(0.3)).collect();
        let estimate: rccm::network::EdgeSet = pairs.iter().copied().filter(|_| rng.random_bool(0.4)).collect();
        let m = edge_metrics(&truth, &estimate, p);
        let hits = truth.intersection(&estimate).count() as f64;
        if !truth.is_empty() {
            let missed = truth.difference(&estimate).count() as f64 / truth.len() as f64;
            assert!((m.tpr + missed - 1.0).abs() < 1e-12);
            assert!((m.tpr * truth.len() as f64 - hits).abs() < 1e-9);
        }
        if !estimate.is_empty() {
            assert!((m.ppv * estimate.len() as f64 - hits).abs() < 1e-9);
        }
        let negatives = (num_pairs(p) - truth.len()) as f64;
        let false_pos = estimate.difference(&truth).count() as f64;
        assert!((m.fpr * negatives - false_pos).abs() < 1e-9);
    }
}

fn config(seed: u64, groups: usize, overlap: f64) -> SimulationConfig {
    SimulationConfig {
        groups,
        subjects: 12,
        p: 10,
        n: 100,
        overlap,
        magnitude: if seed.is_multiple_of(2) { Magnitude::High } else { Magnitude::Low },
        cluster_sizes: if groups == 2 { vec![7, 5] } else { vec![5, 4, 3] },
        subject_perturbation_rate: 0.2,
        noise_sd: 0.05,
        seed,
    }
}

#[test]
fn generator_invariants_over_seed_sweep() {
    for seed in 0..100 {
        let cfg = config(seed, 2 + (seed as usize % 2), [0.2, 0.5, 0.8][seed as usize % 3]);
        let truth = generate_truth(&cfg).unwrap();
        let e = cfg.edges_per_group();
        assert_eq!(e, 7);
        assert_eq!(truth.shared_edges.len(), cfg.shared_edges());
        for net in &truth.group_networks {
            assert_eq!(net.len(), e);
            assert!(truth.shared_edges.is_subset(net));
        }
        for (k, net) in truth.subject_networks.iter().enumerate() {
            let group = &truth.group_networks[truth.labels[k]];
            assert_eq!(net.symmetric_difference(group).count(), cfg.toggles_per_subject());
            assert_eq!(&edge_set(&truth.subject_precisions[k], DEFAULT_EDGE_THRESHOLD), net);
        }
        for m in truth.subject_precisions.iter().chain(&truth.group_precisions) {
            let a = m.as_matrix();
            assert_eq!(a, &a.transpose());
            assert!(min_eigenvalue(a) > 0.0);
            assert!(a.diagonal().iter().all(|d| *d > 0.1 && *d < 10.0));
        }
        for (g, size) in cfg.cluster_sizes.iter().enumerate() {
            assert_eq!(truth.labels.iter().filter(|&&l| l == g).count(), *size);
        }
    }
}

#[test]
fn shared_edges_share_raw_values() {
    let mut rng = substream(4, streams::NETWORKS, 0);
    let nets = generate_group_networks(10, 3, 0.5, &mut rng).unwrap();
    let raw = draw_group_precisions(&nets, 10, Magnitude::High, &mut rng);
    for &(i, j) in &nets.shared {
        assert!(raw.iter().all(|m| m[(i, j)] == raw[0][(i, j)] && m[(j, i)] == raw[0][(i, j)]));
        assert!(raw[0][(i, j)].abs() >= 0.5);
    }
}

#[test]
fn full_overlap_makes_groups_identical() {
    let truth = generate_truth(&config(6, 2, 1.0)).unwrap();
    assert_eq!(truth.group_networks[0], truth.group_networks[1]);
    assert_eq!(truth.group_precisions[0], truth.group_precisions[1]);
}

#[test]
fn low_magnitude_is_a_third_of_high() {
    let mut high = config(10, 2, 0.2);
    high.magnitude = Magnitude::High;
    let low = SimulationConfig {
        magnitude: Magnitude::Low,
        ..high.clone()
    };
    let th = generate_truth(&high).unwrap();
    let tl = generate_truth(&low).unwrap();
    for (h, l) in th.group_precisions.iter().zip(&tl.group_precisions) {
        for i in 0..10 {
            assert_eq!(h.as_matrix()[(i, i)], l.as_matrix()[(i, i)]);
            for j in 0..10 {
                if i != j {
                    assert!((h.as_matrix()[(i, j)] / 3.0 - l.as_matrix()[(i, j)]).abs() < 1e-15);
                }
            }
        }
    }
}

#[test]
fn sampled_panels_are_reproducible_and_standardized() {
    let truth = generate_truth(&config(2, 2, 0.2)).unwrap();
    let a = sample_panel(&truth, 80, 9).unwrap();
    let b = sample_panel(&truth, 80, 9).unwrap();
    let c = sample_panel(&truth, 80, 10).unwrap();
    assert!(a.is_standardized());
    assert_eq!(a.subject(3).data(), b.subject(3).data());
    assert_ne!(a.subject(3).data(), c.subject(3).data());
    let s = a.subject(0).sample_cov().as_matrix();
    assert!(s.diagonal().iter().all(|d| (d - 1.0).abs() < 0.05));
}

#[test]
fn ward_recovers_well_separated_truth() {
    let truth = generate_truth(&config(0, 2, 0.2)).unwrap();
    let labels = ward_cluster(&frobenius_distance_matrix(&truth.subject_precisions).unwrap(), 2).unwrap();
    assert_eq!(adjusted_rand_index(&truth.labels, &labels).unwrap(), 1.0);
    let labels = kmeans_vectorized(&truth.subject_precisions, 2, 1, 5).unwrap();
    assert_eq!(adjusted_rand_index(&truth.labels, &labels).unwrap(), 1.0);
}

#[test]
fn benchmark_is_reproducible_and_complete() {
    let mut simulation = config(0, 2, 0.2);
    simulation.subjects = 10;
    simulation.cluster_sizes = vec![5, 5];
    let cfg = BenchmarkConfig {
        simulation,
        replicates: 2,
        methods: vec![Method::WardPooled, Method::Rccm, Method::GlassoKmeans],
        selection: Selection::Fixed(FixedTuning {
            lambda1: 10.0,
            lambda2: 50.0,
            lambda3: 2.0,
            glasso_lambda: 0.1,
            pooled_lambda: 0.1,
        }),
        fit: FitOptions::default(),
        seed: 5,
    };
    let first = run_benchmark(&cfg).unwrap();
    let second = run_benchmark(&cfg).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.rows.len(), 3);
    assert_eq!(first.records.len(), 6);
    for row in &first.rows {
        assert_eq!(row.successes, 2);
        assert!(row.rand_index.is_some() && row.tpr_subject.is_some());
        assert_eq!(row.tpr_group.is_some(), row.method != Method::GlassoKmeans);
    }
}
