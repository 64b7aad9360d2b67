use super::*;
use crate::exec::Execution;
use crate::network::{he_init, Affine, Architecture, Dense, Layer, Shape3};
use crate::rng;
use ndarray::array;
use rand::Rng;
use rand_distr::StandardNormal;

fn unit_net() -> LayerGraph {
    let d = |w: Array2<f64>| Layer::Affine(Affine::Dense(Dense::new(w).unwrap()));
    LayerGraph::new(1, vec![d(array![[1.0]]), d(array![[1.0]])]).unwrap()
}

fn gaussian(seed: u64, d: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, 99, 0);
    (0..d).map(|_| r.sample(StandardNormal)).collect()
}

fn random_case(seed: u64, d: usize, hidden: &[usize], c: usize) -> (LayerGraph, LinearPath) {
    let net = he_init(&Architecture::mlp(d, hidden, c), seed).unwrap();
    let path = LinearPath::new(&gaussian(seed, d), &gaussian(seed + 1_000_000, d)).unwrap();
    (net, path)
}

fn conv_case(seed: u64) -> (LayerGraph, LinearPath) {
    let arch = Architecture::parse(
        Shape3::new(1, 5, 5),
        "conv:2:3:1:1 res[conv:2:3:1:1 conv:2:3:1:1] dense:6 dense:3",
    )
    .unwrap();
    let net = he_init(&arch, seed).unwrap();
    let path = LinearPath::new(&gaussian(seed, 25), &gaussian(seed + 7, 25)).unwrap();
    (net, path)
}

fn unscaled() -> WalkOptions {
    WalkOptions {
        scale: OutputScale::Unit,
        ..WalkOptions::default()
    }
}

#[test]
fn path_basics() {
    let p = LinearPath::new(&[-1.0], &[1.0]).unwrap();
    assert_eq!(p.direction(), &[2.0]);
    assert_eq!(p.unit_direction(), &[1.0]);
    assert_eq!(p.direction_norm(), 2.0);
    let x0 = gaussian(1, 9);
    let x1 = gaussian(2, 9);
    let q = LinearPath::new(&x0, &x1).unwrap();
    assert_eq!(q.point(0.0), x0);
    assert_eq!(q.point(1.0), x1);
    let n: f64 = q.unit_direction().iter().map(|v| v * v).sum();
    assert!((n - 1.0).abs() < 1e-14);
    assert!(matches!(
        LinearPath::new(&x0, &x0),
        Err(Error::DegeneratePath)
    ));
    assert!(LinearPath::new(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn single_unit_walk() {
    let net = unit_net();
    let path = LinearPath::new(&[-1.0], &[1.0]).unwrap();
    let prof = walk_path_with(&net, &path, &unscaled()).unwrap();
    assert_eq!(prof.node_count(), 1);
    assert_eq!(prof.nodes()[0].t, 0.5);
    assert_eq!(prof.gradients(0).unwrap(), vec![0.0, 1.0]);
    assert_eq!(gradient_gaps(&prof, 0).unwrap(), vec![1.0]);
    assert!(gradient_gaps(&prof, 1).is_err());
    let seg = prof.segment_patterns();
    assert_eq!(segment_gradient(&net, &path, &seg[0], 0, 1.0).unwrap(), 0.0);
    assert_eq!(segment_gradient(&net, &path, &seg[1], 0, 1.0).unwrap(), 1.0);
    assert!(segment_gradient(&net, &path, &seg[1], 3, 1.0).is_err());
    let grid = dense_node_oracle(&net, &path, 10_000, Execution::Sequential).unwrap();
    assert_eq!(grid.cells, 1);
}

#[test]
fn no_crossing_path() {
    let net = unit_net();
    let path = LinearPath::new(&[1.0], &[3.0]).unwrap();
    let prof = walk_path_with(&net, &path, &unscaled()).unwrap();
    assert_eq!(prof.node_count(), 0);
    assert!(gradient_gaps(&prof, 0).unwrap().is_empty());
    assert_eq!(prof.gradients(0).unwrap(), vec![1.0]);
}

#[test]
fn zero_outputs_cannot_be_normalized() {
    let net = unit_net();
    let path = LinearPath::new(&[-1.0], &[-3.0]).unwrap();
    assert!(matches!(walk_path(&net, &path), Err(Error::ZeroOutput)));
}

#[test]
fn node_cap_is_enforced() {
    let (net, path) = random_case(3, 8, &[32], 2);
    let opts = WalkOptions {
        max_nodes: 2,
        ..WalkOptions::default()
    };
    assert!(matches!(
        walk_path_with(&net, &path, &opts),
        Err(Error::NodeCap { cap: 2 })
    ));
}

// Exact simultaneous crossings (a unit fed by a single active unit) occur in
// small conv nets; those nodes share a position.
fn check_profile(net: &LayerGraph, path: &LinearPath, prof: &PathProfile, strict: bool) {
    let k = prof.node_count();
    let pats = prof.segment_patterns();
    assert_eq!(pats.len(), k + 1);
    assert_eq!(prof.resyncs(), 0);
    for w in prof.nodes().windows(2) {
        assert!(
            w[0].t < w[1].t || (!strict && w[0].t == w[1].t),
            "nodes out of order"
        );
    }
    for (i, n) in prof.nodes().iter().enumerate() {
        assert!(n.t > 0.0 && n.t < 1.0);
        assert_eq!(pats[i].diff(&pats[i + 1]), vec![n.unit]);
    }
    for j in 0..prof.num_components() {
        let r = prof.gradients(j).unwrap();
        let y = gradient_gaps(prof, j).unwrap();
        let sum: f64 = y.iter().sum();
        assert!((r[k] - r[0] - sum).abs() < 1e-9);
    }
    // Continuity of the reconstructed output at every node.
    for (i, n) in prof.nodes().iter().enumerate() {
        let left = segment_value(net, path, prof, i, n.t).unwrap();
        let right = segment_value(net, path, prof, i + 1, n.t).unwrap();
        for (a, b) in left.iter().zip(&right) {
            assert!((a - b).abs() < 1e-9, "discontinuity at t={}", n.t);
        }
    }
}

#[test]
fn random_dense_profiles_are_consistent() {
    for seed in 0..20 {
        let (net, path) = random_case(seed, 6, &[12, 10], 3);
        let prof = walk_path(&net, &path).unwrap();
        check_profile(&net, &path, &prof, true);
    }
}

#[test]
fn conv_residual_profiles_are_consistent() {
    for seed in 0..8 {
        let (net, path) = conv_case(seed);
        let prof = walk_path(&net, &path).unwrap();
        assert!(prof.node_count() > 0);
        check_profile(&net, &path, &prof, false);
    }
}

#[test]
fn segment_gradients_match_finite_differences() {
    for seed in 0..10 {
        let (net, path) = if seed % 2 == 0 {
            random_case(seed, 5, &[10], 3)
        } else {
            conv_case(seed)
        };
        let prof = walk_path(&net, &path).unwrap();
        for k in 0..=prof.node_count() {
            let (lo, hi) = prof.segment_bounds(k);
            let len = hi - lo;
            if len < 1e-9 {
                continue;
            }
            let mid = 0.5 * (lo + hi);
            let exact = prof.segment_gradients(k);
            let norm = exact
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
                .max(f64::MIN_POSITIVE);
            let mut hs = vec![0.25 * len];
            if len > 0.05 {
                hs.push(1e-6 * len);
            }
            for h in hs {
                let fd = fd_gradient_oracle(&net, &path, mid, h, prof.norm_scale()).unwrap();
                for (a, b) in fd.iter().zip(exact.iter()) {
                    assert!(
                        (a - b).abs() / norm < 1e-8,
                        "seed {seed} segment {k}: {a} vs {b}"
                    );
                }
            }
        }
        if let Some(n) = prof.nodes().first() {
            let h = 1e-3f64.min(n.t);
            assert!(matches!(
                fd_gradient_oracle(&net, &path, n.t, h, 1.0),
                Err(Error::StraddlesNode { .. })
            ));
        }
    }
}

#[test]
fn gaps_match_product_form() {
    for seed in 0..10 {
        let (net, path) = if seed % 2 == 0 {
            random_case(seed, 6, &[8, 8], 4)
        } else {
            conv_case(seed)
        };
        let prof = walk_path(&net, &path).unwrap();
        let pats = prof.segment_patterns();
        for k in 1..=prof.node_count() {
            let direct =
                gap_product_form(&net, &path, &pats[k - 1], &pats[k], prof.norm_scale()).unwrap();
            for (j, g) in direct.iter().enumerate() {
                let y = gradient_gaps(&prof, j).unwrap()[k - 1];
                assert!((g - y).abs() < 1e-10, "seed {seed} node {k}: {g} vs {y}");
            }
        }
    }
    let (net, path) = random_case(0, 6, &[8, 8], 4);
    let prof = walk_path(&net, &path).unwrap();
    let p = &prof.segment_patterns()[0];
    assert!(gap_product_form(&net, &path, p, p, 1.0).is_err());
}

#[test]
fn incremental_matches_full_recompute() {
    for seed in 0..6 {
        let (net, path) = if seed % 2 == 0 {
            random_case(seed, 7, &[16, 16], 3)
        } else {
            conv_case(seed)
        };
        let a = walk_path(&net, &path).unwrap();
        let full = WalkOptions {
            incremental: false,
            ..WalkOptions::default()
        };
        let b = walk_path_with(&net, &path, &full).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        let diff = (a.gradient_matrix() - b.gradient_matrix()).mapv(f64::abs);
        assert!(diff.iter().all(|v| *v < 1e-12));
    }
}

#[test]
fn reversal_mirrors_nodes() {
    for seed in 0..10 {
        let (net, path) = random_case(seed, 5, &[12], 2);
        let fwd = walk_path(&net, &path).unwrap();
        let rev = walk_path(&net, &path.reversed()).unwrap();
        let k = fwd.node_count();
        assert_eq!(rev.node_count(), k);
        for i in 0..k {
            assert!((rev.nodes()[i].t - (1.0 - fwd.nodes()[k - 1 - i].t)).abs() < 1e-9);
            assert_eq!(rev.nodes()[i].unit, fwd.nodes()[k - 1 - i].unit);
        }
        for j in 0..2 {
            let rf = fwd.gradients(j).unwrap();
            let rr = rev.gradients(j).unwrap();
            for i in 0..=k {
                assert!((rr[i] + rf[k - i]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn walk_matches_grid_oracle_on_tiny_nets() {
    for seed in 0..10 {
        let (net, path) = random_case(seed, 3, &[8], 2);
        let prof = walk_path(&net, &path).unwrap();
        let min_gap = prof
            .nodes()
            .windows(2)
            .map(|w| w[1].t - w[0].t)
            .fold(1.0f64, f64::min);
        let grid = dense_node_oracle(&net, &path, 100_000, Execution::Parallel).unwrap();
        if min_gap > 1e-5 {
            assert_eq!(grid.cells, prof.node_count(), "seed {seed}");
        }
        assert_eq!(grid.flips, prof.node_count(), "seed {seed}");
    }
}

#[test]
fn batched_capture_finds_first_wrong_segment() {
    let (net, path) = random_case(3, 4, &[12], 2);
    let prof = walk_path(&net, &path).unwrap();
    assert!(prof.node_count() >= 3);
    let mut rows = Array2::zeros((2, path.dim()));
    rows.row_mut(0).assign(&ArrayView1::from(path.x0()));
    rows.row_mut(1)
        .assign(&ArrayView1::from(path.unit_direction()));
    let mut pats = prof.segment_patterns().to_vec();
    let pending: Vec<(usize, f64)> = (0..pats.len())
        .map(|k| {
            let (lo, hi) = prof.segment_bounds(k);
            (k, 0.5 * (lo + hi))
        })
        .collect();
    assert!(first_drift(&net, &path, &rows, &pats, &pending)
        .unwrap()
        .is_none());
    let good = pats[2].clone();
    let unit = prof.nodes()[0].unit;
    pats[2].flip(unit);
    pats[3].flip(unit);
    let (k, fresh) = first_drift(&net, &path, &rows, &pats, &pending)
        .unwrap()
        .unwrap();
    assert_eq!((k, fresh), (2, good));
}
