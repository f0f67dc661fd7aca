use ecp_core::data::{parse_trade_table, snapshot_diff, ActivityMatrix, Axes, SpatialGraph};
use ecp_core::frontier::{
    frontier_diagram, strategic_frontier, ActivityValueVector, Orientation, ThresholdPolicy,
};
use ecp_core::linalg::pearson;
use ecp_core::metrics::{
    binarize, eci_pci, fitness_complexity, proximity, rca, relatedness_density, SpecializationMatrix,
    FITNESS_MAX_ITERS, FITNESS_TOLERANCE,
};
use ecp_core::spatial::{complexity_gradient, neighbor_density};
use ecp_core::strategy::{
    expected_completion, optimal_policy, portfolio_split, ActiveSet, ActivityGraph, Policy, Schedule,
};
use ecp_core::synth::{nested_with_noise, random_connected_binary, random_instance};
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Flow matrix with sparse zeros; every row and column keeps a positive cell.
fn flows(rows: usize, cols: usize, seed: u64) -> ActivityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Array2::from_shape_fn((rows, cols), |_| {
        if rng.random::<f64>() < 0.3 { 0.0 } else { (rng.random::<f64>() * 1000.0).round() + 1.0 }
    });
    for i in 0..rows.max(cols) {
        v[[i % rows, i % cols]] += 5.0;
    }
    let axes = Axes::new(names("c", rows), names("p", cols)).unwrap();
    ActivityMatrix::new(axes, "t0", v).unwrap()
}

fn permuted(m: &ActivityMatrix, seed: u64) -> ActivityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nl, na) = m.axes().shape();
    let mut rows: Vec<usize> = (0..nl).collect();
    let mut cols: Vec<usize> = (0..na).collect();
    rows.shuffle(&mut rng);
    cols.shuffle(&mut rng);
    let axes = Axes::new(
        rows.iter().map(|&c| m.axes().location(c).to_string()),
        cols.iter().map(|&p| m.axes().activity(p).to_string()),
    )
    .unwrap();
    let values = Array2::from_shape_fn((nl, na), |(i, j)| m.values()[[rows[i], cols[j]]]);
    ActivityMatrix::new(axes, m.period(), values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn relabeling_permutes_every_output(rows in 3usize..7, cols in 3usize..8, seed in any::<u64>()) {
        let m = flows(rows, cols, seed);
        let q = permuted(&m, seed ^ 0x5eed);
        let (m1, m2) = (binarize(&rca(&m), 1.0).unwrap(), binarize(&rca(&q), 1.0).unwrap());
        let (phi1, phi2) = (proximity(&m1), proximity(&m2));
        let (w1, w2) = (relatedness_density(&m1, &phi1).unwrap(), relatedness_density(&m2, &phi2).unwrap());
        for c in m.axes().locations.iter() {
            for p in m.axes().activities.iter() {
                prop_assert_eq!(m1.is_specialized(c, p), m2.is_specialized(c, p));
                let (a, b) = (w1.get(c, p).unwrap(), w2.get(c, p).unwrap());
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
        for p in m.axes().activities.iter() {
            for q2 in m.axes().activities.iter() {
                prop_assert_eq!(phi1.get(p, q2), phi2.get(p, q2));
            }
        }
        if let (Ok(s1), Ok(s2)) = (eci_pci(&m1), eci_pci(&m2)) {
            for c in m.axes().locations.iter() {
                prop_assert!((s1.eci_of(c).unwrap() - s2.eci_of(c).unwrap()).abs() < 1e-9);
            }
            for p in m.axes().activities.iter() {
                prop_assert!((s1.pci_of(p).unwrap() - s2.pci_of(p).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rescaling_leaves_specialization_unchanged(rows in 2usize..7, cols in 2usize..7, seed in any::<u64>(), k in 0usize..3) {
        let m = flows(rows, cols, seed);
        let lambda = [1e-6, 1.0, 1e6][k];
        let a = binarize(&rca(&m), 1.0).unwrap();
        let b = binarize(&rca(&m.scaled(lambda).unwrap()), 1.0).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn proximity_and_density_bounds(rows in 2usize..8, cols in 2usize..8, seed in any::<u64>()) {
        let m = binarize(&rca(&flows(rows, cols, seed)), 1.0).unwrap();
        let phi = proximity(&m);
        let v = phi.values();
        for i in 0..cols {
            prop_assert_eq!(v[[i, i]], 0.0);
            for j in 0..cols {
                prop_assert!((0.0..=1.0).contains(&v[[i, j]]));
                prop_assert_eq!(v[[i, j]], v[[j, i]]);
            }
        }
        let w = relatedness_density(&m, &phi).unwrap();
        prop_assert!(w.values().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn raising_the_threshold_only_removes_cells(rows in 2usize..7, cols in 2usize..7, seed in any::<u64>(), lo in 0.2f64..1.5, step in 0.0f64..1.5) {
        let r = rca(&flows(rows, cols, seed));
        let (a, b) = (binarize(&r, lo).unwrap(), binarize(&r, lo + step).unwrap());
        prop_assert!(a.values().iter().zip(b.values()).all(|(x, y)| y <= x));
    }

    #[test]
    fn entries_and_exits_swap_when_reversed(rows in 2usize..6, cols in 2usize..6, seed in any::<u64>()) {
        let a = binarize(&rca(&flows(rows, cols, seed)), 1.0).unwrap();
        let b = binarize(&rca(&flows(rows, cols, seed.wrapping_add(1))), 1.0).unwrap();
        let (ab, ba) = (snapshot_diff(&a, &b).unwrap(), snapshot_diff(&b, &a).unwrap());
        prop_assert_eq!(&ab.entries, &ba.exits);
        prop_assert_eq!(&ab.exits, &ba.entries);
    }

    #[test]
    fn csv_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let m = flows(rows, cols, seed);
        let (back, report) = parse_trade_table(&m.to_csv(), None).unwrap();
        prop_assert_eq!(back, m);
        prop_assert_eq!(report.dropped(), 0);
    }

    #[test]
    fn frontier_matches_dominance_scan(points in prop::collection::vec((0u8..12, 0u8..12), 1..60)) {
        let cloud: Vec<(f64, f64)> = points.iter().map(|(a, b)| (f64::from(*a), f64::from(*b))).collect();
        let brute: Vec<usize> = (0..cloud.len())
            .filter(|&i| !cloud.iter().any(|q| q.0 >= cloud[i].0 && q.1 >= cloud[i].1 && q != &cloud[i]))
            .collect();
        prop_assert_eq!(strategic_frontier(&cloud), brute);
    }

    #[test]
    fn flipping_orientation_and_sign_is_a_no_op(rows in 3usize..7, cols in 4usize..9, seed in any::<u64>()) {
        let m = binarize(&rca(&flows(rows, cols, seed)), 1.0).unwrap();
        let w = relatedness_density(&m, &proximity(&m)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..cols).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let v = ActivityValueVector::custom(m.axes().activities.clone(), raw, Orientation::HigherIsBetter).unwrap();
        for loc in m.axes().locations.iter() {
            let a = frontier_diagram(loc, &w, &m, &v, ThresholdPolicy::default()).unwrap();
            let b = frontier_diagram(loc, &w, &m, &v.negated(), ThresholdPolicy::default()).unwrap();
            prop_assert_eq!(a.summary.counts, b.summary.counts);
            prop_assert_eq!(a.summary.corr, b.summary.corr);
            prop_assert_eq!(a.summary.counts.total(), a.candidates().count());
            for (x, y) in a.points.iter().zip(&b.points) {
                prop_assert_eq!(x.quadrant, y.quadrant);
                prop_assert_eq!(x.on_frontier, y.on_frontier);
                prop_assert_eq!(x.value, -y.value);
            }
        }
    }

    #[test]
    fn optimal_never_loses(seed in any::<u64>(), n in 3usize..9, extra in 0.0f64..0.6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, s0) = random_instance(n, extra, 1, &mut rng);
        let opt = optimal_policy(&g, &s0).unwrap();
        let best = opt.evaluation.expected_time;
        let along_plan: f64 = opt.evaluation.probabilities.iter().map(|p| 1.0 / p).sum();
        prop_assert!((best - along_plan).abs() < 1e-12 * best.max(1.0));
        for policy in [Policy::Greedy, Policy::Lookahead(1), Policy::Lookahead(2)] {
            let e = expected_completion(&g, &s0, &policy).unwrap().expected_time;
            prop_assert!(best <= e + 1e-12, "{} beat optimal: {} < {}", policy, e, best);
        }
        let full = expected_completion(&g, &s0, &Policy::Lookahead(n)).unwrap().expected_time;
        prop_assert!((full - best).abs() < 1e-12);
        for _ in 0..20 {
            let order = random_feasible_order(&g, &s0, &mut rng);
            let e = expected_completion(&g, &s0, &Policy::FixedOrder(order)).unwrap().expected_time;
            prop_assert!(best <= e + 1e-12);
        }
    }

    #[test]
    fn portfolio_shares_are_bounded(eci in -10.0f64..10.0, peak in -2.0f64..2.0, width in 0.1f64..5.0, cap in 0.01f64..0.99) {
        let s = Schedule { peak, width, max_unrelated: cap };
        let split = portfolio_split(eci, s).unwrap();
        prop_assert!((split.related + split.unrelated - 1.0).abs() < 1e-15);
        prop_assert!(split.unrelated >= 0.0 && split.unrelated <= cap);
        let mirror = portfolio_split(2.0 * peak - eci, s).unwrap();
        prop_assert!((mirror.unrelated - split.unrelated).abs() < 1e-12);
    }

    #[test]
    fn neighbor_density_ignores_weight_scale(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_connected_binary(6, 5, 0.4, &mut rng);
        let locs = m.axes().locations.clone();
        let mut edges = Vec::new();
        for i in 0..locs.len() {
            for j in i + 1..locs.len() {
                if rng.random::<f64>() < 0.5 {
                    edges.push((locs[i].clone(), locs[j].clone(), rng.random::<f64>() + 0.1));
                }
            }
        }
        prop_assume!(!edges.is_empty());
        let scaled: Vec<_> = edges.iter().map(|(a, b, w)| (a.clone(), b.clone(), w * scale)).collect();
        let g1 = neighbor_density(&m, &SpatialGraph::from_edges(edges.clone()).unwrap());
        let g2 = neighbor_density(&m, &SpatialGraph::from_edges(scaled).unwrap());
        for (a, b) in g1.values().iter().zip(g2.values()) {
            prop_assert!((0.0..=1.0).contains(a));
            prop_assert!((a - b).abs() < 1e-12);
        }

        if let Ok(scores) = eci_pci(&m) {
            let (a, b, _) = &edges[0];
            let pair = SpatialGraph::from_edges([(a.as_str(), b.as_str(), 1.0)]).unwrap();
            let grad = complexity_gradient(&scores, &pair);
            let ga = grad.get(a).unwrap().max_gradient.unwrap();
            let gb = grad.get(b).unwrap().max_gradient.unwrap();
            prop_assert_eq!(ga, -gb);
        }
    }
}

fn random_feasible_order<R: Rng>(g: &ActivityGraph, s0: &ActiveSet, rng: &mut R) -> Vec<String> {
    let mut active: Vec<String> = s0.ids(g).map(String::from).collect();
    let mut order = Vec::new();
    loop {
        let ready: Vec<&String> = g
            .nodes()
            .iter()
            .filter(|n| !active.contains(n) && g.neighbors(n).any(|x| active.iter().any(|a| a == x)))
            .collect();
        let Some(next) = ready.choose(rng) else { break };
        let next = (*next).clone();
        active.push(next.clone());
        order.push(next);
    }
    order
}

#[test]
fn complete_specialization_is_rejected_for_complexity() {
    let axes = Axes::new(["a", "b"], ["x", "y"]).unwrap();
    let m = SpecializationMatrix::from_binary(axes, 1.0, Array2::ones((2, 2))).unwrap();
    assert!(eci_pci(&m).is_err());
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|a, b| x[*a].total_cmp(&x[*b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let j = (i..idx.len()).find(|&j| x[idx[j]] != x[idx[i]]).unwrap_or(idx.len());
        let mid = (i + j - 1) as f64 / 2.0;
        idx[i..j].iter().for_each(|&k| r[k] = mid);
        i = j;
    }
    r
}

#[test]
fn eci_and_log_fitness_rank_agree_on_nested_panels() {
    for seed in 0..3 {
        let m = nested_with_noise(40, 80, 0.1, seed).unwrap();
        let s = eci_pci(&m).unwrap();
        let f = fitness_complexity(&m, FITNESS_MAX_ITERS, FITNESS_TOLERANCE).unwrap();
        let log_f: Vec<f64> = f.fitness.iter().map(|v| v.ln()).collect();
        let rho = pearson(&ranks(&s.eci), &ranks(&log_f)).unwrap();
        assert!(rho > 0.5, "seed {seed}: spearman {rho}");
    }
}
