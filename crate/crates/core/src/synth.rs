//! Seeded synthetic inputs: nested-with-noise panels, random connected
//! binary matrices, random strategy instances and generative entry panels.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Axes;
use crate::error::Result;
use crate::metrics::{components, DensityMatrix, SpecializationMatrix};
use crate::strategy::{ActiveSet, ActivityGraph};

fn ids(prefix: &str, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

/// Locations get a capability, activities a requirement, both uniform on
/// [0, 1); a location holds every activity it is capable of. Each cell is
/// then flipped with probability `noise`. Empty rows and columns are
/// dropped.
pub fn nested_with_noise(locations: usize, activities: usize, noise: f64, seed: u64) -> Result<SpecializationMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut capability: Vec<f64> = (0..locations).map(|_| rng.random()).collect();
    capability.sort_by(f64::total_cmp);
    let requirement: Vec<f64> = (0..activities).map(|_| rng.random()).collect();
    let mut m = Array2::<u8>::zeros((locations, activities));
    for c in 0..locations {
        for p in 0..activities {
            let nested = capability[c] >= requirement[p];
            let flip = rng.random::<f64>() < noise;
            m[[c, p]] = (nested ^ flip) as u8;
        }
    }
    trimmed(m, &ids("c", locations), &ids("p", activities))
}

fn trimmed(m: Array2<u8>, locations: &[String], activities: &[String]) -> Result<SpecializationMatrix> {
    let rows: Vec<usize> = (0..m.nrows()).filter(|c| m.row(*c).iter().any(|x| *x == 1)).collect();
    let cols: Vec<usize> = (0..m.ncols()).filter(|p| m.column(*p).iter().any(|x| *x == 1)).collect();
    let values = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| m[[rows[i], cols[j]]]);
    let axes = Axes::new(
        rows.iter().map(|c| locations[*c].as_str()),
        cols.iter().map(|p| activities[*p].as_str()),
    )?;
    SpecializationMatrix::from_binary(axes, 1.0, values)
}

/// Binary matrix of the given shape with no empty rows or columns and a
/// connected bipartite graph. Redraws until both hold.
pub fn random_connected_binary<R: Rng>(rows: usize, cols: usize, fill: f64, rng: &mut R) -> SpecializationMatrix {
    let (locations, activities) = (ids("c", rows), ids("p", cols));
    loop {
        let values = Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() < fill) as u8);
        let full_rows = values.rows().into_iter().all(|r| r.iter().any(|x| *x == 1));
        let full_cols = values.columns().into_iter().all(|c| c.iter().any(|x| *x == 1));
        if !(full_rows && full_cols) {
            continue;
        }
        let axes = Axes::new(locations.iter().map(String::as_str), activities.iter().map(String::as_str))
            .expect("generated ids are unique");
        let m = SpecializationMatrix::from_binary(axes, 1.0, values).expect("binary values");
        if components(&m).len() == 1 {
            return m;
        }
    }
}

/// Connected random graph on `nodes` nodes (random spanning tree plus
/// extra edges with probability `extra`) and `active` random active nodes.
pub fn random_instance<R: Rng>(nodes: usize, extra: f64, active: usize, rng: &mut R) -> (ActivityGraph, ActiveSet) {
    assert!(nodes >= 2 && active >= 1 && active < nodes);
    let names = ids("n", nodes);
    let mut order: Vec<usize> = (0..nodes).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for k in 1..nodes {
        let parent = order[rng.random_range(0..k)];
        edges.push((order[k], parent));
    }
    for i in 0..nodes {
        for j in i + 1..nodes {
            let present = edges.iter().any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i));
            if !present && rng.random::<f64>() < extra {
                edges.push((i, j));
            }
        }
    }
    let g = ActivityGraph::from_edges(
        names.iter().map(String::as_str),
        edges.iter().map(|&(a, b)| (names[a].as_str(), names[b].as_str())),
    )
    .expect("generated graph is valid");
    order.shuffle(rng);
    let s0 = ActiveSet::new(&g, order[..active].iter().map(|i| names[*i].as_str())).expect("known ids");
    (g, s0)
}

/// Next-period specialization: every unspecialized cell enters
/// independently with probability `scale · ω`; nothing exits.
pub fn entry_panel(m0: &SpecializationMatrix, omega: &DensityMatrix, scale: f64, seed: u64) -> SpecializationMatrix {
    assert!((0.0..=1.0).contains(&scale));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = m0.values().clone();
    for ((c, p), v) in values.indexed_iter_mut() {
        let draw: f64 = rng.random();
        if *v == 0 && draw < scale * omega.values()[[c, p]] {
            *v = 1;
        }
    }
    SpecializationMatrix::from_binary(m0.axes().clone(), m0.threshold(), values)
        .expect("binary values")
        .with_period("t1")
}
