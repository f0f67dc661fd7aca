//! Diversification dynamics on an activity graph.
//!
//! At every step the planner targets one inactive activity, which becomes
//! active with probability equal to the fraction of its neighbors already
//! active. A failed attempt leaves the state unchanged, so every
//! deterministic policy induces a fixed target sequence and its expected
//! completion time is `Σ 1/p` along that sequence. The optimal policy is
//! solved exactly by dynamic programming over subsets of the initially
//! inactive nodes.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use indexmap::IndexSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::metrics::ProximityNetwork;

/// Largest number of inactive nodes the exact solver accepts.
pub const DP_CAPACITY: usize = 22;
pub const TIE_BREAK: &str = "lowest-id";

/// Undirected, unweighted graph over activity ids. Ids are kept sorted, so
/// index order is id order and "lowest index" is "lowest id".
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityGraph {
    nodes: IndexSet<String>,
    adjacency: Vec<Vec<usize>>,
    pruned: Vec<String>,
}

impl ActivityGraph {
    /// Builds the graph; nodes left without edges are pruned and listed in
    /// [`ActivityGraph::pruned`].
    pub fn from_edges<N, E, S>(nodes: N, edges: E) -> Result<Self>
    where
        N: IntoIterator<Item = S>,
        E: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let declared: BTreeSet<String> = nodes.into_iter().map(|n| n.as_ref().to_string()).collect();
        let mut pairs = BTreeSet::new();
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            for n in [a, b] {
                if !declared.contains(n) {
                    return Err(Error::InvalidParameter(format!("edge endpoint `{n}` is not a node")));
                }
            }
            if a == b {
                return Err(Error::SelfLoop { location: a.to_string(), line: 0 });
            }
            pairs.insert(if a < b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) });
        }
        let connected: BTreeSet<&str> = pairs.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]).collect();
        if connected.is_empty() {
            return Err(Error::InvalidParameter("activity graph has no edges".into()));
        }
        let pruned = declared.iter().filter(|n| !connected.contains(n.as_str())).cloned().collect();
        let nodes: IndexSet<String> = connected.iter().map(|s| s.to_string()).collect();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (a, b) in &pairs {
            let (i, j) = (nodes.get_index_of(a).unwrap_or(0), nodes.get_index_of(b).unwrap_or(0));
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        adjacency.iter_mut().for_each(|n| n.sort_unstable());
        Ok(Self { nodes, adjacency, pruned })
    }

    pub fn nodes(&self) -> &IndexSet<String> {
        &self.nodes
    }

    pub fn pruned(&self) -> &[String] {
        &self.pruned
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn degree(&self, node: &str) -> Option<usize> {
        self.nodes.get_index_of(node).map(|i| self.adjacency[i].len())
    }

    pub fn neighbors(&self, node: &str) -> impl Iterator<Item = &str> {
        self.nodes
            .get_index_of(node)
            .map(|i| self.adjacency[i].as_slice())
            .unwrap_or(&[])
            .iter()
            .map(|j| self.nodes[*j].as_str())
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.adjacency.iter().enumerate().flat_map(move |(i, ns)| {
            ns.iter().filter(move |j| **j > i).map(move |j| (self.nodes[i].as_str(), self.nodes[*j].as_str()))
        })
    }

    fn index(&self, node: &str) -> Result<usize> {
        self.nodes
            .get_index_of(node)
            .ok_or_else(|| Error::UnknownActivity(node.to_string()))
    }
}

/// Edge (p, q) whenever `φ[p,q] ≥ edge_threshold`.
pub fn build_activity_graph(phi: &ProximityNetwork, edge_threshold: f64) -> Result<ActivityGraph> {
    if !(edge_threshold > 0.0 && edge_threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "edge threshold must lie in (0, 1], got {edge_threshold}"
        )));
    }
    let ids = phi.activities();
    let v = phi.values();
    let mut edges = Vec::new();
    for p in 0..ids.len() {
        for q in p + 1..ids.len() {
            if v[[p, q]] >= edge_threshold {
                edges.push((ids[p].as_str(), ids[q].as_str()));
            }
        }
    }
    if edges.is_empty() {
        return Err(Error::EmptyGraph { threshold: edge_threshold });
    }
    ActivityGraph::from_edges(ids.iter().map(String::as_str), edges)
}

/// Activities currently held, as a membership mask over graph nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActiveSet {
    members: Vec<bool>,
}

impl ActiveSet {
    pub fn new<S: AsRef<str>>(g: &ActivityGraph, ids: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut members = vec![false; g.len()];
        for id in ids {
            members[g.index(id.as_ref())?] = true;
        }
        Ok(Self { members })
    }

    pub fn contains(&self, g: &ActivityGraph, id: &str) -> bool {
        g.nodes.get_index_of(id).is_some_and(|i| self.members[i])
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_complete(&self) -> bool {
        self.members.iter().all(|m| *m)
    }

    pub fn ids<'a>(&'a self, g: &'a ActivityGraph) -> impl Iterator<Item = &'a str> {
        self.members.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| g.nodes[i].as_str())
    }

    fn inactive(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().enumerate().filter(|(_, m)| !**m).map(|(i, _)| i)
    }

    fn with(&self, i: usize) -> Self {
        let mut next = self.clone();
        next.members[i] = true;
        next
    }
}

fn probability(g: &ActivityGraph, s: &ActiveSet, i: usize) -> f64 {
    let ns = &g.adjacency[i];
    let held = ns.iter().filter(|j| s.members[**j]).count();
    held as f64 / ns.len() as f64
}

/// Fraction of `target`'s neighbors that are active.
pub fn entry_probability(g: &ActivityGraph, s: &ActiveSet, target: &str) -> Result<f64> {
    let i = g.index(target)?;
    if s.members[i] {
        return Err(Error::AlreadyActive(target.to_string()));
    }
    Ok(probability(g, s, i))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Policy {
    Greedy,
    FixedOrder(Vec<String>),
    Lookahead(usize),
    Optimal,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Greedy => f.write_str("greedy"),
            Policy::FixedOrder(_) => f.write_str("order"),
            Policy::Lookahead(k) => write!(f, "lookahead:{k}"),
            Policy::Optimal => f.write_str("optimal"),
        }
    }
}

impl Policy {
    /// Parses `greedy`, `optimal` or `lookahead:K`. Fixed orders carry a
    /// list and are built directly.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec {
            "greedy" => Ok(Policy::Greedy),
            "optimal" => Ok(Policy::Optimal),
            _ => match spec.strip_prefix("lookahead:") {
                Some(k) => {
                    let k: usize = k
                        .parse()
                        .map_err(|_| Error::InvalidPolicy(format!("bad lookahead depth in `{spec}`")))?;
                    if k == 0 {
                        return Err(Error::InvalidPolicy("lookahead depth must be at least 1".into()));
                    }
                    Ok(Policy::Lookahead(k))
                }
                None => Err(Error::InvalidPolicy(format!(
                    "unknown policy `{spec}`; expected greedy, optimal, lookahead:K or order"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "exact-dp")]
    ExactDp,
    #[serde(rename = "closed-form-order")]
    ClosedFormOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyEvaluation {
    pub policy: String,
    pub expected_time: f64,
    pub method: Method,
    /// Targets in the order the policy pursues them.
    pub plan: Vec<String>,
    /// Success probability of each plan step at the moment it is targeted.
    pub probabilities: Vec<f64>,
    pub tie_break: String,
}

/// Every inactive node must share a component with some active node.
fn check_feasible(g: &ActivityGraph, s0: &ActiveSet) -> Result<()> {
    if s0.is_empty() {
        return Err(Error::InvalidParameter("initial active set is empty".into()));
    }
    let mut seen = s0.members.clone();
    let mut queue: VecDeque<usize> = s0.members.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i).collect();
    while let Some(i) = queue.pop_front() {
        for &j in &g.adjacency[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    match seen.iter().position(|s| !*s) {
        Some(i) => Err(Error::Infeasible(g.nodes[i].clone())),
        None => Ok(()),
    }
}

fn greedy_target(g: &ActivityGraph, s: &ActiveSet) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in s.inactive() {
        let p = probability(g, s, i);
        if p > 0.0 && best.is_none_or(|(_, bp)| p > bp) {
            best = Some((i, p));
        }
    }
    best.map(|(i, _)| i)
}

/// Depth-limited search: cost of the cheapest `depth`-step continuation.
struct Lookahead<'g> {
    g: &'g ActivityGraph,
    memo: HashMap<(ActiveSet, usize), f64>,
}

impl Lookahead<'_> {
    fn best(&mut self, s: &ActiveSet, depth: usize) -> (f64, Option<usize>) {
        if depth == 0 || s.is_complete() {
            return (0.0, None);
        }
        let mut best = (f64::INFINITY, None);
        for i in s.inactive() {
            let p = probability(self.g, s, i);
            if p == 0.0 {
                continue;
            }
            let next = s.with(i);
            let rest = self.cost(&next, depth - 1);
            let total = 1.0 / p + rest;
            if total < best.0 {
                best = (total, Some(i));
            }
        }
        best
    }

    fn cost(&mut self, s: &ActiveSet, depth: usize) -> f64 {
        if let Some(v) = self.memo.get(&(s.clone(), depth)) {
            return *v;
        }
        let v = self.best(s, depth).0;
        self.memo.insert((s.clone(), depth), v);
        v
    }
}

/// Walks a state-dependent target rule from `s0` to completion.
fn follow(
    g: &ActivityGraph,
    s0: &ActiveSet,
    mut next: impl FnMut(&ActiveSet) -> Result<usize>,
) -> Result<(Vec<String>, Vec<f64>)> {
    let mut s = s0.clone();
    let mut plan = Vec::new();
    let mut probabilities = Vec::new();
    while !s.is_complete() {
        let i = next(&s)?;
        let p = probability(g, &s, i);
        if p == 0.0 {
            return Err(Error::InvalidPolicy(format!(
                "`{}` is targeted while none of its neighbors is active",
                g.nodes[i]
            )));
        }
        plan.push(g.nodes[i].clone());
        probabilities.push(p);
        s = s.with(i);
    }
    Ok((plan, probabilities))
}

fn closed_form(probabilities: &[f64]) -> f64 {
    probabilities.iter().map(|p| 1.0 / p).sum()
}

/// Target sequence a deterministic policy follows from `s0`, with the
/// success probability of each step.
pub fn plan(g: &ActivityGraph, s0: &ActiveSet, policy: &Policy) -> Result<(Vec<String>, Vec<f64>)> {
    check_feasible(g, s0)?;
    match policy {
        Policy::Greedy => follow(g, s0, |s| {
            greedy_target(g, s).ok_or_else(|| Error::Infeasible(g.nodes[s.inactive().next().unwrap_or(0)].clone()))
        }),
        Policy::FixedOrder(order) => {
            let inactive: BTreeSet<&str> = s0.inactive().map(|i| g.nodes[i].as_str()).collect();
            let listed: BTreeSet<&str> = order.iter().map(String::as_str).collect();
            if listed != inactive || listed.len() != order.len() {
                return Err(Error::InvalidPolicy(
                    "fixed order must be a permutation of the initially inactive nodes".into(),
                ));
            }
            let mut it = order.iter();
            follow(g, s0, |_| g.index(it.next().map(String::as_str).unwrap_or_default()))
        }
        Policy::Lookahead(k) => {
            if *k == 0 {
                return Err(Error::InvalidPolicy("lookahead depth must be at least 1".into()));
            }
            let mut search = Lookahead { g, memo: HashMap::new() };
            follow(g, s0, |s| {
                search
                    .best(s, *k)
                    .1
                    .ok_or_else(|| Error::Infeasible(g.nodes[s.inactive().next().unwrap_or(0)].clone()))
            })
        }
        Policy::Optimal => {
            let opt = optimal_policy(g, s0)?;
            Ok((opt.evaluation.plan, opt.evaluation.probabilities))
        }
    }
}

/// Expected number of attempts until every node is active under `policy`.
pub fn expected_completion(g: &ActivityGraph, s0: &ActiveSet, policy: &Policy) -> Result<StrategyEvaluation> {
    if let Policy::Optimal = policy {
        return optimal_policy(g, s0).map(|o| o.evaluation);
    }
    let (plan, probabilities) = plan(g, s0, policy)?;
    Ok(StrategyEvaluation {
        policy: policy.to_string(),
        expected_time: closed_form(&probabilities),
        method: Method::ClosedFormOrder,
        plan,
        probabilities,
        tie_break: TIE_BREAK.to_string(),
    })
}

/// Exact value table over subsets of the initially inactive nodes.
#[derive(Debug, Clone)]
pub struct OptimalPolicy {
    inactive: Vec<usize>,
    /// `values[mask]`: expected remaining time once the nodes in `mask`
    /// (bits over `inactive`) have been activated.
    values: Vec<f64>,
    choice: Vec<u8>,
    pub evaluation: StrategyEvaluation,
}

impl OptimalPolicy {
    fn mask(&self, s: &ActiveSet) -> u32 {
        self.inactive
            .iter()
            .enumerate()
            .filter(|(_, i)| s.members[**i])
            .fold(0, |m, (b, _)| m | (1 << b))
    }

    /// Expected remaining time from `s`, which must contain the initial set.
    pub fn value(&self, s: &ActiveSet) -> f64 {
        self.values[self.mask(s) as usize]
    }

    /// Minimizing target in state `s`; `None` once complete.
    pub fn target<'g>(&self, g: &'g ActivityGraph, s: &ActiveSet) -> Option<&'g str> {
        let c = self.choice[self.mask(s) as usize];
        (c != u8::MAX).then(|| g.nodes[self.inactive[c as usize]].as_str())
    }

    pub fn states(&self) -> usize {
        self.values.len()
    }
}

pub fn optimal_policy(g: &ActivityGraph, s0: &ActiveSet) -> Result<OptimalPolicy> {
    let inactive: Vec<usize> = s0.inactive().collect();
    let k = inactive.len();
    if k > DP_CAPACITY {
        return Err(Error::Capacity { inactive: k, limit: DP_CAPACITY });
    }
    check_feasible(g, s0)?;
    let bit_of: HashMap<usize, usize> = inactive.iter().enumerate().map(|(b, i)| (*i, b)).collect();
    // per inactive node: degree, initially active neighbors, inactive-neighbor mask
    let nodes: Vec<(usize, usize, u32)> = inactive
        .iter()
        .map(|&i| {
            let ns = &g.adjacency[i];
            let base = ns.iter().filter(|j| s0.members[**j]).count();
            let mask = ns.iter().filter_map(|j| bit_of.get(j)).fold(0u32, |m, b| m | (1 << b));
            (ns.len(), base, mask)
        })
        .collect();

    let full: usize = (1usize << k) - 1;
    let mut values = vec![f64::INFINITY; full + 1];
    let mut choice = vec![u8::MAX; full + 1];
    values[full] = 0.0;
    for mask in (0..full).rev() {
        let mut best = f64::INFINITY;
        let mut arg = u8::MAX;
        for (b, &(deg, base, nmask)) in nodes.iter().enumerate() {
            if mask & (1 << b) != 0 {
                continue;
            }
            let held = base + (nmask & mask as u32).count_ones() as usize;
            if held == 0 {
                continue;
            }
            let p = held as f64 / deg as f64;
            let v = 1.0 / p + values[mask | (1 << b)];
            if v < best {
                best = v;
                arg = b as u8;
            }
        }
        values[mask] = best;
        choice[mask] = arg;
    }

    let mut plan = Vec::with_capacity(k);
    let mut probabilities = Vec::with_capacity(k);
    let mut s = s0.clone();
    let mut mask = 0usize;
    while mask != full {
        let b = choice[mask];
        if b == u8::MAX {
            return Err(Error::Infeasible(g.nodes[inactive[(!mask).trailing_zeros() as usize]].clone()));
        }
        let i = inactive[b as usize];
        probabilities.push(probability(g, &s, i));
        plan.push(g.nodes[i].clone());
        s = s.with(i);
        mask |= 1 << b;
    }
    let evaluation = StrategyEvaluation {
        policy: Policy::Optimal.to_string(),
        expected_time: values[0],
        method: Method::ExactDp,
        plan,
        probabilities,
        tie_break: TIE_BREAK.to_string(),
    };
    Ok(OptimalPolicy { inactive, values, choice, evaluation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationStats {
    pub trials: u64,
    pub seed: u64,
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
    pub confidence: f64,
    pub ci: (f64, f64),
    /// Total activations observed at each step (index 0 = step 1) across
    /// all trials.
    pub activations_per_period: Vec<u64>,
}

impl SimulationStats {
    /// Normal-approximation interval at another confidence level.
    pub fn interval(&self, confidence: f64) -> (f64, f64) {
        let z = normal_quantile(confidence);
        (self.mean - z * self.std_error, self.mean + z * self.std_error)
    }
}

fn normal_quantile(confidence: f64) -> f64 {
    let n = Normal::standard();
    n.inverse_cdf(0.5 + confidence / 2.0)
}

/// Monte Carlo estimate of the completion time. Trial `t` draws from its
/// own ChaCha stream `(seed, t)`, so results do not depend on scheduling.
pub fn simulate(
    g: &ActivityGraph,
    s0: &ActiveSet,
    policy: &Policy,
    trials: u64,
    seed: u64,
    confidence: f64,
) -> Result<SimulationStats> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let (_, probabilities) = plan(g, s0, policy)?;
    let runs: Vec<(u64, Vec<u64>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            let mut clock = 0u64;
            let mut success_at = Vec::with_capacity(probabilities.len());
            for &p in &probabilities {
                loop {
                    clock += 1;
                    if rng.random::<f64>() < p {
                        break;
                    }
                }
                success_at.push(clock);
            }
            (clock, success_at)
        })
        .collect();

    let n = trials as f64;
    let mean = runs.iter().map(|(t, _)| *t as f64).sum::<f64>() / n;
    let var = if trials > 1 {
        runs.iter().map(|(t, _)| (*t as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let horizon = runs.iter().map(|(t, _)| *t).max().unwrap_or(0) as usize;
    let mut activations = vec![0u64; horizon];
    for (_, at) in &runs {
        for &step in at {
            activations[step as usize - 1] += 1;
        }
    }
    let std_error = (var / n).sqrt();
    let z = normal_quantile(confidence);
    Ok(SimulationStats {
        trials,
        seed,
        mean,
        std_dev: var.sqrt(),
        std_error,
        confidence,
        ci: (mean - z * std_error, mean + z * std_error),
        activations_per_period: activations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub activity: String,
    pub omega: f64,
    /// Number of distinct active components the activity's neighborhood
    /// touches; only set in the unrelated bucket.
    pub bridging: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Buckets {
    pub related: Vec<Target>,
    pub unrelated: Vec<Target>,
}

/// Splits candidate activities into a related bucket (`ω ≥ θ`) and an
/// unrelated bucket annotated with bridging scores. Candidates that are
/// already active are skipped.
pub fn classify_targets(
    g: &ActivityGraph,
    active: &ActiveSet,
    candidates: &[(String, f64)],
    theta_related: f64,
) -> Result<Buckets> {
    if !(theta_related > 0.0 && theta_related < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "relatedness threshold must lie in (0, 1), got {theta_related}"
        )));
    }
    // component label per active node
    let mut label = vec![usize::MAX; g.len()];
    let mut next_label = 0;
    for start in 0..g.len() {
        if !active.members[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = next_label;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for &j in &g.adjacency[i] {
                if active.members[j] && label[j] == usize::MAX {
                    label[j] = next_label;
                    queue.push_back(j);
                }
            }
        }
        next_label += 1;
    }

    let mut buckets = Buckets::default();
    for (id, omega) in candidates {
        let index = g.nodes.get_index_of(id);
        if index.is_some_and(|i| active.members[i]) {
            continue;
        }
        if *omega >= theta_related {
            buckets.related.push(Target { activity: id.clone(), omega: *omega, bridging: None });
        } else {
            let touched: BTreeSet<usize> = index
                .map(|i| g.adjacency[i].iter().filter(|j| active.members[**j]).map(|j| label[*j]).collect())
                .unwrap_or_default();
            buckets.unrelated.push(Target {
                activity: id.clone(),
                omega: *omega,
                bridging: Some(touched.len()),
            });
        }
    }
    Ok(buckets)
}

/// Bell-shaped share of the budget reserved for unrelated diversification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub peak: f64,
    pub width: f64,
    pub max_unrelated: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { peak: 0.0, width: 1.0, max_unrelated: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSplit {
    pub eci: f64,
    pub related: f64,
    pub unrelated: f64,
    pub schedule: Schedule,
}

pub fn portfolio_split(eci: f64, schedule: Schedule) -> Result<PortfolioSplit> {
    if !(schedule.width > 0.0 && schedule.width.is_finite()) {
        return Err(Error::InvalidParameter(format!("schedule width must be positive, got {}", schedule.width)));
    }
    if !(schedule.max_unrelated > 0.0 && schedule.max_unrelated < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "max unrelated share must lie in (0, 1), got {}",
            schedule.max_unrelated
        )));
    }
    if eci.is_nan() || !schedule.peak.is_finite() {
        return Err(Error::InvalidParameter("eci and peak must be numbers".into()));
    }
    let d = (eci - schedule.peak) / schedule.width;
    let unrelated = if d.is_finite() { schedule.max_unrelated * (-0.5 * d * d).exp() } else { 0.0 };
    Ok(PortfolioSplit { eci, related: 1.0 - unrelated, unrelated, schedule })
}

/// Serialized strategy problem: `{nodes, edges, active, policy, params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyInstance {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub active: Vec<String>,
    #[serde(default = "default_policy")]
    pub policy: String,
    #[serde(default)]
    pub params: InstanceParams,
}

fn default_policy() -> String {
    "greedy".into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    /// Target list for the `order` policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<String>>,
}

/// Evaluation output: `{expected_time, method, plan, ci}` plus context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub policy: String,
    pub expected_time: f64,
    pub method: Method,
    pub plan: Vec<String>,
    pub probabilities: Vec<f64>,
    pub tie_break: String,
    pub ci: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<SimulationStats>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub pruned: Vec<String>,
}

impl StrategyInstance {
    pub fn graph(&self) -> Result<(ActivityGraph, ActiveSet)> {
        let g = ActivityGraph::from_edges(
            self.nodes.iter().map(String::as_str),
            self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())),
        )?;
        let active = self.active.iter().filter(|a| !g.pruned().contains(a));
        let s0 = ActiveSet::new(&g, active)?;
        Ok((g, s0))
    }

    pub fn resolved_policy(&self) -> Result<Policy> {
        if self.policy == "order" {
            let order = self
                .params
                .order
                .clone()
                .ok_or_else(|| Error::InvalidPolicy("policy `order` needs params.order".into()))?;
            return Ok(Policy::FixedOrder(order));
        }
        Policy::parse(&self.policy)
    }

    pub fn evaluate(&self) -> Result<EvaluationReport> {
        let (g, s0) = self.graph()?;
        let policy = self.resolved_policy()?;
        let eval = expected_completion(&g, &s0, &policy)?;
        let monte_carlo = match self.params.trials {
            Some(trials) => Some(simulate(
                &g,
                &s0,
                &policy,
                trials,
                self.params.seed.unwrap_or(0),
                self.params.confidence.unwrap_or(0.95),
            )?),
            None => None,
        };
        Ok(EvaluationReport {
            policy: eval.policy,
            expected_time: eval.expected_time,
            method: eval.method,
            plan: eval.plan,
            probabilities: eval.probabilities,
            tie_break: eval.tie_break,
            ci: monte_carlo.as_ref().map(|m| m.ci),
            monte_carlo,
            pruned: g.pruned().to_vec(),
        })
    }
}

/// Wheel graph: a hub adjacent to `spokes` ring nodes `s1..sN`.
pub fn wheel(spokes: usize) -> ActivityGraph {
    let ring: Vec<String> = (1..=spokes).map(|i| format!("s{i}")).collect();
    let mut edges: Vec<(String, String)> = ring.iter().map(|s| ("hub".to_string(), s.clone())).collect();
    for i in 0..spokes {
        edges.push((ring[i].clone(), ring[(i + 1) % spokes].clone()));
    }
    let nodes = std::iter::once("hub".to_string()).chain(ring);
    ActivityGraph::from_edges(nodes, edges).expect("wheel is a valid graph")
}
